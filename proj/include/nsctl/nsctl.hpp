#pragma once
/// Everything: lattice, fields, saturation, solver, flows, steering, I/O.

#include "nsctl/lattice.hpp"
#include "nsctl/fourier.hpp"
#include "nsctl/saturation.hpp"
#include "nsctl/signal.hpp"
#include "nsctl/nse.hpp"
#include "nsctl/flow.hpp"
#include "nsctl/control.hpp"
#include "nsctl/io.hpp"
#include "nsctl/config.hpp"
