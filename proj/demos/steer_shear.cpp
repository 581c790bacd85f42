// Steer the fluid so that its particle flow realises a small shear, using
// only a handful of forced Fourier modes.
//
//   steer_shear [generator12|lavt|lsdfavt] [target_norm]
//
// With target_norm > 0 the endpoint velocity is a random field of that H^3
// size, which forces the full convexification staircase (slow).

#include "nsctl/nsctl.hpp"

#include <iostream>

int main(int argc, char** argv) {
  using namespace nsctl;
  const std::string space = argc > 1 ? argv[1] : "generator12";
  const double target = argc > 2 ? std::stod(argv[2]) : 0.0;

  SteeringProblem P;
  P.basis = make_basis(2);
  P.cfg = SimConfig(1.0, 2, 1e-3, 1.0);
  P.E = builtin_space(space, P.basis);
  P.h = ControlSignal::zero(P.basis, 1.0);
  P.epsilon = space == "generator12" ? 0.1 : 0.2;
  // x3 += 0.25 sin x1 lies in the first two spaces; the 6-dim one needs x1 += 0.25 sin x3
  P.psi = shear_isotopy({space == "lsdfavt" ? shear_field(0, 0, 1, 0.0, 0.25) : shear_field(2, 1, 0, 0.0, 0.25)}, 1.0);
  if (target > 0) {
    std::mt19937_64 rng(2024);
    P.u1 = random_field(rng, 2, target, 3);
    P.opts.n_cap = 8;
  }
  P.opts.on_level = [](const LevelRecord& r) {
    std::cout << "level " << r.level << "  dim " << r.space_dim << "  n " << r.n << "  p " << r.p << "  endpoint "
              << r.endpoint_error << "  relaxation " << r.relaxation_error << '\n';
  };

  std::cout << "steering with " << P.E.name() << " (dim " << P.E.dim() << ")\n";
  const StaircaseResult r = run_staircase(P);
  const StaircaseTrace& t = r.trace;
  std::cout << "endpoint " << t.final_error.endpoint << "  relaxation " << t.final_error.relaxation << "  flow "
            << t.final_error.flow << "\ntotal " << t.final_error.total() << " vs epsilon " << t.epsilon
            << " (zero control: " << t.baseline_error.total() << ")\n"
            << (t.success ? "steered" : "not steered within epsilon") << " in " << t.seconds << " s\n";
  return t.success ? 0 : 2;
}
