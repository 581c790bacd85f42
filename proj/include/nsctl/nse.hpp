#pragma once
/// Galerkin solver for u' + L(u + zeta) + B(u + zeta) = h + eta on the box
/// |l|_inf <= R, with L = -nu Laplacian.

#include "nsctl/signal.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsctl {

struct SimConfig {
  double nu = 1.0;
  int galerkin_radius = 2;
  double dt = 1e-3;
  double horizon = 1.0;
  int sobolev_k = 3;
  double blowup_ceiling = 1e6;
  int record_every = 1;

  SimConfig() = default;
  SimConfig(double nu_, int radius, double dt_, double T, int k = 3)
      : nu(nu_), galerkin_radius(radius), dt(dt_), horizon(T), sobolev_k(k) {
    validate();
  }

  double dt_bound() const { return 0.5 / (nu * 3.0 * galerkin_radius * galerkin_radius); }

  void validate() const {
    if (!(nu > 0)) throw std::invalid_argument("nu must be positive");
    if (galerkin_radius < 1) throw std::invalid_argument("galerkin_radius must be at least 1");
    if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
    if (!(horizon > 0)) throw std::invalid_argument("horizon must be positive");
    if (!(dt < horizon)) throw std::invalid_argument("dt must be smaller than the horizon");
    if (dt > dt_bound() * (1 + 1e-12)) {
      std::ostringstream os;
      os << "dt " << dt << " exceeds the stability bound " << dt_bound();
      throw std::invalid_argument(os.str());
    }
    if (sobolev_k < 0) throw std::invalid_argument("sobolev_k must be non-negative");
    if (record_every < 1) throw std::invalid_argument("record_every must be at least 1");
  }

  int steps() const { return std::max(1, int(std::lround(horizon / dt))); }
};

class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(double t, double value)
      : std::runtime_error(message(t, value)), time(t), norm(value) {}
  double time, norm;

 private:
  static std::string message(double t, double v) {
    std::ostringstream os;
    os << "solution left the bounded regime at t = " << t << " (H^k norm " << v << ")";
    return os.str();
  }
};

struct Trajectory {
  SpectralBasisPtr basis;
  int sobolev_k = 3;
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<double> energy;
  std::vector<double> hk_norm;
  /// running integral of u from 0 to each recorded time
  std::vector<Eigen::VectorXd> running_integral;
  /// sup_t |u|_k + (int |u|_{k+1}^2)^{1/2}
  double xk_norm = 0.0;
  /// largest observed |B(w)|_k / (|w|_k |w|_{k+1})
  double bilinear_constant = 0.0;

  std::size_t size() const { return times.size(); }
  const Eigen::VectorXd& final_state() const { return states.back(); }
  TrigField state(std::size_t i) const { return basis->to_field(states[i]); }

  /// Linear interpolation between recorded states.
  Eigen::VectorXd at(double t) const {
    if (t <= times.front()) return states.front();
    if (t >= times.back()) return states.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t k = std::size_t(it - times.begin()) - 1;
    const double th = (t - times[k]) / (times[k + 1] - times[k]);
    return (1 - th) * states[k] + th * states[k + 1];
  }

  /// sup over records of the H^k norm of the running integral.
  double relaxation_norm(int k) const {
    double r = 0.0;
    for (const auto& I : running_integral) r = std::max(r, basis->sobolev_norm(I, k));
    return r;
  }
};

struct SolveOptions {
  /// called after every step with (t, u); also at t = 0
  std::function<void(double, const Eigen::VectorXd&)> observer;
};

/// Exponential Euler per mode: with A = nu |l|^2, E = exp(-A dt) and
/// phi = (1 - E)/(A dt),
///   u+ = E u + dt phi (gbar - B(u + zeta_n)) - (1 - phi) zeta+ - (phi - E) zeta_n
/// where gbar is the exact step average of h + eta and zeta is taken linear
/// over the step. The zeta terms are the exact propagator integral of
/// -L zeta, so solve(h, eta, zeta) + zeta equals solve(h, eta + zeta') up to
/// the treatment of B.
inline Trajectory solve(const Eigen::VectorXd& u0, const ControlSignal& h, const ControlSignal& eta,
                        const ControlSignal* zeta, const SimConfig& cfg, const SolveOptions& opts = {}) {
  cfg.validate();
  const SpectralBasisPtr sbp = h.basis_ptr() ? h.basis_ptr() : eta.basis_ptr();
  if (!sbp) throw std::invalid_argument("solve: signals carry no basis");
  const SpectralBasis& sb = *sbp;
  if (sb.radius() != cfg.galerkin_radius) throw std::invalid_argument("solve: signal basis radius differs from config");
  if (u0.size() != sb.dim()) throw std::invalid_argument("solve: initial state has the wrong dimension");
  for (const ControlSignal* s : {&h, &eta, zeta}) {
    if (!s) continue;
    if (std::abs(s->horizon() - cfg.horizon) > 1e-12 * cfg.horizon)
      throw std::invalid_argument("solve: signal horizon differs from config");
    if (s->basis_ptr() && s->basis().radius() != sb.radius())
      throw std::invalid_argument("solve: signal basis radius differs from config");
  }

  const int n = cfg.steps();
  const double dt = cfg.horizon / n;
  const int k = cfg.sobolev_k;
  const Eigen::Index D = sb.dim();
  Eigen::ArrayXd E(D), phi(D), w_k(D), w_k1(D);
  for (Eigen::Index i = 0; i < D; ++i) {
    const double k2 = sb.k2(int(i / 6));
    const double a = cfg.nu * k2 * dt;
    E[i] = std::exp(-a);
    phi[i] = -std::expm1(-a) / a;
    w_k[i] = std::pow(k2, k);
    w_k1[i] = std::pow(k2, k + 1);
  }
  auto hk = [&](const Eigen::VectorXd& v) { return std::sqrt((w_k * v.array().square()).sum()); };
  auto hk1sq = [&](const Eigen::VectorXd& v) { return (w_k1 * v.array().square()).sum(); };

  Trajectory tr;
  tr.basis = sbp;
  tr.sobolev_k = k;
  Eigen::VectorXd u = u0, I = sb.zeros(), Bw(D), w(D);
  double sup_k = hk(u), int_k1 = 0.0, prev_k1 = hk1sq(u);
  auto record = [&](double t) {
    tr.times.push_back(t);
    tr.states.push_back(u);
    tr.energy.push_back(0.5 * u.squaredNorm());
    tr.hk_norm.push_back(hk(u));
    tr.running_integral.push_back(I);
  };
  record(0.0);
  if (opts.observer) opts.observer(0.0, u);

  Eigen::VectorXd z0 = zeta ? zeta->value(0.0) : sb.zeros();
  for (int s = 0; s < n; ++s) {
    const double t0 = s * dt, t1 = (s + 1 == n) ? cfg.horizon : (s + 1) * dt;
    Eigen::VectorXd g = h.integral(t0, t1);
    if (!eta.empty()) g += eta.integral(t0, t1);
    g /= (t1 - t0);
    w = u;
    if (zeta) w += z0;
    sb.bilinear(w, w, Bw);
    if (s % cfg.record_every == 0) {
      const double a = hk(w), b = std::sqrt(hk1sq(w));
      if (a > 0 && b > 0) tr.bilinear_constant = std::max(tr.bilinear_constant, hk(Bw) / (a * b));
    }
    Eigen::VectorXd un = (E * u.array() + dt * phi * (g - Bw).array()).matrix();
    Eigen::VectorXd z1;
    if (zeta) {
      z1 = zeta->value(t1, true);
      un.array() -= (1 - phi) * z1.array() + (phi - E) * z0.array();
    }
    I += 0.5 * (t1 - t0) * (u + un);
    u.swap(un);
    const double nk = hk(u);
    if (!std::isfinite(nk) || nk > cfg.blowup_ceiling) throw BlowUpError(t1, nk);
    sup_k = std::max(sup_k, nk);
    const double cur_k1 = hk1sq(u);
    int_k1 += 0.5 * (t1 - t0) * (prev_k1 + cur_k1);
    prev_k1 = cur_k1;
    if (zeta) z0 = zeta->value(t1);
    if ((s + 1) % cfg.record_every == 0 || s + 1 == n) record(t1);
    if (opts.observer) opts.observer(t1, u);
  }
  tr.xk_norm = sup_k + std::sqrt(int_k1);
  return tr;
}

inline Trajectory solve(const TrigField& u0, const ControlSignal& h, const ControlSignal& eta,
                        const ControlSignal* zeta, const SimConfig& cfg, const SolveOptions& opts = {}) {
  const SpectralBasisPtr sbp = h.basis_ptr() ? h.basis_ptr() : eta.basis_ptr();
  if (!sbp) throw std::invalid_argument("solve: signals carry no basis");
  return solve(sbp->from_field(u0), h, eta, zeta, cfg, opts);
}

/// X_{T,k} distance between two trajectories recorded on the same times.
inline double xk_distance(const Trajectory& a, const Trajectory& b) {
  if (a.times.size() != b.times.size()) throw std::invalid_argument("xk_distance: different record times");
  const SpectralBasis& sb = *a.basis;
  const int k = a.sobolev_k;
  double sup = 0.0, integ = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < a.times.size(); ++i) {
    const Eigen::VectorXd d = a.states[i] - b.states[i];
    sup = std::max(sup, sb.sobolev_norm(d, k));
    const double cur = std::pow(sb.sobolev_norm(d, k + 1), 2);
    if (i > 0) integ += 0.5 * (a.times[i] - a.times[i - 1]) * (prev + cur);
    prev = cur;
  }
  return sup + std::sqrt(integ);
}

enum class ProbeSlot { InitialState, Eta };

struct LipschitzRow {
  double size = 0.0;
  double input_distance = 0.0;
  double trajectory_distance = 0.0;
  double ratio = 0.0;
};

/// Perturbs one input slot along a fixed unit direction and reports the X_{T,k}
/// distance of the resulting trajectories. For the u0 slot the input distance
/// is the H^k norm; for the eta slot it is the L2(0,T; H^{k-1}) norm of a
/// constant-in-time perturbation.
inline std::vector<LipschitzRow> lipschitz_probe(const Eigen::VectorXd& u0, const ControlSignal& h,
                                                 const ControlSignal& eta, const SimConfig& cfg,
                                                 const std::vector<double>& sizes, ProbeSlot slot,
                                                 const Eigen::VectorXd& direction) {
  SimConfig c = cfg;
  c.record_every = 1;
  const Trajectory base = solve(u0, h, eta, nullptr, c);
  const SpectralBasis& sb = *base.basis;
  const int k = cfg.sobolev_k;
  const int kin = slot == ProbeSlot::InitialState ? k : k - 1;
  const double dn = sb.sobolev_norm(direction, std::max(kin, 0));
  if (!(dn > 0)) throw std::invalid_argument("lipschitz_probe: zero direction");
  const Eigen::VectorXd dir = direction / dn;
  std::vector<LipschitzRow> rows;
  for (double s : sizes) {
    LipschitzRow r;
    r.size = s;
    if (slot == ProbeSlot::InitialState) {
      r.input_distance = s;
      r.trajectory_distance = xk_distance(base, solve(Eigen::VectorXd(u0 + s * dir), h, eta, nullptr, c));
    } else {
      r.input_distance = s * std::sqrt(cfg.horizon);
      ControlSignal e2 = eta;
      e2 += ControlSignal::constant(base.basis, cfg.horizon, s * dir);
      r.trajectory_distance = xk_distance(base, solve(u0, h, e2, nullptr, c));
    }
    r.ratio = r.input_distance > 0 ? r.trajectory_distance / r.input_distance : 0.0;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace nsctl
