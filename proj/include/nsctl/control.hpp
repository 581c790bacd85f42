#pragma once
/// Steering by the staircase: exact control of a reference path, projection
/// onto the top of the saturation ladder, then one convexification per level
/// down to the control space itself.

#include "nsctl/flow.hpp"
#include "nsctl/saturation.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsctl {

struct SweepRow {
  int n = 0;
  double endpoint_error = 0.0;
  double relaxation_error = 0.0;
  double isver_residual = 0.0;
  double zeta_relaxation = 0.0;
  double l4_deviation = 0.0;
  long steps = 0;
  double xk_norm = 0.0;
};

struct LevelRecord {
  int level = 0;
  int space_dim = 0;
  int n = 0;
  int p = 0;
  double endpoint_error = 0.0;
  double relaxation_error = 0.0;
  double flow_error = std::numeric_limits<double>::quiet_NaN();
  double xk_norm = 0.0;
  double isver_residual = 0.0;
  bool budget_met = true;
  std::vector<SweepRow> sweep;
};

struct StaircaseOptions {
  int pieces_log2 = 4;
  double ramp_fraction = 0.1;
  /// fraction of the horizon over which u0 fades out and u1 fades in
  double endpoint_ramp = 0.25;
  int n_start = 4;
  int n_cap = 32;
  int steps_per_subinterval = 4;
  long max_steps = 4'000'000;
  int max_depth = 12;
  int flow_grid = 4;
  int flow_stride = 1;
  int max_records = 2000;
  int relax_samples = 1000;
  int isver_samples = 20;
  std::uint64_t seed = 1;
  int threads = 1;
  /// called once per finished level, the final level-0 record included
  std::function<void(const LevelRecord&)> on_level;
};

struct SteeringProblem {
  SpectralBasisPtr basis;
  TrigField u0, u1;
  Isotopy psi;
  ControlSignal h;
  ModeSpace E;
  double epsilon = 0.1;
  SimConfig cfg;
  StaircaseOptions opts;

  void validate() const {
    if (!basis) throw std::invalid_argument("steering: missing basis");
    cfg.validate();
    if (basis->radius() != cfg.galerkin_radius) throw std::invalid_argument("steering: basis radius differs from cfg");
    if (!(epsilon > 0)) throw std::invalid_argument("steering: epsilon must be positive");
    if (std::abs(psi.horizon - cfg.horizon) > 1e-12) throw std::invalid_argument("steering: isotopy horizon differs");
    for (const auto& w : psi.windows)
      if (w.profile != WindowProfile::Bump)
        throw std::invalid_argument("steering: isotopy windows must use the bump profile");
    if (!(opts.endpoint_ramp > 0 && opts.endpoint_ramp <= 0.5))
      throw std::invalid_argument("steering: endpoint_ramp must be in (0, 1/2]");
    if (opts.n_start < 1 || opts.n_cap < opts.n_start) throw std::invalid_argument("steering: bad oscillation range");
    if (opts.pieces_log2 < 0 || opts.pieces_log2 > 12) throw std::invalid_argument("steering: pieces_log2 out of range");
  }
};

// ---------------------------------------------------------------------------
// Reference path and its exact control

struct Reference {
  ControlSignal phi;
  ControlSignal eta0;
  /// |||phi - u_hat|||_{T,k}, the price of the endpoint ramps
  double ramp_relaxation = 0.0;
};

namespace detail {

inline Profile ramp_in(double t0, double t1) {
  const double W = t1 - t0;
  return Profile{[=](double t) { return smoothstep((t - t0) / W); },
                 [=](double t) { return W * smoothstep_integral((t - t0) / W); }, {t0, t1}};
}
inline Profile ramp_in_rate(double t0, double t1) {
  const double W = t1 - t0;
  return Profile{[=](double t) { return smoothstep_rate((t - t0) / W) / W; },
                 [=](double t) { return smoothstep((t - t0) / W); }, {t0, t1}};
}
inline Profile fade_out(double t0, double t1) {
  const Profile r = ramp_in(t0, t1);
  return Profile{[r](double t) { return 1.0 - r.f(t); }, [r](double t) { return t - r.antiderivative(t); }, r.breaks};
}
inline Profile negate(const Profile& p) {
  return Profile{[p](double t) { return -p.f(t); }, [p](double t) { return -p.antiderivative(t); }, p.breaks};
}
inline Profile product(const Profile& a, const Profile& b) {
  std::vector<double> br = a.breaks;
  br.insert(br.end(), b.breaks.begin(), b.breaks.end());
  std::sort(br.begin(), br.end());
  return Profile{[a, b](double t) { return a.f(t) * b.f(t); }, nullptr, br};
}
inline bool profiles_overlap(const Profile& a, const Profile& b, double T) {
  for (int i = 0; i <= 400; ++i) {
    const double t = T * i / 400;
    if (a.f(t) != 0.0 && b.f(t) != 0.0) return true;
  }
  return false;
}

}  // namespace detail

/// phi(t) = sum_k beta_k(t) w_k + (1 - s0(t)) u0 + s1(t) u1 with unit-integral
/// bumps beta_k, and eta0 = phi' + nu L phi + B(phi) - h in closed form.
inline Reference reference_trajectory(const SteeringProblem& P) {
  P.validate();
  const SpectralBasis& sb = *P.basis;
  const double T = P.cfg.horizon, tau = P.opts.endpoint_ramp * T;
  struct Piece {
    Eigen::VectorXd f;
    Profile p, dp;
  };
  std::vector<Piece> parts;
  for (std::size_t k = 0; k < P.psi.fields.size(); ++k)
    parts.push_back({sb.from_field(P.psi.fields[k]), P.psi.windows[k].as_profile(), P.psi.windows[k].as_rate_profile()});
  if (!P.u0.empty()) parts.push_back({sb.from_field(P.u0), detail::fade_out(0, tau), detail::negate(detail::ramp_in_rate(0, tau))});
  if (!P.u1.empty()) parts.push_back({sb.from_field(P.u1), detail::ramp_in(T - tau, T), detail::ramp_in_rate(T - tau, T)});

  Reference ref{ControlSignal(P.basis, T), ControlSignal(P.basis, T), 0.0};
  for (const auto& x : parts) {
    ref.phi.add(std::make_shared<ProfileTerm>(x.p, x.f));
    ref.eta0.add(std::make_shared<ProfileTerm>(x.dp, x.f));
    Eigen::VectorXd Lf = x.f;
    for (int i = 0; i < sb.num_modes(); ++i) Lf.segment<6>(6 * i) *= P.cfg.nu * sb.k2(i);
    ref.eta0.add(std::make_shared<ProfileTerm>(x.p, Lf));
  }
  for (std::size_t a = 0; a < parts.size(); ++a)
    for (std::size_t b = a; b < parts.size(); ++b) {
      if (!detail::profiles_overlap(parts[a].p, parts[b].p, T)) continue;
      Eigen::VectorXd v, w;
      sb.bilinear(parts[a].f, parts[b].f, v);
      if (a != b) {
        sb.bilinear(parts[b].f, parts[a].f, w);
        v += w;
      }
      if (v.norm() == 0.0) continue;
      ref.eta0.add(std::make_shared<ProfileTerm>(detail::product(parts[a].p, parts[b].p), v));
    }
  if (!P.h.empty()) ref.eta0 += P.h.scaled(-1.0);

  // the ramps against the bare isotopy field
  ControlSignal ramps(P.basis, T);
  for (std::size_t k = P.psi.fields.size(); k < parts.size(); ++k)
    ramps.add(std::make_shared<ProfileTerm>(parts[k].p, parts[k].f));
  ref.ramp_relaxation = relaxation_norm(ramps, P.cfg.sobolev_k, 512);
  return ref;
}

/// Pointwise orthogonal projection onto E.
inline ControlSignal project_control(const ControlSignal& eta0, const ModeSpace& E) {
  if (E.is_full()) return eta0;
  ControlSignal out(eta0.basis_ptr(), eta0.horizon());
  out.add(std::make_shared<ProjectedTerm>(eta0, E.matrix()));
  return out;
}

// ---------------------------------------------------------------------------
// One level: split, convexify, absorb

struct PieceSplit {
  Eigen::VectorXd target;  // complement average being decomposed
  Eigen::VectorXd eta;
  std::vector<Eigen::VectorXd> xi;
};

struct LevelSplit {
  int level = 0;
  std::vector<double> breaks;
  std::vector<PieceSplit> pieces;
  /// part of the control already in level j - 1
  ControlSignal kept;
  bool trivial() const {
    for (const auto& p : pieces)
      if (!p.xi.empty()) return false;
    return true;
  }
  int max_p() const {
    std::size_t p = 0;
    for (const auto& x : pieces) p = std::max(p, x.xi.size());
    return int(p);
  }
};

/// Splits c (valued in level j) into its level j-1 part and a 2^q-piece
/// average of the rest, decomposed through the witnesses of level j.
inline LevelSplit split_level(const ControlSignal& c, const SaturationLadder& L, int j, int q) {
  const ModeSpace& prev = L.level(j - 1);
  const double T = c.horizon();
  LevelSplit s;
  s.level = j;
  s.kept = project_control(c, prev);
  const int K = 1 << q;
  for (int k = 0; k <= K; ++k) s.breaks.push_back(T * k / K);
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXd avg = c.average(s.breaks[std::size_t(k)], s.breaks[std::size_t(k) + 1]);
    PieceSplit ps;
    ps.target = avg - prev.project(avg);
    if (ps.target.norm() <= kSpanTol * std::max(1.0, avg.norm())) {
      ps.eta = c.basis().zeros();
      s.pieces.push_back(std::move(ps));
      continue;
    }
    Decomposition d;
    try {
      d = L.decompose(ps.target, j);
    } catch (const std::exception& e) {
      const Eigen::VectorXd r = ps.target - L.level(j).project(ps.target);
      int worst = 0;
      for (int i = 1; i < c.basis().num_modes(); ++i)
        if (r.segment<6>(6 * i).norm() > r.segment<6>(6 * worst).norm()) worst = i;
      throw std::runtime_error(std::string("no witness decomposition on piece ") + std::to_string(k) +
                               ", largest unresolved component at mode " + to_string(c.basis().mode(worst)) + ": " +
                               e.what());
    }
    ps.eta = d.eta;
    ps.xi = std::move(d.xi);
    s.pieces.push_back(std::move(ps));
  }
  return s;
}

/// Cycle values on a piece: sqrt(p) xi_1, -sqrt(p) xi_1, sqrt(p) xi_2, ...
inline std::vector<Eigen::VectorXd> cycle_values(const PieceSplit& ps) {
  std::vector<Eigen::VectorXd> out;
  const double r = std::sqrt(double(ps.xi.size()));
  for (const auto& x : ps.xi) {
    out.push_back(r * x);
    out.push_back(-r * x);
  }
  return out;
}

/// max over samples u of |(1/m) sum_j (B(u + z_j) + L z_j) - eta - B(u) + eta1|
/// relative to max(1, |B(u)|).
inline double isver_residual(const SpectralBasis& sb, double nu, const std::vector<Eigen::VectorXd>& zetas,
                             const Eigen::VectorXd& eta, const Eigen::VectorXd& eta1, int samples, std::uint64_t seed) {
  if (zetas.empty()) return (eta - eta1).norm();
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  const double m = double(zetas.size());
  Eigen::VectorXd Bz, Bu;
  for (int s = 0; s < samples; ++s) {
    const Eigen::VectorXd u = sb.from_field(random_field(rng, sb.radius(), 1.0, 0));
    Eigen::VectorXd lhs = sb.zeros();
    for (const auto& z : zetas) {
      const Eigen::VectorXd w = u + z;
      sb.bilinear(w, w, Bz);
      lhs += Bz;
      for (int i = 0; i < sb.num_modes(); ++i) lhs.segment<6>(6 * i) += nu * sb.k2(i) * z.segment<6>(6 * i);
    }
    lhs = lhs / m - eta;
    sb.bilinear(u, u, Bu);
    const Eigen::VectorXd rhs = Bu - eta1;
    worst = std::max(worst, (lhs - rhs).norm() / std::max(1.0, rhs.norm()));
  }
  return worst;
}

struct ConvexifiedLevel {
  int level = 0;
  int n = 0;
  /// sub-interval breakpoints and the cycle value index on each
  std::vector<double> breaks;
  std::vector<Eigen::VectorXd> table;
  std::vector<int> index;
  ControlSignal zeta;
  ControlSignal eta;
  double isver_residual = 0.0;
  int max_p = 0;
  double min_subinterval = 0.0;
};

/// Fast-oscillating zeta_n (n cycles per piece) and the level j - 1 control
/// eta = kept + piece etas. Verifies the averaging identity on every piece.
inline ConvexifiedLevel convexify_level(const LevelSplit& s, int n, double nu, int isver_samples = 20,
                                        std::uint64_t seed = 1) {
  if (n < 1) throw std::invalid_argument("convexify_level: n must be positive");
  const SpectralBasisPtr& sbp = s.kept.basis_ptr();
  const SpectralBasis& sb = *sbp;
  const double T = s.kept.horizon();
  ConvexifiedLevel c;
  c.level = s.level;
  c.n = n;
  c.max_p = s.max_p();
  c.zeta = ControlSignal(sbp, T);
  c.eta = s.kept;
  c.table.push_back(sb.zeros());
  std::vector<Eigen::VectorXd> etas;
  std::vector<int> eidx;
  c.min_subinterval = T;
  for (std::size_t k = 0; k < s.pieces.size(); ++k) {
    const PieceSplit& ps = s.pieces[k];
    etas.push_back(ps.eta);
    eidx.push_back(int(k));
    const double a = s.breaks[k], b = s.breaks[k + 1];
    const auto vals = cycle_values(ps);
    c.isver_residual = std::max(c.isver_residual, isver_residual(sb, nu, vals, ps.eta, ps.target, isver_samples, seed + k));
    if (vals.empty()) {
      c.breaks.push_back(a);
      c.index.push_back(0);
      continue;
    }
    const int base = int(c.table.size());
    c.table.insert(c.table.end(), vals.begin(), vals.end());
    const int m = int(vals.size());
    const double d = (b - a) / (double(n) * m);
    c.min_subinterval = std::min(c.min_subinterval, d);
    for (int r = 0; r < n; ++r)
      for (int i = 0; i < m; ++i) {
        c.breaks.push_back(a + (b - a) * (double(r) * m + i) / (double(n) * m));
        c.index.push_back(base + i);
      }
  }
  c.breaks.push_back(T);
  c.zeta.add(std::make_shared<PiecewiseConstantTerm>(c.breaks, c.table, c.index));
  c.eta.add(std::make_shared<PiecewiseConstantTerm>(s.breaks, etas, eidx));
  return c;
}

struct Absorbed {
  ControlSignal eta_hat;
  ControlSignal zeta_hat;
  /// sup_t |int_0^t zeta_hat|_k over the breakpoints
  double zeta_relaxation = 0.0;
  /// (int |zeta - zeta_hat|_{k+1}^4)^{1/4}
  double l4_deviation = 0.0;
};

/// Replaces zeta_n by the ramped zeta_hat (vanishing at 0 and T) and returns
/// eta_hat = eta + zeta_hat'.
inline Absorbed absorb_zeta(const ConvexifiedLevel& c, double rho, int k) {
  const SpectralBasisPtr& sbp = c.eta.basis_ptr();
  const SpectralBasis& sb = *sbp;
  const double T = c.eta.horizon();
  Absorbed out{c.eta, ControlSignal(sbp, T), 0.0, 0.0};
  bool any = false;
  for (const auto& v : c.table) any = any || v.norm() > 0;
  if (!any) return out;
  auto z = std::make_shared<RampedTerm>(c.breaks, c.table, c.index, rho);
  out.zeta_hat.add(z);
  out.eta_hat.add(std::make_shared<RampedRateTerm>(z));
  // relaxation of zeta_hat at breakpoints
  Eigen::VectorXd I = sb.zeros();
  for (std::size_t i = 0; i + 1 < c.breaks.size(); ++i) {
    z->add_integral(c.breaks[i], c.breaks[i + 1], 1.0, I);
    out.zeta_relaxation = std::max(out.zeta_relaxation, sb.sobolev_norm(I, k));
  }
  // int_0^1 (1 - S)^4 = int_0^1 S^4
  static const double c4 = [] {
    double s = 0.0;
    for (int i = 0; i < 64; ++i)
      for (std::size_t q = 0; q < detail::kGLx.size(); ++q) {
        const double x = (i + 0.5 + 0.5 * detail::kGLx[q]) / 64;
        s += 0.5 / 64 * detail::kGLw[q] * std::pow(smoothstep(x), 4);
      }
    return s;
  }();
  double l4 = 0.0;
  for (std::size_t i = 0; i + 1 < c.breaks.size(); ++i) {
    const double w = rho * (c.breaks[i + 1] - c.breaks[i]);
    const Eigen::VectorXd& cur = c.table[std::size_t(c.index[i])];
    const Eigen::VectorXd prev = i == 0 ? sb.zeros() : c.table[std::size_t(c.index[i - 1])];
    l4 += w * c4 * std::pow(sb.sobolev_norm(cur - prev, k + 1), 4);
    if (i + 2 == c.breaks.size()) l4 += w * c4 * std::pow(sb.sobolev_norm(cur, k + 1), 4);
  }
  out.l4_deviation = std::pow(l4, 0.25);
  return out;
}

// ---------------------------------------------------------------------------
// Error measures

/// sup over a uniform grid of |I_a(t) - I_b(t)|_k, running integrals
/// interpolated linearly between records.
inline double relaxation_distance(const Trajectory& a, const Trajectory& b, int k, int samples) {
  auto I = [](const Trajectory& tr, double t) -> Eigen::VectorXd {
    const auto& ts = tr.times;
    if (t >= ts.back()) return tr.running_integral.back();
    const std::size_t i = std::size_t(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin()) - 1;
    const double th = (t - ts[i]) / (ts[i + 1] - ts[i]);
    return (1 - th) * tr.running_integral[i] + th * tr.running_integral[i + 1];
  };
  const double T = a.times.back();
  double r = 0.0;
  for (int i = 1; i <= samples; ++i) {
    const double t = T * i / samples;
    r = std::max(r, a.basis->sobolev_norm(I(a, t) - I(b, t), k));
  }
  return r;
}

/// Same against a signal with exact integrals.
inline double relaxation_distance(const Trajectory& a, const ControlSignal& phi, int k, int samples) {
  const double T = a.times.back();
  Eigen::VectorXd J = phi.basis().zeros();
  double r = 0.0;
  std::size_t i = 0;
  for (int s = 1; s <= samples; ++s) {
    const double t0 = T * (s - 1) / samples, t = T * s / samples;
    J += phi.integral(t0, t);
    while (i + 1 < a.times.size() && a.times[i + 1] < t) ++i;
    Eigen::VectorXd Ia;
    if (i + 1 >= a.times.size())
      Ia = a.running_integral.back();
    else {
      const double th = std::clamp((t - a.times[i]) / (a.times[i + 1] - a.times[i]), 0.0, 1.0);
      Ia = (1 - th) * a.running_integral[i] + th * a.running_integral[i + 1];
    }
    r = std::max(r, a.basis->sobolev_norm(Ia - J, k));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Staircase


struct ErrorTriple {
  double endpoint = 0.0, relaxation = 0.0, flow = 0.0;
  double total() const { return endpoint + relaxation + flow; }
};

struct StaircaseTrace {
  std::string space;
  int depth = 0;
  bool restricted = false;
  double epsilon = 0.0;
  double budget = 0.0;
  double solver_error = 0.0;
  double projection_error = 0.0;
  double psi_gap = 0.0;
  double ramp_relaxation = 0.0;
  double reference_xk = 0.0;
  bool bounded = true;
  std::vector<LevelRecord> levels;
  ErrorTriple final_error;
  ErrorTriple baseline_error;
  double control_residual = 0.0;
  bool budget_failure = false;
  bool success = false;
  double seconds = 0.0;
};

struct StaircaseResult {
  ControlSignal control;
  StaircaseTrace trace;
  std::optional<Trajectory> trajectory;
};

namespace detail {

/// Solver config aligned to the finest sub-interval of a level.
inline SimConfig level_config(const SimConfig& base, const StaircaseOptions& o, double min_sub, long* steps) {
  SimConfig c = base;
  const double T = base.horizon;
  long n = long(std::ceil(T / base.dt - 1e-9));
  if (min_sub < T) n = std::max(n, long(std::ceil(T / min_sub * o.steps_per_subinterval - 1e-6)));
  *steps = n;
  c.dt = T / double(n);
  if (c.dt >= T) c.dt = T / 2;
  c.record_every = int(std::max<long>(1, n / std::max(1, o.max_records)));
  return c;
}

inline double endpoint_error(const Trajectory& a, const Eigen::VectorXd& target, int k) {
  return a.basis->sobolev_norm(a.final_state() - target, k);
}

}  // namespace detail

/// Runs reference -> projection -> N convexification levels and evaluates the
/// three error components against the reference path.
inline StaircaseResult run_staircase(const SteeringProblem& P) {
  const auto t_start = std::chrono::steady_clock::now();
  P.validate();
  const SpectralBasisPtr& sbp = P.basis;
  const SpectralBasis& sb = *sbp;
  const StaircaseOptions& o = P.opts;
  const int k = P.cfg.sobolev_k;
  const double T = P.cfg.horizon;
  const ControlSignal h = P.h.empty() && !P.h.basis_ptr() ? ControlSignal::zero(sbp, T) : P.h;
  const Eigen::VectorXd u0 = sb.from_field(P.u0), u1 = sb.from_field(P.u1);

  StaircaseResult res;
  StaircaseTrace& tr = res.trace;
  tr.space = P.E.name();
  tr.epsilon = P.epsilon;

  const Reference ref = reference_trajectory(P);
  tr.ramp_relaxation = ref.ramp_relaxation;
  const SaturationLadder L(P.E, o.max_depth);
  const auto sat = L.saturation_depth();
  tr.restricted = !sat.has_value();
  const int N = sat ? *sat : L.depth();
  tr.depth = N;
  tr.budget = P.epsilon / (N + 2);

  SimConfig base = P.cfg;
  long steps = 0;
  base = detail::level_config(P.cfg, o, T, &steps);
  const Trajectory ref_traj = solve(u0, h, ref.eta0, nullptr, base);
  tr.reference_xk = ref_traj.xk_norm;
  tr.solver_error = detail::endpoint_error(ref_traj, u1, k) + relaxation_distance(ref_traj, ref.phi, k, o.relax_samples);

  ControlSignal c = project_control(ref.eta0, L.level(N));
  Trajectory cur = solve(u0, h, c, nullptr, base);
  tr.projection_error =
      detail::endpoint_error(cur, ref_traj.final_state(), k) + relaxation_distance(cur, ref_traj, k, o.relax_samples);
  tr.bounded = cur.xk_norm <= 3 * tr.reference_xk;

  // shortest oscillation sub-interval present in the current control
  double finest = T;
  for (int j = N; j >= 1; --j) {
    LevelRecord rec;
    rec.level = j;
    rec.space_dim = L.level(j - 1).dim();
    const LevelSplit split = split_level(c, L, j, o.pieces_log2);
    rec.p = split.max_p();
    std::optional<ControlSignal> best_c;
    double best_sub = finest;
    std::optional<Trajectory> best_tr;
    double best_err = std::numeric_limits<double>::infinity();
    const int n_lo = split.trivial() ? 1 : o.n_start, n_hi = split.trivial() ? 1 : o.n_cap;
    for (int n = n_lo; n <= n_hi; n *= 2) {
      const ConvexifiedLevel cv = convexify_level(split, n, P.cfg.nu, o.isver_samples, o.seed + std::uint64_t(j) * 1000);
      const Absorbed ab = absorb_zeta(cv, o.ramp_fraction, k);
      long st = 0;
      const SimConfig cfg = detail::level_config(P.cfg, o, std::min(cv.min_subinterval, finest), &st);
      if (st > o.max_steps) break;
      const Trajectory v = solve(u0, h, ab.eta_hat, nullptr, cfg);
      SweepRow row;
      row.n = n;
      row.endpoint_error = detail::endpoint_error(v, cur.final_state(), k);
      row.relaxation_error = relaxation_distance(v, cur, k, o.relax_samples);
      row.isver_residual = cv.isver_residual;
      row.zeta_relaxation = ab.zeta_relaxation;
      row.l4_deviation = ab.l4_deviation;
      row.steps = st;
      row.xk_norm = v.xk_norm;
      rec.sweep.push_back(row);
      rec.isver_residual = std::max(rec.isver_residual, cv.isver_residual);
      const double err = row.endpoint_error + row.relaxation_error;
      if (err < best_err) {
        best_err = err;
        best_c = ab.eta_hat;
        best_tr = v;
        best_sub = std::min(finest, cv.min_subinterval);
        rec.n = n;
        rec.endpoint_error = row.endpoint_error;
        rec.relaxation_error = row.relaxation_error;
        rec.xk_norm = v.xk_norm;
      }
      if (err <= tr.budget) break;
    }
    if (!best_c) throw std::runtime_error("staircase: step limit reached before the first oscillation index");
    rec.budget_met = best_err <= tr.budget;
    tr.budget_failure = tr.budget_failure || !rec.budget_met;
    tr.bounded = tr.bounded && rec.xk_norm <= 3 * tr.reference_xk;
    c = *best_c;
    finest = best_sub;
    cur = std::move(*best_tr);
    if (o.on_level) o.on_level(rec);
    tr.levels.push_back(std::move(rec));
  }

  // final evaluation against the reference path and its flow
  const double ref_dt = std::min(P.cfg.dt, 1e-2);
  const FlowMap phi_flow = integrate_flow(sbp, [&](double t) { return ref.phi.value(t); }, {T}, o.flow_grid, ref_dt,
                                          o.threads)
                               .back();
  tr.psi_gap = c1_distance(phi_flow, P.psi.target(sbp, o.flow_grid, ref_dt));
  auto evaluate = [&](const ControlSignal& control, double min_sub, ErrorTriple& e) {
    long st = 0;
    const SimConfig cfg = detail::level_config(P.cfg, o, min_sub, &st);
    StreamingFlow flow(sbp, o.flow_grid, o.threads);
    int count = 0;
    SolveOptions so;
    so.observer = [&](double t, const Eigen::VectorXd& u) {
      if (count++ % o.flow_stride == 0 || t >= T) flow.push(t, u);
    };
    Trajectory v = solve(u0, h, control, nullptr, cfg, so);
    e.endpoint = detail::endpoint_error(v, u1, k);
    e.relaxation = relaxation_distance(v, ref.phi, k, o.relax_samples);
    e.flow = c1_distance(flow.map(), phi_flow);
    return v;
  };
  res.trajectory = evaluate(c, finest, tr.final_error);
  LevelRecord fin;
  fin.level = 0;
  fin.space_dim = P.E.dim();
  fin.endpoint_error = tr.final_error.endpoint;
  fin.relaxation_error = tr.final_error.relaxation;
  fin.flow_error = tr.final_error.flow;
  fin.xk_norm = res.trajectory->xk_norm;
  if (o.on_level) o.on_level(fin);
  tr.levels.push_back(fin);
  evaluate(ControlSignal::zero(sbp, T), T, tr.baseline_error);

  // the final control must be E-valued
  const int samples = 4096;
  for (int i = 0; i <= samples; ++i) {
    const Eigen::VectorXd v = c.value(T * i / samples);
    tr.control_residual = std::max(tr.control_residual, (v - P.E.project(v)).norm() / std::max(1.0, v.norm()));
  }
  tr.success = tr.final_error.total() < P.epsilon;
  res.control = std::move(c);
  tr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

}  // namespace nsctl
