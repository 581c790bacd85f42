#pragma once
/// Lagrangian flow maps x' = u(t, x) with Jacobian transport D' = grad u D,
/// C^1 distances between maps, the relaxation norm, and isotopies to
/// shear-type targets.

#include "nsctl/nse.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

namespace nsctl {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Velocity and gradient of a dense coefficient vector at many points.
class PointEvaluator {
 public:
  explicit PointEvaluator(SpectralBasisPtr sb) : sb_(std::move(sb)) {
    if (sb_->radius() > kMaxRadius) throw std::invalid_argument("PointEvaluator: radius above 8");
  }
  static constexpr int kMaxRadius = 8;

  void set(const Eigen::VectorXd& coeffs) {
    active_.clear();
    for (int i = 0; i < sb_->num_modes(); ++i)
      if (!coeffs.segment<6>(6 * i).isZero(0.0)) active_.push_back({sb_->mode(i), coeffs.segment<6>(6 * i)});
  }

  void eval(const Eigen::Vector3d& x, Eigen::Vector3d& v, Eigen::Matrix3d& J) const {
    const int R = sb_->radius();
    std::complex<double> ex[3][2 * kMaxRadius + 1];
    for (int a = 0; a < 3; ++a) {
      const std::complex<double> z = std::polar(1.0, x[a]);
      ex[a][R] = 1.0;
      for (int m = 1; m <= R; ++m) {
        ex[a][R + m] = ex[a][R + m - 1] * z;
        ex[a][R - m] = std::conj(ex[a][R + m]);
      }
    }
    v.setZero();
    J.setZero();
    for (const auto& m : active_) {
      const std::complex<double> e = ex[0][R + m.ell.x] * ex[1][R + m.ell.y] * ex[2][R + m.ell.z];
      const double c = e.real(), s = e.imag();
      const Eigen::Vector3d cc = m.k.head<3>(), ss = m.k.tail<3>();
      v += c * cc + s * ss;
      // d/dx_b of cos(l.x) c + sin(l.x) s
      J += (s * -1.0 * cc + c * ss) * m.ell.vec().transpose();
    }
  }

 private:
  struct Active {
    Mode ell;
    Eigen::Matrix<double, 6, 1> k;
  };
  SpectralBasisPtr sb_;
  std::vector<Active> active_;
};

/// Seed grid of G^3 points 2 pi i / G with unwrapped positions and Jacobians.
struct FlowMap {
  int grid = 0;
  double time = 0.0;
  std::vector<Eigen::Vector3d> seeds;
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Matrix3d> jacobians;

  static FlowMap identity(int G) {
    if (G < 2) throw std::invalid_argument("flow grid resolution must be at least 2");
    FlowMap f;
    f.grid = G;
    for (int i = 0; i < G; ++i)
      for (int j = 0; j < G; ++j)
        for (int k = 0; k < G; ++k) f.seeds.emplace_back(kTwoPi * i / G, kTwoPi * j / G, kTwoPi * k / G);
    f.positions = f.seeds;
    f.jacobians.assign(f.seeds.size(), Eigen::Matrix3d::Identity());
    return f;
  }

  std::size_t size() const { return seeds.size(); }

  double max_det_deviation() const {
    double d = 0.0;
    for (const auto& J : jacobians) d = std::max(d, std::abs(J.determinant() - 1.0));
    return d;
  }
  double min_det() const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& J : jacobians) d = std::min(d, J.determinant());
    return d;
  }
};

/// Dense coefficients of the advecting field at time t.
using CoeffPath = std::function<Eigen::VectorXd(double)>;

namespace detail {

inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& body) {
  if (threads <= 1 || n < 64) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + std::size_t(threads) - 1) / std::size_t(threads);
  for (std::size_t lo = 0; lo < n; lo += chunk) pool.emplace_back(body, lo, std::min(n, lo + chunk));
  for (auto& t : pool) t.join();
}

}  // namespace detail

/// Classical RK4 on (x, D) for all seeds. The field is linear in time over
/// each step between the coefficient vectors at t, t + h/2 and t + h.
class FlowIntegrator {
 public:
  FlowIntegrator(SpectralBasisPtr sb, int G, int threads = 1)
      : sb_(sb), map_(FlowMap::identity(G)), e0_(sb), e1_(sb), e2_(sb), threads_(threads) {}

  explicit FlowIntegrator(SpectralBasisPtr sb, FlowMap start, int threads = 1)
      : sb_(sb), map_(std::move(start)), e0_(sb), e1_(sb), e2_(sb), threads_(threads) {}

  const FlowMap& map() const { return map_; }

  /// One RK4 step of length h with coefficients u0, umid, u1 at the stage times.
  void step(double h, const Eigen::VectorXd& u0, const Eigen::VectorXd& umid, const Eigen::VectorXd& u1) {
    e0_.set(u0);
    e1_.set(umid);
    e2_.set(u1);
    detail::parallel_for(map_.size(), threads_, [&](std::size_t lo, std::size_t hi) {
      Eigen::Vector3d v;
      Eigen::Matrix3d J;
      for (std::size_t i = lo; i < hi; ++i) {
        const Eigen::Vector3d x = map_.positions[i];
        const Eigen::Matrix3d D = map_.jacobians[i];
        e0_.eval(x, v, J);
        const Eigen::Vector3d k1 = v;
        const Eigen::Matrix3d K1 = J * D;
        e1_.eval(x + 0.5 * h * k1, v, J);
        const Eigen::Vector3d k2 = v;
        const Eigen::Matrix3d K2 = J * (D + 0.5 * h * K1);
        e1_.eval(x + 0.5 * h * k2, v, J);
        const Eigen::Vector3d k3 = v;
        const Eigen::Matrix3d K3 = J * (D + 0.5 * h * K2);
        e2_.eval(x + h * k3, v, J);
        const Eigen::Vector3d k4 = v;
        const Eigen::Matrix3d K4 = J * (D + h * K3);
        map_.positions[i] = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
        map_.jacobians[i] = D + (h / 6) * (K1 + 2 * K2 + 2 * K3 + K4);
      }
    });
    map_.time += h;
  }

  void advance(const CoeffPath& u, double t1, int steps) {
    const double t0 = map_.time, h = (t1 - t0) / steps;
    Eigen::VectorXd a = u(t0);
    for (int s = 0; s < steps; ++s) {
      const double ta = t0 + s * h;
      const Eigen::VectorXd b = u(ta + 0.5 * h), c = u(s + 1 == steps ? t1 : ta + h);
      step(h, a, b, c);
      a = c;
    }
    map_.time = t1;
  }

 private:
  SpectralBasisPtr sb_;
  FlowMap map_;
  PointEvaluator e0_, e1_, e2_;
  int threads_;
};

/// Flow maps of a coefficient path at the requested increasing times, with
/// at most max_dt per RK4 step.
inline std::vector<FlowMap> integrate_flow(SpectralBasisPtr sb, const CoeffPath& u, const std::vector<double>& times,
                                           int G, double max_dt, int threads = 1) {
  FlowIntegrator fi(sb, G, threads);
  std::vector<FlowMap> out;
  for (double t : times) {
    const double span = t - fi.map().time;
    if (span < 0) throw std::invalid_argument("integrate_flow: times must increase");
    if (span > 0) fi.advance(u, t, std::max(1, int(std::ceil(span / max_dt - 1e-9))));
    out.push_back(fi.map());
  }
  return out;
}

/// Flow maps at the recorded times of a trajectory, velocity linear between
/// records.
inline std::vector<FlowMap> integrate_flow(const Trajectory& tr, int G, int threads = 1) {
  FlowIntegrator fi(tr.basis, G, threads);
  std::vector<FlowMap> out{fi.map()};
  for (std::size_t i = 1; i < tr.size(); ++i) {
    fi.step(tr.times[i] - tr.times[i - 1], tr.states[i - 1], 0.5 * (tr.states[i - 1] + tr.states[i]), tr.states[i]);
    out.push_back(fi.map());
  }
  return out;
}

/// Solver observer that advances a flow alongside the solution.
class StreamingFlow {
 public:
  StreamingFlow(SpectralBasisPtr sb, int G, int threads = 1) : fi_(std::move(sb), G, threads) {}

  void push(double t, const Eigen::VectorXd& u) {
    if (have_ && t > t_) fi_.step(t - t_, prev_, 0.5 * (prev_ + u), u);
    prev_ = u;
    t_ = t;
    have_ = true;
  }
  std::function<void(double, const Eigen::VectorXd&)> observer() {
    return [this](double t, const Eigen::VectorXd& u) { push(t, u); };
  }
  const FlowMap& map() const { return fi_.map(); }

 private:
  FlowIntegrator fi_;
  Eigen::VectorXd prev_;
  double t_ = 0.0;
  bool have_ = false;
};

/// max over seeds of |x - y - 2 pi k| + |Dx - Dy|_F, minimised over one
/// global deck shift k in Z^3.
inline double c1_distance(const FlowMap& phi, const FlowMap& psi) {
  if (phi.grid != psi.grid || phi.size() != psi.size()) throw std::invalid_argument("c1_distance: grid mismatch");
  if (phi.size() == 0) return 0.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < phi.size(); ++i) mean += phi.positions[i] - psi.positions[i];
  mean /= double(phi.size());
  const Eigen::Vector3d base = (mean / kTwoPi).array().round();
  double best = std::numeric_limits<double>::infinity();
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int c = -1; c <= 1; ++c) {
        const Eigen::Vector3d shift = kTwoPi * (base + Eigen::Vector3d(a, b, c));
        double d = 0.0;
        for (std::size_t i = 0; i < phi.size() && d < best; ++i)
          d = std::max(d, (phi.positions[i] - psi.positions[i] - shift).norm() +
                              (phi.jacobians[i] - psi.jacobians[i]).norm());
        best = std::min(best, d);
      }
  return best;
}

/// sup_t |int_0^t u|_k with the running integral by trapezoid over samples.
inline double relaxation_norm(const SpectralBasis& sb, const std::vector<double>& times,
                              const std::vector<Eigen::VectorXd>& values, int k) {
  if (times.size() != values.size()) throw std::invalid_argument("relaxation_norm: size mismatch");
  if (times.empty()) return 0.0;
  Eigen::VectorXd I = sb.zeros();
  double r = 0.0;
  for (std::size_t i = 1; i < times.size(); ++i) {
    I += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
    r = std::max(r, sb.sobolev_norm(I, k));
  }
  return r;
}

/// Same norm for a signal, with exact integrals over a uniform grid.
inline double relaxation_norm(const ControlSignal& s, int k, int samples = 2048) {
  Eigen::VectorXd I = s.basis().zeros();
  double r = 0.0;
  const double T = s.horizon();
  for (int i = 0; i < samples; ++i) {
    I += s.integral(T * i / samples, T * (i + 1) / samples);
    r = std::max(r, s.basis().sobolev_norm(I, k));
  }
  return r;
}

struct StabilityRow {
  int n = 0;
  double flow_distance = 0.0;
  double relaxation = 0.0;
  double sup_difference = 0.0;
};

struct StabilityProbe {
  std::vector<StabilityRow> rows;
  double fitted_exponent = 0.0;  // slope of log flow distance against log relaxation
  double lambda = 0.5;
  bool monotone = false;
};

/// Flow distance between u and u + v sin(2 pi n t / T) over a sweep of n.
/// The H^k relaxation norm stands in for the Hoelder-type norm.
inline StabilityProbe stability_probe(SpectralBasisPtr sb, const CoeffPath& u, const Eigen::VectorXd& v, double T,
                                      const std::vector<int>& ns, double lambda, int G = 8, int k = 3,
                                      int steps_per_period = 64, int threads = 1) {
  if (!(lambda > 0 && lambda <= 1)) throw std::invalid_argument("stability_probe: lambda must be in (0, 1]");
  StabilityProbe out;
  out.lambda = lambda;
  const int nmax = *std::max_element(ns.begin(), ns.end());
  const double dt = T / (double(nmax) * steps_per_period);
  const FlowMap ref = integrate_flow(sb, u, {T}, G, dt, threads).back();
  for (int n : ns) {
    const double w = kTwoPi * n / T;
    CoeffPath uh = [&, w](double t) -> Eigen::VectorXd { return u(t) + std::sin(w * t) * v; };
    StabilityRow r;
    r.n = n;
    r.flow_distance = c1_distance(ref, integrate_flow(sb, uh, {T}, G, dt, threads).back());
    r.relaxation = (T / (std::numbers::pi * n)) * sb->sobolev_norm(v, k);
    r.sup_difference = v.cwiseAbs().sum();
    out.rows.push_back(r);
  }
  out.monotone = true;
  for (std::size_t i = 1; i < out.rows.size(); ++i)
    if (!(out.rows[i].flow_distance < out.rows[i - 1].flow_distance)) out.monotone = false;
  // least squares slope in log-log
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = double(out.rows.size());
  for (const auto& r : out.rows) {
    const double x = std::log(r.relaxation), y = std::log(std::max(r.flow_distance, 1e-300));
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  out.fitted_exponent = m > 1 ? (m * sxy - sx * sy) / (m * sxx - sx * sx) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Isotopies

enum class WindowProfile { Uniform, Bump };

/// Time profile with unit integral on [t0, t1] and its derivative.
struct Window {
  double t0 = 0.0, t1 = 1.0;
  WindowProfile profile = WindowProfile::Bump;

  double rate(double t) const {
    if (t < t0 || t > t1) return 0.0;
    const double L = t1 - t0;
    if (profile == WindowProfile::Uniform) return 1.0 / L;
    return (1 - std::cos(kTwoPi * (t - t0) / L)) / L;
  }
  double rate_derivative(double t) const {
    if (profile == WindowProfile::Uniform || t < t0 || t > t1) return 0.0;
    const double L = t1 - t0;
    return kTwoPi * std::sin(kTwoPi * (t - t0) / L) / (L * L);
  }
  /// int_0^t rate
  double progress(double t) const {
    if (t <= t0) return 0.0;
    if (t >= t1) return 1.0;
    const double L = t1 - t0, s = (t - t0) / L;
    if (profile == WindowProfile::Uniform) return s;
    return s - std::sin(kTwoPi * s) / kTwoPi;
  }
  Profile as_profile() const {
    Window w = *this;
    return Profile{[w](double t) { return w.rate(t); }, [w](double t) { return w.progress(t); }, {t0, t1}};
  }
  Profile as_rate_profile() const {
    Window w = *this;
    return Profile{[w](double t) { return w.rate_derivative(t); }, [w](double t) { return w.rate(t); }, {t0, t1}};
  }
};

/// A field is a shear along axis i when every coefficient is parallel to e_i
/// and every mode has l_i = 0; its time-one map adds the field's i-th
/// component to x_i.
inline std::optional<int> shear_axis(const TrigField& f) {
  std::optional<int> axis;
  for (const auto& [m, c] : f.modes()) {
    const Eigen::Vector3d v = c.cos.cwiseAbs() + c.sin.cwiseAbs();
    int a = -1;
    for (int i = 0; i < 3; ++i)
      if (v[i] > 0) {
        if (a >= 0) return std::nullopt;
        a = i;
      }
    if (a < 0) continue;
    const int li = a == 0 ? m.x : a == 1 ? m.y : m.z;
    if (li != 0 || (axis && *axis != a)) return std::nullopt;
    axis = a;
  }
  return axis;
}

/// Path from the identity to psi generated by fields w_k active on
/// consecutive windows; psi is the composition of the time-one maps, the
/// first window acting first.
struct Isotopy {
  double horizon = 1.0;
  std::vector<TrigField> fields;
  std::vector<Window> windows;

  bool is_identity() const { return fields.empty(); }

  TrigField velocity(double t) const {
    TrigField u;
    for (std::size_t k = 0; k < fields.size(); ++k)
      if (const double r = windows[k].rate(t); r != 0.0) u += r * fields[k];
    return u;
  }
  Eigen::VectorXd velocity(const SpectralBasis& sb, double t) const {
    Eigen::VectorXd u = sb.zeros();
    for (std::size_t k = 0; k < fields.size(); ++k)
      if (const double r = windows[k].rate(t); r != 0.0) u += r * sb.from_field(fields[k]);
    return u;
  }
  CoeffPath path(SpectralBasisPtr sb) const {
    return [sb, self = *this](double t) { return self.velocity(*sb, t); };
  }

  /// Closed-form psi when every field is a shear.
  std::optional<Eigen::Vector3d> apply(const Eigen::Vector3d& x) const {
    Eigen::Vector3d y = x;
    for (const auto& f : fields) {
      const auto a = shear_axis(f);
      if (!a) return std::nullopt;
      y[*a] += f.evaluate(y)[*a];
    }
    return y;
  }

  /// Target map on a seed grid: closed form for shears, else by integration.
  FlowMap target(SpectralBasisPtr sb, int G, double max_dt = 1e-3) const {
    bool closed = true;
    for (const auto& f : fields) closed = closed && shear_axis(f).has_value();
    if (!closed) return integrate_flow(sb, path(sb), {horizon}, G, max_dt).back();
    FlowMap m = FlowMap::identity(G);
    m.time = horizon;
    for (std::size_t i = 0; i < m.size(); ++i) {
      Eigen::Vector3d y = m.seeds[i];
      Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
      for (const auto& f : fields) {
        const int a = *shear_axis(f);
        Eigen::Matrix3d S = Eigen::Matrix3d::Identity();
        S.row(a) += f.gradient(y).row(a);
        y[a] += f.evaluate(y)[a];
        D = S * D;
      }
      m.positions[i] = y;
      m.jacobians[i] = D;
    }
    return m;
  }
};

inline void check_isotopy_field(const TrigField& w, int radius) {
  if (w.radius() > radius) throw std::invalid_argument("isotopy field exceeds the Galerkin radius");
}

/// Identity target: no fields.
inline Isotopy identity_isotopy(double T) { return Isotopy{T, {}, {}}; }

/// psi = time-one map of w, run with a unit-integral profile on [0, T].
inline Isotopy time_one_isotopy(const TrigField& w, double T, WindowProfile p = WindowProfile::Bump) {
  if (w.empty()) return identity_isotopy(T);
  return Isotopy{T, {w}, {Window{0.0, T, p}}};
}

/// psi = S_1 o S_2 o ... o S_m for shear fields given in that order: S_m acts
/// first, on the first window. Rejects non-shear fields and targets whose
/// Jacobian determinant on a probe grid falls below the floor.
inline Isotopy shear_isotopy(const std::vector<TrigField>& shears, double T, WindowProfile p = WindowProfile::Bump,
                             double det_floor = 0.1) {
  Isotopy iso{T, {}, {}};
  const int m = int(shears.size());
  for (int k = 0; k < m; ++k) {
    const TrigField& f = shears[std::size_t(m - 1 - k)];
    if (!shear_axis(f)) throw std::invalid_argument("shear_isotopy: field is not a shear");
    iso.fields.push_back(f);
    iso.windows.push_back(Window{T * k / m, T * (k + 1) / m, p});
  }
  if (!iso.fields.empty()) {
    const FlowMap probe = iso.target(make_basis(std::max(1, iso.fields.front().radius())), 6);
    if (probe.min_det() < det_floor) throw std::invalid_argument("shear_isotopy: Jacobian floor violated");
  }
  return iso;
}

/// f e_i with f(x_{i+1}, x_{i+2}) = a cos(p x_{i+1} + q x_{i+2}) + b sin(...).
inline TrigField shear_field(int axis, int p, int q, double a, double b) {
  if (axis < 0 || axis > 2) throw std::invalid_argument("shear_field: axis must be 0, 1 or 2");
  int l[3] = {0, 0, 0};
  l[(axis + 1) % 3] = p;
  l[(axis + 2) % 3] = q;
  TrigField f;
  const Eigen::Vector3d e = Eigen::Vector3d::Unit(axis);
  f.add({l[0], l[1], l[2]}, a * e, b * e);
  return f;
}

}  // namespace nsctl
