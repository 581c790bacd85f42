#pragma once
/// Time-dependent controls with values in the dense Galerkin layout. Each
/// signal is a sum of terms that know their exact value and time integral.

#include "nsctl/fourier.hpp"
#include "nsctl/saturation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace nsctl {

enum class SignalKind { SmoothSampled, PiecewiseConstant };

using VecRef = Eigen::Ref<Eigen::VectorXd>;

class SignalTerm {
 public:
  virtual ~SignalTerm() = default;
  /// out += s * value(t); left picks the left limit at jumps.
  virtual void add_value(double t, double s, VecRef out, bool left = false) const = 0;
  /// out += s * integral over [a, b].
  virtual void add_integral(double a, double b, double s, VecRef out) const = 0;
  virtual bool piecewise_constant() const { return false; }
  virtual std::vector<double> breakpoints() const { return {}; }
};

namespace detail {

/// Index of the piece [b_k, b_{k+1}) holding t (the last piece is closed).
inline std::size_t piece_index(const std::vector<double>& b, double t, bool left) {
  const auto it = left ? std::lower_bound(b.begin(), b.end(), t) : std::upper_bound(b.begin(), b.end(), t);
  std::ptrdiff_t k = (it - b.begin()) - 1;
  k = std::clamp<std::ptrdiff_t>(k, 0, std::ptrdiff_t(b.size()) - 2);
  return std::size_t(k);
}

// 5-point Gauss-Legendre on [a, b]
inline constexpr std::array<double, 5> kGLx{-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                            0.9061798459386640};
inline constexpr std::array<double, 5> kGLw{0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                            0.4786286704993665, 0.2369268850561891};

}  // namespace detail

/// Piecewise-constant values on breakpoints b_0 < ... < b_K; piece k holds
/// table[index[k]].
class PiecewiseConstantTerm : public SignalTerm {
 public:
  PiecewiseConstantTerm(std::vector<double> breaks, std::vector<Eigen::VectorXd> table, std::vector<int> index)
      : b_(std::move(breaks)), table_(std::move(table)), idx_(std::move(index)) {
    if (b_.size() != idx_.size() + 1 || idx_.empty()) throw std::invalid_argument("piecewise signal: size mismatch");
  }
  PiecewiseConstantTerm(std::vector<double> breaks, std::vector<Eigen::VectorXd> values)
      : b_(std::move(breaks)), table_(std::move(values)) {
    for (std::size_t k = 0; k < table_.size(); ++k) idx_.push_back(int(k));
    if (b_.size() != idx_.size() + 1 || idx_.empty()) throw std::invalid_argument("piecewise signal: size mismatch");
  }

  void add_value(double t, double s, VecRef out, bool left) const override {
    out += s * table_[std::size_t(idx_[detail::piece_index(b_, t, left)])];
  }
  void add_integral(double a, double b, double s, VecRef out) const override {
    if (b <= a) return;
    std::size_t k = detail::piece_index(b_, a, false);
    double lo = a;
    while (lo < b) {
      const double hi = k + 1 < idx_.size() ? std::min(b, b_[k + 1]) : b;
      out += (s * (hi - lo)) * table_[std::size_t(idx_[k])];
      lo = hi;
      ++k;
      if (k >= idx_.size()) break;
    }
  }
  bool piecewise_constant() const override { return true; }
  std::vector<double> breakpoints() const override { return b_; }
  const std::vector<Eigen::VectorXd>& table() const { return table_; }
  const std::vector<int>& index() const { return idx_; }

 private:
  std::vector<double> b_;
  std::vector<Eigen::VectorXd> table_;
  std::vector<int> idx_;
};

/// Linear interpolation of samples at increasing times.
class SampledTerm : public SignalTerm {
 public:
  SampledTerm(std::vector<double> times, std::vector<Eigen::VectorXd> values)
      : t_(std::move(times)), v_(std::move(values)) {
    if (t_.size() != v_.size() || t_.size() < 2) throw std::invalid_argument("sampled signal: need two samples");
  }
  void add_value(double t, double s, VecRef out, bool) const override {
    const std::size_t k = detail::piece_index(t_, t, false);
    const double th = std::clamp((t - t_[k]) / (t_[k + 1] - t_[k]), 0.0, 1.0);
    out += (s * (1 - th)) * v_[k] + (s * th) * v_[k + 1];
  }
  void add_integral(double a, double b, double s, VecRef out) const override {
    if (b <= a) return;
    std::size_t k = detail::piece_index(t_, a, false);
    double lo = a;
    while (lo < b && k + 1 < t_.size()) {
      const double hi = k + 2 < t_.size() ? std::min(b, t_[k + 1]) : b;
      const double L = t_[k + 1] - t_[k];
      const double x0 = (lo - t_[k]) / L, x1 = (hi - t_[k]) / L;
      // integral of (1 - x) and x over [x0, x1], times L
      const double w1 = L * (x1 * x1 - x0 * x0) / 2, w0 = L * (x1 - x0) - w1;
      out += (s * w0) * v_[k] + (s * w1) * v_[k + 1];
      lo = hi;
      ++k;
    }
  }
  std::vector<double> breakpoints() const override { return t_; }

 private:
  std::vector<double> t_;
  std::vector<Eigen::VectorXd> v_;
};

/// Scalar time profile with optional closed-form antiderivative.
struct Profile {
  std::function<double(double)> f;
  std::function<double(double)> antiderivative;
  std::vector<double> breaks;

  double integral(double a, double b) const {
    if (antiderivative) return antiderivative(b) - antiderivative(a);
    double s = 0.0;
    double lo = a;
    std::vector<double> cuts;
    for (double c : breaks)
      if (c > a && c < b) cuts.push_back(c);
    cuts.push_back(b);
    for (double hi : cuts) {
      const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
      for (std::size_t q = 0; q < detail::kGLx.size(); ++q) s += half * detail::kGLw[q] * f(mid + half * detail::kGLx[q]);
      lo = hi;
    }
    return s;
  }
};

/// f(t) v for a scalar profile f.
class ProfileTerm : public SignalTerm {
 public:
  ProfileTerm(Profile p, Eigen::VectorXd v) : p_(std::move(p)), v_(std::move(v)) {}
  void add_value(double t, double s, VecRef out, bool) const override { out += (s * p_.f(t)) * v_; }
  void add_integral(double a, double b, double s, VecRef out) const override { out += (s * p_.integral(a, b)) * v_; }
  std::vector<double> breakpoints() const override { return p_.breaks; }

 private:
  Profile p_;
  Eigen::VectorXd v_;
};

/// C^1 ramp 3x^2 - 2x^3 on [0, 1] and its antiderivative.
inline double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3 - 2 * x);
}
inline double smoothstep_rate(double x) { return (x <= 0 || x >= 1) ? 0.0 : 6 * x * (1 - x); }
inline double smoothstep_integral(double x) {
  if (x <= 0) return 0.0;
  if (x >= 1) return x - 0.5;
  return x * x * x - 0.5 * x * x * x * x;
}

/// Smoothed piecewise-constant signal: on piece k it equals v_k except on the
/// first fraction rho of the piece, where it blends from v_{k-1} (zero before
/// the first piece) to v_k, and on the last fraction rho of the final piece,
/// where it blends to zero. Vanishes at both ends of the horizon.
class RampedTerm : public SignalTerm {
 public:
  RampedTerm(std::vector<double> breaks, std::vector<Eigen::VectorXd> table, std::vector<int> index, double rho)
      : b_(std::move(breaks)), table_(std::move(table)), idx_(std::move(index)), rho_(rho) {
    if (b_.size() != idx_.size() + 1 || idx_.empty()) throw std::invalid_argument("ramped signal: size mismatch");
    if (!(rho_ > 0 && rho_ <= 0.5)) throw std::invalid_argument("ramped signal: ramp fraction must be in (0, 1/2]");
    zero_ = Eigen::VectorXd::Zero(table_.empty() ? 0 : table_[0].size());
  }

  double rho() const { return rho_; }

  /// value (order 0) or time derivative (order 1)
  void add(double t, double s, VecRef out, int order) const {
    const std::size_t k = detail::piece_index(b_, t, false);
    const double L = b_[k + 1] - b_[k], w = rho_ * L;
    const Eigen::VectorXd& cur = val(k);
    const Eigen::VectorXd& prev = k == 0 ? zero_ : val(k - 1);
    const double x = (t - b_[k]) / w;
    if (x < 1) {
      if (order == 0)
        out += s * (prev + smoothstep(x) * (cur - prev));
      else
        out += (s * smoothstep_rate(x) / w) * (cur - prev);
    }
    const bool last = k + 1 == idx_.size();
    const double y = last ? (t - (b_[k + 1] - w)) / w : -1;
    if (x >= 1) {
      if (last && y > 0) {
        if (order == 0)
          out += (s * (1 - smoothstep(y))) * cur;
        else
          out -= (s * smoothstep_rate(y) / w) * cur;
      } else if (order == 0) {
        out += s * cur;
      }
    }
  }

  void add_value(double t, double s, VecRef out, bool) const override { add(t, s, out, 0); }

  void add_integral(double a, double b, double s, VecRef out) const override {
    if (b <= a) return;
    std::size_t k = detail::piece_index(b_, a, false);
    double lo = a;
    while (lo < b && k < idx_.size()) {
      const double hi = k + 1 < idx_.size() ? std::min(b, b_[k + 1]) : b;
      piece_integral(k, lo, hi, s, out);
      lo = hi;
      ++k;
    }
  }

  std::vector<double> breakpoints() const override { return b_; }

 private:
  const Eigen::VectorXd& val(std::size_t k) const { return table_[std::size_t(idx_[k])]; }

  void piece_integral(std::size_t k, double lo, double hi, double s, VecRef out) const {
    const double L = b_[k + 1] - b_[k], w = rho_ * L;
    const Eigen::VectorXd& cur = val(k);
    const Eigen::VectorXd& prev = k == 0 ? zero_ : val(k - 1);
    // prev + S(x) (cur - prev) on the opening ramp, cur afterwards
    auto F_open = [&](double t) { return w * smoothstep_integral((t - b_[k]) / w); };
    const double ramp = F_open(hi) - F_open(lo);
    const double len = hi - lo;
    const double open_end = b_[k] + w;
    const double open_len = std::max(0.0, std::min(hi, open_end) - lo);
    // over the opening part: integral of prev (1 - S) + cur S
    const double s_open = ramp - (std::max(0.0, hi - open_end) - std::max(0.0, lo - open_end));
    out += (s * (open_len - s_open)) * prev;
    double cur_w = s_open + std::max(0.0, hi - std::max(lo, open_end));
    if (k + 1 == idx_.size()) {
      const double c0 = b_[k + 1] - w;
      auto G = [&](double t) { return w * smoothstep_integral((t - c0) / w); };
      cur_w -= G(hi) - G(lo);
    }
    (void)len;
    out += (s * cur_w) * cur;
  }

  std::vector<double> b_;
  std::vector<Eigen::VectorXd> table_;
  std::vector<int> idx_;
  double rho_;
  Eigen::VectorXd zero_;
};

/// Time derivative of a ramped term; its integral is the exact difference.
class RampedRateTerm : public SignalTerm {
 public:
  explicit RampedRateTerm(std::shared_ptr<const RampedTerm> z) : z_(std::move(z)) {}
  void add_value(double t, double s, VecRef out, bool) const override { z_->add(t, s, out, 1); }
  void add_integral(double a, double b, double s, VecRef out) const override {
    z_->add(b, s, out, 0);
    z_->add(a, -s, out, 0);
  }
  std::vector<double> breakpoints() const override { return z_->breakpoints(); }

 private:
  std::shared_ptr<const RampedTerm> z_;
};

/// Sum of scaled terms on a common Galerkin box and horizon.
class ControlSignal {
 public:
  ControlSignal() = default;
  ControlSignal(SpectralBasisPtr sb, double horizon) : sb_(std::move(sb)), T_(horizon) {
    if (!(horizon > 0)) throw std::invalid_argument("signal: horizon must be positive");
  }

  static ControlSignal zero(SpectralBasisPtr sb, double horizon) { return ControlSignal(std::move(sb), horizon); }

  static ControlSignal constant(SpectralBasisPtr sb, double horizon, const Eigen::VectorXd& v) {
    ControlSignal s(sb, horizon);
    s.add(std::make_shared<PiecewiseConstantTerm>(std::vector<double>{0.0, horizon}, std::vector<Eigen::VectorXd>{v}));
    return s;
  }

  void add(std::shared_ptr<const SignalTerm> term, double scale = 1.0) { terms_.push_back({std::move(term), scale}); }

  double horizon() const { return T_; }
  const SpectralBasisPtr& basis_ptr() const { return sb_; }
  const SpectralBasis& basis() const { return *sb_; }
  bool empty() const { return terms_.empty(); }

  SignalKind kind() const {
    for (const auto& t : terms_)
      if (!t.term->piecewise_constant()) return SignalKind::SmoothSampled;
    return SignalKind::PiecewiseConstant;
  }

  Eigen::VectorXd value(double t, bool left = false) const {
    Eigen::VectorXd out = sb_->zeros();
    for (const auto& x : terms_) x.term->add_value(t, x.scale, out, left);
    return out;
  }

  Eigen::VectorXd integral(double a, double b) const {
    Eigen::VectorXd out = sb_->zeros();
    for (const auto& x : terms_) x.term->add_integral(a, b, x.scale, out);
    return out;
  }

  Eigen::VectorXd average(double a, double b) const { return integral(a, b) / (b - a); }

  TrigField field(double t) const { return sb_->to_field(value(t)); }

  std::vector<double> breakpoints() const {
    std::vector<double> out;
    for (const auto& x : terms_) {
      auto b = x.term->breakpoints();
      out.insert(out.end(), b.begin(), b.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  ControlSignal& operator+=(const ControlSignal& o) {
    if (!sb_) *this = ControlSignal(o.sb_, o.T_);
    terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
    return *this;
  }
  friend ControlSignal operator+(ControlSignal a, const ControlSignal& b) { return a += b; }
  ControlSignal scaled(double s) const {
    ControlSignal out = *this;
    for (auto& t : out.terms_) t.scale *= s;
    return out;
  }

  /// Largest relative distance of sampled values from E.
  double space_residual(const ModeSpace& E, int samples = 64) const {
    double r = 0.0;
    for (int i = 0; i <= samples; ++i) {
      const Eigen::VectorXd v = value(T_ * i / samples);
      const double nv = v.norm();
      if (nv > 0) r = std::max(r, (v - E.project(v)).norm() / nv);
    }
    return r;
  }

  /// L2(0, T; H^k) norm by composite midpoint sampling.
  double l2_norm(int k, int samples = 512) const {
    double s = 0.0;
    const double h = T_ / samples;
    for (int i = 0; i < samples; ++i) s += h * std::pow(sb_->sobolev_norm(value((i + 0.5) * h), k), 2);
    return std::sqrt(s);
  }

 private:
  struct Scaled {
    std::shared_ptr<const SignalTerm> term;
    double scale;
  };
  SpectralBasisPtr sb_;
  double T_ = 1.0;
  std::vector<Scaled> terms_;
};

/// Orthogonal projection of a signal onto a subspace, exact on values and
/// integrals.
class ProjectedTerm : public SignalTerm {
 public:
  ProjectedTerm(ControlSignal inner, Eigen::MatrixXd Q) : inner_(std::move(inner)), Q_(std::move(Q)) {}
  void add_value(double t, double s, VecRef out, bool left) const override {
    out += s * (Q_ * (Q_.transpose() * inner_.value(t, left)));
  }
  void add_integral(double a, double b, double s, VecRef out) const override {
    out += s * (Q_ * (Q_.transpose() * inner_.integral(a, b)));
  }
  bool piecewise_constant() const override { return inner_.kind() == SignalKind::PiecewiseConstant; }
  std::vector<double> breakpoints() const override { return inner_.breakpoints(); }

 private:
  ControlSignal inner_;
  Eigen::MatrixXd Q_;
};

}  // namespace nsctl
