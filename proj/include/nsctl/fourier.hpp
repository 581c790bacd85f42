#pragma once
/// Real trigonometric vector fields on the 3-torus and the projected
/// bilinear term B(a, b) = Pi(<a, grad> b).

#include "nsctl/lattice.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

namespace nsctl {

/// Coefficients of cos<ell,x> and sin<ell,x> at one canonical wavevector.
struct ModeCoeffs {
  Eigen::Vector3d cos = Eigen::Vector3d::Zero();
  Eigen::Vector3d sin = Eigen::Vector3d::Zero();
  bool operator==(const ModeCoeffs& o) const { return cos == o.cos && sin == o.sin; }
};

/// Orthogonal projection of v onto ell^perp.
inline Eigen::Vector3d project_perp(const Mode& ell, const Eigen::Vector3d& v) {
  const Eigen::Vector3d k = ell.vec();
  return v - (v.dot(k) / k.squaredNorm()) * k;
}

/// Finite sum of c cos<ell,x> + s sin<ell,x> over canonical wavevectors, with
/// c, s orthogonal to ell. Keys are always canonical; the zero mode is absent.
class TrigField {
 public:
  static constexpr double kDivTol = 1e-10;

  TrigField() = default;

  /// Adds c cos<ell,x> + s sin<ell,x>. Throws when c or s has a component
  /// along ell or ell is zero.
  void add(const Mode& ell, const Eigen::Vector3d& c, const Eigen::Vector3d& s) {
    if (ell.is_zero()) throw std::invalid_argument("TrigField: zero wavevector");
    const double scale = std::max({1.0, c.norm(), s.norm()});
    const Eigen::Vector3d k = ell.vec() / ell.norm();
    if (std::abs(c.dot(k)) > kDivTol * scale || std::abs(s.dot(k)) > kDivTol * scale)
      throw std::invalid_argument("TrigField: coefficient not orthogonal to " + to_string(ell));
    add_unchecked(ell, c, s);
  }

  /// Adds the Leray projection of c cos<ell,x> + s sin<ell,x>.
  void add_projected(const Mode& ell, const Eigen::Vector3d& c, const Eigen::Vector3d& s) {
    if (ell.is_zero()) return;
    add_unchecked(ell, project_perp(ell, c), project_perp(ell, s));
  }

  void add_cos(const Mode& ell, const Eigen::Vector3d& c) { add(ell, c, Eigen::Vector3d::Zero()); }
  void add_sin(const Mode& ell, const Eigen::Vector3d& s) { add(ell, Eigen::Vector3d::Zero(), s); }

  const std::map<Mode, ModeCoeffs>& modes() const { return modes_; }
  bool empty() const { return modes_.empty(); }
  std::size_t size() const { return modes_.size(); }

  ModeCoeffs at(const Mode& ell) const {
    const bool canon = ell.is_canonical();
    auto it = modes_.find(canon ? ell : -ell);
    if (it == modes_.end()) return {};
    ModeCoeffs out = it->second;
    if (!canon) out.sin = -out.sin;
    return out;
  }

  int radius() const {
    int r = 0;
    for (const auto& [m, c] : modes_) r = std::max(r, m.max_norm());
    return r;
  }

  TrigField& operator+=(const TrigField& o) {
    for (const auto& [m, c] : o.modes_) add_unchecked(m, c.cos, c.sin);
    return *this;
  }
  TrigField& operator-=(const TrigField& o) {
    for (const auto& [m, c] : o.modes_) add_unchecked(m, -c.cos, -c.sin);
    return *this;
  }
  TrigField& operator*=(double s) {
    for (auto& [m, c] : modes_) {
      c.cos *= s;
      c.sin *= s;
    }
    return *this;
  }
  friend TrigField operator+(TrigField a, const TrigField& b) { return a += b; }
  friend TrigField operator-(TrigField a, const TrigField& b) { return a -= b; }
  friend TrigField operator*(double s, TrigField a) { return a *= s; }
  friend TrigField operator-(TrigField a) { return a *= -1.0; }

  /// Drops modes whose coefficients are exactly zero or below tol in norm.
  void prune(double tol = 0.0) {
    for (auto it = modes_.begin(); it != modes_.end();) {
      if (it->second.cos.norm() <= tol && it->second.sin.norm() <= tol)
        it = modes_.erase(it);
      else
        ++it;
    }
  }

  /// Keeps only modes with sup-norm at most R.
  TrigField truncated(int R) const {
    TrigField out;
    for (const auto& [m, c] : modes_)
      if (m.max_norm() <= R) out.modes_.emplace(m, c);
    return out;
  }

  Eigen::Vector3d evaluate(const Eigen::Vector3d& x) const {
    Eigen::Vector3d u = Eigen::Vector3d::Zero();
    for (const auto& [m, c] : modes_) {
      const double ph = m.vec().dot(x);
      u += std::cos(ph) * c.cos + std::sin(ph) * c.sin;
    }
    return u;
  }

  /// Velocity gradient J(a, b) = d u_a / d x_b at x.
  Eigen::Matrix3d gradient(const Eigen::Vector3d& x) const {
    Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
    for (const auto& [m, c] : modes_) {
      const double ph = m.vec().dot(x);
      J += (std::cos(ph) * c.sin - std::sin(ph) * c.cos) * m.vec().transpose();
    }
    return J;
  }

  bool operator==(const TrigField&) const = default;

 private:
  void add_unchecked(const Mode& ell, const Eigen::Vector3d& c, const Eigen::Vector3d& s) {
    const bool canon = ell.is_canonical();
    auto& slot = modes_[canon ? ell : -ell];
    slot.cos += c;
    slot.sin += canon ? s : Eigen::Vector3d(-s);
  }

  std::map<Mode, ModeCoeffs> modes_;
};

/// <u, v> = sum over modes of cos.cos + sin.sin, so each basis field has norm 1.
inline double inner(const TrigField& u, const TrigField& v) {
  double s = 0.0;
  for (const auto& [m, c] : u.modes()) {
    auto it = v.modes().find(m);
    if (it != v.modes().end()) s += c.cos.dot(it->second.cos) + c.sin.dot(it->second.sin);
  }
  return s;
}

inline double norm(const TrigField& u) { return std::sqrt(inner(u, u)); }

/// Homogeneous Sobolev norm (sum |ell|^{2k} (|cos|^2 + |sin|^2))^{1/2}.
inline double sobolev_norm(const TrigField& u, int k) {
  double s = 0.0;
  for (const auto& [m, c] : u.modes())
    s += std::pow(double(m.norm2()), k) * (c.cos.squaredNorm() + c.sin.squaredNorm());
  return std::sqrt(s);
}

inline double energy(const TrigField& u) { return 0.5 * inner(u, u); }

/// Basis fields c_ell and s_ell for any nonzero ell (sign conventions follow
/// the frame: c_{-l} = l(-l) cos<l,x>, s_{-l} = -l(-l) sin<l,x>).
inline TrigField basis_cos(const Mode& ell) {
  const Mode c = ell.canonical();
  const auto f = frame(c);
  TrigField u;
  u.add_cos(c, ell.is_canonical() ? f.first : f.second);
  return u;
}

inline TrigField basis_sin(const Mode& ell) {
  const Mode c = ell.canonical();
  const auto f = frame(c);
  TrigField u;
  if (ell.is_canonical())
    u.add_sin(c, f.first);
  else
    u.add_sin(c, -f.second);
  return u;
}

/// Contribution of a = alpha cos<m,x> + beta sin<m,x> acting on
/// b = gamma cos<n,x> + delta sin<n,x>: <a,grad> b is supported on m + n and
/// m - n with the cos/sin coefficients returned here (before projection).
struct PairTerms {
  Eigen::Vector3d cos_plus, sin_plus, cos_minus, sin_minus;
};

inline PairTerms pair_terms(const Eigen::Vector3d& alpha, const Eigen::Vector3d& beta, const Mode& n,
                            const Eigen::Vector3d& gamma, const Eigen::Vector3d& delta) {
  const Eigen::Vector3d nv = n.vec();
  const double an = alpha.dot(nv), bn = beta.dot(nv);
  return {0.5 * (an * delta + bn * gamma), 0.5 * (bn * delta - an * gamma), 0.5 * (an * delta - bn * gamma),
          0.5 * (an * gamma + bn * delta)};
}

/// Exact B(a, b) = Pi(<a, grad> b) with no truncation.
inline TrigField bilinear_B(const TrigField& a, const TrigField& b) {
  TrigField out;
  for (const auto& [m, ac] : a.modes())
    for (const auto& [n, bc] : b.modes()) {
      const PairTerms t = pair_terms(ac.cos, ac.sin, n, bc.cos, bc.sin);
      out.add_projected(m + n, t.cos_plus, t.sin_plus);
      out.add_projected(m - n, t.cos_minus, t.sin_minus);
    }
  return out;
}

inline TrigField nonlinear_B(const TrigField& a) { return bilinear_B(a, a); }

/// Random divergence-free field on modes with sup-norm at most R, Gaussian
/// coefficients rescaled to the requested homogeneous H^k norm.
template <class Rng>
TrigField random_field(Rng& rng, int R, double target_norm, int k) {
  std::normal_distribution<double> g;
  TrigField u;
  for (const Mode& m : modes_in_box(R, true)) {
    const auto f = frame(m);
    u.add(m, g(rng) * f.first + g(rng) * f.second, g(rng) * f.first + g(rng) * f.second);
  }
  const double s = sobolev_norm(u, k);
  return s > 0 ? (target_norm / s) * u : u;
}

/// Dense coefficient layout for all canonical modes with sup-norm at most R.
/// Mode i occupies entries [6i, 6i+3) (cos) and [6i+3, 6i+6) (sin).
class SpectralBasis {
 public:
  explicit SpectralBasis(int R) : R_(R), side_(2 * R + 1) {
    if (R < 1) throw std::invalid_argument("SpectralBasis: radius must be at least 1");
    modes_ = modes_in_box(R, true);
    lookup_.assign(std::size_t(side_) * side_ * side_, -1);
    for (std::size_t i = 0; i < modes_.size(); ++i) {
      lookup_[slot(modes_[i])] = int(i);
      lookup_[slot(-modes_[i])] = int(i);
      k2_.push_back(double(modes_[i].norm2()));
    }
    const int M = num_modes();
    table_.resize(std::size_t(M) * M);
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j) {
        auto& e = table_[std::size_t(i) * M + j];
        const Mode p = modes_[i] + modes_[j], q = modes_[i] - modes_[j];
        e.plus = find(p);
        e.plus_sign = p.is_canonical() ? 1.0 : -1.0;
        e.minus = find(q);
        e.minus_sign = q.is_canonical() ? 1.0 : -1.0;
      }
  }

  int radius() const { return R_; }
  int num_modes() const { return int(modes_.size()); }
  int dim() const { return 6 * num_modes(); }
  const std::vector<Mode>& modes() const { return modes_; }
  const Mode& mode(int i) const { return modes_[std::size_t(i)]; }
  double k2(int i) const { return k2_[std::size_t(i)]; }

  /// Index of the canonical representative of ell, or -1 outside the box.
  int find(const Mode& ell) const {
    if (ell.is_zero() || ell.max_norm() > R_) return -1;
    return lookup_[slot(ell)];
  }

  Eigen::VectorXd zeros() const { return Eigen::VectorXd::Zero(dim()); }

  Eigen::VectorXd from_field(const TrigField& u, bool truncate = false) const {
    Eigen::VectorXd v = zeros();
    for (const auto& [m, c] : u.modes()) {
      const int i = find(m);
      if (i < 0) {
        if (truncate) continue;
        throw std::out_of_range("SpectralBasis: mode " + to_string(m) + " outside radius");
      }
      v.segment<3>(6 * i) = c.cos;
      v.segment<3>(6 * i + 3) = c.sin;
    }
    return v;
  }

  /// Field with the nonzero blocks of v.
  TrigField to_field(const Eigen::VectorXd& v) const {
    TrigField u;
    for (int i = 0; i < num_modes(); ++i) {
      const Eigen::Vector3d c = v.segment<3>(6 * i), s = v.segment<3>(6 * i + 3);
      if (c.isZero(0.0) && s.isZero(0.0)) continue;
      u.add(modes_[std::size_t(i)], c, s);
    }
    return u;
  }

  void project(Eigen::Ref<Eigen::VectorXd> v) const {
    for (int i = 0; i < num_modes(); ++i) {
      const Eigen::Vector3d k = modes_[std::size_t(i)].vec();
      for (int o : {0, 3}) {
        auto b = v.segment<3>(6 * i + o);
        b -= (b.dot(k) / k2_[std::size_t(i)]) * k;
      }
    }
  }

  /// 6 x 4 orthonormal basis of the divergence-free coefficients at mode i,
  /// ordered (c_l, c_{-l}, s_l, s_{-l}) up to the sign of the last column.
  Eigen::Matrix<double, 6, 4> mode_frame(int i) const {
    const auto f = frame(modes_[std::size_t(i)]);
    Eigen::Matrix<double, 6, 4> F = Eigen::Matrix<double, 6, 4>::Zero();
    F.block<3, 1>(0, 0) = f.first;
    F.block<3, 1>(0, 1) = f.second;
    F.block<3, 1>(3, 2) = f.first;
    F.block<3, 1>(3, 3) = f.second;
    return F;
  }

  double inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const { return a.dot(b); }

  double sobolev_norm(const Eigen::VectorXd& v, int k) const {
    double s = 0.0;
    for (int i = 0; i < num_modes(); ++i) s += std::pow(k2_[std::size_t(i)], k) * v.segment<6>(6 * i).squaredNorm();
    return std::sqrt(s);
  }

  /// Galerkin B(a, b): exact coefficients of Pi(<a,grad> b) on the box.
  void bilinear(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Eigen::VectorXd& out) const {
    const int M = num_modes();
    out.setZero(dim());
    std::vector<int> active_a, active_b;
    active_a.reserve(std::size_t(M));
    active_b.reserve(std::size_t(M));
    for (int i = 0; i < M; ++i) {
      if (!a.segment<6>(6 * i).isZero(0.0)) active_a.push_back(i);
      if (!b.segment<6>(6 * i).isZero(0.0)) active_b.push_back(i);
    }
    for (int i : active_a) {
      const Eigen::Vector3d al = a.segment<3>(6 * i), be = a.segment<3>(6 * i + 3);
      const auto* row = &table_[std::size_t(i) * M];
      for (int j : active_b) {
        const Mode& n = modes_[std::size_t(j)];
        const double an = al.x() * n.x + al.y() * n.y + al.z() * n.z;
        const double bn = be.x() * n.x + be.y() * n.y + be.z() * n.z;
        if (an == 0.0 && bn == 0.0) continue;
        const Eigen::Vector3d ga = b.segment<3>(6 * j), de = b.segment<3>(6 * j + 3);
        const auto& e = row[j];
        if (e.plus >= 0) {
          out.segment<3>(6 * e.plus) += 0.5 * (an * de + bn * ga);
          out.segment<3>(6 * e.plus + 3) += (0.5 * e.plus_sign) * (bn * de - an * ga);
        }
        if (e.minus >= 0) {
          out.segment<3>(6 * e.minus) += 0.5 * (an * de - bn * ga);
          out.segment<3>(6 * e.minus + 3) += (0.5 * e.minus_sign) * (an * ga + bn * de);
        }
      }
    }
    project(out);
  }

  void nonlinear(const Eigen::VectorXd& a, Eigen::VectorXd& out) const { bilinear(a, a, out); }

  Eigen::VectorXd nonlinear(const Eigen::VectorXd& a) const {
    Eigen::VectorXd out;
    bilinear(a, a, out);
    return out;
  }

 private:
  struct Entry {
    int plus = -1, minus = -1;
    double plus_sign = 1.0, minus_sign = 1.0;
  };

  std::size_t slot(const Mode& m) const {
    return std::size_t((m.x + R_) * side_ * side_ + (m.y + R_) * side_ + (m.z + R_));
  }

  int R_, side_;
  std::vector<Mode> modes_;
  std::vector<int> lookup_;
  std::vector<double> k2_;
  std::vector<Entry> table_;
};

using SpectralBasisPtr = std::shared_ptr<const SpectralBasis>;

inline SpectralBasisPtr make_basis(int R) { return std::make_shared<const SpectralBasis>(R); }

}  // namespace nsctl
