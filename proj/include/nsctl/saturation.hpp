#pragma once
/// Saturating control spaces: F(E) under-approximation, the ladder E_j with
/// witnesses, and replayable pair-construction certificates.

#include "nsctl/fourier.hpp"
#include "nsctl/lattice.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace nsctl {

inline constexpr double kSpanTol = 1e-10;
inline constexpr double kRankTol = 1e-8;

enum class Plane { Cos, Sin };

inline const char* to_string(Plane p) { return p == Plane::Cos ? "cos" : "sin"; }

/// Finite-dimensional subspace of the Galerkin box, with an orthonormal basis
/// in the dense layout of its SpectralBasis.
class ModeSpace {
 public:
  ModeSpace() = default;

  ModeSpace(SpectralBasisPtr basis, std::vector<TrigField> generators, std::string name = {})
      : sb_(std::move(basis)), generators_(std::move(generators)), name_(std::move(name)) {
    for (const auto& g : generators_) absorb(sb_->from_field(g));
  }

  static ModeSpace from_lattice(const LatticeSet& K, SpectralBasisPtr basis, std::string name = "E(K)") {
    std::vector<TrigField> gens;
    for (const Mode& m : K) {
      if (m.is_zero() || m.max_norm() > basis->radius()) continue;
      for (const Mode& s : {m, -m}) {
        gens.push_back(basis_cos(s));
        gens.push_back(basis_sin(s));
      }
    }
    return ModeSpace(std::move(basis), std::move(gens), std::move(name));
  }

  static ModeSpace full(SpectralBasisPtr basis) {
    LatticeSet all;
    for (const Mode& m : basis->modes()) all.insert(m);
    return from_lattice(all, std::move(basis), "H_R");
  }

  const SpectralBasis& basis() const { return *sb_; }
  const SpectralBasisPtr& basis_ptr() const { return sb_; }
  const std::vector<TrigField>& generators() const { return generators_; }
  const std::string& name() const { return name_; }
  int dim() const { return int(cols_.size()); }
  const std::vector<Eigen::VectorXd>& columns() const { return cols_; }

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd Q(sb_->dim(), dim());
    for (int c = 0; c < dim(); ++c) Q.col(c) = cols_[std::size_t(c)];
    return Q;
  }

  /// Adds v to the span; returns true when the dimension grew.
  bool absorb(const Eigen::VectorXd& v) {
    const double nv = v.norm();
    if (nv == 0.0) return false;
    Eigen::VectorXd r = v / nv;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : cols_) r -= q.dot(r) * q;
    const double nr = r.norm();
    if (nr <= kRankTol) return false;
    cols_.push_back(r / nr);
    return true;
  }

  Eigen::VectorXd project(const Eigen::VectorXd& v) const {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(v.size());
    for (const auto& q : cols_) p += q.dot(v) * q;
    return p;
  }

  /// |v - P v| / |v| (zero for v = 0).
  double residual(const Eigen::VectorXd& v) const {
    const double nv = v.norm();
    if (nv == 0.0) return 0.0;
    return (v - project(v)).norm() / nv;
  }

  bool contains(const Eigen::VectorXd& v, double tol = kSpanTol) const { return residual(v) <= tol; }
  bool contains(const TrigField& u, double tol = kSpanTol) const {
    if (u.radius() > sb_->radius()) {
      TrigField t = u.truncated(sb_->radius());
      if (norm(u - t) > tol * std::max(norm(u), 1e-300)) return false;
      return contains(sb_->from_field(t), tol);
    }
    return contains(sb_->from_field(u), tol);
  }

  /// Orthonormal basis (6 x d) of the vectors of this space supported on
  /// mode i alone.
  Eigen::MatrixXd mode_subspace(int i) const {
    Eigen::Matrix<double, 6, 6> G = Eigen::Matrix<double, 6, 6>::Zero();
    for (const auto& q : cols_) {
      const Eigen::Matrix<double, 6, 1> s = q.segment<6>(6 * i);
      G.noalias() += s * s.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(G);
    std::vector<int> keep;
    for (int c = 0; c < 6; ++c)
      if (es.eigenvalues()[c] >= 1.0 - 1e-9) keep.push_back(c);
    Eigen::MatrixXd out(6, int(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) out.col(int(c)) = es.eigenvectors().col(keep[c]);
    return out;
  }

  /// Both frame directions of the cos (or sin) plane at ell lie in the space.
  bool plane_reached(const Mode& ell, Plane p) const {
    const int i = sb_->find(ell);
    if (i < 0) return false;
    const auto F = sb_->mode_frame(i);
    for (int c = 0; c < 2; ++c) {
      Eigen::VectorXd v = sb_->zeros();
      v.segment<6>(6 * i) = F.col(p == Plane::Cos ? c : c + 2);
      if (!contains(v)) return false;
    }
    return true;
  }

  /// True when any nonzero vector of the space has a component at ell.
  bool touches(const Mode& ell) const {
    const int i = sb_->find(ell);
    if (i < 0) return false;
    for (const auto& q : cols_)
      if (q.segment<6>(6 * i).norm() > kSpanTol) return true;
    return false;
  }

  bool is_full() const { return dim() == 4 * sb_->num_modes(); }

 private:
  SpectralBasisPtr sb_;
  std::vector<TrigField> generators_;
  std::string name_;
  std::vector<Eigen::VectorXd> cols_;
};

/// Q(x, y) = B(x, y) + B(y, x) for x at mode m and y at mode n, returned as
/// projected coefficients at canonical(m + n) and canonical(m - n).
struct PairImage {
  Mode plus, minus;
  Eigen::Matrix<double, 6, 1> at_plus, at_minus;
};

inline PairImage pair_image(const Mode& m, const Eigen::Matrix<double, 6, 1>& x, const Mode& n,
                            const Eigen::Matrix<double, 6, 1>& y) {
  PairImage out{(m + n).canonical(), (m - n).canonical(), Eigen::Matrix<double, 6, 1>::Zero(),
                Eigen::Matrix<double, 6, 1>::Zero()};
  const bool plus_canon = (m + n).is_canonical(), minus_canon = (m - n).is_canonical();
  auto put = [](Eigen::Matrix<double, 6, 1>& slot, bool canon, const Eigen::Vector3d& c, const Eigen::Vector3d& s) {
    slot.head<3>() += c;
    slot.tail<3>() += canon ? s : Eigen::Vector3d(-s);
  };
  // <x,grad> y lands on m + n and m - n
  const PairTerms t1 = pair_terms(x.head<3>(), x.tail<3>(), n, y.head<3>(), y.tail<3>());
  put(out.at_plus, plus_canon, t1.cos_plus, t1.sin_plus);
  put(out.at_minus, minus_canon, t1.cos_minus, t1.sin_minus);
  // <y,grad> x lands on n + m and n - m = -(m - n)
  const PairTerms t2 = pair_terms(y.head<3>(), y.tail<3>(), m, x.head<3>(), x.tail<3>());
  put(out.at_plus, plus_canon, t2.cos_plus, t2.sin_plus);
  put(out.at_minus, !minus_canon, t2.cos_minus, t2.sin_minus);
  const Eigen::Vector3d kp = out.plus.vec(), km = out.minus.vec();
  for (int o : {0, 3}) {
    auto a = out.at_plus.segment<3>(o);
    a -= (a.dot(kp) / kp.squaredNorm()) * kp;
    if (!out.minus.is_zero()) {
      auto b = out.at_minus.segment<3>(o);
      b -= (b.dot(km) / km.squaredNorm()) * km;
    } else {
      out.at_minus.segment<3>(o).setZero();
    }
  }
  return out;
}

/// An element of E_j written as sum_ab C(a,b) Q(X_a, Y_b) with X, Y bases of
/// the single-mode parts of E_{j-1} at modes i and k.
struct WitnessAtom {
  int mode_i = -1, mode_k = -1;
  Eigen::MatrixXd X, Y, C;
  Eigen::VectorXd vec;
};

/// eta1 = eta - sum B(xi) with eta and every xi in the previous level.
struct Decomposition {
  Eigen::VectorXd eta;
  std::vector<Eigen::VectorXd> xi;
  double residual = 0.0;
};

/// One f_extend step from a space: the new space and the atoms that raised
/// its dimension.
struct ExtendResult {
  ModeSpace space;
  std::vector<WitnessAtom> atoms;
  int pairs_examined = 0;
};

namespace detail {

inline std::vector<WitnessAtom> pair_atoms(const SpectralBasis& sb, int i, const Eigen::MatrixXd& X, int k,
                                           const Eigen::MatrixXd& Y) {
  const Mode m = sb.mode(i), n = sb.mode(k);
  if (parallel(m, n) || X.cols() == 0 || Y.cols() == 0) return {};
  const int p = sb.find(m + n), q = sb.find(m - n);
  if (p < 0 && q < 0) return {};
  const int di = int(X.cols()), dk = int(Y.cols());
  Eigen::MatrixXd G(12, di * dk);
  for (int a = 0; a < di; ++a)
    for (int b = 0; b < dk; ++b) {
      const PairImage im = pair_image(m, X.col(a), n, Y.col(b));
      G.block<6, 1>(0, a * dk + b) = im.at_plus;
      G.block<6, 1>(6, a * dk + b) = im.at_minus;
    }
  // restrict to combinations with no component outside the box
  Eigen::MatrixXd N = Eigen::MatrixXd::Identity(di * dk, di * dk);
  if (p < 0 || q < 0) {
    const Eigen::MatrixXd out = G.block(p < 0 ? 0 : 6, 0, 6, di * dk);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(out, Eigen::ComputeFullV);
    const double smax = std::max(1.0, svd.singularValues().size() ? svd.singularValues()[0] : 0.0);
    int rank = 0;
    for (int s = 0; s < svd.singularValues().size(); ++s)
      if (svd.singularValues()[s] > 1e-12 * smax) ++rank;
    N = svd.matrixV().rightCols(di * dk - rank);
    if (N.cols() == 0) return {};
  }
  const Eigen::MatrixXd GN = G * N;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(GN, Eigen::ComputeThinU | Eigen::ComputeThinV);
  std::vector<WitnessAtom> atoms;
  const auto& S = svd.singularValues();
  for (int s = 0; s < S.size(); ++s) {
    if (S[s] <= 1e-10) continue;
    WitnessAtom at;
    at.mode_i = i;
    at.mode_k = k;
    at.X = X;
    at.Y = Y;
    const Eigen::VectorXd c = N * svd.matrixV().col(s) / S[s];
    at.C = Eigen::Map<const Eigen::MatrixXd>(c.data(), dk, di).transpose();
    at.vec = sb.zeros();
    const Eigen::VectorXd u = svd.matrixU().col(s);
    if (p >= 0) at.vec.segment<6>(6 * p) += u.head<6>();
    if (q >= 0) at.vec.segment<6>(6 * q) += u.tail<6>();
    atoms.push_back(std::move(at));
  }
  return atoms;
}

}  // namespace detail

/// Computable under-approximation of F(E): E plus every direction spanned by
/// Q(x, y) = B(x + y) with x, y single-mode elements of E at non-parallel
/// wavevectors, intersected with the Galerkin box. When `changed` is given,
/// only pairs touching a changed mode are examined.
inline ExtendResult f_extend_with_witness(const ModeSpace& E, const std::vector<bool>* changed = nullptr) {
  const SpectralBasis& sb = E.basis();
  const int M = sb.num_modes();
  std::vector<Eigen::MatrixXd> sub(static_cast<std::size_t>(M));
  std::vector<int> active;
  for (int i = 0; i < M; ++i) {
    sub[std::size_t(i)] = E.mode_subspace(i);
    if (sub[std::size_t(i)].cols() > 0) active.push_back(i);
  }
  ExtendResult res{E, {}, 0};
  for (std::size_t a = 0; a < active.size(); ++a)
    for (std::size_t b = a + 1; b < active.size(); ++b) {
      const int i = active[a], k = active[b];
      if (changed && !(*changed)[std::size_t(i)] && !(*changed)[std::size_t(k)]) continue;
      ++res.pairs_examined;
      for (auto& at : detail::pair_atoms(sb, i, sub[std::size_t(i)], k, sub[std::size_t(k)]))
        if (res.space.absorb(at.vec)) res.atoms.push_back(std::move(at));
    }
  return res;
}

inline ModeSpace f_extend(const ModeSpace& E) { return f_extend_with_witness(E).space; }

/// The ladder E_0 = E, E_j = F(E_{j-1}) restricted to the Galerkin box.
class SaturationLadder {
 public:
  SaturationLadder(const ModeSpace& E, int max_depth, bool stop_when_stable = true) {
    if (max_depth < 1) throw std::invalid_argument("ladder: depth must be at least 1");
    levels_.push_back(E);
    atoms_.emplace_back();
    const int M = E.basis().num_modes();
    std::vector<int> prev_dims(std::size_t(M), 0);
    std::vector<bool> changed(std::size_t(M), true);
    for (int j = 1; j <= max_depth; ++j) {
      const ModeSpace& cur = levels_.back();
      for (int i = 0; i < M; ++i) {
        const int d = int(cur.mode_subspace(i).cols());
        changed[std::size_t(i)] = d != prev_dims[std::size_t(i)];
        prev_dims[std::size_t(i)] = d;
      }
      ExtendResult r = f_extend_with_witness(cur, &changed);
      const bool grew = r.space.dim() > cur.dim();
      levels_.push_back(std::move(r.space));
      atoms_.push_back(std::move(r.atoms));
      if (!grew && stop_when_stable) {
        stable_ = true;
        break;
      }
    }
  }

  int depth() const { return int(levels_.size()) - 1; }
  const ModeSpace& level(int j) const { return levels_.at(std::size_t(j)); }
  const ModeSpace& top() const { return levels_.back(); }
  const std::vector<WitnessAtom>& atoms(int j) const { return atoms_.at(std::size_t(j)); }
  bool stabilized() const { return stable_; }

  /// First level equal to the whole box, if any.
  std::optional<int> saturation_depth() const {
    for (int j = 0; j <= depth(); ++j)
      if (levels_[std::size_t(j)].is_full()) return j;
    return std::nullopt;
  }

  /// Writes w in level j (j >= 1) as eta - sum B(xi) with eta, xi in level
  /// j - 1. Throws when w is not in level j.
  Decomposition decompose(const Eigen::VectorXd& w, int j) const {
    if (j < 1 || j > depth()) throw std::out_of_range("decompose: level out of range");
    const ModeSpace& prev = levels_[std::size_t(j - 1)];
    const auto& atoms = atoms_[std::size_t(j)];
    const SpectralBasis& sb = prev.basis();
    Decomposition d;
    const Eigen::VectorXd rest = w - prev.project(w);
    if (rest.norm() <= kSpanTol * std::max(1.0, w.norm()) || atoms.empty()) {
      d.eta = prev.project(w);
      d.residual = (w - d.eta).norm();
      if (d.residual > kSpanTol * std::max(1.0, w.norm()))
        throw std::runtime_error("decompose: direction outside level " + std::to_string(j));
      return d;
    }
    Eigen::MatrixXd A(sb.dim(), int(atoms.size()));
    for (std::size_t c = 0; c < atoms.size(); ++c) A.col(int(c)) = atoms[c].vec - prev.project(atoms[c].vec);
    const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(rest);
    // merge atoms of the same mode pair and split by SVD into rank-one terms
    std::map<std::pair<int, int>, Eigen::MatrixXd> merged;
    std::map<std::pair<int, int>, const WitnessAtom*> rep;
    Eigen::VectorXd realized = sb.zeros();
    for (std::size_t c = 0; c < atoms.size(); ++c) {
      if (coef[int(c)] == 0.0) continue;
      const auto key = std::make_pair(atoms[c].mode_i, atoms[c].mode_k);
      auto it = merged.find(key);
      if (it == merged.end()) {
        merged.emplace(key, coef[int(c)] * atoms[c].C);
        rep.emplace(key, &atoms[c]);
      } else {
        it->second += coef[int(c)] * atoms[c].C;
      }
      realized += coef[int(c)] * atoms[c].vec;
    }
    for (const auto& [key, C] : merged) {
      const WitnessAtom& at = *rep.at(key);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeThinU | Eigen::ComputeThinV);
      for (int s = 0; s < svd.singularValues().size(); ++s) {
        const double sig = svd.singularValues()[s];
        if (sig <= 1e-15 * std::max(1.0, svd.singularValues()[0])) continue;
        // sig Q(x, y) = -B(sqrt(sig) (y - x))
        Eigen::VectorXd xi = sb.zeros();
        xi.segment<6>(6 * at.mode_i) = -std::sqrt(sig) * (at.X * svd.matrixU().col(s));
        xi.segment<6>(6 * at.mode_k) = std::sqrt(sig) * (at.Y * svd.matrixV().col(s));
        d.xi.push_back(std::move(xi));
      }
    }
    d.eta = prev.project(w - realized);
    d.residual = (w - d.eta - realized).norm();
    if (d.residual > 1e-8 * std::max(1.0, w.norm()))
      throw std::runtime_error("decompose: direction outside level " + std::to_string(j));
    return d;
  }

 private:
  std::vector<ModeSpace> levels_;
  std::vector<std::vector<WitnessAtom>> atoms_;
  bool stable_ = false;
};

/// Iterates f_extend `depth` times on the box of the given radius.
inline ModeSpace ladder(const ModeSpace& E, int depth, int radius) {
  ModeSpace start = E;
  if (radius != E.basis().radius()) {
    auto sb = make_basis(radius);
    std::vector<TrigField> gens;
    for (const auto& g : E.generators()) gens.push_back(g.truncated(radius));
    start = ModeSpace(sb, gens, E.name());
  }
  return SaturationLadder(start, depth, false).top();
}

/// E(K_{j-1}) closure check: B of random elements of E(K_{j-1}) lies in
/// E(target) (all planes at the modes of target and their negatives).
inline bool lemma_closure_check(const LatticeSet& K_prev, const LatticeSet& target, int samples,
                                std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  LatticeSet allowed;
  for (const Mode& m : target)
    if (!m.is_zero()) allowed.insert(m.canonical());
  for (int s = 0; s < samples; ++s) {
    TrigField z;
    for (const Mode& m : K_prev) {
      if (m.is_zero()) continue;
      const auto f = frame(m.canonical());
      z.add(m, g(rng) * f.first + g(rng) * f.second, g(rng) * f.first + g(rng) * f.second);
    }
    const TrigField b = nonlinear_B(z);
    double outside = 0.0;
    for (const auto& [m, c] : b.modes())
      if (!allowed.count(m)) outside += c.cos.squaredNorm() + c.sin.squaredNorm();
    if (std::sqrt(outside) > kSpanTol * std::max(1.0, norm(b))) return false;
  }
  return true;
}

inline LatticeSet ladder_set(const LatticeSet& K, int j) { return grow_ladder(K, j).back(); }

// ---------------------------------------------------------------------------
// certificates

/// One replayable step: B(zeta1) + B(zeta2) = claimed, with the inputs in the
/// span established before `level` and the claim in the cos/sin plane at mode.
struct CertificateStep {
  std::string label;
  int level = 1;
  TrigField zeta1, zeta2, claimed;
  Mode mode;
  Plane plane = Plane::Cos;
};

struct PlaneRef {
  Mode mode;
  Plane plane = Plane::Cos;
};

struct SaturationCertificate {
  std::string name;
  std::vector<TrigField> base;
  std::vector<CertificateStep> steps;
  std::vector<PlaneRef> conclusion;
};

struct StepReport {
  std::string label;
  double identity_residual = 0.0;
  double input_residual = 0.0;
  double plane_residual = 0.0;
  bool passed = false;
};

struct CertificateReport {
  std::vector<StepReport> steps;
  std::vector<std::pair<PlaneRef, bool>> conclusion;
  std::string error;
  bool passed = false;
};

namespace detail {

inline double plane_residual(const TrigField& u, const Mode& ell, Plane p) {
  const Mode c = ell.canonical();
  double out = 0.0;
  for (const auto& [m, k] : u.modes()) {
    const Eigen::Vector3d par = p == Plane::Cos ? k.sin : k.cos, own = p == Plane::Cos ? k.cos : k.sin;
    if (m == c)
      out += par.squaredNorm() + std::pow(own.dot(c.vec()) / c.norm(), 2);
    else
      out += k.cos.squaredNorm() + k.sin.squaredNorm();
  }
  return std::sqrt(out) / std::max(norm(u), 1e-300);
}

}  // namespace detail

inline CertificateReport verify_certificate(const SaturationCertificate& cert) {
  CertificateReport rep;
  int R = 1;
  for (const auto& g : cert.base) R = std::max(R, g.radius());
  for (const auto& s : cert.steps)
    R = std::max({R, s.zeta1.radius(), s.zeta2.radius(), s.claimed.radius(), s.mode.max_norm()});
  for (const auto& c : cert.conclusion) R = std::max(R, c.mode.max_norm());
  auto sb = make_basis(R);
  if (cert.base.empty()) {
    rep.error = "certificate has no base space";
    return rep;
  }
  bool all = true;
  for (std::size_t s = 0; s < cert.steps.size(); ++s) {
    const auto& st = cert.steps[s];
    StepReport sr;
    sr.label = st.label.empty() ? "step " + std::to_string(s) : st.label;
    if (st.level < 1 || st.claimed.empty()) {
      rep.error = "malformed step " + sr.label;
      rep.steps.push_back(sr);
      all = false;
      continue;
    }
    std::vector<TrigField> gens = cert.base;
    for (const auto& o : cert.steps)
      if (o.level < st.level) gens.push_back(o.claimed);
    const ModeSpace established(sb, gens);
    sr.input_residual = std::max(established.residual(sb->from_field(st.zeta1)),
                                 established.residual(sb->from_field(st.zeta2)));
    const TrigField lhs = nonlinear_B(st.zeta1) + nonlinear_B(st.zeta2);
    sr.identity_residual = norm(lhs - st.claimed) / std::max(1.0, norm(st.claimed));
    sr.plane_residual = detail::plane_residual(st.claimed, st.mode, st.plane);
    sr.passed = sr.identity_residual <= kSpanTol && sr.input_residual <= kSpanTol && sr.plane_residual <= kSpanTol;
    all = all && sr.passed;
    rep.steps.push_back(sr);
  }
  std::vector<TrigField> gens = cert.base;
  for (const auto& st : cert.steps) gens.push_back(st.claimed);
  const ModeSpace final_span(sb, gens);
  for (const auto& c : cert.conclusion) {
    const bool ok = final_span.plane_reached(c.mode, c.plane);
    rep.conclusion.emplace_back(c, ok);
    all = all && ok;
  }
  rep.passed = all && rep.error.empty();
  return rep;
}

/// The four two-mode patterns: the sum of two B values isolates one plane at
/// m + n or m - n.
enum class PairPattern { CosSum, CosDiff, SinSum, SinDiff };

inline CertificateStep pair_step(const Mode& m, const Eigen::Vector3d& a, const Mode& n, const Eigen::Vector3d& b,
                                 PairPattern pat, int level, std::string label = {}) {
  const bool sum = pat == PairPattern::CosSum || pat == PairPattern::SinSum;
  const Mode target = sum ? m + n : m - n;
  const Eigen::Vector3d w = sum ? Eigen::Vector3d(a.dot(n.vec()) * b + b.dot(m.vec()) * a)
                                : Eigen::Vector3d(a.dot(n.vec()) * b - b.dot(m.vec()) * a);
  CertificateStep st;
  st.label = std::move(label);
  st.level = level;
  st.mode = target.canonical();
  const Eigen::Vector3d z = Eigen::Vector3d::Zero();
  switch (pat) {
    case PairPattern::CosSum:
      st.zeta1.add(m, a, z), st.zeta1.add(n, z, b);
      st.zeta2.add(n, b, z), st.zeta2.add(m, z, a);
      st.claimed.add_projected(target, w, z);
      st.plane = Plane::Cos;
      break;
    case PairPattern::CosDiff:
      st.zeta1.add(m, a, z), st.zeta1.add(n, z, b);
      st.zeta2.add(n, -b, z), st.zeta2.add(m, z, a);
      st.claimed.add_projected(target, w, z);
      st.plane = Plane::Cos;
      break;
    case PairPattern::SinSum:
      st.zeta1.add(m, z, a), st.zeta1.add(n, z, b);
      st.zeta2.add(m, -a, z), st.zeta2.add(n, b, z);
      st.claimed.add_projected(target, z, w);
      st.plane = Plane::Sin;
      break;
    case PairPattern::SinDiff:
      st.zeta1.add(m, a, z), st.zeta1.add(n, b, z);
      st.zeta2.add(m, z, a), st.zeta2.add(n, z, b);
      st.claimed.add_projected(target, z, w);
      st.plane = Plane::Sin;
      break;
  }
  return st;
}

namespace detail {

inline TrigField single(const Mode& m, const Eigen::Vector3d& v, Plane p) {
  TrigField u;
  if (p == Plane::Cos)
    u.add_cos(m, v);
  else
    u.add_sin(m, v);
  return u;
}

/// Steps for all frame-direction combinations at (m, n) producing both planes
/// at m + n (sum) or m - n.
inline void full_plane_steps(SaturationCertificate& c, const Mode& m, const std::vector<Eigen::Vector3d>& A,
                             const Mode& n, const std::vector<Eigen::Vector3d>& Bv, bool sum, int level) {
  const std::array<PairPattern, 2> pats = sum ? std::array{PairPattern::CosSum, PairPattern::SinSum}
                                              : std::array{PairPattern::CosDiff, PairPattern::SinDiff};
  for (const auto& a : A)
    for (const auto& b : Bv)
      for (PairPattern p : pats) {
        CertificateStep st = pair_step(m, a, n, b, p, level);
        if (norm(st.claimed) < 1e-12) continue;
        st.label = "L" + std::to_string(level) + " " + to_string(m) + (sum ? "+" : "-") + to_string(n) + " " +
                   to_string(st.plane);
        c.steps.push_back(std::move(st));
      }
}

inline std::vector<Eigen::Vector3d> frame_dirs(const Mode& m) {
  const auto f = frame(m);
  return {f.first, f.second};
}

}  // namespace detail

/// Single-mode generators (v cos<m,x>, v sin<m,x>) for each (m, v).
inline std::vector<TrigField> cos_sin_generators(const std::vector<std::pair<Mode, Eigen::Vector3d>>& mv) {
  std::vector<TrigField> out;
  for (const auto& [m, v] : mv) {
    out.push_back(detail::single(m, v, Plane::Cos));
    out.push_back(detail::single(m, v, Plane::Sin));
  }
  return out;
}

/// Generators of E(K) for K = {e1, e2, e3}.
inline std::vector<TrigField> generators_unit12() {
  std::vector<TrigField> g;
  for (const Mode& m : {Mode{1, 0, 0}, Mode{0, 1, 0}, Mode{0, 0, 1}})
    for (const Mode& s : {m, -m}) {
      g.push_back(basis_cos(s));
      g.push_back(basis_sin(s));
    }
  return g;
}

/// (P_m e) cos<m,x>, (P_m e) sin<m,x> for m in {e1, e2, (1,0,1), (0,1,1)},
/// e = (0,0,1).
inline std::vector<TrigField> generators_tilde8() {
  const Eigen::Vector3d e(0, 0, 1);
  std::vector<std::pair<Mode, Eigen::Vector3d>> mv;
  for (const Mode& m : {Mode{1, 0, 0}, Mode{0, 1, 0}, Mode{1, 0, 1}, Mode{0, 1, 1}}) mv.emplace_back(m, project_perp(m, e));
  return cos_sin_generators(mv);
}

/// a cos/sin at (1,0,1), e cos/sin at (0,1,1), b cos/sin at (0,0,1) with
/// a = (-1,1,1), e = (0,-1,1), b = (1,0,0).
inline std::vector<TrigField> generators_hat6() {
  return cos_sin_generators({{Mode{1, 0, 1}, Eigen::Vector3d(-1, 1, 1)},
                             {Mode{0, 1, 1}, Eigen::Vector3d(0, -1, 1)},
                             {Mode{0, 0, 1}, Eigen::Vector3d(1, 0, 0)}});
}

inline SaturationCertificate certificate_generator12() {
  using detail::frame_dirs;
  SaturationCertificate c;
  c.name = "generator12";
  c.base = generators_unit12();
  const Mode e1{1, 0, 0}, e2{0, 1, 0}, e3{0, 0, 1};
  // level 1: delta(m, n) directions at m +- n
  for (auto [m, n] : {std::pair{e1, e2}, std::pair{e1, e3}, std::pair{e2, e3}}) {
    detail::full_plane_steps(c, m, frame_dirs(m), n, frame_dirs(n), true, 1);
    detail::full_plane_steps(c, m, frame_dirs(m), n, frame_dirs(n), false, 1);
  }
  // level 2: full planes at (1,+-1,+-1) from delta at (1,+-1,0) and e3
  for (const Mode& m : {Mode{1, 1, 0}, Mode{1, -1, 0}}) {
    const Eigen::Vector3d delta(0, 0, 1);
    detail::full_plane_steps(c, m, {delta}, e3, frame_dirs(e3), true, 2);
    detail::full_plane_steps(c, m, {delta}, e3, frame_dirs(e3), false, 2);
  }
  // level 3: full planes at the sums and differences of unit vectors
  const std::vector<std::pair<Mode, Mode>> l3{{Mode{1, 1, 1}, e3}, {Mode{1, -1, 1}, e3}, {Mode{1, 1, 1}, e2},
                                              {Mode{1, 1, -1}, e2}, {Mode{1, 1, 1}, e1}, {Mode{1, 1, -1}, e1}};
  for (const auto& [m, n] : l3) detail::full_plane_steps(c, m, frame_dirs(m), n, frame_dirs(n), false, 3);
  for (const Mode& m : {e1, e2, e3, Mode{1, 1, 0}, Mode{1, -1, 0}, Mode{1, 0, 1}, Mode{1, 0, -1}, Mode{0, 1, 1},
                        Mode{0, 1, -1}, Mode{1, 1, 1}, Mode{1, 1, -1}, Mode{1, -1, 1}, Mode{1, -1, -1}})
    for (Plane p : {Plane::Cos, Plane::Sin}) c.conclusion.push_back({m, p});
  return c;
}

inline SaturationCertificate certificate_tilde8() {
  SaturationCertificate c;
  c.name = "lavt";
  c.base = generators_tilde8();
  const Eigen::Vector3d e(0, 0, 1);
  const Mode e1{1, 0, 0}, e2{0, 1, 0}, e3{0, 0, 1}, m101{1, 0, 1}, m011{0, 1, 1};
  const Eigen::Vector3d p101 = project_perp(m101, e), p011 = project_perp(m011, e);
  for (double lambda : {1.0, -0.7}) {
    // displayed outputs: lambda (-1/2,0,0) and lambda (0,-1/2,0) at cos(0,0,1)
    CertificateStep s1 = pair_step(e1, lambda * project_perp(e1, e), m101, p101, PairPattern::CosDiff, 1,
                                   "L1 A(0,0,1) from (1,0,0),(1,0,1)");
    s1.claimed = TrigField{};
    s1.claimed.add_cos(e3, lambda * Eigen::Vector3d(-0.5, 0, 0));
    c.steps.push_back(s1);
    CertificateStep s2 = pair_step(e2, lambda * project_perp(e2, e), m011, p011, PairPattern::CosDiff, 1,
                                   "L1 A(0,0,1) from (0,1,0),(0,1,1)");
    s2.claimed = TrigField{};
    s2.claimed.add_cos(e3, lambda * Eigen::Vector3d(0, -0.5, 0));
    c.steps.push_back(s2);
    c.steps.push_back(pair_step(e1, lambda * project_perp(e1, e), m101, p101, PairPattern::SinDiff, 1,
                                "L1 B(0,0,1) from (1,0,0),(1,0,1)"));
    c.steps.push_back(pair_step(e2, lambda * project_perp(e2, e), m011, p011, PairPattern::SinDiff, 1,
                                "L1 B(0,0,1) from (0,1,0),(0,1,1)"));
  }
  // level 2: (0, b2/2, -b1/2) cos(1,0,0) for b = (b1, b2, 0) in A(0,0,1)
  for (const Eigen::Vector3d& b : {Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0), Eigen::Vector3d(0.3, -1.1, 0)}) {
    CertificateStep st = pair_step(m101, p101, e3, b, PairPattern::CosDiff, 2, "L2 A(1,0,0)");
    st.claimed = TrigField{};
    st.claimed.add_cos(e1, Eigen::Vector3d(0, b[1] / 2, -b[0] / 2));
    c.steps.push_back(st);
    c.steps.push_back(pair_step(m101, p101, e3, b, PairPattern::SinDiff, 2, "L2 B(1,0,0)"));
    c.steps.push_back(pair_step(m011, p011, e3, b, PairPattern::CosDiff, 2, "L2 A(0,1,0)"));
    c.steps.push_back(pair_step(m011, p011, e3, b, PairPattern::SinDiff, 2, "L2 B(0,1,0)"));
  }
  for (const Mode& m : {e1, e2, e3})
    for (Plane p : {Plane::Cos, Plane::Sin}) c.conclusion.push_back({m, p});
  return c;
}

inline SaturationCertificate certificate_hat6() {
  SaturationCertificate c;
  c.name = "lsdfavt";
  c.base = generators_hat6();
  const Mode m100{1, 0, 0}, m010{0, 1, 0}, m001{0, 0, 1}, m101{1, 0, 1}, m011{0, 1, 1}, m1m10{1, -1, 0};
  const Eigen::Vector3d a(-1, 1, 1), e(0, -1, 1), b(1, 0, 0);
  auto displayed = [&](CertificateStep st, const Mode& at, const Eigen::Vector3d& v) {
    st.claimed = TrigField{};
    if (st.plane == Plane::Cos)
      st.claimed.add_cos(at, v);
    else
      st.claimed.add(at, Eigen::Vector3d::Zero(), v);
    c.steps.push_back(std::move(st));
  };
  for (double lambda : {1.0, 2.5}) {
    displayed(pair_step(m101, lambda * a, m001, b, PairPattern::CosDiff, 1, "L1 (0,-1,-1) cos(1,0,0)"), m100,
              lambda * Eigen::Vector3d(0, -1, -1));
    displayed(pair_step(m011, lambda * e, m001, b, PairPattern::CosDiff, 1, "L1 (1,0,0) cos(0,1,0)"), m010,
              lambda * Eigen::Vector3d(1, 0, 0));
    displayed(pair_step(m101, lambda * a, m011, e, PairPattern::CosDiff, 1, "L1 (-1,-1,1) cos(1,-1,0)"), m1m10,
              lambda * Eigen::Vector3d(-1, -1, 1));
    c.steps.push_back(pair_step(m101, lambda * a, m001, b, PairPattern::SinDiff, 1, "L1 sin(1,0,0)"));
    c.steps.push_back(pair_step(m011, lambda * e, m001, b, PairPattern::SinDiff, 1, "L1 sin(0,1,0)"));
    c.steps.push_back(pair_step(m101, lambda * a, m011, e, PairPattern::SinDiff, 1, "L1 sin(1,-1,0)"));
    displayed(pair_step(m100, lambda * Eigen::Vector3d(0, -1, -1), m010, b, PairPattern::CosDiff, 2,
                        "L2 (0,0,1) cos(1,-1,0)"),
              m1m10, lambda * Eigen::Vector3d(0, 0, 1));
    c.steps.push_back(
        pair_step(m100, lambda * Eigen::Vector3d(0, -1, -1), m010, b, PairPattern::SinDiff, 2, "L2 sin(1,-1,0)"));
  }
  // level 3: (0, f1, f2) cos(1,0,0) for f = (f1, f1, f2) in A(1,-1,0)
  for (const Eigen::Vector3d& f : {Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(-1, -1, 1), Eigen::Vector3d(0.4, 0.4, -2)}) {
    CertificateStep st = pair_step(m1m10, f, m010, b, PairPattern::CosSum, 3, "L3 (0,f1,f2) cos(1,0,0)");
    displayed(st, m100, Eigen::Vector3d(0, f[0], f[2]));
    c.steps.push_back(pair_step(m1m10, f, m010, b, PairPattern::SinSum, 3, "L3 sin(1,0,0)"));
  }
  // level 4: g = (0, g1, g2) in A(1,0,0) gives the plane at (0,0,1)
  for (const Eigen::Vector3d& g : {Eigen::Vector3d(0, 1, 0), Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(0, 0.5, -1.5)}) {
    c.steps.push_back(pair_step(m101, a, m100, g, PairPattern::CosDiff, 4, "L4 cos(0,0,1)"));
    c.steps.push_back(pair_step(m101, a, m100, g, PairPattern::SinDiff, 4, "L4 sin(0,0,1)"));
  }
  for (const Mode& m : {m1m10, m100, m001})
    for (Plane p : {Plane::Cos, Plane::Sin}) c.conclusion.push_back({m, p});
  return c;
}

inline SaturationCertificate builtin_certificate(const std::string& name) {
  if (name == "generator12" || name == "e3") return certificate_generator12();
  if (name == "lavt" || name == "tilde8") return certificate_tilde8();
  if (name == "lsdfavt" || name == "hat6") return certificate_hat6();
  throw std::invalid_argument("unknown built-in certificate '" + name + "'");
}

/// Named built-in control spaces on the given box.
inline ModeSpace builtin_space(const std::string& name, SpectralBasisPtr sb) {
  if (name == "generator12" || name == "e3") return ModeSpace(sb, generators_unit12(), "generator12");
  if (name == "lavt" || name == "tilde8") return ModeSpace(sb, generators_tilde8(), "tilde8");
  if (name == "lsdfavt" || name == "hat6") return ModeSpace(sb, generators_hat6(), "hat6");
  throw std::invalid_argument("unknown built-in space '" + name + "'");
}

}  // namespace nsctl
