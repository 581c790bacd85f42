#pragma once
/// Integer wavevectors on the 3-torus, generator tests and the mode ladder.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nsctl {

struct Mode {
  int x = 0, y = 0, z = 0;

  constexpr int operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr auto operator<=>(const Mode&) const = default;

  constexpr Mode operator+(const Mode& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Mode operator-(const Mode& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Mode operator-() const { return {-x, -y, -z}; }
  constexpr Mode operator*(int s) const { return {s * x, s * y, s * z}; }

  constexpr bool is_zero() const { return x == 0 && y == 0 && z == 0; }
  constexpr long dot(const Mode& o) const {
    return long(x) * o.x + long(y) * o.y + long(z) * o.z;
  }
  constexpr Mode cross(const Mode& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  constexpr long norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(double(norm2())); }
  constexpr int max_norm() const {
    int a = x < 0 ? -x : x, b = y < 0 ? -y : y, c = z < 0 ? -z : z;
    return a > b ? (a > c ? a : c) : (b > c ? b : c);
  }
  // Canonical representative of {l, -l}: first nonzero component positive.
  constexpr bool is_canonical() const {
    if (x != 0) return x > 0;
    if (y != 0) return y > 0;
    return z > 0;
  }
  constexpr Mode canonical() const { return is_canonical() ? *this : -*this; }
  Eigen::Vector3d vec() const { return {double(x), double(y), double(z)}; }
};

inline std::ostream& operator<<(std::ostream& os, const Mode& m) {
  return os << '(' << m.x << ',' << m.y << ',' << m.z << ')';
}

inline std::string to_string(const Mode& m) {
  return "(" + std::to_string(m.x) + "," + std::to_string(m.y) + "," + std::to_string(m.z) + ")";
}

constexpr bool parallel(const Mode& a, const Mode& b) { return a.cross(b).is_zero(); }

using LatticeSet = std::set<Mode>;

/// Orthonormal pair (l(ell), l(-ell)) spanning the plane orthogonal to ell.
///
/// The first vector is the coordinate axis least aligned with ell (lowest index
/// on ties) made orthogonal to ell; the second is ell/|ell| x first.
inline std::pair<Eigen::Vector3d, Eigen::Vector3d> frame(const Mode& ell) {
  if (ell.is_zero()) throw std::invalid_argument("frame: zero wavevector");
  int axis = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(ell[i]) < std::abs(ell[axis])) axis = i;
  const Eigen::Vector3d k = ell.vec() / ell.norm();
  Eigen::Vector3d f1 = Eigen::Vector3d::Unit(axis);
  f1 -= f1.dot(k) * k;
  f1.normalize();
  return {f1, k.cross(f1)};
}

inline std::int64_t det3(const Mode& a, const Mode& b, const Mode& c) {
  return std::int64_t(a.x) * (std::int64_t(b.y) * c.z - std::int64_t(b.z) * c.y) -
         std::int64_t(a.y) * (std::int64_t(b.x) * c.z - std::int64_t(b.z) * c.x) +
         std::int64_t(a.z) * (std::int64_t(b.x) * c.y - std::int64_t(b.y) * c.x);
}

/// True when the integer span of K is all of Z^3: the gcd of |det| over all
/// triples of K equals 1.
inline bool is_generator(const std::vector<Mode>& K) {
  std::int64_t g = 0;
  const std::size_t n = K.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k) {
        g = std::gcd(g, std::abs(det3(K[i], K[j], K[k])));
        if (g == 1) return true;
      }
  return false;
}

inline bool is_generator(const LatticeSet& K) { return is_generator(std::vector<Mode>(K.begin(), K.end())); }

/// Integer row echelon basis of the lattice spanned by K (at most three rows).
class LatticeBasis {
 public:
  using Row = std::array<std::int64_t, 3>;

  explicit LatticeBasis(const std::vector<Mode>& K) {
    std::vector<Row> rows;
    for (const auto& m : K)
      if (!m.is_zero()) rows.push_back({m.x, m.y, m.z});
    std::size_t top = 0;
    for (int c = 0; c < 3 && top < rows.size(); ++c) {
      while (true) {
        std::size_t piv = rows.size();
        for (std::size_t r = top; r < rows.size(); ++r)
          if (rows[r][c] != 0 && (piv == rows.size() || std::abs(rows[r][c]) < std::abs(rows[piv][c])))
            piv = r;
        if (piv == rows.size()) break;
        std::swap(rows[top], rows[piv]);
        bool done = true;
        for (std::size_t r = top + 1; r < rows.size(); ++r) {
          if (rows[r][c] == 0) continue;
          const std::int64_t q = rows[r][c] / rows[top][c];
          for (int i = 0; i < 3; ++i) rows[r][i] -= q * rows[top][i];
          if (rows[r][c] != 0) done = false;
        }
        if (done) {
          if (rows[top][c] < 0)
            for (auto& v : rows[top]) v = -v;
          pivots_.push_back(c);
          basis_.push_back(rows[top]);
          ++top;
          break;
        }
      }
    }
  }

  bool contains(const Mode& a) const {
    Row v{a.x, a.y, a.z};
    std::size_t r = 0;
    for (int c = 0; c < 3; ++c) {
      if (r < basis_.size() && pivots_[r] == c) {
        if (v[c] % basis_[r][c] != 0) return false;
        const std::int64_t q = v[c] / basis_[r][c];
        for (int i = 0; i < 3; ++i) v[i] -= q * basis_[r][i];
        ++r;
      } else if (v[c] != 0) {
        return false;
      }
    }
    return true;
  }

  int rank() const { return int(basis_.size()); }
  const std::vector<Row>& rows() const { return basis_; }

 private:
  std::vector<Row> basis_;
  std::vector<int> pivots_;
};

inline bool integer_span_membership(const std::vector<Mode>& K, const Mode& a) {
  return LatticeBasis(K).contains(a);
}

inline bool integer_span_membership(const LatticeSet& K, const Mode& a) {
  return LatticeBasis(std::vector<Mode>(K.begin(), K.end())).contains(a);
}

/// One ladder step: K plus all m + n and m - n over non-parallel pairs.
/// A positive max_norm drops new vectors with larger sup-norm.
inline LatticeSet ladder_step(const LatticeSet& K, int max_norm = 0) {
  LatticeSet out = K;
  const std::vector<Mode> v(K.begin(), K.end());
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (i == j || parallel(v[i], v[j])) continue;
      for (const Mode& s : {v[i] + v[j], v[i] - v[j]}) {
        if (s.is_zero()) continue;
        if (max_norm > 0 && s.max_norm() > max_norm) continue;
        out.insert(s);
      }
    }
  return out;
}

/// K_0 = K, ..., K_depth. Entry j is the j-th ladder set.
inline std::vector<LatticeSet> grow_ladder(const LatticeSet& K, int depth, int max_norm = 0) {
  std::vector<LatticeSet> ladder{K};
  for (int j = 0; j < depth; ++j) ladder.push_back(ladder_step(ladder.back(), max_norm));
  return ladder;
}

/// A linear form w and modulus d with <w,k> = 0 mod d on K but not on target.
struct LatticeObstruction {
  Mode functional;
  int modulus = 0;
};

/// Searches small functionals for a congruence separating target from the
/// integer span of K. Empty when target lies in the span or none is found.
inline std::optional<LatticeObstruction> find_obstruction(const std::vector<Mode>& K, const Mode& target,
                                                          int max_modulus = 12) {
  if (integer_span_membership(K, target)) return std::nullopt;
  auto mod = [](long a, int d) { return ((a % d) + d) % d; };
  for (int d = 2; d <= max_modulus; ++d)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        for (int c = 0; c < d; ++c) {
          const Mode w{a, b, c};
          if (w.is_zero()) continue;
          bool ok = mod(w.dot(target), d) != 0;
          for (std::size_t i = 0; ok && i < K.size(); ++i) ok = mod(w.dot(K[i]), d) == 0;
          if (ok) return LatticeObstruction{w, d};
        }
  return std::nullopt;
}

/// All nonzero wavevectors with sup-norm at most R.
inline std::vector<Mode> modes_in_box(int R, bool canonical_only) {
  std::vector<Mode> out;
  for (int x = -R; x <= R; ++x)
    for (int y = -R; y <= R; ++y)
      for (int z = -R; z <= R; ++z) {
        const Mode m{x, y, z};
        if (m.is_zero() || (canonical_only && !m.is_canonical())) continue;
        out.push_back(m);
      }
  return out;
}

}  // namespace nsctl
