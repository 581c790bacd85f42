#pragma once
// Independent reference computations used to freeze expected values.

#include "nsctl/fourier.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;

// Grid values of u and its gradient, summed mode by mode.
struct GridField {
  int N;
  std::vector<Eigen::Vector3d> u;
  std::vector<Eigen::Matrix3d> grad;
};

inline GridField sample(const nsctl::TrigField& f, int N) {
  GridField g{N, std::vector<Eigen::Vector3d>(std::size_t(N * N * N), Eigen::Vector3d::Zero()),
              std::vector<Eigen::Matrix3d>(std::size_t(N * N * N), Eigen::Matrix3d::Zero())};
  const double h = 2.0 * std::numbers::pi / N;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      for (int k = 0; k < N; ++k) {
        const std::size_t p = std::size_t((i * N + j) * N + k);
        for (const auto& [m, c] : f.modes()) {
          const double ph = h * (m.x * i + m.y * j + m.z * k);
          const double cs = std::cos(ph), sn = std::sin(ph);
          g.u[p] += cs * c.cos + sn * c.sin;
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) g.grad[p](a, b) += (-sn * c.cos[a] + cs * c.sin[a]) * m[b];
        }
      }
  return g;
}

// Fourier coefficients of a real grid vector field at wavevectors with
// sup-norm at most K, via separable DFTs, returned as a projected field.
inline nsctl::TrigField analyse(const std::vector<Eigen::Vector3d>& g, int N, int K) {
  const int F = 2 * K + 1;
  const double h = 2.0 * std::numbers::pi / N;
  auto tw = [&](int freq, int idx) { return std::polar(1.0, -h * freq * idx); };
  nsctl::TrigField out;
  for (int comp = 0; comp < 3; ++comp) {
    std::vector<cplx> s1(std::size_t(N * N * F)), s2(std::size_t(N * F * F)), s3(std::size_t(F * F * F));
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        for (int c = 0; c < F; ++c) {
          cplx acc = 0;
          for (int k = 0; k < N; ++k) acc += g[std::size_t((i * N + j) * N + k)][comp] * tw(c - K, k);
          s1[std::size_t((i * N + j) * F + c)] = acc;
        }
    for (int i = 0; i < N; ++i)
      for (int b = 0; b < F; ++b)
        for (int c = 0; c < F; ++c) {
          cplx acc = 0;
          for (int j = 0; j < N; ++j) acc += s1[std::size_t((i * N + j) * F + c)] * tw(b - K, j);
          s2[std::size_t((i * F + b) * F + c)] = acc;
        }
    for (int a = 0; a < F; ++a)
      for (int b = 0; b < F; ++b)
        for (int c = 0; c < F; ++c) {
          cplx acc = 0;
          for (int i = 0; i < N; ++i) acc += s2[std::size_t((i * F + b) * F + c)] * tw(a - K, i);
          s3[std::size_t((a * F + b) * F + c)] = acc / double(N * N * N);
        }
    for (int a = 0; a < F; ++a)
      for (int b = 0; b < F; ++b)
        for (int c = 0; c < F; ++c) {
          const nsctl::Mode m{a - K, b - K, c - K};
          if (m.is_zero() || !m.is_canonical()) continue;
          const cplx z = s3[std::size_t((a * F + b) * F + c)];
          Eigen::Vector3d cv = Eigen::Vector3d::Zero(), sv = Eigen::Vector3d::Zero();
          cv[comp] = 2.0 * z.real();
          sv[comp] = -2.0 * z.imag();
          out.add_projected(m, cv, sv);
        }
  }
  return out;
}

// Pseudo-spectral Pi(<a,grad> b) on an N^3 grid.
inline nsctl::TrigField pseudo_spectral_B(const nsctl::TrigField& a, const nsctl::TrigField& b, int N) {
  const GridField ga = sample(a, N), gb = sample(b, N);
  std::vector<Eigen::Vector3d> prod(ga.u.size());
  for (std::size_t p = 0; p < prod.size(); ++p) prod[p] = gb.grad[p] * ga.u[p];
  return analyse(prod, N, a.radius() + b.radius());
}

// gcd of all 3x3 minors; zero when K has rank below three.
inline long minor_gcd(const std::vector<nsctl::Mode>& K) {
  long g = 0;
  for (std::size_t i = 0; i < K.size(); ++i)
    for (std::size_t j = i + 1; j < K.size(); ++j)
      for (std::size_t k = j + 1; k < K.size(); ++k) {
        Eigen::Matrix3d M;
        M << K[i].vec().transpose(), K[j].vec().transpose(), K[k].vec().transpose();
        g = std::gcd(g, std::lround(std::abs(M.determinant())));
      }
  return g;
}

// For a full-rank K, a lies in the integer span iff adding it keeps the
// lattice index unchanged.
inline bool full_rank_member(std::vector<nsctl::Mode> K, const nsctl::Mode& a) {
  const long before = minor_gcd(K);
  K.push_back(a);
  return minor_gcd(K) == before;
}

// Integer row echelon basis of the span of K, by Euclidean row reduction.
inline std::vector<std::array<long, 3>> echelon_basis(const std::vector<nsctl::Mode>& K) {
  std::vector<std::array<long, 3>> rows;
  for (const auto& m : K) rows.push_back({m.x, m.y, m.z});
  std::size_t pivot = 0;
  for (int c = 0; c < 3 && pivot < rows.size(); ++c) {
    while (true) {
      std::size_t best = rows.size();
      for (std::size_t r = pivot; r < rows.size(); ++r)
        if (rows[r][c] != 0 && (best == rows.size() || std::abs(rows[r][c]) < std::abs(rows[best][c]))) best = r;
      if (best == rows.size()) break;
      std::swap(rows[pivot], rows[best]);
      bool done = true;
      for (std::size_t r = pivot + 1; r < rows.size(); ++r) {
        const long q = rows[r][c] / rows[pivot][c];
        for (int k = 0; k < 3; ++k) rows[r][k] -= q * rows[pivot][k];
        if (rows[r][c] != 0) done = false;
      }
      if (done) {
        ++pivot;
        break;
      }
    }
  }
  rows.resize(pivot);
  return rows;
}

// Integer span membership by reduction against the echelon basis.
inline bool echelon_member(const std::vector<nsctl::Mode>& K, const nsctl::Mode& a) {
  std::array<long, 3> v{a.x, a.y, a.z};
  for (const auto& row : echelon_basis(K)) {
    int c = 0;
    while (row[c] == 0) ++c;
    for (int k = 0; k < c; ++k)
      if (v[k] != 0) return false;
    if (v[c] % row[c] != 0) return false;
    const long q = v[c] / row[c];
    for (int k = 0; k < 3; ++k) v[k] -= q * row[k];
  }
  return v[0] == 0 && v[1] == 0 && v[2] == 0;
}

// Z^3 is spanned iff every unit vector is reachable.
inline bool spans_z3(const std::vector<nsctl::Mode>& K) {
  return echelon_member(K, {1, 0, 0}) && echelon_member(K, {0, 1, 0}) && echelon_member(K, {0, 0, 1});
}

}  // namespace oracle
