#include <catch2/catch_amalgamated.hpp>

#include "nsctl/control.hpp"

#include <random>

using namespace nsctl;
using Eigen::VectorXd;

namespace {

SteeringProblem base_problem(SpectralBasisPtr sb, const char* space = "generator12") {
  SteeringProblem P;
  P.basis = sb;
  P.cfg = SimConfig(1.0, 2, 1e-3, 1.0);
  P.psi = identity_isotopy(1.0);
  P.h = ControlSignal::zero(sb, 1.0);
  P.E = builtin_space(space, sb);
  P.opts.flow_grid = 3;
  P.opts.relax_samples = 200;
  return P;
}

VectorXd random_in(const ModeSpace& E, std::mt19937_64& rng, double size) {
  std::normal_distribution<double> g;
  VectorXd v = E.basis().zeros();
  for (const auto& c : E.columns()) v += g(rng) * c;
  return v * (size / v.norm());
}

}  // namespace

TEST_CASE("trivial steering problem: zero control and zero errors") {
  auto sb = make_basis(2);
  const SteeringProblem P = base_problem(sb);
  const Reference ref = reference_trajectory(P);
  CHECK(ref.eta0.value(0.4).isZero(0.0));
  CHECK(ref.phi.value(0.4).isZero(0.0));
  const StaircaseResult r = run_staircase(P);
  CHECK(r.trace.final_error.total() == 0.0);
  CHECK(r.trace.success);
  CHECK_FALSE(r.trace.budget_failure);
  for (int i = 0; i <= 50; ++i) CHECK(r.control.value(i / 50.0).isZero(0.0));
}

TEST_CASE("reference path pins both endpoints") {
  auto sb = make_basis(2);
  std::mt19937_64 rng(3);
  SteeringProblem P = base_problem(sb);
  P.u0 = random_field(rng, 2, 0.1, 3);
  P.u1 = random_field(rng, 2, 0.1, 3);
  P.psi = shear_isotopy({shear_field(2, 1, 0, 0.0, 0.25)}, 1.0);
  const Reference ref = reference_trajectory(P);
  CHECK((ref.phi.value(0.0) - sb->from_field(P.u0)).norm() == 0.0);
  CHECK((ref.phi.value(1.0) - sb->from_field(P.u1)).norm() == 0.0);
  // replaying the exact control follows phi
  const Trajectory tr = solve(sb->from_field(P.u0), P.h, ref.eta0, nullptr, P.cfg);
  double err = 0.0;
  for (std::size_t i = 0; i < tr.size(); i += 50) err = std::max(err, (tr.states[i] - ref.phi.value(tr.times[i])).norm());
  CHECK(err < 1e-4);
}

TEST_CASE("shear target: eta0 lives on the shear mode and the replayed flow is psi") {
  auto sb = make_basis(2);
  SteeringProblem P = base_problem(sb);
  P.psi = shear_isotopy({shear_field(2, 1, 0, 0.0, 0.25)}, 1.0);
  const Reference ref = reference_trajectory(P);
  const int i = sb->find({1, 0, 0});
  for (double t : {0.1, 0.5, 0.9}) {
    VectorXd v = ref.eta0.value(t);
    v.segment<6>(6 * i).setZero();
    CHECK(v.isZero(0.0));
  }
  SolveOptions so;
  StreamingFlow flow(sb, 4);
  so.observer = flow.observer();
  solve(sb->zeros(), P.h, ref.eta0, nullptr, P.cfg, so);
  CHECK(c1_distance(flow.map(), P.psi.target(sb, 4)) < 1e-6);
}

TEST_CASE("E-valued exact control needs no convexification") {
  auto sb = make_basis(2);
  SteeringProblem P = base_problem(sb);
  P.psi = shear_isotopy({shear_field(2, 1, 0, 0.0, 0.25)}, 1.0);
  const StaircaseResult r = run_staircase(P);
  for (const auto& l : r.trace.levels) CHECK(l.p == 0);
  CHECK(r.trace.final_error.total() < 1e-4);
  CHECK(r.trace.control_residual <= 1e-12);
  CHECK(r.trace.baseline_error.total() > 0.1);
}

TEST_CASE("projection onto ladder levels") {
  auto sb = make_basis(2);
  std::mt19937_64 rng(5);
  const SaturationLadder L(builtin_space("lsdfavt", sb), 12);
  const VectorXd v = sb->from_field(random_field(rng, 2, 1.0, 0));
  const auto eta0 = ControlSignal::constant(sb, 1.0, v);
  double prev = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= L.depth(); ++j) {
    const double r = (project_control(eta0, L.level(j)).value(0.3) - v).norm();
    CHECK(r <= prev + 1e-14);
    prev = r;
  }
  CHECK(prev < 1e-12);
  const VectorXd e = random_in(L.level(0), rng, 1.0);
  const auto in_E = ControlSignal::constant(sb, 1.0, e);
  CHECK((project_control(in_E, L.level(0)).value(0.5) - e).norm() < 1e-14);
  CHECK((project_control(eta0, ModeSpace::full(sb)).value(0.5) - v).norm() == 0.0);
}

TEST_CASE("convexification of a level-one control") {
  auto sb = make_basis(2);
  std::mt19937_64 rng(7);
  const SaturationLadder L(builtin_space("generator12", sb), 1, false);
  const VectorXd a = random_in(L.level(1), rng, 0.3), b = random_in(L.level(1), rng, 0.3);
  ControlSignal eta1(sb, 1.0);
  eta1.add(std::make_shared<ProfileTerm>(
      Profile{[](double t) { return std::cos(3 * t); }, [](double t) { return std::sin(3 * t) / 3; }, {}}, a));
  eta1.add(std::make_shared<ProfileTerm>(Profile{[](double t) { return t; }, [](double t) { return t * t / 2; }, {}}, b));
  const LevelSplit s = split_level(eta1, L, 1, 2);
  CHECK(s.pieces.size() == 4);
  CHECK_FALSE(s.trivial());
  const ConvexifiedLevel c = convexify_level(s, 4, 1.0, 20, 9);
  CHECK(c.isver_residual <= 1e-12);
  // the values of zeta and eta stay in level 0
  for (int i = 0; i <= 200; ++i) {
    const double t = i / 200.0;
    CHECK(L.level(0).residual(c.zeta.value(t)) <= 1e-12);
    CHECK(L.level(0).residual(c.eta.value(t)) <= 1e-12);
  }
  // the cycle sums to zero, so the L terms cancel
  for (const auto& p : s.pieces) {
    VectorXd sum = sb->zeros();
    for (const auto& z : cycle_values(p)) sum += z;
    CHECK(sum.norm() < 1e-15);
  }
}

TEST_CASE("convexification of an already lower-level control is trivial") {
  auto sb = make_basis(2);
  std::mt19937_64 rng(9);
  const SaturationLadder L(builtin_space("generator12", sb), 1, false);
  const VectorXd e = random_in(L.level(0), rng, 1.0);
  const auto eta1 = ControlSignal::constant(sb, 1.0, e);
  const LevelSplit s = split_level(eta1, L, 1, 3);
  CHECK(s.trivial());
  const ConvexifiedLevel c = convexify_level(s, 8, 1.0);
  for (double t : {0.0, 0.3, 0.99}) {
    CHECK(c.zeta.value(t).isZero(0.0));
    CHECK((c.eta.value(t) - e).norm() < 1e-14);
  }
  const Absorbed ab = absorb_zeta(c, 0.1, 3);
  CHECK((ab.eta_hat.value(0.3) - c.eta.value(0.3)).norm() == 0.0);
}

TEST_CASE("isver with one witness and p = 1") {
  auto sb = make_basis(2);
  std::mt19937_64 rng(11);
  TrigField x;
  x.add_cos({1, 0, 0}, Eigen::Vector3d(0, 0, 1));
  x.add_sin({0, 1, 0}, Eigen::Vector3d(1, 0, 0));
  const VectorXd xi = sb->from_field(x), eta = sb->from_field(random_field(rng, 2, 1.0, 0));
  const VectorXd eta1 = eta - sb->nonlinear(xi);
  CHECK(isver_residual(*sb, 1.0, {xi, -xi}, eta, eta1, 20, 1) <= 1e-12);
  CHECK(isver_residual(*sb, 1.0, {xi, -xi}, eta, eta, 20, 1) > 1e-3);
}

TEST_CASE("missing witness names the offending mode") {
  auto sb = make_basis(2);
  const SaturationLadder L(builtin_space("generator12", sb), 1, false);
  const auto bad = ControlSignal::constant(sb, 1.0, sb->from_field(basis_cos({2, 2, 1})));
  try {
    split_level(bad, L, 1, 1);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("(2,2,1)") != std::string::npos);
  }
}

TEST_CASE("absorbed oscillation: vanishing ends and relaxation halving") {
  auto sb = make_basis(2);
  std::mt19937_64 rng(13);
  const VectorXd z = sb->from_field(random_field(rng, 2, 1.0, 0));
  // single constant piece: the ramps pin zeta_hat to zero at both ends
  ConvexifiedLevel one;
  one.breaks = {0.0, 1.0};
  one.table = {sb->zeros(), z};
  one.index = {1};
  one.eta = ControlSignal::zero(sb, 1.0);
  const Absorbed a1 = absorb_zeta(one, 0.1, 3);
  CHECK(a1.zeta_hat.value(0.0).norm() == 0.0);
  CHECK(a1.zeta_hat.value(1.0).norm() < 1e-15);
  CHECK(a1.eta_hat.integral(0.0, 1.0).norm() < 1e-15);
  // cancelling cycle z, -z repeated n times
  std::vector<double> rel;
  for (int n : {4, 8, 16, 32}) {
    ConvexifiedLevel c;
    c.table = {sb->zeros(), z, VectorXd(-z)};
    for (int i = 0; i < 2 * n; ++i) {
      c.breaks.push_back(double(i) / (2 * n));
      c.index.push_back(1 + i % 2);
    }
    c.breaks.push_back(1.0);
    c.eta = ControlSignal::zero(sb, 1.0);
    rel.push_back(absorb_zeta(c, 0.1, 3).zeta_relaxation);
  }
  for (std::size_t i = 1; i < rel.size(); ++i) CHECK(std::abs(rel[i - 1] / rel[i] - 2.0) < 0.4);
}

TEST_CASE("one convexification level converges as n doubles") {
  auto sb = make_basis(2);
  std::mt19937_64 rng(15);
  const SaturationLadder L(builtin_space("generator12", sb), 1, false);
  const VectorXd a = random_in(L.level(1), rng, 0.5);
  const double T = 0.5;
  const auto eta1 = ControlSignal::constant(sb, T, a);
  const SimConfig cfg(1.0, 2, 1e-3, T);
  const auto zero = ControlSignal::zero(sb, T);
  const Trajectory target = solve(sb->zeros(), zero, eta1, nullptr, cfg);
  const LevelSplit s = split_level(eta1, L, 1, 0);
  std::vector<double> err;
  for (int n : {2, 4, 8}) {
    const ConvexifiedLevel c = convexify_level(s, n, 1.0, 5);
    const Absorbed ab = absorb_zeta(c, 0.1, 3);
    SimConfig fine = cfg;
    fine.dt = c.min_subinterval / 4;
    const Trajectory v = solve(sb->zeros(), zero, ab.eta_hat, nullptr, fine);
    err.push_back(sb->sobolev_norm(v.final_state() - target.final_state(), 3));
  }
  INFO(err[0] << ' ' << err[1] << ' ' << err[2]);
  CHECK(err[1] < err[0]);
  CHECK(err[2] < err[1]);
}
