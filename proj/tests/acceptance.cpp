// Acceptance criteria 1-10. One PASS/FAIL line per criterion; exit status 1
// when any criterion fails.

#include "nsctl/nsctl.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace nsctl;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < limit_seconds;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::ostringstream line;
  line << (pass ? "PASS" : "FAIL") << ' ' << id << ' ' << name << ": " << o.detail << " [" << std::fixed
       << std::setprecision(1) << secs << " s of " << limit_seconds << " s" << (in_time ? "" : ", too slow") << ']';
  std::cout << line.str() << std::endl;
}

std::string sci(double x) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << x;
  return os.str();
}

Vector3d gauss3(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return {g(rng), g(rng), g(rng)};
}

// ---------------------------------------------------------------------------

Outcome bilinear_oracle() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const TrigField a = random_field(rng, 2, 1.0, 0), b = random_field(rng, 2, 1.0, 0);
    const TrigField exact = bilinear_B(a, b);
    const TrigField ref = oracle::pseudo_spectral_B(a, b, 16);
    worst = std::max(worst, norm(exact - ref) / norm(ref));
  }
  return {worst <= 1e-10, "max relative error " + sci(worst) + " over 200 pairs (tol 1e-10)"};
}

Outcome pair_identities() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> e(-2, 2);
  double worst = 0.0;
  int tested = 0;
  while (tested < 50) {
    const Mode m{e(rng), e(rng), e(rng)}, n{e(rng), e(rng), e(rng)};
    if (m.is_zero() || n.is_zero() || parallel(m, n)) continue;
    const Vector3d a = project_perp(m, gauss3(rng)), b = project_perp(n, gauss3(rng));
    const Vector3d minus = a.dot(n.vec()) * b - b.dot(m.vec()) * a;
    const Vector3d plus = a.dot(n.vec()) * b + b.dot(m.vec()) * a;
    const Mode d = m - n, s = m + n;
    auto cosf = [](const Mode& l, const Vector3d& v) {
      TrigField f;
      f.add_projected(l, v, Vector3d::Zero());
      return f;
    };
    auto sinf = [](const Mode& l, const Vector3d& v) {
      TrigField f;
      f.add_projected(l, Vector3d::Zero(), v);
      return f;
    };
    auto field = [](const Mode& l, const Vector3d& c, const Vector3d& sn) {
      TrigField f;
      f.add(l, c, sn);
      return f;
    };
    const Vector3d O = Vector3d::Zero();
    // a cos m + b sin n, and its partner b cos n + a sin m
    TrigField u1 = field(m, a, O);
    u1 += field(n, O, b);
    TrigField u2 = field(n, b, O);
    u2 += field(m, O, a);
    TrigField u3 = field(n, -b, O);
    u3 += field(m, O, a);
    const TrigField anh1 = 2.0 * nonlinear_B(u1) - (cosf(d, minus) + cosf(s, plus));
    const TrigField anhz1 = 2.0 * nonlinear_B(u2) - (-1.0 * cosf(d, minus) + cosf(s, plus));
    const TrigField cru1 = cosf(s, plus) - (nonlinear_B(u1) + nonlinear_B(u2));
    const TrigField cru2 = cosf(d, minus) - (nonlinear_B(u1) + nonlinear_B(u3));
    TrigField cc = field(m, a, O);
    cc += field(n, b, O);
    TrigField ss = field(m, O, a);
    ss += field(n, O, b);
    const TrigField sin1 = 2.0 * nonlinear_B(cc) - (sinf(d, minus) - sinf(s, plus));
    const TrigField sin2 = 2.0 * nonlinear_B(ss) - (sinf(d, minus) + sinf(s, plus));
    for (const TrigField* r : {&anh1, &anhz1, &cru1, &cru2, &sin1, &sin2}) worst = std::max(worst, norm(*r));
    ++tested;
  }
  return {worst <= 1e-12, "max residual " + sci(worst) + " over 6 identities x 50 draws (tol 1e-12)"};
}

Outcome generator_criterion() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> e(-3, 3), count(1, 5);
  int agree = 0, positives = 0;
  for (int i = 0; i < 500; ++i) {
    std::vector<Mode> K;
    for (int c = count(rng); c > 0; --c) K.push_back({e(rng), e(rng), e(rng)});
    const bool got = is_generator(K), want = oracle::spans_z3(K);
    agree += got == want;
    positives += want;
  }
  const bool pos = is_generator(std::vector<Mode>{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const bool neg = is_generator(std::vector<Mode>{{2, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  std::ostringstream d;
  d << agree << "/500 agree with the echelon oracle (" << positives << " generators); {e1,e2,e3} "
    << (pos ? "generator" : "rejected") << ", {2e1,e2,e3} " << (neg ? "accepted" : "not a generator");
  return {agree == 500 && pos && !neg, d.str()};
}

Outcome saturation_replays() {
  auto sb = make_basis(2);
  std::ostringstream d;
  bool ok = true;
  for (const char* name : {"generator12", "lavt", "lsdfavt"}) {
    const bool verified = verify_certificate(builtin_certificate(name)).passed;
    const SaturationLadder L(builtin_space(name, sb), 12);
    bool all = true;
    for (const Mode& m : sb->modes())
      all = all && L.top().plane_reached(m, Plane::Cos) && L.top().plane_reached(m, Plane::Sin);
    ok = ok && verified && all;
    d << name << (verified ? " verified" : " NOT verified") << (all ? ", fills the box" : ", misses planes") << "; ";
  }
  const std::vector<Mode> K{{2, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const SaturationLadder L(ModeSpace::from_lattice(LatticeSet(K.begin(), K.end()), sb), 12);
  bool never = L.stabilized();
  for (int j = 0; j <= L.depth(); ++j) never = never && !L.level(j).touches({1, 0, 0});
  const auto ob = find_obstruction(K, {1, 0, 0});
  const bool parity = ob && ob->modulus == 2;
  ok = ok && never && parity;
  d << "{2e1,e2,e3}: " << (never ? "(1,0,0) never reached" : "(1,0,0) REACHED");
  if (ob) d << ", witness <" << to_string(ob->functional) << ",k> = 0 mod " << ob->modulus;
  return {ok, d.str()};
}

Outcome solver_eigenmodes() {
  auto sb = make_basis(2);
  const SimConfig cfg(1.0, 2, 1e-3, 1.0);
  const auto zero = ControlSignal::zero(sb, 1.0);
  double decay = 0.0;
  for (const Mode& m : {Mode{1, 0, 0}, Mode{1, 1, 0}, Mode{2, 1, -1}, Mode{0, 2, 2}})
    for (const TrigField& f : {basis_cos(m), basis_sin(m)}) {
      const Trajectory tr = solve(f, zero, zero, nullptr, cfg);
      decay = std::max(decay, (tr.final_state() - std::exp(-double(m.dot(m))) * sb->from_field(f)).norm());
    }
  std::mt19937_64 rng(505);
  int decreasing = 0;
  for (int i = 0; i < 20; ++i) {
    const Trajectory tr = solve(random_field(rng, 2, 2.0, 0), zero, zero, nullptr, cfg);
    bool strict = true;
    for (std::size_t s = 1; s < tr.size(); ++s) strict = strict && tr.energy[s] < tr.energy[s - 1];
    decreasing += strict;
  }
  // invariant subspace: data and force supported on the span of {2e1, e2, e3}
  auto sb3 = make_basis(3);
  const LatticeSet K0 = grow_ladder({{2, 0, 0}, {0, 1, 0}, {0, 0, 1}}, 6, 3).back();
  auto in_K = [&](const Mode& m) { return K0.count(m) || K0.count(-m); };
  VectorXd u0 = sb3->zeros(), f = sb3->zeros();
  std::normal_distribution<double> g;
  for (int i = 0; i < sb3->num_modes(); ++i) {
    if (!in_K(sb3->mode(i))) continue;
    u0.segment<6>(6 * i) += sb3->mode_frame(i) * Eigen::Vector4d(g(rng), g(rng), g(rng), g(rng)) * 0.3;
    f.segment<6>(6 * i) += sb3->mode_frame(i) * Eigen::Vector4d(g(rng), g(rng), g(rng), g(rng)) * 0.5;
  }
  const Trajectory tr = solve(u0, ControlSignal::constant(sb3, 1.0, f), ControlSignal::zero(sb3, 1.0), nullptr,
                              SimConfig(1.0, 3, 1e-3, 1.0));
  double leak = 0.0;
  for (const auto& s : tr.states)
    for (int i = 0; i < sb3->num_modes(); ++i)
      if (!in_K(sb3->mode(i))) leak = std::max(leak, s.segment<6>(6 * i).norm());
  std::ostringstream d;
  d << "decay error " << sci(decay) << " (tol 1e-8); " << decreasing << "/20 energies strictly decreasing; leak "
    << sci(leak) << " (tol 1e-12)";
  return {decay <= 1e-8 && decreasing == 20 && leak <= 1e-12, d.str()};
}

Outcome shift_identity() {
  auto sb = make_basis(2);
  std::mt19937_64 rng(606);
  const double T = 1.0;
  const SimConfig cfg(1.0, 2, 1e-3, T);
  auto state = [&](double size) { return sb->from_field(random_field(rng, 2, size, 0)); };
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int pieces = 2 + trial;
    std::vector<double> b;
    std::vector<VectorXd> table;
    std::vector<int> idx;
    for (int i = 0; i <= pieces; ++i) b.push_back(T * i / pieces);
    for (int i = 0; i < pieces; ++i) {
      table.push_back(state(0.3));
      idx.push_back(i);
    }
    auto z = std::make_shared<RampedTerm>(b, table, idx, 0.1 + 0.03 * trial);
    ControlSignal zeta(sb, T), eta(sb, T);
    zeta.add(z);
    const double w = 1.0 + trial;
    eta.add(std::make_shared<ProfileTerm>(
        Profile{[w](double t) { return std::sin(w * t); }, [w](double t) { return -std::cos(w * t) / w; }, {}}, state(1.0)));
    const ControlSignal h = ControlSignal::constant(sb, T, state(0.5));
    ControlSignal eta_hat = eta;
    eta_hat.add(std::make_shared<RampedRateTerm>(z));
    const VectorXd u0 = state(0.5);
    const Trajectory a = solve(u0, h, eta, &zeta, cfg);
    const Trajectory c = solve(u0, h, eta_hat, nullptr, cfg);
    for (std::size_t i = 0; i < a.size(); ++i)
      worst = std::max(worst, (a.states[i] + zeta.value(a.times[i]) - c.states[i]).norm());
    worst = std::max(worst, zeta.value(0.0).norm() + zeta.value(T).norm());
  }
  return {worst <= 1e-8, "max deviation " + sci(worst) + " over 10 ramped shifts (tol 1e-8)"};
}

Outcome liouville() {
  auto sb = make_basis(2);
  std::mt19937_64 rng(707);
  double dev = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const VectorXd a = sb->from_field(random_field(rng, 2, 1.0, 0)), b = sb->from_field(random_field(rng, 2, 1.0, 0));
    CoeffPath u = [a, b](double t) -> VectorXd { return std::cos(2 * t) * a + std::sin(3 * t) * b; };
    for (const auto& m : integrate_flow(sb, u, {0.25, 0.5, 0.75, 1.0}, 8, 1e-2)) dev = std::max(dev, m.max_det_deviation());
  }
  const VectorXd s = sb->from_field(shear_field(2, 1, 0, 0.0, 1.0));
  const FlowMap m = integrate_flow(sb, [s](double) { return s; }, {1.0}, 8, 1e-2).back();
  double shear = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Vector3d x = m.seeds[i];
    Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
    D(2, 0) = std::cos(x[0]);
    shear = std::max(shear, (m.positions[i] - Vector3d(x[0], x[1], x[2] + std::sin(x[0]))).norm());
    shear = std::max(shear, (m.jacobians[i] - D).norm());
  }
  return {dev <= 1e-6 && shear <= 1e-10,
          "max |det - 1| " + sci(dev) + " on 8^3 seeds (tol 1e-6); shear error " + sci(shear) + " (tol 1e-10)"};
}

Outcome relaxation_stability() {
  auto sb = make_basis(2);
  std::mt19937_64 rng(808);
  const VectorXd u = sb->from_field(random_field(rng, 1, 1.0, 0)), v = sb->from_field(random_field(rng, 1, 1.0, 0));
  const double lambda = 0.5;
  const StabilityProbe p = stability_probe(sb, [u](double) { return u; }, v, 1.0, {4, 8, 16, 32}, lambda, 8, 3, 64);
  bool constant = true;
  std::ostringstream d;
  for (const auto& r : p.rows) {
    constant = constant && r.sup_difference == p.rows.front().sup_difference;
    d << "n=" << r.n << ": " << sci(r.flow_distance) << "; ";
  }
  d << "exponent " << std::setprecision(3) << p.fitted_exponent << " (need >= " << lambda / 2 - 0.1 << ")"
    << (p.monotone ? ", monotone" : ", NOT monotone") << (constant ? ", sup difference constant" : "");
  return {p.monotone && constant && p.fitted_exponent >= lambda / 2 - 0.1, d.str()};
}

Outcome convexification() {
  auto sb = make_basis(2);
  std::mt19937_64 rng(909);
  const SaturationLadder L(builtin_space("generator12", sb), 12);
  const int N = *L.saturation_depth();
  const double T = 1.0;
  const SimConfig cfg(1.0, 2, 1e-3, T);
  const auto zero = ControlSignal::zero(sb, T);
  std::normal_distribution<double> g;
  double isver = 0.0;
  bool ok = true;
  std::ostringstream d;
  for (int j = 1; j <= N; ++j) {
    VectorXd a = sb->zeros();
    for (const auto& c : L.level(j).columns()) a += g(rng) * c;
    a *= 0.5 / a.norm();
    const auto eta1 = ControlSignal::constant(sb, T, a);
    const LevelSplit s = split_level(eta1, L, j, 0);
    SimConfig fine = cfg;
    std::vector<double> err;
    std::vector<ConvexifiedLevel> levels;
    for (int n : {4, 8, 16, 32}) levels.push_back(convexify_level(s, n, cfg.nu, 20, 31 + j));
    fine.dt = levels.back().min_subinterval / 4;
    const Trajectory target = solve(sb->zeros(), zero, eta1, nullptr, fine);
    for (const auto& cv : levels) {
      isver = std::max(isver, cv.isver_residual);
      const Absorbed ab = absorb_zeta(cv, 0.1, 3);
      const Trajectory v = solve(sb->zeros(), zero, ab.eta_hat, nullptr, fine);
      err.push_back(sb->sobolev_norm(v.final_state() - target.final_state(), 3));
    }
    double log_ratio = 0.0;
    bool capped = true;
    for (std::size_t i = 1; i < err.size(); ++i) {
      log_ratio += std::log(err[i] / err[i - 1]);
      capped = capped && err[i] <= 1.1 * err[i - 1];
    }
    const bool decreasing = log_ratio < 0 && capped;
    ok = ok && decreasing;
    d << "level " << j << " (p=" << s.max_p() << ") errors";
    for (double e : err) d << ' ' << sci(e);
    d << (decreasing ? "" : " NOT decreasing") << "; ";
  }
  ok = ok && isver <= 1e-12;
  d << "isver " << sci(isver) << " (tol 1e-12)";
  return {ok, d.str()};
}

SteeringProblem desk_problem(const std::string& space, double epsilon, int cap) {
  SteeringProblem P;
  P.basis = make_basis(2);
  P.cfg = SimConfig(1.0, 2, 1e-3, 1.0);
  std::mt19937_64 rng(2024);
  P.u1 = random_field(rng, 2, 0.2, 3);
  P.psi = shear_isotopy({shear_field(2, 1, 0, 0.0, 0.25)}, 1.0);
  P.h = ControlSignal::zero(P.basis, 1.0);
  P.E = builtin_space(space, P.basis);
  P.epsilon = epsilon;
  P.opts.n_cap = cap;
  return P;
}

Outcome end_to_end() {
  struct Run {
    std::string space;
    double epsilon;
    int cap;
  };
  bool ok = true;
  std::ostringstream d;
  for (const Run& r : {Run{"generator12", 0.1, 8}, Run{"generator12", 0.05, 16}, Run{"lavt", 0.2, 8},
                       Run{"lsdfavt", 0.2, 8}}) {
    const StaircaseResult res = run_staircase(desk_problem(r.space, r.epsilon, r.cap));
    const StaircaseTrace& t = res.trace;
    const bool pass = t.success && t.control_residual <= 1e-12;
    ok = ok && pass;
    d << r.space << " eps " << r.epsilon << " cap " << r.cap << ": total " << sci(t.final_error.total()) << " (endpoint "
      << sci(t.final_error.endpoint) << ", relaxation " << sci(t.final_error.relaxation) << ", flow "
      << sci(t.final_error.flow) << "), zero control " << sci(t.baseline_error.total()) << ", E-residual "
      << sci(t.control_residual) << (pass ? "" : " MISSED") << "; ";
    std::cerr << "  [10] " << r.space << " eps " << r.epsilon << ": levels";
    for (const auto& l : t.levels) std::cerr << " j" << l.level << "(n " << l.n << ", p " << l.p << ", " << sci(l.endpoint_error + l.relaxation_error) << ")";
    std::cerr << ", " << t.seconds << " s" << std::endl;
  }
  return {ok, d.str()};
}

}  // namespace

int main() {
  criterion(1, "bilinear oracle equivalence", 30, bilinear_oracle);
  criterion(2, "pair and sin identities", 5, pair_identities);
  criterion(3, "generator criterion", 10, generator_criterion);
  criterion(4, "saturation replays", 120, saturation_replays);
  criterion(5, "solver exactness on eigenmodes", 60, solver_eigenmodes);
  criterion(6, "shift identity", 60, shift_identity);
  criterion(7, "Liouville", 60, liouville);
  criterion(8, "relaxation stability", 180, relaxation_stability);
  criterion(9, "convexification identity", 300, convexification);
  criterion(10, "end-to-end steering", 600, end_to_end);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
