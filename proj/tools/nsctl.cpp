// nsctl: desk-scale experiments for Fourier-mode steering of Navier-Stokes on T^3.
// Exit status: 0 success, 1 error, 2 steering budget not met (partial result).

#include "nsctl/nsctl.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <iostream>

namespace {

using namespace nsctl;
namespace fs = std::filesystem;

constexpr int kOk = 0, kError = 1, kBudget = 2;

struct Globals {
  std::string config;
  fs::path out = "nsctl_out";
  std::uint64_t seed = 1;
  int threads = 1;
};

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

/// Files written by one run, hashed into manifest.json.
class Artifacts {
 public:
  explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& text) {
    write_text(dir_ / name, text);
    files_.push_back({name, sha256_hex(text), text.size()});
    spdlog::debug("wrote {}", (dir_ / name).string());
  }
  void json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }
  template <class F>
  void csv(const std::string& name, F&& f) {
    std::ostringstream os;
    f(os);
    write(name, os.str());
  }

  void manifest(const std::string& command, const Globals& g, const std::string& config_text, double seconds,
                int status) const {
    Json files = Json::array();
    for (const auto& f : files_) files.push_back({{"path", f.path}, {"sha256", f.sha}, {"bytes", f.bytes}});
    const Json m = {{"command", command},
                    {"version", NSCTL_VERSION},
                    {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)},
                    {"compiler", __VERSION__},
                    {"config", g.config},
                    {"config_sha256", sha256_hex(config_text)},
                    {"seed", g.seed},
                    {"threads", g.threads},
                    {"wall_seconds", seconds},
                    {"exit_status", status},
                    {"files", files}};
    write_text(dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  struct Entry {
    std::string path, sha;
    std::size_t bytes;
  };
  fs::path dir_;
  std::vector<Entry> files_;
};

struct Context {
  Globals g;
  toml::table root;
  std::string config_text;
  Artifacts art;
  ConfigNode top() const { return ConfigNode(&root, ""); }
};

std::vector<Mode> modes_arg(const std::string& s) {
  try {
    const LatticeSet K = lattice_from_json(Json::parse(s));
    return {K.begin(), K.end()};
  } catch (const std::exception& e) {
    throw ConfigError("--modes: " + std::string(e.what()));
  }
}

Mode mode_arg(const std::string& flag, const std::string& s) {
  try {
    return mode_from_json(Json::parse(s));
  } catch (const std::exception& e) {
    throw ConfigError(flag + ": " + e.what());
  }
}

int galerkin_radius(Context& c, int flag) {
  if (flag > 0) return flag;
  ConfigNode s = c.top().sub("sim");
  return s.get("radius", 2);
}

// ---------------------------------------------------------------------------
// lattice

struct LatticeArgs {
  std::string action, modes, target;
  int depth = 1, max_norm = 0;
};

int cmd_lattice(Context& c, const LatticeArgs& a) {
  std::vector<Mode> K;
  if (!a.modes.empty()) {
    K = modes_arg(a.modes);
  } else {
    ConfigNode n = c.top().sub("lattice");
    K = n.modes("modes");
  }
  if (K.empty()) throw ConfigError("--modes: a nonempty mode set is required");
  const LatticeSet S(K.begin(), K.end());
  Json out = {{"modes", to_json(S)}};
  if (a.action == "is-generator") {
    out["is_generator"] = is_generator(K);
    std::cout << (is_generator(K) ? "generator" : "not a generator") << '\n';
  } else if (a.action == "ladder") {
    const auto levels = grow_ladder(S, a.depth, a.max_norm);
    Json lv = Json::array();
    for (std::size_t j = 0; j < levels.size(); ++j) {
      lv.push_back({{"depth", j}, {"size", levels[j].size()}, {"modes", to_json(levels[j])}});
      std::cout << "depth " << j << ": " << levels[j].size() << " modes\n";
    }
    out["ladder"] = lv;
  } else {
    if (a.target.empty()) throw ConfigError("--target: required for member");
    const Mode t = mode_arg("--target", a.target);
    const bool in = integer_span_membership(K, t);
    out["target"] = to_json(t);
    out["member"] = in;
    std::cout << to_string(t) << (in ? " is" : " is not") << " in the integer span\n";
    if (!in)
      if (const auto ob = find_obstruction(K, t)) {
        out["witness"] = {{"functional", to_json(ob->functional)}, {"modulus", ob->modulus}};
        std::cout << "witness: <" << to_string(ob->functional) << ", k> = 0 mod " << ob->modulus << " on the set\n";
      }
  }
  c.art.json("lattice.json", out);
  return kOk;
}

// ---------------------------------------------------------------------------
// saturate / verify-certificate

struct SaturateArgs {
  std::string space, modes;
  int radius = 0, max_depth = 12;
};

int cmd_saturate(Context& c, const SaturateArgs& a) {
  const int R = galerkin_radius(c, a.radius);
  auto sb = make_basis(R);
  ConfigNode n = c.top().sub("saturate");
  std::string space = a.space.empty() ? n.get<std::string>("space", "") : a.space;
  std::vector<Mode> K = a.modes.empty() ? n.modes("modes") : modes_arg(a.modes);
  const int max_depth = n.get("max_depth", a.max_depth);
  n.finish();
  if (space.empty() && K.empty()) space = "generator12";
  const ModeSpace E =
      K.empty() ? builtin_space(space, sb) : ModeSpace::from_lattice(LatticeSet(K.begin(), K.end()), sb);
  if (K.empty())
    for (const Mode& m : modes_in_box(R, true))
      if (E.touches(m)) K.push_back(m);

  spdlog::info("saturating {} (dim {}) at radius {}", E.name(), E.dim(), R);
  const SaturationLadder L(E, max_depth);
  Json dims = Json::array();
  for (int j = 0; j <= L.depth(); ++j) {
    dims.push_back(L.level(j).dim());
    spdlog::info("depth {}: dim {}", j, L.level(j).dim());
  }
  const auto sat = L.saturation_depth();
  Json unreached = Json::array();
  for (const Mode& m : modes_in_box(R, true))
    if (!L.level(L.depth()).touches(m)) {
      Json u = {{"mode", to_json(m)}};
      if (const auto ob = find_obstruction(K, m))
        u["witness"] = {{"functional", to_json(ob->functional)}, {"modulus", ob->modulus}};
      unreached.push_back(u);
    }
  c.art.csv("reach.csv", [&](std::ostream& os) { write_reach_csv(os, L); });
  c.art.json("ladder.json", {{"space", E.name()},
                             {"radius", R},
                             {"dims", dims},
                             {"saturation_depth", sat ? Json(*sat) : Json(nullptr)},
                             {"restricted", !sat},
                             {"unreached", unreached}});
  if (!space.empty() && a.modes.empty() && !n.has("modes")) c.art.json("certificate.json", to_json(builtin_certificate(space)));
  std::cout << E.name() << ": " << (sat ? "saturates at depth " + std::to_string(*sat) : "does not saturate") << '\n';
  return kOk;
}

struct VerifyArgs {
  std::string builtin, file;
};

int cmd_verify(Context& c, const VerifyArgs& a) {
  if (a.builtin.empty() == a.file.empty()) throw ConfigError("verify-certificate: give exactly one of --builtin, --file");
  const SaturationCertificate cert =
      a.file.empty() ? builtin_certificate(a.builtin) : certificate_from_json(read_json(a.file));
  const CertificateReport r = verify_certificate(cert);
  for (const auto& s : r.steps)
    std::cout << (s.passed ? "PASS " : "FAIL ") << s.label << "  identity " << s.identity_residual << "  input "
              << s.input_residual << "  plane " << s.plane_residual << '\n';
  for (const auto& [p, ok] : r.conclusion)
    std::cout << (ok ? "PASS " : "FAIL ") << "reached " << to_string(p.plane) << ' ' << to_string(p.mode) << '\n';
  if (!r.error.empty()) std::cout << "error: " << r.error << '\n';
  std::cout << cert.name << ": " << (r.passed ? "verified" : "NOT verified") << '\n';
  c.art.json("certificate.json", to_json(cert));
  c.art.json("report.json", to_json(r));
  return r.passed ? kOk : kError;
}

// ---------------------------------------------------------------------------
// simulate / flow

int cmd_simulate(Context& c) {
  ConfigNode top = c.top();
  const SimConfig cfg = sim_config(top.sub("sim"));
  ConfigNode n = top.sub("simulate");
  const double u0_norm = n.get("u0_norm", 0.5), forcing_norm = n.get("forcing_norm", 0.0);
  const int u0_radius = n.get("u0_radius", cfg.galerkin_radius);
  const auto checkpoints = n.list<double>("checkpoints");
  n.finish();
  auto sb = make_basis(cfg.galerkin_radius);
  std::mt19937_64 rng(c.g.seed);
  const TrigField u0 = random_field(rng, std::min(u0_radius, cfg.galerkin_radius), u0_norm, cfg.sobolev_k);
  const auto h = forcing_norm > 0 ? ControlSignal::constant(sb, cfg.horizon,
                                                            sb->from_field(random_field(rng, cfg.galerkin_radius,
                                                                                        forcing_norm, 0)))
                                  : ControlSignal::zero(sb, cfg.horizon);
  spdlog::info("simulating {} steps at dt {}", cfg.steps(), cfg.dt);
  const Trajectory tr = solve(u0, h, ControlSignal::zero(sb, cfg.horizon), nullptr, cfg);
  c.art.csv("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, tr); });
  c.art.json("initial.json", to_json(u0));
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const double t = checkpoints[i];
    if (!(t >= 0 && t <= cfg.horizon)) top.fail("simulate.checkpoints[" + std::to_string(i) + "]", "outside [0, horizon]");
    c.art.json("state_" + std::to_string(i) + ".json", to_json(sb->to_field(tr.at(t))));
  }
  c.art.json("final.json", to_json(tr.state(tr.size() - 1)));
  std::cout << "final energy " << tr.energy.back() << "  H^" << cfg.sobolev_k << " norm " << tr.hk_norm.back() << '\n';
  return kOk;
}

int cmd_flow(Context& c) {
  ConfigNode top = c.top();
  const SimConfig cfg = sim_config(top.sub("sim"));
  ConfigNode n = top.sub("flow");
  const int grid = n.get("grid", 8);
  const double max_dt = n.get("max_dt", 1e-3);
  const Isotopy iso = isotopy_config(n.sub("isotopy"), cfg.horizon, c.g.seed);
  n.finish();
  auto sb = make_basis(std::max(cfg.galerkin_radius, [&] {
    int r = 1;
    for (const auto& f : iso.fields) r = std::max(r, f.radius());
    return r;
  }()));
  const FlowMap target = iso.target(sb, grid, max_dt);
  const FlowMap path = integrate_flow(sb, iso.path(sb), {cfg.horizon}, grid, max_dt, c.g.threads).back();
  const double d = c1_distance(path, target);
  c.art.csv("target.csv", [&](std::ostream& os) { write_flowmap_csv(os, target); });
  c.art.csv("path.csv", [&](std::ostream& os) { write_flowmap_csv(os, path); });
  c.art.json("summary.json", {{"grid", grid},
                              {"c1_distance", d},
                              {"max_det_deviation", path.max_det_deviation()},
                              {"min_det", path.min_det()}});
  std::cout << "C1 distance between integrated path and target: " << d << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// steer / probe

int cmd_steer(Context& c) {
  SteeringProblem P = steering_config(c.root, c.g.seed, c.g.threads);
  spdlog::info("steering on {} (dim {}), epsilon {}", P.E.name(), P.E.dim(), P.epsilon);
  P.opts.on_level = [](const LevelRecord& r) {
    spdlog::info("level {}: n {} p {} endpoint {:.3e} relaxation {:.3e}{}", r.level, r.n, r.p, r.endpoint_error,
                 r.relaxation_error, r.budget_met ? "" : " (budget missed)");
  };
  const StaircaseResult res = run_staircase(P);
  const StaircaseTrace& t = res.trace;
  c.art.csv("trace.csv", [&](std::ostream& os) { write_trace_csv(os, t); });
  c.art.json("summary.json", to_json(t));
  c.art.json("control.json", signal_to_json(res.control));
  if (res.trajectory) c.art.csv("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, *res.trajectory); });
  std::cout << "total error " << t.final_error.total() << " (endpoint " << t.final_error.endpoint << ", relaxation "
            << t.final_error.relaxation << ", flow " << t.final_error.flow << "), epsilon " << t.epsilon
            << ", zero-control baseline " << t.baseline_error.total() << '\n';
  if (t.budget_failure || !t.success) {
    spdlog::warn("steering budget not met; partial result written");
    return kBudget;
  }
  return kOk;
}

int cmd_probe(Context& c) {
  ConfigNode top = c.top();
  const SimConfig cfg = sim_config(top.sub("sim"));
  ConfigNode n = top.sub("probe");
  const std::string kind = n.get<std::string>("kind", "stability");
  auto sb = make_basis(cfg.galerkin_radius);
  std::mt19937_64 rng(c.g.seed);
  if (kind == "stability") {
    const double u_norm = n.get("u_norm", 1.0), v_norm = n.get("v_norm", 1.0), lambda = n.get("lambda", 0.5);
    const auto ns = n.list<int>("ns", {4, 8, 16, 32});
    const int grid = n.get("grid", 8), spp = n.get("steps_per_period", 64);
    n.finish();
    const Eigen::VectorXd u = sb->from_field(random_field(rng, 1, u_norm, 0));
    const Eigen::VectorXd v = sb->from_field(random_field(rng, 1, v_norm, 0));
    const StabilityProbe p = wrap_config(n, "ns", [&] {
      return stability_probe(sb, [u](double) { return u; }, v, cfg.horizon, ns, lambda, grid, cfg.sobolev_k, spp,
                             c.g.threads);
    });
    c.art.csv("probe.csv", [&](std::ostream& os) {
      detail::CsvWriter w(os);
      w.row("n", "flow_distance", "relaxation", "sup_difference");
      for (const auto& r : p.rows) w.row(r.n, r.flow_distance, r.relaxation, r.sup_difference);
    });
    c.art.json("summary.json", {{"kind", kind}, {"fitted_exponent", p.fitted_exponent}, {"monotone", p.monotone}});
    std::cout << "fitted exponent " << p.fitted_exponent << (p.monotone ? ", monotone" : ", not monotone") << '\n';
  } else if (kind == "lipschitz") {
    const std::string slot = n.get<std::string>("slot", "u0");
    const auto sizes = n.list<double>("sizes", {1e-1, 1e-2, 1e-3});
    const double u0_norm = n.get("u0_norm", 0.5);
    n.finish();
    if (slot != "u0" && slot != "eta") n.fail("slot", "expected \"u0\" or \"eta\"");
    const int k = slot == "u0" ? cfg.sobolev_k : cfg.sobolev_k - 1;
    const Eigen::VectorXd u0 = sb->from_field(random_field(rng, cfg.galerkin_radius, u0_norm, cfg.sobolev_k));
    const Eigen::VectorXd dir = sb->from_field(random_field(rng, cfg.galerkin_radius, 1.0, k));
    const auto zero = ControlSignal::zero(sb, cfg.horizon);
    const auto rows = lipschitz_probe(u0, zero, zero, cfg, sizes, slot == "u0" ? ProbeSlot::InitialState : ProbeSlot::Eta,
                                      dir);
    c.art.csv("probe.csv", [&](std::ostream& os) {
      detail::CsvWriter w(os);
      w.row("size", "input_distance", "trajectory_distance", "ratio");
      for (const auto& r : rows) w.row(r.size, r.input_distance, r.trajectory_distance, r.ratio);
    });
    for (const auto& r : rows) std::cout << "size " << r.size << "  ratio " << r.ratio << '\n';
  } else {
    n.fail("kind", "expected \"stability\" or \"lipschitz\", got \"" + kind + "\"");
  }
  return kOk;
}

void set_log_level() {
  spdlog::set_default_logger(spdlog::stderr_color_mt("nsctl"));
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("NS_STEER_LOG")) {
    const auto lvl = spdlog::level::from_str(env);
    if (lvl == spdlog::level::off && std::string(env) != "off")
      spdlog::warn("NS_STEER_LOG: unknown level \"{}\", using info", env);
    else
      spdlog::set_level(lvl);
  }
}

}  // namespace

int main(int argc, char** argv) {
  set_log_level();
  CLI::App app{"nsctl: Fourier-mode steering of Navier-Stokes on the 3-torus"};
  app.set_version_flag("--version", NSCTL_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "TOML experiment config");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--seed", g.seed, "seed for all randomness")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  LatticeArgs la;
  auto* lat = app.add_subcommand("lattice", "integer lattice queries");
  lat->add_option("action", la.action, "is-generator | ladder | member")
      ->required()
      ->check(CLI::IsMember({"is-generator", "ladder", "member"}));
  lat->add_option("--modes", la.modes, "JSON array of integer triples");
  lat->add_option("--depth", la.depth, "ladder depth")->check(CLI::NonNegativeNumber);
  lat->add_option("--max-norm", la.max_norm, "sup-norm cap for ladder growth (0: none)");
  lat->add_option("--target", la.target, "JSON integer triple");

  SaturateArgs sa;
  auto* sat = app.add_subcommand("saturate", "saturation ladder of a control space");
  sat->add_option("--space", sa.space, "generator12 | lavt | lsdfavt");
  sat->add_option("--modes", sa.modes, "E(K) for this JSON mode set");
  sat->add_option("--radius", sa.radius, "Galerkin radius");
  sat->add_option("--max-depth", sa.max_depth, "ladder depth cap");

  VerifyArgs va;
  auto* ver = app.add_subcommand("verify-certificate", "replay a saturation certificate");
  ver->add_option("--builtin", va.builtin, "generator12 | lavt | lsdfavt");
  ver->add_option("--file", va.file, "certificate JSON");

  auto* sim = app.add_subcommand("simulate", "unforced or constantly forced Galerkin run");
  auto* flo = app.add_subcommand("flow", "flow map of an isotopy");
  auto* ste = app.add_subcommand("steer", "staircase steering");
  auto* pro = app.add_subcommand("probe", "stability or Lipschitz probe");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kError;
  }

  const auto start = std::chrono::steady_clock::now();
  const std::string command = app.get_subcommands().front()->get_name();
  Context c{g, {}, {}, Artifacts(g.out)};
  int status = kError;
  try {
    if (!g.config.empty()) {
      c.config_text = read_text(g.config);
      c.root = parse_toml(c.config_text, g.config);
      ConfigNode top(&c.root, "");
      if (top.has("seed") && !app.get_option("--seed")->count()) c.g.seed = top.get<std::uint64_t>("seed", 1);
      if (top.has("threads") && !app.get_option("--threads")->count()) c.g.threads = top.get("threads", 1);
    }
    if (lat->parsed()) status = cmd_lattice(c, la);
    else if (sat->parsed()) status = cmd_saturate(c, sa);
    else if (ver->parsed()) status = cmd_verify(c, va);
    else if (sim->parsed()) status = cmd_simulate(c);
    else if (flo->parsed()) status = cmd_flow(c);
    else if (ste->parsed()) status = cmd_steer(c);
    else if (pro->parsed()) status = cmd_probe(c);
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    status = kError;
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", command, e.what());
    status = kError;
  }
  try {
    c.art.manifest(command, c.g, c.config_text, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(),
                   status);
  } catch (const std::exception& e) {
    spdlog::error("manifest: {}", e.what());
    return kError;
  }
  return status;
}
