#pragma once
/// TOML experiment configs. Every diagnostic names the offending field path.

#include "nsctl/control.hpp"

#include <toml.hpp>

#include <filesystem>
#include <set>
#include <sstream>

namespace nsctl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A table plus its dotted path. Keys read through it are recorded so that
/// finish() can reject typos.
class ConfigNode {
 public:
  ConfigNode(const toml::table* t, std::string path) : t_(t), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return t_ && t_->contains(key); }
  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(key_path(key) + ": " + what);
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!has(key)) return fallback;
    return convert<T>(*t_->get(key), key);
  }

  template <class T>
  T require(const std::string& key) {
    used_.insert(key);
    if (!has(key)) fail(key, "missing required field");
    return convert<T>(*t_->get(key), key);
  }

  template <class T>
  std::vector<T> list(const std::string& key, std::vector<T> fallback = {}) {
    used_.insert(key);
    if (!has(key)) return fallback;
    const toml::array* a = t_->get(key)->as_array();
    if (!a) fail(key, "expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < a->size(); ++i) out.push_back(convert<T>(*a->get(i), key + "[" + std::to_string(i) + "]"));
    return out;
  }

  Mode mode(const std::string& key) {
    const auto v = list<int>(key);
    if (v.size() != 3) fail(key, "expected three integers");
    return Mode{v[0], v[1], v[2]};
  }

  std::vector<Mode> modes(const std::string& key) {
    used_.insert(key);
    std::vector<Mode> out;
    if (!has(key)) return out;
    const toml::array* a = t_->get(key)->as_array();
    if (!a) fail(key, "expected an array of integer triples");
    for (std::size_t i = 0; i < a->size(); ++i) {
      const toml::array* m = a->get(i)->as_array();
      const std::string k = key + "[" + std::to_string(i) + "]";
      if (!m || m->size() != 3) fail(k, "expected three integers");
      out.push_back(Mode{convert<int>(*m->get(0), k), convert<int>(*m->get(1), k), convert<int>(*m->get(2), k)});
    }
    return out;
  }

  ConfigNode sub(const std::string& key) {
    used_.insert(key);
    if (!has(key)) return ConfigNode(nullptr, key_path(key));
    const toml::table* s = t_->get(key)->as_table();
    if (!s) fail(key, "expected a table");
    return ConfigNode(s, key_path(key));
  }

  std::vector<ConfigNode> tables(const std::string& key) {
    used_.insert(key);
    std::vector<ConfigNode> out;
    if (!has(key)) return out;
    const toml::array* a = t_->get(key)->as_array();
    if (!a) fail(key, "expected an array of tables");
    for (std::size_t i = 0; i < a->size(); ++i) {
      const toml::table* s = a->get(i)->as_table();
      const std::string k = key + "[" + std::to_string(i) + "]";
      if (!s) fail(k, "expected a table");
      out.emplace_back(s, key_path(k));
    }
    return out;
  }

  void finish() const {
    if (!t_) return;
    for (const auto& [k, v] : *t_)
      if (!used_.count(std::string(k.str()))) throw ConfigError(key_path(std::string(k.str())) + ": unknown field");
  }

 private:
  template <class T>
  T convert(const toml::node& n, const std::string& key) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = n.value_exact<bool>()) return *v;
      fail(key, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (auto v = n.value_exact<std::int64_t>()) return T(*v);
      fail(key, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (n.is_number()) return T(*n.value<double>());
      fail(key, "expected a number");
    } else {
      if (auto v = n.value_exact<std::string>()) return *v;
      fail(key, "expected a string");
    }
  }

  const toml::table* t_;
  std::string path_;
  std::set<std::string> used_;
};

inline toml::table parse_toml(const std::string& text, const std::string& source = "config") {
  try {
    return toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ':' << e.source().begin.line << ':' << e.source().begin.column << ": " << e.description();
    throw ConfigError(os.str());
  }
}

inline toml::table load_toml(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_toml(ss.str(), path.string());
}

// ---------------------------------------------------------------------------
// module sections

template <class F>
auto wrap_config(const ConfigNode& n, const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    n.fail(key, e.what());
  }
}

inline SimConfig sim_config(ConfigNode n) {
  SimConfig c;
  c.nu = n.get("nu", c.nu);
  c.galerkin_radius = n.get("radius", c.galerkin_radius);
  c.dt = n.get("dt", c.dt);
  c.horizon = n.get("horizon", c.horizon);
  c.sobolev_k = n.get("sobolev_k", c.sobolev_k);
  c.blowup_ceiling = n.get("blowup_ceiling", c.blowup_ceiling);
  c.record_every = n.get("record_every", c.record_every);
  n.finish();
  wrap_config(n, "dt", [&] { c.validate(); return 0; });
  return c;
}

inline WindowProfile window_profile(ConfigNode& n) {
  const std::string p = n.get<std::string>("profile", "bump");
  if (p == "bump") return WindowProfile::Bump;
  if (p == "uniform") return WindowProfile::Uniform;
  n.fail("profile", "expected \"bump\" or \"uniform\", got \"" + p + "\"");
}

/// kind = "identity" | "shears" | "time-one". Shears are listed as S1..Sm
/// and act last-first; a time-one field is random with the given size.
inline Isotopy isotopy_config(ConfigNode n, double horizon, std::uint64_t seed) {
  const std::string kind = n.get<std::string>("kind", "identity");
  const WindowProfile prof = window_profile(n);
  Isotopy iso;
  if (kind == "identity") {
    iso = identity_isotopy(horizon);
  } else if (kind == "shears") {
    std::vector<TrigField> fields;
    for (auto s : n.tables("shears")) {
      const int axis = s.require<int>("axis");
      const int p = s.require<int>("p"), q = s.require<int>("q");
      const double a = s.get("a", 0.0), b = s.get("b", 0.0);
      s.finish();
      fields.push_back(wrap_config(s, "axis", [&] { return shear_field(axis, p, q, a, b); }));
    }
    if (fields.empty()) n.fail("shears", "at least one shear is required");
    iso = wrap_config(n, "shears", [&] { return shear_isotopy(fields, horizon, prof); });
  } else if (kind == "time-one") {
    const double size = n.require<double>("size");
    const int radius = n.get("radius", 1);
    std::mt19937_64 rng(seed);
    iso = time_one_isotopy(random_field(rng, radius, size, 0), horizon, prof);
  } else {
    n.fail("kind", "expected \"identity\", \"shears\" or \"time-one\", got \"" + kind + "\"");
  }
  n.finish();
  return iso;
}

inline StaircaseOptions staircase_options(ConfigNode n) {
  StaircaseOptions o;
  o.pieces_log2 = n.get("pieces_log2", o.pieces_log2);
  o.ramp_fraction = n.get("ramp_fraction", o.ramp_fraction);
  o.endpoint_ramp = n.get("endpoint_ramp", o.endpoint_ramp);
  o.n_start = n.get("n_start", o.n_start);
  o.n_cap = n.get("n_cap", o.n_cap);
  o.steps_per_subinterval = n.get("steps_per_subinterval", o.steps_per_subinterval);
  o.max_steps = n.get("max_steps", o.max_steps);
  o.max_depth = n.get("max_depth", o.max_depth);
  o.flow_grid = n.get("flow_grid", o.flow_grid);
  o.relax_samples = n.get("relax_samples", o.relax_samples);
  o.isver_samples = n.get("isver_samples", o.isver_samples);
  n.finish();
  return o;
}

/// space = builtin name, or modes = [[...]] for E(K).
inline ModeSpace space_config(ConfigNode& n, SpectralBasisPtr sb) {
  if (n.has("modes")) {
    const auto K = n.modes("modes");
    if (K.empty()) n.fail("modes", "empty mode set");
    return ModeSpace::from_lattice(LatticeSet(K.begin(), K.end()), sb);
  }
  const std::string name = n.get<std::string>("space", "generator12");
  return wrap_config(n, "space", [&] { return builtin_space(name, sb); });
}

/// [sim], [steer] and [steer.isotopy] sections into a steering problem.
/// u0 and u1 are random fields with the given H^k sizes.
inline SteeringProblem steering_config(const toml::table& root, std::uint64_t seed, int threads) {
  ConfigNode top(&root, "");
  SteeringProblem P;
  P.cfg = sim_config(top.sub("sim"));
  P.basis = make_basis(P.cfg.galerkin_radius);
  ConfigNode s = top.sub("steer");
  P.E = space_config(s, P.basis);
  P.epsilon = s.get("epsilon", P.epsilon);
  const double n0 = s.get("u0_norm", 0.0), n1 = s.get("u1_norm", 0.0);
  const int k = P.cfg.sobolev_k;
  std::mt19937_64 rng(seed);
  if (n0 > 0) P.u0 = random_field(rng, P.cfg.galerkin_radius, n0, k);
  if (n1 > 0) P.u1 = random_field(rng, P.cfg.galerkin_radius, n1, k);
  P.psi = isotopy_config(s.sub("isotopy"), P.cfg.horizon, seed + 1);
  P.opts = staircase_options(s.sub("options"));
  P.opts.seed = seed;
  P.opts.threads = threads;
  P.h = ControlSignal::zero(P.basis, P.cfg.horizon);
  s.finish();
  wrap_config(s, "epsilon", [&] { P.validate(); return 0; });
  return P;
}

}  // namespace nsctl
