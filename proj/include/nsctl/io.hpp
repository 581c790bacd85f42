#pragma once
/// JSON snapshots (fields, lattice sets, certificates, signals) and CSV
/// exports (trajectories, flow maps, staircase traces, ladder reach).

#include "nsctl/control.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace nsctl {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const Mode& m) { return Json::array({m.x, m.y, m.z}); }

inline Mode mode_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw std::runtime_error("mode must be an array of three integers");
  for (const auto& e : j)
    if (!e.is_number_integer()) throw std::runtime_error("mode must be an array of three integers");
  return Mode{j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

inline Json to_json(const LatticeSet& K) {
  Json out = Json::array();
  for (const Mode& m : K) out.push_back(to_json(m));
  return out;
}

inline LatticeSet lattice_from_json(const Json& j) {
  if (!j.is_array()) throw std::runtime_error("lattice set must be an array");
  LatticeSet K;
  for (const auto& e : j) K.insert(mode_from_json(e));
  return K;
}

inline Json to_json(const Eigen::Vector3d& v) { return Json::array({v[0], v[1], v[2]}); }

inline Eigen::Vector3d vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw std::runtime_error("expected an array of three numbers");
  for (const auto& e : j)
    if (!e.is_number()) throw std::runtime_error("expected an array of three numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

/// { "modes": [ { "ell": [i,j,k], "cos": [x,y,z], "sin": [x,y,z] } ] }
inline Json to_json(const TrigField& u) {
  Json modes = Json::array();
  for (const auto& [m, c] : u.modes()) modes.push_back({{"ell", to_json(m)}, {"cos", to_json(c.cos)}, {"sin", to_json(c.sin)}});
  return {{"modes", modes}};
}

inline TrigField field_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("modes") || !j["modes"].is_array())
    throw std::runtime_error("field snapshot needs a \"modes\" array");
  TrigField u;
  std::size_t i = 0;
  for (const auto& e : j["modes"]) {
    try {
      u.add(mode_from_json(e.at("ell")), vec3_from_json(e.at("cos")), vec3_from_json(e.at("sin")));
    } catch (const std::exception& ex) {
      throw std::runtime_error("modes[" + std::to_string(i) + "]: " + ex.what());
    }
    ++i;
  }
  return u;
}

inline Json to_json(const SaturationCertificate& c) {
  Json base = Json::array(), steps = Json::array(), concl = Json::array();
  for (const auto& b : c.base) base.push_back(to_json(b));
  for (const auto& s : c.steps)
    steps.push_back({{"label", s.label},
                     {"level", s.level},
                     {"zeta1", to_json(s.zeta1)},
                     {"zeta2", to_json(s.zeta2)},
                     {"claimed", to_json(s.claimed)},
                     {"mode", to_json(s.mode)},
                     {"plane", to_string(s.plane)}});
  for (const auto& p : c.conclusion) concl.push_back({{"mode", to_json(p.mode)}, {"plane", to_string(p.plane)}});
  return {{"name", c.name}, {"base", base}, {"steps", steps}, {"conclusion", concl}};
}

inline Plane plane_from_json(const Json& j) {
  const std::string s = j.get<std::string>();
  if (s == "cos") return Plane::Cos;
  if (s == "sin") return Plane::Sin;
  throw std::runtime_error("plane must be \"cos\" or \"sin\", got \"" + s + "\"");
}

inline SaturationCertificate certificate_from_json(const Json& j) {
  SaturationCertificate c;
  c.name = j.value("name", std::string{});
  for (const auto& b : j.at("base")) c.base.push_back(field_from_json(b));
  std::size_t i = 0;
  for (const auto& s : j.at("steps")) {
    try {
      CertificateStep st;
      st.label = s.value("label", std::string{});
      st.level = s.at("level").get<int>();
      st.zeta1 = field_from_json(s.at("zeta1"));
      st.zeta2 = field_from_json(s.at("zeta2"));
      st.claimed = field_from_json(s.at("claimed"));
      st.mode = mode_from_json(s.at("mode"));
      st.plane = plane_from_json(s.at("plane"));
      c.steps.push_back(std::move(st));
    } catch (const std::exception& ex) {
      throw std::runtime_error("steps[" + std::to_string(i) + "]: " + ex.what());
    }
    ++i;
  }
  for (const auto& p : j.at("conclusion")) c.conclusion.push_back({mode_from_json(p.at("mode")), plane_from_json(p.at("plane"))});
  return c;
}

/// Signal snapshot: values sampled on a time grid (breakpoints included) and
/// read back as the piecewise-linear interpolant.
inline Json signal_to_json(const ControlSignal& s, int samples = 256) {
  std::vector<double> ts;
  for (int i = 0; i <= samples; ++i) ts.push_back(s.horizon() * i / samples);
  for (double b : s.breakpoints()) ts.push_back(b);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  Json times = Json::array(), values = Json::array();
  for (double t : ts) {
    times.push_back(t);
    values.push_back(to_json(s.field(t)));
  }
  return {{"horizon", s.horizon()}, {"radius", s.basis().radius()}, {"times", times}, {"values", values}};
}

inline ControlSignal signal_from_json(const Json& j, SpectralBasisPtr sb) {
  const double T = j.at("horizon").get<double>();
  const auto& ts = j.at("times");
  const auto& vs = j.at("values");
  if (ts.size() != vs.size()) throw std::runtime_error("signal snapshot: times and values differ in length");
  std::vector<double> times;
  std::vector<Eigen::VectorXd> values;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    times.push_back(ts[i].get<double>());
    values.push_back(sb->from_field(field_from_json(vs[i]), false));
  }
  ControlSignal s(sb, T);
  s.add(std::make_shared<SampledTerm>(std::move(times), std::move(values)));
  return s;
}

inline Json to_json(const CertificateReport& r) {
  Json steps = Json::array(), concl = Json::array();
  for (const auto& s : r.steps)
    steps.push_back({{"label", s.label},
                     {"identity_residual", s.identity_residual},
                     {"input_residual", s.input_residual},
                     {"plane_residual", s.plane_residual},
                     {"passed", s.passed}});
  for (const auto& [p, ok] : r.conclusion)
    concl.push_back({{"mode", to_json(p.mode)}, {"plane", to_string(p.plane)}, {"reached", ok}});
  return {{"passed", r.passed}, {"error", r.error}, {"steps", steps}, {"conclusion", concl}};
}

inline Json to_json(const ErrorTriple& e) {
  return {{"endpoint", e.endpoint}, {"relaxation", e.relaxation}, {"flow", e.flow}, {"total", e.total()}};
}

/// JSON summary of a staircase run; NaN entries become null.
inline Json to_json(const StaircaseTrace& t) {
  auto num = [](double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); };
  Json levels = Json::array();
  for (const auto& l : t.levels)
    levels.push_back({{"level", l.level},
                      {"space_dim", l.space_dim},
                      {"n", l.n},
                      {"p", l.p},
                      {"endpoint_error", num(l.endpoint_error)},
                      {"relaxation_error", num(l.relaxation_error)},
                      {"flow_error", num(l.flow_error)},
                      {"xk_norm", num(l.xk_norm)},
                      {"isver_residual", num(l.isver_residual)},
                      {"budget_met", l.budget_met}});
  return {{"space", t.space},
          {"depth", t.depth},
          {"restricted", t.restricted},
          {"epsilon", t.epsilon},
          {"budget", t.budget},
          {"solver_error", t.solver_error},
          {"projection_error", t.projection_error},
          {"psi_gap", t.psi_gap},
          {"ramp_relaxation", t.ramp_relaxation},
          {"reference_xk", t.reference_xk},
          {"bounded", t.bounded},
          {"final_error", to_json(t.final_error)},
          {"baseline_error", to_json(t.baseline_error)},
          {"control_residual", t.control_residual},
          {"budget_failure", t.budget_failure},
          {"success", t.success},
          {"seconds", t.seconds},
          {"levels", levels}};
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) { os_ << std::setprecision(17); }
  template <class... Ts>
  void row(const Ts&... xs) {
    bool first = true;
    ((os_ << (first ? "" : ",") << xs, first = false), ...);
    os_ << '\n';
  }

 private:
  std::ostream& os_;
};

}  // namespace detail

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  detail::CsvWriter w(os);
  w.row("time", "energy", "hk_norm");
  for (std::size_t i = 0; i < tr.size(); ++i) w.row(tr.times[i], tr.energy[i], tr.hk_norm[i]);
}

inline void write_flowmap_csv(std::ostream& os, const FlowMap& m) {
  detail::CsvWriter w(os);
  os << "seed,x,y,z,j11,j12,j13,j21,j22,j23,j31,j32,j33,det\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& p = m.positions[i];
    const auto& D = m.jacobians[i];
    w.row(i, p[0], p[1], p[2], D(0, 0), D(0, 1), D(0, 2), D(1, 0), D(1, 1), D(1, 2), D(2, 0), D(2, 1), D(2, 2),
          D.determinant());
  }
}

inline void write_trace_csv(std::ostream& os, const StaircaseTrace& t) {
  detail::CsvWriter w(os);
  w.row("level", "n", "endpoint_error", "relaxation_error", "flow_error", "xk_norm");
  for (const auto& l : t.levels) w.row(l.level, l.n, l.endpoint_error, l.relaxation_error, l.flow_error, l.xk_norm);
}

/// depth, mode, plane, reached for every canonical mode within the radius.
inline void write_reach_csv(std::ostream& os, const SaturationLadder& L) {
  detail::CsvWriter w(os);
  w.row("depth", "mode", "plane", "reached");
  const auto modes = modes_in_box(L.level(0).basis().radius(), true);
  for (int j = 0; j <= L.depth(); ++j)
    for (const Mode& m : modes)
      for (Plane p : {Plane::Cos, Plane::Sin})
        w.row(j, '"' + to_string(m) + '"', to_string(p), L.level(j).plane_reached(m, p) ? 1 : 0);
}

// ---------------------------------------------------------------------------
// files

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace nsctl
