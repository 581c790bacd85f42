#include <catch2/catch_amalgamated.hpp>

#include "nsctl/io.hpp"

#include <openssl/evp.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

namespace fs = std::filesystem;
using nsctl::Json;

namespace {

const std::string kCli = NSCTL_CLI_PATH;
const std::string kConfigs = NSCTL_CONFIG_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nsctl_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int status;
  std::string out, err;
};

Run run(const std::string& args, const fs::path& dir) {
  const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
  const std::string cmd = kCli + " " + args + " --out " + (dir / "out").string() + " >" + o.string() + " 2>" + e.string();
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, nsctl::read_text(o), nsctl::read_text(e)};
}

std::string sha256(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  char buf[3];
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    s += buf;
  }
  return s;
}

void check_manifest(const fs::path& out) {
  const Json m = nsctl::read_json(out / "manifest.json");
  std::size_t listed = 0;
  for (const auto& f : m["files"]) {
    const std::string text = nsctl::read_text(out / f["path"].get<std::string>());
    CHECK(f["sha256"] == sha256(text));
    CHECK(f["bytes"] == text.size());
    ++listed;
  }
  std::size_t present = 0;
  for (const auto& e : fs::recursive_directory_iterator(out))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") ++present;
  CHECK(listed == present);
}

}  // namespace

TEST_CASE("steer with the shear demo config") {
  const fs::path d = scratch("steer");
  const Run r = run("steer --config " + kConfigs + "/generator12.toml", d);
  INFO(r.err);
  CHECK(r.status == 0);
  CHECK(fs::exists(d / "out/trace.csv"));
  CHECK(nsctl::read_text(d / "out/trace.csv").rfind("level,n,endpoint_error,relaxation_error,flow_error,xk_norm\n", 0) == 0);
  const Json s = nsctl::read_json(d / "out/summary.json");
  CHECK(s["success"] == true);
  CHECK(s["final_error"]["total"].get<double>() < 0.1);
  check_manifest(d / "out");
}

TEST_CASE("identical spec and seed give identical CSV") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  for (const char* cmd : {"steer", "simulate", "flow", "probe"}) {
    const std::string args = std::string(cmd) + " --config " + kConfigs + "/generator12.toml --seed 11";
    REQUIRE(run(args, a).status == 0);
    REQUIRE(run(args + " --threads 2", b).status == 0);
    for (const auto& e : fs::directory_iterator(a / "out"))
      if (e.path().extension() == ".csv") {
        INFO(cmd << ' ' << e.path().filename());
        CHECK(nsctl::read_text(e.path()) == nsctl::read_text(b / "out" / e.path().filename()));
      }
  }
}

TEST_CASE("malformed TOML exits 1 with a location") {
  const fs::path d = scratch("bad");
  nsctl::write_text(d / "bad.toml", "[sim\nnu = 1\n");
  Run r = run("simulate --config " + (d / "bad.toml").string(), d);
  CHECK(r.status == 1);
  CHECK(r.err.find("bad.toml:1:") != std::string::npos);
  nsctl::write_text(d / "typo.toml", "[sim]\nhorizon = 1.0\nhorizn = 2.0\n");
  r = run("simulate --config " + (d / "typo.toml").string(), d);
  CHECK(r.status == 1);
  CHECK(r.err.find("sim.horizn: unknown field") != std::string::npos);
  r = run("simulate --config " + (d / "missing.toml").string(), d);
  CHECK(r.status == 1);
}

TEST_CASE("verify-certificate on the built-in 6-dim space") {
  const fs::path d = scratch("verify");
  const Run r = run("verify-certificate --builtin lsdfavt", d);
  CHECK(r.status == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("lsdfavt: verified") != std::string::npos);
  // the emitted certificate replays from file as well
  const fs::path cert = d / "cert.json";
  fs::copy_file(d / "out/certificate.json", cert);
  CHECK(run("verify-certificate --file " + cert.string(), d).status == 0);
  check_manifest(d / "out");
}

TEST_CASE("lattice and saturate subcommands") {
  const fs::path d = scratch("lattice");
  Run r = run("lattice is-generator --modes '[[1,0,0],[0,1,0],[0,0,1]]'", d);
  CHECK(r.status == 0);
  CHECK(r.out == "generator\n");
  r = run("lattice member --modes '[[2,0,0],[0,1,0],[0,0,1]]' --target '[1,0,0]'", d);
  CHECK(r.status == 0);
  const Json j = nsctl::read_json(d / "out/lattice.json");
  CHECK(j["member"] == false);
  CHECK(j["witness"]["modulus"] == 2);
  r = run("saturate --modes '[[2,0,0],[0,1,0],[0,0,1]]' --radius 2", d);
  CHECK(r.status == 0);
  const Json l = nsctl::read_json(d / "out/ladder.json");
  CHECK(l["restricted"] == true);
  bool parity = false;
  for (const auto& u : l["unreached"])
    if (u["mode"] == Json::array({1, 0, 0})) parity = u["witness"]["modulus"] == 2;
  CHECK(parity);
  r = run("saturate --space generator12 --radius 1", d);
  CHECK(r.status == 0);
  CHECK(fs::exists(d / "out/reach.csv"));
  CHECK(run("lattice member --modes '[[1,0]]' --target '[1,0,0]'", d).status == 1);
  CHECK(run("lattice spin --modes '[[1,0,0]]'", d).status == 1);
}

TEST_CASE("unmet steering tolerance exits 2 with a partial result") {
  const fs::path d = scratch("budget");
  std::string cfg = nsctl::read_text(kConfigs + "/generator12.toml");
  cfg.replace(cfg.find("epsilon = 0.1"), 13, "epsilon = 1e-12");
  nsctl::write_text(d / "tight.toml", cfg);
  const Run r = run("steer --config " + (d / "tight.toml").string(), d);
  CHECK(r.status == 2);
  CHECK(fs::exists(d / "out/trace.csv"));
  CHECK(nsctl::read_json(d / "out/summary.json")["success"] == false);
  check_manifest(d / "out");
}

TEST_CASE("log level from the environment") {
  const fs::path d = scratch("log");
  const std::string args = "verify-certificate --builtin generator12";
  ::setenv("NS_STEER_LOG", "debug", 1);
  Run r = run(args, d);
  CHECK(r.err.find("[debug] wrote") != std::string::npos);
  ::setenv("NS_STEER_LOG", "error", 1);
  r = run(args, d);
  CHECK(r.err.empty());
  ::unsetenv("NS_STEER_LOG");
}
