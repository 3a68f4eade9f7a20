#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <nlohmann/json.hpp>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = CRYOCTL_SCENARIO_DIR;
const fs::path kWork = CRYOCTL_WORK_DIR;

struct Result {
  int code;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Result cli(const std::string& args) {
  const std::string cmd = std::string("\"") + CRYOCTL_CLI + "\" " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path write(const std::string& name, const std::string& text) {
  fs::create_directories(kWork);
  const auto p = kWork / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

std::string scn(const std::string& name) { return (kScenarios / (name + ".scn")).string(); }

}  // namespace

TEST_CASE("help and usage") {
  CHECK(cli("--help").code == 0);
  for (const char* sub : {"validate", "run", "sweep", "replay", "budget", "figures"}) {
    CAPTURE(sub);
    const auto r = cli(std::string(sub) + " --help");
    CHECK(r.code == 0);
    CHECK(r.out.find("Usage") != std::string::npos);
  }
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("run").code == 1);
}

TEST_CASE("validate") {
  const auto ok = cli("validate " + scn("fig3f"));
  CHECK(ok.code == 0);
  CHECK(ok.out.find("ok") != std::string::npos);

  const auto bad = write("bad.scn", "schema_version: 1\ntraces: {duration_s: 1.0}\nunknown_section: 1\n");
  const auto r = cli("validate " + bad.string());
  CHECK(r.code == 1);
  CHECK(r.out.find("bad.scn:3") != std::string::npos);

  CHECK(cli("validate " + (kWork / "missing.scn").string()).code == 1);
  CHECK(cli("validate " + scn("fig3e") + " --override analog.nope=1").code == 1);
}

TEST_CASE("runtime failure exits 2") {
  const auto p = write("go.scn", "schema_version: 1\ntraces: {duration_s: 1.0}\nschedule:\n  - {t: 0.5, exec: GO}\n");
  const auto r = cli("run " + p.string() + " --out " + (kWork / "go_out").string());
  CHECK(r.code == 2);
  CHECK(r.out.find("go.scn:4") != std::string::npos);
}

TEST_CASE("run records overrides in the manifest") {
  const auto out = kWork / "override_run";
  fs::remove_all(out);
  const auto r = cli("run " + scn("fig3e") + " --override analog.c_pulse=2e-12 --out " + out.string());
  REQUIRE(r.code == 0);
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(m["command"] == "run");
  CHECK(m["scenario"] == "fig3e");
  REQUIRE(m["overrides"].size() == 1);
  CHECK(m["overrides"][0] == "analog.c_pulse=2e-12");
  CHECK(m["config_sha256"].get<std::string>().size() == 64);
  CHECK(m["outputs"].contains("cells.csv"));
  CHECK(fs::exists(out / "cells.csv"));
  CHECK(slurp(out / "cells.csv").rfind("time_s,cell,v_out_volts\n", 0) == 0);
}

TEST_CASE("sweep writes one row per value") {
  const auto out = kWork / "sweep_run";
  fs::remove_all(out);
  const auto r = cli("sweep " + scn("fig3e") + " --values -1.2,-1.0,-0.8 --jobs 2 --out " + out.string());
  REQUIRE(r.code == 0);
  const auto text = slurp(out / "sweep_summary.csv");
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  CHECK(cli("sweep " + scn("fig3e") + " --axis analog.nope --values 1 --out " + out.string()).code == 1);
  CHECK(cli("sweep " + scn("fig4b") + " --out " + out.string()).code == 1);
}

TEST_CASE("replay") {
  const auto stream = write("stream.txt",
                            "# enable clock, set divider, read back\n"
                            "01000001\n"
                            "01010005\n"
                            "02010000\n");
  const auto r = cli("replay " + stream.string());
  CHECK(r.code == 0);
  CHECK(r.out == "02010005\n# mode IDLE\n");

  const auto bad = write("bad_stream.txt", "01000001\n07000000\n");
  const auto e = cli("replay " + bad.string());
  CHECK(e.code == 1);
  CHECK(e.out.find("bad_stream.txt:2") != std::string::npos);

  CHECK(cli("replay " + write("junk.txt", "zz\n").string()).code == 1);
}

TEST_CASE("budget") {
  const auto r = cli("budget --scenario " + scn("fig4e") + " --cells 1000 --freq 1e6");
  CHECK(r.code == 0);
  CHECK(r.out.find("feasible yes") != std::string::npos);
  CHECK(cli("budget --cells -1 --freq 1e6").code == 1);
}

TEST_CASE("figures honours CRYOCTL_OUT") {
  const auto out = kWork / "env_out";
  fs::remove_all(out);
  const std::string env = "CRYOCTL_OUT=\"" + out.string() + "\" ";
  const std::string cmd = env + "\"" + CRYOCTL_CLI + "\" figures fig4d > /dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(out / "fig4d" / "amplitude.csv"));
  CHECK(fs::exists(out / "fig4d" / "manifest.json"));
  CHECK(cli("figures fig9z --out " + out.string()).code == 1);
}
