// cryoctl: command-line front end.
//
// Exit codes: 0 success, 1 invalid input (bad arguments, scenario or
// command-stream errors), 2 failure while simulating.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "cryoctl/engine.hpp"
#include "cryoctl/error.hpp"
#include "cryoctl/fsm.hpp"
#include "cryoctl/output.hpp"
#include "cryoctl/scenario.hpp"
#include "cryoctl/thermal.hpp"

namespace fs = std::filesystem;
using namespace cryoctl;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

const std::vector<std::string> kFigures = {"fig3b", "fig3c", "fig3e", "fig3f", "fig3g", "fig4b", "fig4d", "fig4e"};

fs::path default_out() {
  const char* env = std::getenv("CRYOCTL_OUT");
  return env && *env ? fs::path(env) : fs::path("out");
}

fs::path default_scenarios() {
  const char* env = std::getenv("CRYOCTL_SCENARIOS");
  return env && *env ? fs::path(env) : fs::path(CRYOCTL_SCENARIO_DIR);
}

scenario::Scenario load(const std::string& path, const std::vector<std::string>& overrides) {
  return scenario::with_overrides(scenario::load(path), overrides);
}

void run_to(const scenario::Scenario& s, const fs::path& dir) {
  auto files = output::write_run(engine::run(s), dir);
  output::write_manifest(dir, "run", s, files);
}

void sweep_to(const scenario::Scenario& s, const std::string& axis, const std::vector<double>& values, unsigned jobs,
              const fs::path& dir) {
  auto rows = engine::sweep(s, axis, values, jobs);
  auto file = output::write_sweep(rows, s.traces.cells, dir);
  auto with_axis = s;
  with_axis.overrides.push_back(fmt::format("sweep.axis={}", axis));
  output::write_manifest(dir, "sweep", with_axis, {file});
}

int replay(const std::string& path, const std::optional<fs::path>& out) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kMalformedStream, fmt::format("{}: cannot open", path));
  std::vector<protocol::StreamWord> words;
  try {
    words = protocol::parse_command_stream(in);
  } catch (const Error& e) {
    throw e.with_context(path);
  }
  fsm::ChipState state;
  std::string responses;
  for (const auto& w : words) {
    try {
      auto r = fsm::step(state, protocol::decode_frame(w.word));
      state = r.state;
      if (r.response) responses += protocol::format_word(*r.response) + "\n";
    } catch (const Error& e) {
      throw e.with_context(fmt::format("{}:{}", path, w.line));
    }
  }
  std::cout << responses;
  std::cout << fmt::format("# mode {}\n", fsm::to_string(state.mode));
  if (out) {
    fs::create_directories(*out);
    std::ofstream(*out / "responses.txt", std::ios::binary) << responses;
  }
  return kOk;
}

int budget(const std::optional<std::string>& path, const std::vector<std::string>& overrides, double n, double f,
           double swing) {
  scenario::Scenario s;
  if (path) s = load(*path, overrides);
  const auto model = s.power_model();
  const auto cal = s.calibration();
  thermal::validate(model);
  const double total = thermal::total_power(n, f, swing, model);
  const auto fz = thermal::feasible(n, f, swing, model, s.power.budget);
  std::cout << fmt::format("n_cells {}\nf_hz {}\nswing_v {}\n", n, f, swing);
  std::cout << fmt::format("cell_watts {}\ntotal_watts {}\n", thermal::cell_power(f, swing, model), total);
  std::cout << fmt::format("temperature_k {}\n", thermal::temperature(total, cal));
  std::cout << fmt::format("budget_watts {}\nheadroom_watts {}\nfeasible {}\n", s.power.budget.budget_watts_at_100mK,
                           fz.headroom_watts, fz.feasible ? "yes" : "no");
  if (s.power.budget.coax_power_per_line) {
    std::cout << fmt::format("coax_watts {}\n", thermal::coax_comparison(n, s.power.budget));
  }
  return kOk;
}

int figures(std::vector<std::string> names, const fs::path& scenarios, const fs::path& out, unsigned jobs) {
  if (names.empty()) names = kFigures;
  for (const auto& name : names) {
    if (std::find(kFigures.begin(), kFigures.end(), name) == kFigures.end()) {
      throw Error(ErrorKind::kInvalidScenario, fmt::format("unknown figure '{}' (known: {})", name, fmt::join(kFigures, ", ")));
    }
  }
  for (const auto& name : names) {
    const auto s = scenario::load(scenarios / (name + ".scn"));
    const auto dir = out / name;
    run_to(s, dir);
    if (s.sweep) sweep_to(s, s.sweep->axis, s.sweep->values, jobs, dir / "sweep");
    std::cout << fmt::format("{} -> {}\n", name, dir.string());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cryogenic qubit-control chip simulator"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 ok, 1 invalid input, 2 simulation failure.\n"
             "CRYOCTL_OUT sets the default output directory (else ./out).");

  std::string scenario_path;
  std::vector<std::string> overrides;
  fs::path out = default_out();
  unsigned jobs = 1;

  auto* validate = app.add_subcommand("validate", "Parse and check a scenario file");
  validate->add_option("scenario", scenario_path, "Scenario file")->required();
  validate->add_option("--override", overrides, "path=value applied to the scenario (repeatable)");

  auto* run = app.add_subcommand("run", "Run a scenario and write its traces");
  run->add_option("scenario", scenario_path, "Scenario file")->required();
  run->add_option("--out", out, "Output directory");
  run->add_option("--override", overrides, "path=value applied to the scenario (repeatable)");

  std::string axis;
  std::vector<double> values;
  auto* sweep = app.add_subcommand("sweep", "Run a scenario once per value of one parameter");
  sweep->add_option("scenario", scenario_path, "Scenario file")->required();
  sweep->add_option("--axis", axis, "Dotted parameter path (default: the scenario's sweep.axis)");
  sweep->add_option("--values", values, "Comma-separated values (default: sweep.values)")->delimiter(',');
  sweep->add_option("--jobs", jobs, "Worker threads, 0 = all cores");
  sweep->add_option("--out", out, "Output directory");
  sweep->add_option("--override", overrides, "path=value applied to the scenario (repeatable)");

  std::string stream_path;
  std::optional<fs::path> replay_out;
  auto* rep = app.add_subcommand("replay", "Feed a raw command stream to the controller and print READ responses");
  rep->add_option("stream", stream_path, "Command stream: one 8-hex-digit word per line, # comments")->required();
  rep->add_option("--out", replay_out, "Also write responses.txt here");

  std::optional<std::string> budget_scenario;
  double n_cells = 0.0, f_hz = 0.0, swing = 0.1;
  auto* bud = app.add_subcommand("budget", "Total power, temperature and cooling headroom for N cells at f");
  bud->add_option("--scenario", budget_scenario, "Take power settings from this scenario");
  bud->add_option("--override", overrides, "path=value applied to the scenario (repeatable)");
  bud->add_option("--cells", n_cells, "Number of pulsed cells")->required();
  bud->add_option("--freq", f_hz, "Pulse frequency in Hz")->required();
  bud->add_option("--swing", swing, "Gate pulse amplitude in V");

  std::vector<std::string> names;
  fs::path scenarios = default_scenarios();
  auto* fig = app.add_subcommand("figures", "Regenerate figure data from the bundled scenarios");
  fig->add_option("names", names, "Figures to build (default: all)");
  fig->add_option("--scenarios", scenarios, "Directory holding the bundled .scn files");
  fig->add_option("--out", out, "Output root; each figure gets a subdirectory");
  fig->add_option("--jobs", jobs, "Worker threads for sweeps, 0 = all cores");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*validate) {
      const auto s = load(scenario_path, overrides);
      std::cout << fmt::format("{}: ok ({})\n", scenario_path, scenario::config_hash(s));
    } else if (*run) {
      run_to(load(scenario_path, overrides), out);
    } else if (*sweep) {
      const auto s = load(scenario_path, overrides);
      if (axis.empty() && s.sweep) axis = s.sweep->axis;
      if (values.empty() && s.sweep) values = s.sweep->values;
      if (axis.empty() || values.empty()) {
        throw Error(ErrorKind::kInvalidScenario, "no sweep axis/values given and the scenario has no sweep section");
      }
      sweep_to(s, axis, values, jobs, out);
    } else if (*rep) {
      return replay(stream_path, replay_out);
    } else if (*bud) {
      return budget(budget_scenario, overrides, n_cells, f_hz, swing);
    } else if (*fig) {
      return figures(names, scenarios, out, jobs);
    }
  } catch (const Error& e) {
    std::cerr << "cryoctl: " << e.what() << "\n";
    return e.is_validation() ? kInvalid : kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "cryoctl: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
