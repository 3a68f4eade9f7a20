#include "cryoctl/output.hpp"

#include <fstream>

#include <Eigen/Core>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "cryoctl/error.hpp"

namespace cryoctl::output {

namespace {

WrittenFile emit(const std::filesystem::path& dir, const std::string& name, const std::string& text) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::kInvalidParameter, fmt::format("cannot write {}", (dir / name).string()));
  return {name, scenario::sha256_hex(text)};
}

const char* level_name(const std::variant<fsm::FgLevel, fsm::LockAction>& a) {
  if (const auto* l = std::get_if<fsm::FgLevel>(&a)) return *l == fsm::FgLevel::kHigh ? "HIGH" : "LOW";
  return std::get<fsm::LockAction>(a) == fsm::LockAction::kClose ? "CLOSE" : "OPEN";
}

}  // namespace

std::string version() { return CRYOCTL_VERSION; }

std::vector<WrittenFile> write_run(const engine::TraceBundle& b, const std::filesystem::path& dir) {
  std::vector<WrittenFile> files;
  std::string text;

  if (!b.cells.empty() && !b.time_s.empty()) {
    text = "time_s,cell,v_out_volts\n";
    for (std::size_t i = 0; i < b.time_s.size(); ++i) {
      for (std::size_t c = 0; c < b.cells.size(); ++c) {
        text += fmt::format("{},{},{}\n", b.time_s[i], b.cells[c], b.cell_volts[c][i]);
      }
    }
    files.push_back(emit(dir, "cells.csv", text));
  }

  if (!b.time_s.empty()) {
    text = "time_s,total_watts,temperature_k\n";
    for (std::size_t i = 0; i < b.time_s.size(); ++i) {
      text += fmt::format("{},{},{}\n", b.time_s[i], b.power_watts[i], b.temperature_k[i]);
    }
    files.push_back(emit(dir, "power.csv", text));
  }

  if (!b.events.empty()) {
    text = "time_s,cell,action,level\n";
    for (const auto& e : b.events) {
      const bool fg = std::holds_alternative<fsm::FgLevel>(e.action);
      text += fmt::format("{},{},{},{}\n", e.time_s, e.cell, fg ? "fg" : "lock", level_name(e.action));
    }
    files.push_back(emit(dir, "events.csv", text));
  }

  if (!b.responses.empty()) {
    text = "time_s,word\n";
    for (const auto& r : b.responses) text += fmt::format("{},{}\n", r.time_s, protocol::format_word(r.word));
    files.push_back(emit(dir, "responses.csv", text));
  }

  if (b.readout) {
    const auto& r = *b.readout;
    const auto step = static_cast<std::size_t>(std::max(1, b.readout_export_every));
    text = "time_s,v_sdp_volts,signal\n";
    for (std::size_t i = 0; i < r.signal.size(); i += step) {
      text += fmt::format("{},{},{}\n", r.time_s[i], r.v_sdp[i], r.signal[i]);
    }
    files.push_back(emit(dir, "readout.csv", text));
  }

  if (b.envelope) {
    text = "v_sdp_volts,g_low,g_high,g_env_min,g_env_max\n";
    for (const auto& row : b.envelope->rows) {
      text += fmt::format("{},{},{},{},{}\n", row.v_sdp, row.g_low, row.g_high, row.g_env_min, row.g_env_max);
    }
    files.push_back(emit(dir, "sweep.csv", text));
  }

  if (!b.feasibility.empty()) {
    text = "n_cells,f_hz,total_watts,feasible\n";
    for (const auto& c : b.feasibility) {
      text += fmt::format("{},{},{},{}\n", c.n_cells, c.f_hz, c.total_watts, c.feasible ? 1 : 0);
    }
    files.push_back(emit(dir, "feasibility.csv", text));
  }

  if (!b.amplitude.empty()) {
    text = "amplitude_v,f_hz,cell_watts\n";
    for (const auto& a : b.amplitude) text += fmt::format("{},{},{}\n", a.amplitude_v, a.f_hz, a.cell_watts);
    files.push_back(emit(dir, "amplitude.csv", text));
  }

  if (!b.coax.empty()) {
    text = "n_lines,coax_watts\n";
    for (const auto& [n, w] : b.coax) text += fmt::format("{},{}\n", n, w);
    files.push_back(emit(dir, "coax.csv", text));
  }
  return files;
}

WrittenFile write_sweep(const std::vector<engine::RunSummary>& rows, const std::vector<int>& cells,
                        const std::filesystem::path& dir) {
  std::string text = "value,mean_power_watts,max_temperature_k,envelope_deviation";
  for (int c : cells) text += fmt::format(",v_final_cell{0},drift_v_per_s_cell{0}", c);
  text += "\n";
  for (const auto& r : rows) {
    text += fmt::format("{},{},{},", r.value, r.mean_power_watts, r.max_temperature_k);
    if (r.envelope_deviation) text += fmt::format("{}", *r.envelope_deviation);
    for (std::size_t i = 0; i < r.final_volts.size(); ++i) {
      text += fmt::format(",{},{}", r.final_volts[i], r.drift_v_per_s[i]);
    }
    text += "\n";
  }
  return emit(dir, "sweep_summary.csv", text);
}

void write_manifest(const std::filesystem::path& dir, const std::string& command, const engine::Scenario& s,
                    const std::vector<WrittenFile>& files) {
  nlohmann::ordered_json j;
  j["tool"] = "cryoctl";
  j["version"] = version();
  j["command"] = command;
  j["scenario"] = s.name;
  j["schema_version"] = s.schema_version;
  j["config_sha256"] = scenario::config_hash(s);
  j["seed"] = 0;
  j["overrides"] = s.overrides;
  j["libraries"] = {
      {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
      {"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100)},
  };
  nlohmann::ordered_json outs = nlohmann::ordered_json::object();
  for (const auto& f : files) outs[f.name] = f.sha256;
  j["outputs"] = outs;
  emit(dir, "manifest.json", j.dump(2) + "\n");
}

}  // namespace cryoctl::output
