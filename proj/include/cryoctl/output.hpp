#pragma once

// CSV and manifest writers. Numbers use the shortest decimal form that
// round-trips, so identical runs give identical bytes.

#include <filesystem>
#include <string>
#include <vector>

#include "cryoctl/engine.hpp"

namespace cryoctl::output {

struct WrittenFile {
  std::string name;
  std::string sha256;
};

/// Files produced by a run, named after their content:
///   cells.csv        time_s,cell,v_out_volts
///   power.csv        time_s,total_watts,temperature_k
///   events.csv       time_s,cell,action,level
///   responses.csv    time_s,word
///   readout.csv      time_s,v_sdp_volts,signal
///   sweep.csv        v_sdp_volts,g_low,g_high,g_env_min,g_env_max
///   feasibility.csv  n_cells,f_hz,total_watts,feasible
///   amplitude.csv    amplitude_v,f_hz,cell_watts
///   coax.csv         n_lines,coax_watts
/// Files with no rows are not written.
std::vector<WrittenFile> write_run(const engine::TraceBundle& b, const std::filesystem::path& dir);

/// sweep_summary.csv: value,mean_power_watts,max_temperature_k,
/// envelope_deviation, then v_final_cellN and drift_v_per_s_cellN per traced
/// cell.
WrittenFile write_sweep(const std::vector<engine::RunSummary>& rows, const std::vector<int>& cells,
                        const std::filesystem::path& dir);

/// manifest.json: tool and library versions, config hash, seed, overrides
/// and the hash of every written file.
void write_manifest(const std::filesystem::path& dir, const std::string& command, const engine::Scenario& s,
                    const std::vector<WrittenFile>& files);

std::string version();

}  // namespace cryoctl::output
