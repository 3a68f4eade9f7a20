#pragma once

// Event-driven scenario runner. Frame, playback and refresh events are
// applied at their exact times; cell outputs are evaluated in closed form at
// sample instants, so results do not depend on the sample grid. A sample at
// time t sees every event with timestamp <= t.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cryoctl/device.hpp"
#include "cryoctl/fsm.hpp"
#include "cryoctl/scenario.hpp"
#include "cryoctl/thermal.hpp"

namespace cryoctl::engine {

using scenario::Scenario;

struct Response {
  double time_s;
  std::uint32_t word;

  friend bool operator==(const Response&, const Response&) = default;
};

struct AmplitudeRow {
  double amplitude_v;
  double f_hz;
  double cell_watts;
};

struct TraceBundle {
  std::string name;

  // Cell and power series share one grid.
  std::vector<double> time_s;
  std::vector<int> cells;
  std::vector<std::vector<double>> cell_volts;  // [traced cell][sample]
  std::vector<double> power_watts;
  std::vector<double> temperature_k;

  std::vector<fsm::SwitchEvent> events;
  std::vector<Response> responses;

  std::optional<device::ReadoutTrace> readout;  // at the tank sample rate
  int readout_export_every = 1;
  std::optional<device::EnvelopeReport> envelope;

  std::vector<thermal::FeasibilityCell> feasibility;
  std::vector<AmplitudeRow> amplitude;
  std::vector<std::pair<double, double>> coax;  // (lines, watts)

  fsm::ChipState final_state;
};

TraceBundle run(const Scenario& s);

/// Per-run digest used by sweeps.
struct RunSummary {
  double value = 0.0;
  std::vector<double> final_volts;    // per traced cell, last sample
  std::vector<double> drift_v_per_s;  // per traced cell, (last - first) / span
  double mean_power_watts = 0.0;
  double max_temperature_k = 0.0;
  std::optional<double> envelope_deviation;

  friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

RunSummary summarize(const TraceBundle& b, double value);

/// One independent run per value with `axis=value` applied as an override.
/// `jobs` workers (0: hardware concurrency); results are in `values` order
/// and independent of `jobs`. Throws Error(kUnknownAxis) for a bad axis.
std::vector<RunSummary> sweep(const Scenario& s, const std::string& axis, const std::vector<double>& values,
                              unsigned jobs = 1);

}  // namespace cryoctl::engine
