#pragma once

// Scenario files: YAML with a `schema_version` field. Every scenario is
// normalised into a canonical document (all defaults filled in, fixed key
// order, shortest round-trip numbers); overrides and sweep axes are dotted
// paths into that document, and the config hash is taken over it.
//
//   schema_version: 1
//   name: fig3f
//   chip:      {master_freq_hz, refresh_dwell_s, refresh_cells}
//   analog:    {c_pulse, c_p, c_ds, r_switch, leak_rate, q_inj}
//   rails:     {v_high, v_low, v_hold}
//   device:    {peak_spacing, peak_width, g_max, v_offset,
//               gates: {NAME: {lever, cell | volts}}}
//   readout:   {enabled, bandwidth_hz, sample_rate_hz, start_s, stop_s,
//               axis_gate, export_every, envelope_cell}
//   power:     {cell_energy_per_cycle, reference_swing, fsm_coeff,
//               clock_coeff, static_floor, base_temperature_k,
//               calibration: [[watts, kelvin], ...],
//               budget_watts_at_100mK, coax_power_per_line}
//   host:      {compensate_injection, targets: {CELL: volts}}
//   traces:    {duration_s, start_s, sample_period_s, cells: [...], events}
//   schedule:  - {t, frame: "01000003"}   raw 32-bit word
//              - {t, write: {reg: CTRL, value: 0x3}}
//              - {t, exec: GO | REFRESH | HALT}
//              - {t, read: DIVIDER}
//              - {t, hold: -1.1}           DAC (V_HOLD) level
//              - {t, gate: {name: SDP, volts: 0.01}}
//   ramps:     - {target: hold | GATE, start_s, from, to, steps, dwell_s}
//   projection: {n_cells: [...], f_hz: [...], swing, amplitudes: [...]}
//   sweep:     {axis: dotted.path, values: [...]}

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cryoctl/analog.hpp"
#include "cryoctl/device.hpp"
#include "cryoctl/protocol.hpp"
#include "cryoctl/thermal.hpp"

namespace cryoctl::scenario {

inline constexpr int kSchemaVersion = 1;

struct ChipConfig {
  double master_freq_hz = fsm::kDefaultMasterFreqHz;
  double refresh_dwell_s = 1e-3;
  int refresh_cells = fsm::kNumCells;
};

struct GateConfig {
  double lever = 0.0;
  std::optional<int> cell;  // driven by a CLFG cell, else by a room-temperature DAC
  double volts = 0.0;       // initial DAC level when `cell` is empty
};

struct DeviceConfig {
  double peak_spacing = 10e-3;
  double peak_width = 0.8e-3;
  double g_max = 1.0;
  double v_offset = 0.0;
  std::map<std::string, GateConfig> gates;

  device::DotDevice dot() const;
};

struct ReadoutConfig {
  bool enabled = false;
  device::TankReadout tank;
  double start_s = 0.0;
  double stop_s = 0.0;
  std::string axis_gate;
  int export_every = 1;
  std::optional<int> envelope_cell;
};

struct PowerConfig {
  /// Empty: derived from the cell capacitances at the configured rails.
  std::optional<double> cell_energy_per_cycle;
  double reference_swing = 0.1;
  double fsm_coeff = 0.0;
  double clock_coeff = 0.0;
  double static_floor = 0.0;
  double base_temperature_k = 0.036;
  std::vector<std::pair<double, double>> calibration{{0.5e-6, 0.055}, {2.5908e-6, 0.096}, {10e-6, 0.18}};
  thermal::CoolingBudget budget;
};

struct HostConfig {
  bool compensate_injection = false;
  std::map<int, double> targets;  // cell -> output voltage wanted after refresh
};

struct TraceConfig {
  double duration_s = 0.0;
  double start_s = 0.0;
  double sample_period_s = 0.0;  // 0: no cell/power samples
  std::vector<int> cells;
  bool events = true;
};

struct ScheduleEntry {
  enum class Kind { kFrame, kWrite, kExec, kRead, kHold, kGate };

  double time_s = 0.0;
  Kind kind = Kind::kFrame;
  protocol::Frame frame;  // frame-carrying kinds
  std::string gate;       // kGate
  double volts = 0.0;     // kHold, kGate
  int line = 0;           // 1-based source line, 0 if unknown

  bool has_frame() const { return kind != Kind::kHold && kind != Kind::kGate; }
};

struct Ramp {
  std::string target;  // "hold" or a DAC gate name
  double start_s = 0.0;
  double from = 0.0;
  double to = 0.0;
  int steps = 1;
  double dwell_s = 0.0;
  int line = 0;
};

struct ProjectionConfig {
  std::vector<double> n_cells;
  std::vector<double> f_hz;
  double swing = 0.1;
  std::vector<double> amplitudes;
};

struct SweepConfig {
  std::string axis;
  std::vector<double> values;
};

struct Scenario {
  int schema_version = kSchemaVersion;
  std::string name;
  std::string origin;  // file the scenario came from, for messages
  ChipConfig chip;
  analog::CellParams cell;
  analog::SupplyRails rails;
  DeviceConfig device;
  ReadoutConfig readout;
  PowerConfig power;
  HostConfig host;
  TraceConfig traces;
  std::vector<ScheduleEntry> schedule;
  std::vector<Ramp> ramps;
  std::optional<ProjectionConfig> projection;
  std::optional<SweepConfig> sweep;
  std::vector<std::string> overrides;  // applied "path=value" strings, in order

  thermal::PowerModel power_model() const;
  thermal::ThermalCalibration calibration() const;
};

/// Parses and validates. Errors are Error(kInvalidScenario) (or the
/// offending module's kind) with "origin:line" context.
Scenario parse(const std::string& text, const std::string& origin);

Scenario load(const std::filesystem::path& path);

/// Applies one "dotted.path=value" assignment to the canonical document and
/// re-validates. Unknown paths throw Error(kUnknownAxis); a value of the
/// wrong shape or type throws Error(kInvalidScenario).
Scenario with_override(const Scenario& s, const std::string& assignment);

Scenario with_overrides(Scenario s, const std::vector<std::string>& assignments);

std::string canonical_yaml(const Scenario& s);

/// Hex SHA-256 of the canonical document.
std::string config_hash(const Scenario& s);

/// Schedule entries plus expanded ramps, ordered by time; ties keep the
/// schedule before ramps, each in file order.
std::vector<ScheduleEntry> timeline(const Scenario& s);

/// Hex SHA-256 of arbitrary bytes.
std::string sha256_hex(const std::string& bytes);

}  // namespace cryoctl::scenario
