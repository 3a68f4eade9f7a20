#pragma once

// Behavioral model of one charge-lock fast-gate cell.
//
//   V_HOLD --[G_LOCK]--+---------- V_OUT (qubit gate)
//            (c_ds)    |      |
//                   C_PULSE  C_P
//                      |      |
//   V_HIGH/V_LOW --[G_FG]--+  GND
//            (r_switch)
//
// The output is tracked as two superposed parts:
//   - a static part set by the locked charge (lock value, injection offset,
//     hold-line coupling), which relaxes toward 0 V at the leak rate;
//   - a pulse part, c_pulse/(c_pulse+c_p) times the bottom-plate excursion
//     from its level at unlock, relaxing with tau = r_switch * C_series.
// Operations take and return cells by value.

#include "cryoctl/fsm.hpp"

namespace cryoctl::analog {

using fsm::FgLevel;

struct SupplyRails {
  double v_high = 0.2;
  double v_low = 0.0;
  double v_hold = 0.0;

  double level(FgLevel l) const { return l == FgLevel::kHigh ? v_high : v_low; }
};

struct CellParams {
  double c_pulse = 1e-12;
  double c_p = 1e-12;
  double c_ds = 10e-15;
  double r_switch = 2e3;
  double leak_rate = 1e-8;  // 1/s
  double q_inj = 2e-15;     // C

  friend bool operator==(const CellParams&, const CellParams&) = default;
};

/// Leak-rate presets: tens of microvolts per hour at ~1 V, and a tenfold
/// faster per-second figure.
inline constexpr double kLeakRateMicrovoltsPerHour = 1e-8;
inline constexpr double kLeakRatePartsPerSecond = 1e-7;

struct ClfgCell {
  CellParams params;
  bool lock_closed = false;
  FgLevel fg_level = FgLevel::kLow;
  FgLevel ref_level = FgLevel::kLow;  // plate level when the lock last opened
  double v_hold_seen = 0.0;
  double time_s = 0.0;       // time at which the fields below are valid
  double v_static = 0.0;     // locked-charge part of v_out
  double v_pulse = 0.0;      // pulse part of v_out at time_s
  double v_pulse_target = 0.0;

  friend bool operator==(const ClfgCell&, const ClfgCell&) = default;
};

/// Validates parameters and returns an unlocked cell at 0 V.
ClfgCell make_cell(const CellParams& params);

void validate(const SupplyRails& rails);

double total_capacitance(const CellParams& p);
double series_capacitance(const CellParams& p);
double time_constant(const CellParams& p);

/// V_I = q_inj / (c_p + c_pulse)
double injection_offset(const CellParams& p);

/// alpha = c_ds / (c_ds + c_pulse + c_p)
double coupling_ratio(const CellParams& p);

/// DAC set-point that lands the output on `target` once the lock opens,
/// cancelling the injection offset.
double hold_setpoint_for(const CellParams& p, double target);

ClfgCell lock(ClfgCell cell, const SupplyRails& rails);

/// Throws Error(kAlreadyUnlocked) if the lock is already open.
ClfgCell unlock(ClfgCell cell);

/// Step of the hold line while the lock is open. Throws Error(kLockClosed)
/// when the lock is closed; use `track_hold` for that case.
ClfgCell couple_hold(ClfgCell cell, double dv_hold);

/// Hold line change for either lock state: a closed lock follows V_HOLD, an
/// open one sees the capacitive coupling.
ClfgCell track_hold(ClfgCell cell, double v_hold);

/// Advances the cell by `dt` seconds: the static part decays by
/// exp(-leak_rate * dt), the pulse transient relaxes. A locked cell only
/// moves its clock.
ClfgCell leak(ClfgCell cell, double dt);

/// Advances the cell clock to `t_s` (no-op if already there).
ClfgCell advance_to(ClfgCell cell, double t_s);

/// Pulse magnitude c_pulse / (c_p + c_pulse) * (v_high - v_low).
double pulse_amplitude(const CellParams& p, const SupplyRails& rails);

/// Switches the bottom plate at `t_event` (>= cell time).
ClfgCell apply_fg(ClfgCell cell, const SupplyRails& rails, FgLevel level, double t_event);

/// v_out at `t_s` >= cell.time_s.
double output_voltage(const ClfgCell& cell, double t_s);

/// Output the cell would settle to at `t_s` with the plate parked at
/// `level`: the static part plus the full pulse step, no transient.
double settled_output(const ClfgCell& cell, const SupplyRails& rails, FgLevel level, double t_s);

/// Current through the fast-gate switch `t_since_edge` seconds after a plate
/// transition of `swing` volts.
double switch_current(const CellParams& p, double swing, double t_since_edge);

/// i^2 r dissipation over one full HIGH->LOW->HIGH plate cycle, integrated
/// numerically with the trapezoid rule at `steps_per_tau` points per time
/// constant over `span_taus` time constants per edge.
double cycle_dissipation(const CellParams& p, const SupplyRails& rails, int steps_per_tau = 1000,
                         double span_taus = 40.0);

}  // namespace cryoctl::analog
