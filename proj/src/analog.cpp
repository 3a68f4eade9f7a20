#include "cryoctl/analog.hpp"

#include <cmath>

#include <fmt/format.h>

#include "cryoctl/error.hpp"

namespace cryoctl::analog {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorKind::kInvalidParameter, what);
}

}  // namespace

ClfgCell make_cell(const CellParams& params) {
  require(params.c_pulse > 0.0, "c_pulse must be > 0");
  require(params.c_p > 0.0, "c_p must be > 0");
  require(params.c_ds >= 0.0, "c_ds must be >= 0");
  require(params.r_switch > 0.0, "r_switch must be > 0");
  require(params.leak_rate >= 0.0, "leak_rate must be >= 0");
  ClfgCell cell;
  cell.params = params;
  return cell;
}

void validate(const SupplyRails& rails) { require(rails.v_high >= rails.v_low, "v_high must be >= v_low"); }

double total_capacitance(const CellParams& p) { return p.c_pulse + p.c_p; }

double series_capacitance(const CellParams& p) { return p.c_pulse * p.c_p / (p.c_pulse + p.c_p); }

double time_constant(const CellParams& p) { return p.r_switch * series_capacitance(p); }

double injection_offset(const CellParams& p) { return p.q_inj / (p.c_p + p.c_pulse); }

double coupling_ratio(const CellParams& p) { return p.c_ds / (p.c_ds + p.c_pulse + p.c_p); }

double hold_setpoint_for(const CellParams& p, double target) { return target - injection_offset(p); }

ClfgCell lock(ClfgCell cell, const SupplyRails& rails) {
  cell.lock_closed = true;
  cell.v_hold_seen = rails.v_hold;
  cell.v_static = rails.v_hold;
  cell.v_pulse = 0.0;
  cell.v_pulse_target = 0.0;
  return cell;
}

ClfgCell unlock(ClfgCell cell) {
  if (!cell.lock_closed) throw Error(ErrorKind::kAlreadyUnlocked, "lock switch is already open");
  cell.lock_closed = false;
  cell.ref_level = cell.fg_level;
  cell.v_static = cell.v_hold_seen + injection_offset(cell.params);
  cell.v_pulse = 0.0;
  cell.v_pulse_target = 0.0;
  return cell;
}

ClfgCell couple_hold(ClfgCell cell, double dv_hold) {
  if (cell.lock_closed) throw Error(ErrorKind::kLockClosed, "output follows V_HOLD while locked");
  cell.v_static += coupling_ratio(cell.params) * dv_hold;
  cell.v_hold_seen += dv_hold;
  return cell;
}

ClfgCell track_hold(ClfgCell cell, double v_hold) {
  if (cell.lock_closed) {
    cell.v_hold_seen = v_hold;
    cell.v_static = v_hold;
    return cell;
  }
  return couple_hold(cell, v_hold - cell.v_hold_seen);
}

ClfgCell leak(ClfgCell cell, double dt) {
  require(dt >= 0.0, "leak interval must be >= 0");
  cell.time_s += dt;
  if (cell.lock_closed || dt == 0.0) return cell;
  cell.v_static *= std::exp(-cell.params.leak_rate * dt);
  const double residual = cell.v_pulse - cell.v_pulse_target;
  cell.v_pulse = cell.v_pulse_target + residual * std::exp(-dt / time_constant(cell.params));
  return cell;
}

ClfgCell advance_to(ClfgCell cell, double t_s) {
  if (t_s < cell.time_s) {
    throw Error(ErrorKind::kInvalidParameter,
                fmt::format("cannot move cell clock backwards ({} < {})", t_s, cell.time_s));
  }
  const double dt = t_s - cell.time_s;
  return leak(std::move(cell), dt);
}

double pulse_amplitude(const CellParams& p, const SupplyRails& rails) {
  return p.c_pulse / (p.c_p + p.c_pulse) * (rails.v_high - rails.v_low);
}

ClfgCell apply_fg(ClfgCell cell, const SupplyRails& rails, FgLevel level, double t_event) {
  cell = advance_to(std::move(cell), t_event);
  if (level == cell.fg_level) return cell;
  cell.fg_level = level;
  if (cell.lock_closed) return cell;
  const double k = cell.params.c_pulse / total_capacitance(cell.params);
  cell.v_pulse_target = k * (rails.level(level) - rails.level(cell.ref_level));
  return cell;
}

double output_voltage(const ClfgCell& cell, double t_s) {
  if (cell.lock_closed) return cell.v_hold_seen;
  const double dt = t_s - cell.time_s;
  if (dt < 0.0) {
    throw Error(ErrorKind::kInvalidParameter,
                fmt::format("sample time {} precedes last event {}", t_s, cell.time_s));
  }
  const double v_static = cell.v_static * std::exp(-cell.params.leak_rate * dt);
  const double residual = cell.v_pulse - cell.v_pulse_target;
  return v_static + cell.v_pulse_target + residual * std::exp(-dt / time_constant(cell.params));
}

double settled_output(const ClfgCell& cell, const SupplyRails& rails, FgLevel level, double t_s) {
  if (cell.lock_closed) return cell.v_hold_seen;
  const double dt = t_s - cell.time_s;
  if (dt < 0.0) {
    throw Error(ErrorKind::kInvalidParameter,
                fmt::format("sample time {} precedes last event {}", t_s, cell.time_s));
  }
  const double k = cell.params.c_pulse / total_capacitance(cell.params);
  return cell.v_static * std::exp(-cell.params.leak_rate * dt) +
         k * (rails.level(level) - rails.level(cell.ref_level));
}

double switch_current(const CellParams& p, double swing, double t_since_edge) {
  return swing / p.r_switch * std::exp(-t_since_edge / time_constant(p));
}

double cycle_dissipation(const CellParams& p, const SupplyRails& rails, int steps_per_tau, double span_taus) {
  require(steps_per_tau > 0 && span_taus > 0.0, "integration grid must be positive");
  const double tau = time_constant(p);
  const double h = tau / steps_per_tau;
  const auto n = static_cast<long>(std::ceil(span_taus * steps_per_tau));
  const double swing = rails.v_high - rails.v_low;

  // Trapezoid rule on i(t)^2 r for one edge; a full cycle has two
  // identical edges (falling and rising).
  double sum = 0.0;
  for (long i = 0; i <= n; ++i) {
    const double i_t = switch_current(p, swing, static_cast<double>(i) * h);
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    sum += w * i_t * i_t * p.r_switch;
  }
  return 2.0 * sum * h;
}

}  // namespace cryoctl::analog
