#pragma once

// Power and thermal budget: per-block dissipation, the power->temperature
// calibration curve, and cooling-power feasibility.

#include <optional>
#include <utility>
#include <vector>

namespace cryoctl::thermal {

/// P = C_PULSE * C_P / (C_P + C_PULSE) * (V_HIGH - V_LOW)^2 * f
double pulse_power(double c_pulse, double c_p, double v_high, double v_low, double f_hz);

/// Dissipation coefficients. Cell cost is stated as energy per pulse cycle
/// at `reference_swing` volts of gate amplitude and scales with the square
/// of the amplitude. Clock and FSM terms are energy per operating cycle.
struct PowerModel {
  double cell_energy_per_cycle = 20e-15;
  double reference_swing = 0.1;
  double fsm_coeff = 0.0;
  double clock_coeff = 0.0;
  double static_floor = 0.0;

  /// Coefficients from a cell's capacitances, driven with `drive` volts
  /// across the bottom plate (gate amplitude = ratio * drive).
  static PowerModel from_cell(double c_pulse, double c_p, double drive);

  /// 18 nW/MHz per cell at 0.1 V gate amplitude.
  static PowerModel measured_cell_cost();
};

void validate(const PowerModel& m);

double cell_power(double f_hz, double swing, const PowerModel& model);

/// static_floor + (clock_coeff + fsm_coeff) * f + n_cells * cell_power
double total_power(double n_cells, double f_hz, double swing, const PowerModel& model);

class ThermalCalibration {
 public:
  /// `points` are (watts, kelvin), strictly increasing in both coordinates,
  /// at least two, first power > 0 and first temperature > base.
  /// Throws Error(kInvalidCalibration).
  ThermalCalibration(std::vector<std::pair<double, double>> points, double base_temperature_k);

  const std::vector<std::pair<double, double>>& points() const { return points_; }
  double base_temperature() const { return base_; }

 private:
  std::vector<std::pair<double, double>> points_;
  double base_;
};

/// Piecewise-linear interpolation; linear from (0, base) below the first
/// knot, extrapolation of the last segment above the last. Knots are
/// reproduced bit-exactly.
double temperature(double p_watts, const ThermalCalibration& cal);

struct CoolingBudget {
  double budget_watts_at_100mK = 400e-6;
  std::optional<double> coax_power_per_line;
};

void validate(const CoolingBudget& b);

struct Feasibility {
  bool feasible;
  double headroom_watts;
};

Feasibility feasible(double n_cells, double f_hz, double swing, const PowerModel& model,
                     const CoolingBudget& budget);

/// n_lines * coax_power_per_line. Throws Error(kNotConfigured) when no
/// per-line figure was supplied.
double coax_comparison(double n_lines, const CoolingBudget& budget);

/// Gate count where coax dissipation equals the CLFG total, if the lines
/// cross.
std::optional<double> coax_crossover(double f_hz, double swing, const PowerModel& model,
                                     const CoolingBudget& budget);

struct FeasibilityCell {
  double n_cells;
  double f_hz;
  double total_watts;
  bool feasible;
};

/// Row-major over n_cells then f_hz.
std::vector<FeasibilityCell> feasibility_map(const std::vector<double>& n_cells, const std::vector<double>& f_hz,
                                             double swing, const PowerModel& model, const CoolingBudget& budget);

}  // namespace cryoctl::thermal
