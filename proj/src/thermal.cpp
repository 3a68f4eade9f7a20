#include "cryoctl/thermal.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "cryoctl/error.hpp"

namespace cryoctl::thermal {

double pulse_power(double c_pulse, double c_p, double v_high, double v_low, double f_hz) {
  const double swing = v_high - v_low;
  return c_pulse * c_p / (c_p + c_pulse) * swing * swing * f_hz;
}

PowerModel PowerModel::from_cell(double c_pulse, double c_p, double drive) {
  PowerModel m;
  m.cell_energy_per_cycle = pulse_power(c_pulse, c_p, drive, 0.0, 1.0);
  m.reference_swing = c_pulse / (c_pulse + c_p) * drive;
  return m;
}

PowerModel PowerModel::measured_cell_cost() {
  PowerModel m;
  m.cell_energy_per_cycle = 18e-15;
  m.reference_swing = 0.1;
  return m;
}

void validate(const PowerModel& m) {
  if (m.cell_energy_per_cycle < 0.0 || m.fsm_coeff < 0.0 || m.clock_coeff < 0.0 || m.static_floor < 0.0 ||
      !(m.reference_swing > 0.0)) {
    throw Error(ErrorKind::kInvalidParameter, "power coefficients must be >= 0 and reference_swing > 0");
  }
}

double cell_power(double f_hz, double swing, const PowerModel& model) {
  const double ratio = swing / model.reference_swing;
  return model.cell_energy_per_cycle * ratio * ratio * f_hz;
}

double total_power(double n_cells, double f_hz, double swing, const PowerModel& model) {
  return model.static_floor + (model.clock_coeff + model.fsm_coeff) * f_hz +
         n_cells * cell_power(f_hz, swing, model);
}

ThermalCalibration::ThermalCalibration(std::vector<std::pair<double, double>> points, double base_temperature_k)
    : points_(std::move(points)), base_(base_temperature_k) {
  if (points_.size() < 2) throw Error(ErrorKind::kInvalidCalibration, "need at least two calibration points");
  if (!(points_.front().first > 0.0) || !(points_.front().second > base_)) {
    throw Error(ErrorKind::kInvalidCalibration, "first point must lie above (0 W, base temperature)");
  }
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (!(points_[i].first > points_[i - 1].first) || !(points_[i].second > points_[i - 1].second)) {
      throw Error(ErrorKind::kInvalidCalibration,
                  fmt::format("points must be strictly increasing (index {})", i));
    }
  }
}

double temperature(double p_watts, const ThermalCalibration& cal) {
  const auto& pts = cal.points();
  if (p_watts < 0.0) throw Error(ErrorKind::kInvalidParameter, "power must be >= 0");

  // Segment anchored at its left knot, so evaluating at a knot returns it.
  auto along = [](std::pair<double, double> a, std::pair<double, double> b, double p) {
    return a.second + (p - a.first) * ((b.second - a.second) / (b.first - a.first));
  };
  if (p_watts < pts.front().first) return along({0.0, cal.base_temperature()}, pts.front(), p_watts);

  auto it = std::upper_bound(pts.begin(), pts.end(), p_watts,
                             [](double p, const std::pair<double, double>& k) { return p < k.first; });
  if (it == pts.end()) {
    const auto& last = pts.back();
    const auto& prev = pts[pts.size() - 2];
    return last.second + (p_watts - last.first) * ((last.second - prev.second) / (last.first - prev.first));
  }
  return along(*(it - 1), *it, p_watts);
}

void validate(const CoolingBudget& b) {
  if (!(b.budget_watts_at_100mK > 0.0)) throw Error(ErrorKind::kInvalidParameter, "cooling budget must be > 0");
  if (b.coax_power_per_line && !(*b.coax_power_per_line > 0.0)) {
    throw Error(ErrorKind::kInvalidParameter, "coax power per line must be > 0");
  }
}

Feasibility feasible(double n_cells, double f_hz, double swing, const PowerModel& model,
                     const CoolingBudget& budget) {
  const double total = total_power(n_cells, f_hz, swing, model);
  return {total <= budget.budget_watts_at_100mK, budget.budget_watts_at_100mK - total};
}

double coax_comparison(double n_lines, const CoolingBudget& budget) {
  if (!budget.coax_power_per_line) {
    throw Error(ErrorKind::kNotConfigured, "coax_power_per_line is not set");
  }
  return n_lines * *budget.coax_power_per_line;
}

std::optional<double> coax_crossover(double f_hz, double swing, const PowerModel& model,
                                     const CoolingBudget& budget) {
  const double per_line = coax_comparison(1.0, budget);
  const double per_cell = cell_power(f_hz, swing, model);
  if (!(per_line > per_cell)) return std::nullopt;
  return total_power(0.0, f_hz, swing, model) / (per_line - per_cell);
}

std::vector<FeasibilityCell> feasibility_map(const std::vector<double>& n_cells, const std::vector<double>& f_hz,
                                             double swing, const PowerModel& model, const CoolingBudget& budget) {
  std::vector<FeasibilityCell> out;
  out.reserve(n_cells.size() * f_hz.size());
  for (double n : n_cells) {
    for (double f : f_hz) {
      const double total = total_power(n, f, swing, model);
      out.push_back({n, f, total, total <= budget.budget_watts_at_100mK});
    }
  }
  return out;
}

}  // namespace cryoctl::thermal
