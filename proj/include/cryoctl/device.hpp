#pragma once

// Quantum-dot measurement oracle: a periodic cosh^-2 Coulomb-peak
// conductance and a one-pole low-pass standing in for the rf-SET tank.

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cryoctl::device {

struct DotDevice {
  std::map<std::string, double> gate_levers;  // gate name -> lever arm
  double peak_spacing = 10e-3;
  double peak_width = 0.8e-3;
  double g_max = 1.0;
  double v_offset = 0.0;
};

struct TankReadout {
  double bandwidth_hz = 10e6;
  double sample_rate_hz = 100e6;

  double time_constant() const;
  double rise_time_10_90() const;
};

void validate(const DotDevice& dev);

/// v_eff = sum_i lever_i * V_i + v_offset. Gates absent from `volts` count as
/// 0 V; names absent from the device throw Error(kUnknownGate).
double effective_potential(const DotDevice& dev, const std::map<std::string, double>& volts);

/// Conductance as a function of the effective potential; peaks sit at
/// integer multiples of peak_spacing.
double conductance_at(const DotDevice& dev, double v_eff);

double conductance(const DotDevice& dev, const std::map<std::string, double>& volts);

/// dG/dV for one gate at the given operating point.
double conductance_slope(const DotDevice& dev, const std::map<std::string, double>& volts,
                         const std::string& gate);

/// Uniformly sampled series.
struct TimeSeries {
  double t0 = 0.0;
  double dt = 1.0;
  std::vector<double> values;

  double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
};

/// Gate voltages over time: one row per sample, one column per gate.
struct GateTrace {
  double t0 = 0.0;
  double dt = 1.0;
  std::vector<std::string> gates;
  Eigen::MatrixXd volts;
};

/// Lever vector aligned with `gates`. Throws Error(kUnknownGate).
Eigen::VectorXd lever_vector(const DotDevice& dev, const std::vector<std::string>& gates);

/// First-order low-pass, exact for a sample-and-hold input. The filter state
/// starts settled on the first sample.
class TankFilter {
 public:
  TankFilter(const TankReadout& tank, double dt);

  double push(double x);
  void reset(double y) { y_ = y; primed_ = true; }

 private:
  double gain_;
  double y_ = 0.0;
  bool primed_ = false;
};

/// Throws Error(kSampleRateTooLow) unless sample_rate >= 10 x bandwidth.
void check_sample_rate(const TankReadout& tank);

TimeSeries lowpass(const TankReadout& tank, const TimeSeries& in);

/// Pointwise conductance through the tank filter. The trace must be sampled
/// at tank.sample_rate_hz.
TimeSeries readout(const DotDevice& dev, const TankReadout& tank, const GateTrace& trace);

/// Readout samples over a swept gate, as exported to CSV.
struct ReadoutTrace {
  std::vector<double> time_s;
  std::vector<double> v_sdp;
  std::vector<double> signal;
};

struct EnvelopeRow {
  double v_sdp;
  double g_low;
  double g_high;
  double g_env_min;
  double g_env_max;
};

struct EnvelopeReport {
  std::vector<EnvelopeRow> rows;
  /// max over sweep points of |envelope - static| / g_max
  double max_deviation = 0.0;
};

/// Compares per-point max/min of the pulsed readout with the static traces.
/// Samples within twenty filter time constants of a sweep step are skipped.
/// Throws Error(kAxisMismatch) if the three traces do not visit the same
/// sweep points in the same order.
EnvelopeReport envelope_check(const DotDevice& dev, const TankReadout& tank, const ReadoutTrace& pulsed,
                              const ReadoutTrace& static_low, const ReadoutTrace& static_high);

/// Least-squares slope of a series against time, d(value)/dt.
double fit_slope(const TimeSeries& s, std::size_t skip = 0);

}  // namespace cryoctl::device
