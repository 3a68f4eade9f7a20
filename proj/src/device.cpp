#include "cryoctl/device.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "cryoctl/error.hpp"

namespace cryoctl::device {

double TankReadout::time_constant() const { return 1.0 / (2.0 * std::numbers::pi * bandwidth_hz); }

double TankReadout::rise_time_10_90() const { return std::log(9.0) * time_constant(); }

void validate(const DotDevice& dev) {
  if (!(dev.peak_spacing > 0.0) || !(dev.peak_width > 0.0) || !(dev.g_max > 0.0)) {
    throw Error(ErrorKind::kInvalidParameter, "peak_spacing, peak_width and g_max must be > 0");
  }
}

namespace {

double lever_of(const DotDevice& dev, const std::string& gate) {
  auto it = dev.gate_levers.find(gate);
  if (it == dev.gate_levers.end()) throw Error(ErrorKind::kUnknownGate, fmt::format("gate '{}'", gate));
  return it->second;
}

double sech2(double x) {
  const double c = std::cosh(x);
  return 1.0 / (c * c);
}

}  // namespace

double effective_potential(const DotDevice& dev, const std::map<std::string, double>& volts) {
  double v = dev.v_offset;
  for (const auto& [gate, value] : volts) v += lever_of(dev, gate) * value;
  return v;
}

double conductance_at(const DotDevice& dev, double v_eff) {
  const double detuning = std::remainder(v_eff, dev.peak_spacing);
  return dev.g_max * sech2(detuning / dev.peak_width);
}

double conductance(const DotDevice& dev, const std::map<std::string, double>& volts) {
  return conductance_at(dev, effective_potential(dev, volts));
}

double conductance_slope(const DotDevice& dev, const std::map<std::string, double>& volts,
                         const std::string& gate) {
  const double x = std::remainder(effective_potential(dev, volts), dev.peak_spacing) / dev.peak_width;
  const double dg_dveff = -2.0 * dev.g_max / dev.peak_width * sech2(x) * std::tanh(x);
  return dg_dveff * lever_of(dev, gate);
}

Eigen::VectorXd lever_vector(const DotDevice& dev, const std::vector<std::string>& gates) {
  Eigen::VectorXd levers(static_cast<Eigen::Index>(gates.size()));
  for (std::size_t i = 0; i < gates.size(); ++i) levers(static_cast<Eigen::Index>(i)) = lever_of(dev, gates[i]);
  return levers;
}

TankFilter::TankFilter(const TankReadout& tank, double dt)
    : gain_(-std::expm1(-dt / tank.time_constant())) {}

double TankFilter::push(double x) {
  if (!primed_) {
    y_ = x;
    primed_ = true;
    return y_;
  }
  y_ += gain_ * (x - y_);
  return y_;
}

void check_sample_rate(const TankReadout& tank) {
  if (!(tank.bandwidth_hz > 0.0) || tank.sample_rate_hz < 10.0 * tank.bandwidth_hz) {
    throw Error(ErrorKind::kSampleRateTooLow,
                fmt::format("sample rate {} Hz < 10 x bandwidth {} Hz", tank.sample_rate_hz, tank.bandwidth_hz));
  }
}

TimeSeries lowpass(const TankReadout& tank, const TimeSeries& in) {
  check_sample_rate(tank);
  TimeSeries out{in.t0, in.dt, {}};
  out.values.reserve(in.values.size());
  TankFilter filter(tank, in.dt);
  for (double x : in.values) out.values.push_back(filter.push(x));
  return out;
}

TimeSeries readout(const DotDevice& dev, const TankReadout& tank, const GateTrace& trace) {
  check_sample_rate(tank);
  const double expected_dt = 1.0 / tank.sample_rate_hz;
  if (std::abs(trace.dt - expected_dt) > 1e-9 * expected_dt) {
    throw Error(ErrorKind::kSampleRateTooLow,
                fmt::format("trace spacing {} s does not match readout rate {} Hz", trace.dt, tank.sample_rate_hz));
  }
  const Eigen::VectorXd v_eff =
      (trace.volts * lever_vector(dev, trace.gates)).array() + dev.v_offset;

  TimeSeries g{trace.t0, trace.dt, {}};
  g.values.resize(static_cast<std::size_t>(v_eff.size()));
  for (Eigen::Index i = 0; i < v_eff.size(); ++i) g.values[static_cast<std::size_t>(i)] = conductance_at(dev, v_eff(i));
  return lowpass(tank, g);
}

namespace {

struct PointStats {
  double v_sdp;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  std::size_t n = 0;
};

std::vector<PointStats> per_point(const ReadoutTrace& tr, double settle_s) {
  if (tr.time_s.size() != tr.v_sdp.size() || tr.time_s.size() != tr.signal.size()) {
    throw Error(ErrorKind::kAxisMismatch, "trace columns differ in length");
  }
  std::vector<PointStats> points;
  double step_time = 0.0;
  for (std::size_t i = 0; i < tr.time_s.size(); ++i) {
    if (points.empty() || tr.v_sdp[i] != points.back().v_sdp) {
      points.push_back({tr.v_sdp[i]});
      step_time = tr.time_s[i];
    }
    if (tr.time_s[i] - step_time < settle_s) continue;
    auto& p = points.back();
    p.min = std::min(p.min, tr.signal[i]);
    p.max = std::max(p.max, tr.signal[i]);
    p.sum += tr.signal[i];
    ++p.n;
  }
  for (const auto& p : points) {
    if (p.n == 0) {
      throw Error(ErrorKind::kAxisMismatch,
                  fmt::format("sweep point {} V has no samples after filter settling", p.v_sdp));
    }
  }
  return points;
}

}  // namespace

EnvelopeReport envelope_check(const DotDevice& dev, const TankReadout& tank, const ReadoutTrace& pulsed,
                              const ReadoutTrace& static_low, const ReadoutTrace& static_high) {
  const double settle = 20.0 * tank.time_constant();
  const auto p = per_point(pulsed, settle);
  const auto lo = per_point(static_low, settle);
  const auto hi = per_point(static_high, settle);
  if (p.size() != lo.size() || p.size() != hi.size()) {
    throw Error(ErrorKind::kAxisMismatch,
                fmt::format("sweep point counts differ: {} / {} / {}", p.size(), lo.size(), hi.size()));
  }

  EnvelopeReport report;
  report.rows.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].v_sdp != lo[i].v_sdp || p[i].v_sdp != hi[i].v_sdp) {
      throw Error(ErrorKind::kAxisMismatch, fmt::format("sweep point {} differs between traces", i));
    }
    const double g_low = lo[i].sum / static_cast<double>(lo[i].n);
    const double g_high = hi[i].sum / static_cast<double>(hi[i].n);
    EnvelopeRow row{p[i].v_sdp, g_low, g_high, p[i].min, p[i].max};
    const double dev_max = std::abs(row.g_env_max - std::max(g_low, g_high));
    const double dev_min = std::abs(row.g_env_min - std::min(g_low, g_high));
    report.max_deviation = std::max({report.max_deviation, dev_max / dev.g_max, dev_min / dev.g_max});
    report.rows.push_back(row);
  }
  return report;
}

double fit_slope(const TimeSeries& s, std::size_t skip) {
  if (s.values.size() < skip + 2) throw Error(ErrorKind::kInvalidParameter, "need at least two samples to fit");
  const std::size_t n = s.values.size() - skip;
  // Centered regressor keeps the normal equation well conditioned.
  const double t_mean = s.time(skip) + 0.5 * static_cast<double>(n - 1) * s.dt;
  double y_mean = 0.0;
  for (std::size_t i = skip; i < s.values.size(); ++i) y_mean += s.values[i];
  y_mean /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = skip; i < s.values.size(); ++i) {
    const double dt = s.time(i) - t_mean;
    sxy += dt * (s.values[i] - y_mean);
    sxx += dt * dt;
  }
  return sxy / sxx;
}

}  // namespace cryoctl::device
