#include <cmath>
#include <random>

#include "doctest.h"

#include "cryoctl/device.hpp"
#include "cryoctl/error.hpp"

using namespace cryoctl;
using namespace cryoctl::device;

namespace {

DotDevice default_dot() {
  DotDevice d;
  d.gate_levers = {{"SDP", 1.0}, {"LW", 0.2}};
  return d;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected cryoctl::Error");
  return ErrorKind::kInvalidParameter;
}

/// Sweep SDP over `points` values; at each point LW toggles between
/// `lw` and `lw + pulse` at `f_pulse` for `periods` periods. Returns the
/// pulsed and two static readouts.
struct Traces {
  ReadoutTrace pulsed, low, high;
};

Traces sweep_traces(const DotDevice& dev, const TankReadout& tank, double lw, double pulse, double f_pulse,
                    int points, int periods) {
  const double dt = 1.0 / tank.sample_rate_hz;
  const auto per_point = static_cast<std::size_t>(std::llround(periods / f_pulse / dt));
  const std::size_t n = per_point * static_cast<std::size_t>(points);
  GateTrace tp{0.0, dt, {"SDP", "LW"}, Eigen::MatrixXd(n, 2)};
  GateTrace tl = tp, th = tp;
  std::vector<double> time(n), sdp(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    const double v_sdp = -0.015 + 0.03 * static_cast<double>(i / per_point) / points;
    const bool high = std::fmod(t * f_pulse, 1.0) < 0.5;
    tp.volts.row(i) << v_sdp, lw + (high ? pulse : 0.0);
    tl.volts.row(i) << v_sdp, lw;
    th.volts.row(i) << v_sdp, lw + pulse;
    time[i] = t;
    sdp[i] = v_sdp;
  }
  auto pack = [&](const TimeSeries& s) { return ReadoutTrace{time, sdp, s.values}; };
  return {pack(readout(dev, tank, tp)), pack(readout(dev, tank, tl)), pack(readout(dev, tank, th))};
}

}  // namespace

TEST_CASE("conductance lineshape") {
  auto dev = default_dot();
  CHECK(conductance(dev, {{"SDP", 0.0}}) == dev.g_max);
  CHECK(conductance(dev, {{"SDP", 0.01}}) == doctest::Approx(dev.g_max).epsilon(1e-12));

  const double mid = 1.0 / std::pow(std::cosh(dev.peak_spacing / (2 * dev.peak_width)), 2);
  CHECK(conductance(dev, {{"SDP", 0.005}}) == doctest::Approx(dev.g_max * mid).epsilon(1e-9));
  CHECK(mid < 1e-4);

  CHECK(kind_of([&] { conductance(dev, {{"XX", 0.0}}); }) == ErrorKind::kUnknownGate);

  // Missing gates read as 0 V.
  CHECK(effective_potential(dev, {}) == dev.v_offset);
}

TEST_CASE("conductance is periodic in every gate") {
  auto dev = default_dot();
  dev.v_offset = 0.0037;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> v(-0.5, 0.5);
  std::uniform_int_distribution<int> k(-20, 20);
  for (int i = 0; i < 2000; ++i) {
    std::map<std::string, double> volts{{"SDP", v(rng)}, {"LW", v(rng)}};
    const double g = conductance(dev, volts);
    CHECK(g >= 0.0);
    CHECK(g <= dev.g_max);
    for (const auto& [gate, lever] : dev.gate_levers) {
      auto shifted = volts;
      shifted[gate] += k(rng) * dev.peak_spacing / lever;
      CHECK(conductance(dev, shifted) == doctest::Approx(g).epsilon(1e-6));
    }
  }
}

TEST_CASE("conductance slope agrees with a finite difference") {
  auto dev = default_dot();
  for (double sdp : {-0.004, -0.0005, 0.0003, 0.0011, 0.0042}) {
    std::map<std::string, double> at{{"SDP", sdp}, {"LW", 0.01}};
    const double h = 1e-8;
    auto up = at, down = at;
    up["LW"] += h;
    down["LW"] -= h;
    const double fd = (conductance(dev, up) - conductance(dev, down)) / (2 * h);
    CHECK(conductance_slope(dev, at, "LW") == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("tank filter") {
  TankReadout tank{10e6, 10e9};
  CHECK(tank.rise_time_10_90() == doctest::Approx(35e-9).epsilon(0.002));

  TimeSeries flat{0.0, 1.0 / tank.sample_rate_hz, std::vector<double>(1000, 0.37)};
  for (double y : lowpass(tank, flat).values) CHECK(y == 0.37);

  // Measure the 10-90% rise on a unit step.
  TimeSeries step{0.0, 1.0 / tank.sample_rate_hz, std::vector<double>(5000, 1.0)};
  step.values[0] = 0.0;
  auto out = lowpass(tank, step);
  auto crossing = [&](double level) {
    for (std::size_t i = 1; i < out.values.size(); ++i) {
      if (out.values[i] >= level) {
        const double f = (level - out.values[i - 1]) / (out.values[i] - out.values[i - 1]);
        return out.time(i - 1) + f * out.dt;
      }
    }
    return -1.0;
  };
  CHECK(crossing(0.9) - crossing(0.1) == doctest::Approx(2.2 / (2 * M_PI * 10e6)).epsilon(0.01));

  CHECK(kind_of([] { lowpass(TankReadout{10e6, 50e6}, TimeSeries{}); }) == ErrorKind::kSampleRateTooLow);
}

TEST_CASE("filtered average equals input average over whole periods") {
  TankReadout tank{10e6, 140e6};
  const std::size_t period = 1000;  // 140 kHz
  TimeSeries sq{0.0, 1.0 / tank.sample_rate_hz, {}};
  for (std::size_t i = 0; i < 20 * period; ++i) sq.values.push_back(i % period < period / 2 ? 0.93 : 0.04);
  auto out = lowpass(tank, sq);
  double in_sum = 0.0, out_sum = 0.0;
  for (std::size_t i = period; i < sq.values.size(); ++i) {
    in_sum += sq.values[i];
    out_sum += out.values[i];
  }
  CHECK(std::abs(out_sum - in_sum) <= 1e-6 * in_sum);
}

TEST_CASE("pulsing far above the bandwidth collapses to the mean") {
  TankReadout tank{10e6, 10e9};
  TimeSeries sq{0.0, 1.0 / tank.sample_rate_hz, {}};
  for (int i = 0; i < 200000; ++i) sq.values.push_back((i / 5) % 2 ? 1.0 : 0.0);  // 1 GHz
  auto out = lowpass(tank, sq);
  double lo = 1.0, hi = 0.0;
  for (std::size_t i = 100000; i < out.values.size(); ++i) {
    lo = std::min(lo, out.values[i]);
    hi = std::max(hi, out.values[i]);
  }
  CHECK(lo > 0.45);
  CHECK(hi < 0.55);
}

TEST_CASE("readout checks its sampling") {
  auto dev = default_dot();
  GateTrace tr{0.0, 1e-8, {"SDP"}, Eigen::MatrixXd::Zero(10, 1)};
  CHECK(kind_of([&] { readout(dev, TankReadout{10e6, 50e6}, tr); }) == ErrorKind::kSampleRateTooLow);
  CHECK(kind_of([&] { readout(dev, TankReadout{10e6, 200e6}, tr); }) == ErrorKind::kSampleRateTooLow);
  auto out = readout(dev, TankReadout{10e6, 100e6}, tr);
  for (double y : out.values) CHECK(y == dev.g_max);
  tr.gates = {"NOPE"};
  CHECK(kind_of([&] { readout(dev, TankReadout{10e6, 100e6}, tr); }) == ErrorKind::kUnknownGate);
}

TEST_CASE("envelope of a peak-to-trough pulse follows the static traces") {
  auto dev = default_dot();
  TankReadout tank;
  // Half a Coulomb period in effective potential on LW (lever 0.2).
  const double pulse = 0.5 * dev.peak_spacing / dev.gate_levers.at("LW");
  auto tr = sweep_traces(dev, tank, -1.1, pulse, 140e3, 60, 2);
  auto report = envelope_check(dev, tank, tr.pulsed, tr.low, tr.high);
  REQUIRE(report.rows.size() == 60);
  CHECK(report.max_deviation < 0.01);

  // Envelope max is the upper of the comb and the shifted comb.
  for (const auto& row : report.rows) {
    const double a = conductance(dev, {{"SDP", row.v_sdp}, {"LW", -1.1}});
    const double b = conductance(dev, {{"SDP", row.v_sdp}, {"LW", -1.1 + pulse}});
    CHECK(std::abs(row.g_env_max - std::max(a, b)) < 0.01 * dev.g_max);
    CHECK(std::abs(row.g_env_min - std::min(a, b)) < 0.01 * dev.g_max);
  }
}

TEST_CASE("zero pulse gives identical traces") {
  auto dev = default_dot();
  TankReadout tank;
  auto tr = sweep_traces(dev, tank, -1.1, 0.0, 140e3, 20, 1);
  CHECK(tr.pulsed.signal == tr.low.signal);
  CHECK(tr.low.signal == tr.high.signal);
  auto report = envelope_check(dev, tank, tr.pulsed, tr.low, tr.high);
  CHECK(report.max_deviation < 1e-6);
}

TEST_CASE("envelope axis mismatch") {
  auto dev = default_dot();
  TankReadout tank;
  auto tr = sweep_traces(dev, tank, -1.1, 0.0, 140e3, 10, 1);
  auto shifted = tr.low;
  for (auto& v : shifted.v_sdp) v += 1e-3;
  CHECK(kind_of([&] { envelope_check(dev, tank, tr.pulsed, shifted, tr.high); }) == ErrorKind::kAxisMismatch);
  auto shorter = tr.high;
  shorter.signal.pop_back();
  CHECK(kind_of([&] { envelope_check(dev, tank, tr.pulsed, tr.low, shorter); }) == ErrorKind::kAxisMismatch);
}

TEST_CASE("flank-slope method recovers a leakage rate") {
  auto dev = default_dot();
  const double lambda = 1e-8;
  const double v0 = -1.1;
  // Bias to the steepest point of the peak flank.
  const double x_star = std::atanh(1.0 / std::sqrt(3.0)) * dev.peak_width;
  const double sdp = x_star - dev.gate_levers.at("LW") * v0;

  TankReadout slow{0.1, 1.0};
  GateTrace tr{0.0, 1.0, {"SDP", "LW"}, Eigen::MatrixXd(3600, 2)};
  for (int i = 0; i < 3600; ++i) tr.volts.row(i) << sdp, v0 * std::exp(-lambda * i);
  auto signal = readout(dev, slow, tr);

  const double dgdv = conductance_slope(dev, {{"SDP", sdp}, {"LW", v0}}, "LW");
  const double dv_dt = fit_slope(signal, 20) / dgdv;
  const double lambda_est = -dv_dt / v0;
  CHECK(lambda_est == doctest::Approx(lambda).epsilon(0.05));
}
