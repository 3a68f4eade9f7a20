#include "cryoctl/engine.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include <fmt/format.h>

#include "cryoctl/analog.hpp"
#include "cryoctl/error.hpp"

namespace cryoctl::engine {

namespace {

using fsm::Mode;
using scenario::ScheduleEntry;

constexpr double kNever = std::numeric_limits<double>::infinity();

// Number of grid points k >= 0 with start + k * step <= stop.
std::size_t grid_points(double start, double stop, double step) {
  if (!(step > 0.0) || stop < start) return 0;
  return static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
}

class Runner {
 public:
  explicit Runner(const Scenario& s)
      : s_(s), model_(s.power_model()), cal_(s.calibration()), dot_(s.device.dot()), rails_(s.rails) {
    chip_.master_freq_hz = s.chip.master_freq_hz;
    chip_.refresh_dwell_s = s.chip.refresh_dwell_s;
    auto cell = analog::make_cell(s.cell);
    cell.v_hold_seen = rails_.v_hold;
    cells_.fill(cell);
    for (const auto& [name, g] : s.device.gates) {
      gates_.push_back(name);
      gate_cell_.push_back(g.cell.value_or(-1));
      gate_volts_.push_back(g.volts);
    }
    timeline_ = scenario::timeline(s);

    out_.name = s.name;
    out_.cells = s.traces.cells;
    out_.cell_volts.resize(out_.cells.size());
    if (s.traces.sample_period_s > 0.0) {
      n_grid_ = grid_points(s.traces.start_s, s.traces.duration_s, s.traces.sample_period_s);
    }
    if (s.readout.enabled) {
      n_readout_ = static_cast<std::size_t>(
          std::floor((s.readout.stop_s - s.readout.start_s) * s.readout.tank.sample_rate_hz + 1e-9));
      pulsed_.resize(static_cast<Eigen::Index>(n_readout_), static_cast<Eigen::Index>(gates_.size()));
      if (s.readout.envelope_cell) {
        low_ = pulsed_;
        high_ = pulsed_;
      }
    }
  }

  TraceBundle run() {
    const double duration = s_.traces.duration_s;
    for (;;) {
      const double t_tick = chip_.mode == Mode::kPulsing ? seg_start_ + fsm::tick_time(chip_, chip_.tick_count) : kNever;
      const double t_refresh = chip_.mode == Mode::kRefresh ? next_refresh_time() : kNever;
      const double t_sched = next_entry_ < timeline_.size() ? timeline_[next_entry_].time_s : kNever;
      const double t_grid = grid_i_ < n_grid_ ? grid_time(grid_i_) : kNever;
      const double t_read = read_i_ < n_readout_ ? readout_time(read_i_) : kNever;

      const double t_event = std::min({t_tick, t_refresh, t_sched});
      const double t_sample = std::min(t_grid, t_read);
      if (t_sample == kNever && !(t_event <= duration)) break;

      if (t_event <= t_sample) {
        if (t_tick == t_event) {
          tick(t_tick);
        } else if (t_refresh == t_event) {
          refresh_action(t_refresh);
        } else {
          apply(timeline_[next_entry_++]);
        }
      } else if (t_grid == t_sample) {
        sample_grid(t_grid);
        ++grid_i_;
      } else {
        sample_readout(t_read);
        ++read_i_;
      }
    }
    finish_readout();
    project();
    out_.final_state = chip_;
    return std::move(out_);
  }

 private:
  double grid_time(std::size_t i) const {
    return s_.traces.start_s + static_cast<double>(i) * s_.traces.sample_period_s;
  }

  double readout_time(std::size_t i) const {
    return s_.readout.start_s + static_cast<double>(i) / s_.readout.tank.sample_rate_hz;
  }

  void log(double t, int cell, std::variant<fsm::FgLevel, fsm::LockAction> action) {
    if (s_.traces.events) out_.events.push_back({t, cell, action});
  }

  void tick(double t) {
    for (const auto& ev : fsm::playback_ticks(chip_, 1)) {
      const auto level = std::get<fsm::FgLevel>(ev.action);
      cells_[ev.cell] = analog::apply_fg(std::move(cells_[ev.cell]), rails_, level, t);
      log(t, ev.cell, level);
    }
    chip_ = fsm::advance(chip_, 1);
  }

  void close_lock(int c, double t) {
    cells_[c] = analog::lock(analog::advance_to(std::move(cells_[c]), t), rails_);
    log(t, c, fsm::LockAction::kClose);
  }

  void open_lock(int c, double t) {
    cells_[c] = analog::unlock(analog::advance_to(std::move(cells_[c]), t));
    log(t, c, fsm::LockAction::kOpen);
  }

  void set_hold(double v, double t) {
    rails_.v_hold = v;
    for (auto& cell : cells_) cell = analog::track_hold(analog::advance_to(std::move(cell), t), v);
  }

  // Refresh: each slot closes (after setting the DAC) then opens its lock.
  double next_refresh_time() {
    if (slot_ == slots_.size()) {
      cycle_start_ += chip_.regs.refresh_period_s;
      slots_ = fsm::refresh_schedule(chip_, s_.chip.refresh_cells, cycle_start_);
      slot_ = 0;
      slot_closed_ = false;
    }
    if (slots_.empty()) return kNever;
    return slot_closed_ ? slots_[slot_].open_s : slots_[slot_].close_s;
  }

  void refresh_action(double t) {
    const auto& slot = slots_[slot_];
    if (!slot_closed_) {
      if (auto it = s_.host.targets.find(slot.cell); it != s_.host.targets.end()) {
        const double v = s_.host.compensate_injection ? analog::hold_setpoint_for(s_.cell, it->second) : it->second;
        if (v != rails_.v_hold) set_hold(v, t);
      }
      if (!cells_[slot.cell].lock_closed) close_lock(slot.cell, t);
      slot_closed_ = true;
    } else {
      if (cells_[slot.cell].lock_closed) open_lock(slot.cell, t);
      slot_closed_ = false;
      ++slot_;
    }
  }

  void leave(Mode old, double t) {
    if (old == Mode::kLocking) {
      for (int c = 0; c < fsm::kNumCells; ++c) {
        if ((locked_by_fsm_ >> c) & 1u) open_lock(c, t);
      }
      locked_by_fsm_ = 0;
    } else if (old == Mode::kRefresh) {
      if (slot_closed_ && slot_ < slots_.size() && cells_[slots_[slot_].cell].lock_closed) {
        open_lock(slots_[slot_].cell, t);
      }
      slots_.clear();
      slot_ = 0;
      slot_closed_ = false;
    }
  }

  void enter(Mode mode, double t) {
    if (mode == Mode::kPulsing) {
      seg_start_ = t;
    } else if (mode == Mode::kLocking) {
      for (int c = 0; c < fsm::kNumCells; ++c) {
        if (((chip_.regs.lock_mask >> c) & 1u) && !cells_[c].lock_closed) {
          close_lock(c, t);
          locked_by_fsm_ |= 1u << c;
        }
      }
    } else if (mode == Mode::kRefresh) {
      cycle_start_ = t;
      slots_ = fsm::refresh_schedule(chip_, s_.chip.refresh_cells, t);
      slot_ = 0;
      slot_closed_ = false;
    }
  }

  void apply(const ScheduleEntry& e) {
    const double t = e.time_s;
    try {
      switch (e.kind) {
        case ScheduleEntry::Kind::kHold:
          set_hold(e.volts, t);
          return;
        case ScheduleEntry::Kind::kGate:
          for (std::size_t g = 0; g < gates_.size(); ++g) {
            if (gates_[g] == e.gate) gate_volts_[g] = e.volts;
          }
          return;
        default:
          break;
      }
      const Mode old = chip_.mode;
      const auto old_divider = chip_.regs.divider;
      auto result = fsm::step(chip_, e.frame);
      chip_ = result.state;
      if (result.response) out_.responses.push_back({t, *result.response});
      if (chip_.mode != old) {
        leave(old, t);
        enter(chip_.mode, t);
      } else if (chip_.mode == Mode::kPulsing && chip_.regs.divider != old_divider) {
        chip_ = fsm::rebase(chip_);
        seg_start_ = t;
      }
    } catch (const Error& err) {
      const auto where = e.line > 0 ? fmt::format("{}:{}", s_.origin, e.line) : s_.origin;
      throw err.with_context(fmt::format("{} (t={} s)", where, t));
    }
  }

  double gate_voltage(std::size_t g, double t) const {
    const int c = gate_cell_[g];
    return c < 0 ? gate_volts_[g] : analog::output_voltage(cells_[c], t);
  }

  double instantaneous_power() const {
    const auto& r = chip_.regs;
    double p = model_.static_floor;
    if (!r.clock_enabled()) return p;
    const double f = fsm::divided_frequency(chip_);
    p += model_.clock_coeff * f;
    if (r.fsm_enabled()) p += model_.fsm_coeff * f;
    if (chip_.mode == Mode::kPulsing && r.pulse_mask != 0) {
      // Plate transitions per tick over the cyclic pattern; two per cycle.
      const int len = r.pattern_len;
      int flips = 0;
      for (int k = 0; k < len; ++k) flips += r.playback_bit(k) != r.playback_bit((k + 1) % len) ? 1 : 0;
      const double cycles_per_s = f * flips / len / 2.0;
      const double swing = analog::pulse_amplitude(s_.cell, rails_);
      for (int c = 0; c < fsm::kNumCells; ++c) {
        if ((r.pulse_mask >> c) & 1u) p += thermal::cell_power(cycles_per_s, swing, model_);
      }
    }
    return p;
  }

  void sample_grid(double t) {
    out_.time_s.push_back(t);
    for (std::size_t i = 0; i < out_.cells.size(); ++i) {
      out_.cell_volts[i].push_back(analog::output_voltage(cells_[out_.cells[i]], t));
    }
    const double p = instantaneous_power();
    out_.power_watts.push_back(p);
    out_.temperature_k.push_back(thermal::temperature(p, cal_));
  }

  void sample_readout(double t) {
    const auto row = static_cast<Eigen::Index>(read_i_);
    const auto& env = s_.readout.envelope_cell;
    for (std::size_t g = 0; g < gates_.size(); ++g) {
      const auto col = static_cast<Eigen::Index>(g);
      const double v = gate_voltage(g, t);
      pulsed_(row, col) = v;
      if (!env) continue;
      if (gate_cell_[g] == *env) {
        low_(row, col) = analog::settled_output(cells_[*env], rails_, fsm::FgLevel::kLow, t);
        high_(row, col) = analog::settled_output(cells_[*env], rails_, fsm::FgLevel::kHigh, t);
      } else {
        low_(row, col) = v;
        high_(row, col) = v;
      }
    }
  }

  void finish_readout() {
    if (!s_.readout.enabled) return;
    const auto& ro = s_.readout;
    const double dt = 1.0 / ro.tank.sample_rate_hz;
    const auto axis = static_cast<Eigen::Index>(
        std::find(gates_.begin(), gates_.end(), ro.axis_gate) - gates_.begin());

    auto trace = [&](const Eigen::MatrixXd& volts) {
      device::GateTrace gt{ro.start_s, dt, gates_, volts};
      auto sig = device::readout(dot_, ro.tank, gt);
      device::ReadoutTrace rt;
      rt.time_s.resize(n_readout_);
      rt.v_sdp.resize(n_readout_);
      for (std::size_t i = 0; i < n_readout_; ++i) {
        rt.time_s[i] = readout_time(i);
        rt.v_sdp[i] = volts(static_cast<Eigen::Index>(i), axis);
      }
      rt.signal = std::move(sig.values);
      return rt;
    };
    out_.readout = trace(pulsed_);
    out_.readout_export_every = ro.export_every;
    if (ro.envelope_cell) {
      out_.envelope = device::envelope_check(dot_, ro.tank, *out_.readout, trace(low_), trace(high_));
    }
  }

  void project() {
    if (!s_.projection) return;
    const auto& p = *s_.projection;
    out_.feasibility = thermal::feasibility_map(p.n_cells, p.f_hz, p.swing, model_, s_.power.budget);
    for (double a : p.amplitudes) {
      for (double f : p.f_hz) out_.amplitude.push_back({a, f, thermal::cell_power(f, a, model_)});
    }
    if (s_.power.budget.coax_power_per_line) {
      for (double n : p.n_cells) out_.coax.emplace_back(n, thermal::coax_comparison(n, s_.power.budget));
    }
  }

  const Scenario& s_;
  thermal::PowerModel model_;
  thermal::ThermalCalibration cal_;
  device::DotDevice dot_;
  analog::SupplyRails rails_;
  fsm::ChipState chip_;
  std::array<analog::ClfgCell, fsm::kNumCells> cells_;

  std::vector<std::string> gates_;
  std::vector<int> gate_cell_;
  std::vector<double> gate_volts_;

  std::vector<ScheduleEntry> timeline_;
  std::size_t next_entry_ = 0;

  double seg_start_ = 0.0;
  std::uint32_t locked_by_fsm_ = 0;

  std::vector<fsm::RefreshSlot> slots_;
  std::size_t slot_ = 0;
  bool slot_closed_ = false;
  double cycle_start_ = 0.0;

  std::size_t n_grid_ = 0, grid_i_ = 0;
  std::size_t n_readout_ = 0, read_i_ = 0;
  Eigen::MatrixXd pulsed_, low_, high_;

  TraceBundle out_;
};

}  // namespace

TraceBundle run(const Scenario& s) { return Runner(s).run(); }

RunSummary summarize(const TraceBundle& b, double value) {
  RunSummary r;
  r.value = value;
  for (const auto& series : b.cell_volts) {
    if (series.empty()) {
      r.final_volts.push_back(std::nan(""));
      r.drift_v_per_s.push_back(std::nan(""));
      continue;
    }
    r.final_volts.push_back(series.back());
    const double span = b.time_s.back() - b.time_s.front();
    r.drift_v_per_s.push_back(span > 0.0 ? (series.back() - series.front()) / span : 0.0);
  }
  if (!b.power_watts.empty()) {
    double sum = 0.0;
    for (double p : b.power_watts) sum += p;
    r.mean_power_watts = sum / static_cast<double>(b.power_watts.size());
    r.max_temperature_k = *std::max_element(b.temperature_k.begin(), b.temperature_k.end());
  }
  if (b.envelope) r.envelope_deviation = b.envelope->max_deviation;
  return r;
}

std::vector<RunSummary> sweep(const Scenario& s, const std::string& axis, const std::vector<double>& values,
                              unsigned jobs) {
  if (values.empty()) throw Error(ErrorKind::kInvalidScenario, "sweep needs at least one value");
  // Config is resolved up front; workers only read their own Scenario.
  std::vector<Scenario> points;
  points.reserve(values.size());
  for (double v : values) points.push_back(scenario::with_override(s, fmt::format("{}={}", axis, v)));

  std::vector<RunSummary> results(values.size());
  std::vector<std::exception_ptr> errors(values.size());
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(values.size()));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < points.size();) {
      try {
        results[i] = summarize(run(points[i]), values[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace cryoctl::engine
