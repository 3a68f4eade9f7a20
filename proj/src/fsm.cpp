#include "cryoctl/fsm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <fmt/format.h>

#include "cryoctl/error.hpp"

namespace cryoctl::fsm {

using protocol::Frame;
using protocol::Opcode;

const char* to_string(Mode m) {
  switch (m) {
    case Mode::kIdle: return "IDLE";
    case Mode::kLocking: return "LOCKING";
    case Mode::kPulsing: return "PULSING";
    case Mode::kRefresh: return "REFRESH";
  }
  return "?";
}

namespace {

[[noreturn]] void illegal(Mode mode, const Frame& frame, const char* why) {
  throw Error(ErrorKind::kIllegalTransition,
              fmt::format("{} + opcode 0x{:02X} addr 0x{:02X}: {}", to_string(mode), frame.opcode,
                          frame.address, why));
}

ChipState enter(const ChipState& s, Mode mode) {
  ChipState out = s;
  out.mode = mode;
  out.tick_count = 0;
  out.pattern_cursor = 0;
  return out;
}

ChipState exec(const ChipState& s, const Frame& frame) {
  const auto& regs = s.regs;
  if (frame.address == protocol::exec::kHalt) return enter(s, Mode::kIdle);

  if (s.mode != Mode::kIdle) illegal(s.mode, frame, "controller busy");
  if (!regs.fsm_enabled()) illegal(s.mode, frame, "FSM disabled");

  switch (frame.address) {
    case protocol::exec::kGo:
      if (regs.playback_enabled()) {
        if (!regs.clock_enabled()) {
          throw Error(ErrorKind::kClockDisabled, "playback requested with clock disabled");
        }
        return enter(s, Mode::kPulsing);
      }
      if (regs.lock_mask != 0) return enter(s, Mode::kLocking);
      illegal(s.mode, frame, "nothing to execute (no playback, empty LOCK_MASK)");
    case protocol::exec::kRefresh:
      if (regs.refresh_period_s == 0) illegal(s.mode, frame, "REFRESH_PERIOD is zero");
      return enter(s, Mode::kRefresh);
    default:
      throw Error(ErrorKind::kUnknownAddress, fmt::format("EXEC sub-command 0x{:02X}", frame.address));
  }
}

}  // namespace

StepResult step(const ChipState& state, const Frame& frame) {
  switch (static_cast<Opcode>(frame.opcode)) {
    case Opcode::kNop:
      return {state, std::nullopt};
    case Opcode::kRead:
      return {state, protocol::read_response(state.regs, frame.address)};
    case Opcode::kWrite: {
      ChipState out = state;
      out.regs = protocol::apply_write(state.regs, frame.address, frame.data);
      if (out.pattern_cursor >= out.regs.pattern_len) out.pattern_cursor = 0;
      if (state.mode == Mode::kPulsing && frame.address == protocol::reg::kCtrl &&
          (!out.regs.playback_enabled() || !out.regs.clock_enabled())) {
        out = enter(out, Mode::kIdle);
      }
      return {out, std::nullopt};
    }
    case Opcode::kExec:
      return {exec(state, frame), std::nullopt};
  }
  throw Error(ErrorKind::kUnknownOpcode, fmt::format("opcode 0x{:02X}", frame.opcode));
}

double divided_frequency(const ChipState& state) {
  if (!state.regs.clock_enabled()) throw Error(ErrorKind::kClockDisabled, "CTRL clock-enable is clear");
  return std::ldexp(state.master_freq_hz, -static_cast<int>(state.regs.divider));
}

double tick_time(const ChipState& state, std::uint64_t tick_index) {
  return std::ldexp(static_cast<double>(tick_index), static_cast<int>(state.regs.divider)) /
         state.master_freq_hz;
}

std::uint64_t ticks_before(const ChipState& state, double duration_s) {
  if (!(duration_s > 0.0)) return 0;
  const double x = duration_s * divided_frequency(state);
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, nearest)) return static_cast<std::uint64_t>(nearest);
  return static_cast<std::uint64_t>(std::ceil(x));
}

std::vector<SwitchEvent> playback_ticks(const ChipState& state, std::uint64_t n_ticks) {
  if (state.mode != Mode::kPulsing) {
    throw Error(ErrorKind::kNotInPlayback, fmt::format("mode is {}", to_string(state.mode)));
  }
  divided_frequency(state);  // clock must be running

  const std::uint32_t mask = state.regs.pulse_mask;
  const int len = state.regs.pattern_len;
  std::vector<SwitchEvent> events;
  events.reserve(n_ticks * static_cast<std::size_t>(std::popcount(mask)));

  int cursor = state.pattern_cursor;
  for (std::uint64_t j = 0; j < n_ticks; ++j) {
    const double t = tick_time(state, state.tick_count + j);
    const FgLevel level = state.regs.playback_bit(cursor) ? FgLevel::kHigh : FgLevel::kLow;
    for (int cell = 0; cell < kNumCells; ++cell) {
      if ((mask >> cell) & 1u) events.push_back({t, cell, level});
    }
    cursor = (cursor + 1) % len;
  }
  return events;
}

std::vector<SwitchEvent> playback(const ChipState& state, double duration_s) {
  if (state.mode != Mode::kPulsing) {
    throw Error(ErrorKind::kNotInPlayback, fmt::format("mode is {}", to_string(state.mode)));
  }
  if (!(duration_s > 0.0)) return {};
  const double x = duration_s * divided_frequency(state);
  // Guard against x landing one ulp under an integer (1e-3 * 140e3).
  const auto n = static_cast<std::uint64_t>(std::floor(x + 1e-9 * std::max(1.0, x)));
  return playback_ticks(state, n);
}

ChipState advance(const ChipState& state, std::uint64_t n_ticks) {
  ChipState out = state;
  out.tick_count += n_ticks;
  out.pattern_cursor = static_cast<int>((state.pattern_cursor + n_ticks) % state.regs.pattern_len);
  return out;
}

ChipState rebase(const ChipState& state) {
  ChipState out = state;
  out.tick_count = 0;
  return out;
}

std::vector<RefreshSlot> refresh_schedule(const ChipState& state, int n_cells, double now_s) {
  n_cells = std::clamp(n_cells, 0, kNumCells);
  std::vector<int> cells;
  for (int c = 0; c < n_cells; ++c) {
    if (state.regs.lock_mask == 0 || ((state.regs.lock_mask >> c) & 1u)) cells.push_back(c);
  }
  std::vector<RefreshSlot> slots;
  if (cells.empty() || state.regs.refresh_period_s == 0) return slots;

  const double period = state.regs.refresh_period_s;
  const double count = static_cast<double>(cells.size());
  const double dwell = std::min(state.refresh_dwell_s, 0.5 * period / count);
  slots.reserve(cells.size());
  for (std::size_t j = 0; j < cells.size(); ++j) {
    const double close = now_s + static_cast<double>(j) * period / count;
    slots.push_back({close, close + dwell, cells[j]});
  }
  return slots;
}

}  // namespace cryoctl::fsm
