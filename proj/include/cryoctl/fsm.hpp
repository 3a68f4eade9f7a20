#pragma once

// On-chip controller: ring-oscillator clock with a power-of-two divider, a
// four-mode state machine, and playback of the shared 128-bit pattern to the
// pulse-enabled cells.
//
// Transition table (anything not listed is IllegalTransition):
//
//   any     NOP / READ             -> unchanged
//   any     WRITE                  -> unchanged, except PULSING drops to IDLE
//                                     when CTRL clears clock or playback enable
//   IDLE    EXEC GO, playback on   -> PULSING   (needs fsm + clock enable)
//   IDLE    EXEC GO, LOCK_MASK!=0  -> LOCKING   (needs fsm enable)
//   IDLE    EXEC REFRESH           -> REFRESH   (needs fsm enable, period > 0)
//   any     EXEC HALT              -> IDLE

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "cryoctl/protocol.hpp"

namespace cryoctl::fsm {

enum class Mode { kIdle, kLocking, kPulsing, kRefresh };

const char* to_string(Mode m);

inline constexpr int kNumCells = 32;
inline constexpr double kDefaultMasterFreqHz = 35.84e6;

struct ChipState {
  Mode mode = Mode::kIdle;
  protocol::RegisterFile regs;
  double master_freq_hz = kDefaultMasterFreqHz;
  double refresh_dwell_s = 1e-3;  // lock-closed time per cell during refresh
  std::uint64_t tick_count = 0;   // divided-clock ticks since the playback segment began
  int pattern_cursor = 0;

  friend bool operator==(const ChipState&, const ChipState&) = default;
};

enum class FgLevel { kLow, kHigh };
enum class LockAction { kClose, kOpen };

struct SwitchEvent {
  double time_s = 0.0;
  int cell = 0;
  std::variant<FgLevel, LockAction> action;

  friend bool operator==(const SwitchEvent&, const SwitchEvent&) = default;
};

struct StepResult {
  ChipState state;
  std::optional<std::uint32_t> response;
};

/// Applies one decoded frame. Pure: `state` is never modified, so a rejected
/// frame leaves the caller's state untouched.
StepResult step(const ChipState& state, const protocol::Frame& frame);

/// master / 2^DIVIDER. Throws Error(kClockDisabled) when CTRL bit 0 is clear.
double divided_frequency(const ChipState& state);

/// Tick period as an exact function of the tick index, k * 2^n / f_master.
/// Computed from the integer index so there is no accumulated drift.
double tick_time(const ChipState& state, std::uint64_t tick_index);

/// Number of ticks k >= 0 with tick_time(k) < duration_s. A tick landing
/// exactly on the boundary is excluded.
std::uint64_t ticks_before(const ChipState& state, double duration_s);

/// Events for the next `n_ticks` ticks from the state's cursor. Times are
/// relative to the start of the current playback segment.
std::vector<SwitchEvent> playback_ticks(const ChipState& state, std::uint64_t n_ticks);

/// floor(duration_s * f_div) ticks of playback, one event per tick per
/// pulse-enabled cell. Throws Error(kNotInPlayback) outside PULSING.
std::vector<SwitchEvent> playback(const ChipState& state, double duration_s);

/// Moves the tick counter and pattern cursor forward by `n_ticks`.
ChipState advance(const ChipState& state, std::uint64_t n_ticks);

/// Restarts tick timing (tick_count = 0) without touching the cursor; used
/// when the divider changes mid-playback.
ChipState rebase(const ChipState& state);

struct RefreshSlot {
  double close_s;
  double open_s;
  int cell;
};

/// One round-robin refresh cycle starting at `now_s`: the selected cells
/// (cells below `n_cells`, filtered by LOCK_MASK when it is non-zero) are
/// re-locked in ascending order, evenly spaced over REFRESH_PERIOD. Each lock
/// stays closed for min(refresh_dwell_s, slot / 2).
std::vector<RefreshSlot> refresh_schedule(const ChipState& state, int n_cells, double now_s);

}  // namespace cryoctl::fsm
