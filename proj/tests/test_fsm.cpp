#include <bit>
#include <cmath>
#include <random>

#include "doctest.h"

#include "cryoctl/error.hpp"
#include "cryoctl/fsm.hpp"

using namespace cryoctl;
using namespace cryoctl::fsm;
using protocol::Frame;
using protocol::Opcode;
namespace reg = protocol::reg;

namespace {

Frame write(std::uint8_t addr, std::uint16_t data) {
  return {static_cast<std::uint8_t>(Opcode::kWrite), addr, data};
}
Frame exec_go() { return {static_cast<std::uint8_t>(Opcode::kExec), protocol::exec::kGo, 0}; }
Frame exec_refresh() { return {static_cast<std::uint8_t>(Opcode::kExec), protocol::exec::kRefresh, 0}; }
Frame exec_halt() { return {static_cast<std::uint8_t>(Opcode::kExec), protocol::exec::kHalt, 0}; }

ChipState run(ChipState s, std::initializer_list<Frame> frames) {
  for (const auto& f : frames) s = step(s, f).state;
  return s;
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

/// Pattern "10" on cell 0 at divider 8, playing.
ChipState square_wave_state() {
  return run({}, {write(reg::kDivider, 8), write(reg::kPattern0, 0x8000), write(reg::kPatternLen, 2),
                  write(reg::kPulseMaskLo, 0x0001), write(reg::kCtrl, 0x7), exec_go()});
}

}  // namespace

TEST_CASE("writes never change mode from IDLE") {
  auto r = step(ChipState{}, write(reg::kDivider, 8));
  CHECK(r.state.mode == Mode::kIdle);
  CHECK(r.state.regs.divider == 8);
  CHECK_FALSE(r.response.has_value());
}

TEST_CASE("EXEC transitions") {
  ChipState s = run({}, {write(reg::kCtrl, 0x7)});
  auto pulsing = step(s, exec_go()).state;
  CHECK(pulsing.mode == Mode::kPulsing);
  CHECK(pulsing.pattern_cursor == 0);

  CHECK(kind_of([&] { step(pulsing, exec_go()); }) == ErrorKind::kIllegalTransition);
  CHECK(kind_of([&] { step(pulsing, exec_refresh()); }) == ErrorKind::kIllegalTransition);
  CHECK(step(pulsing, exec_halt()).state.mode == Mode::kIdle);

  // Locking: playback disabled, non-empty mask.
  ChipState l = run({}, {write(reg::kCtrl, 0x3), write(reg::kLockMaskLo, 0x000F)});
  CHECK(step(l, exec_go()).state.mode == Mode::kLocking);

  // Nothing to do.
  ChipState idle = run({}, {write(reg::kCtrl, 0x3)});
  CHECK(kind_of([&] { step(idle, exec_go()); }) == ErrorKind::kIllegalTransition);

  // FSM disabled.
  ChipState off = run({}, {write(reg::kCtrl, 0x5)});
  CHECK(kind_of([&] { step(off, exec_go()); }) == ErrorKind::kIllegalTransition);

  // Playback without clock.
  ChipState noclk = run({}, {write(reg::kCtrl, 0x6)});
  CHECK(kind_of([&] { step(noclk, exec_go()); }) == ErrorKind::kClockDisabled);

  ChipState r = step(idle, exec_refresh()).state;
  CHECK(r.mode == Mode::kRefresh);
  ChipState zero_period = run(idle, {write(reg::kRefreshPeriod, 0)});
  CHECK(kind_of([&] { step(zero_period, exec_refresh()); }) == ErrorKind::kIllegalTransition);
}

TEST_CASE("clearing playback-enable stops playback") {
  auto s = square_wave_state();
  CHECK(step(s, write(reg::kCtrl, 0x3)).state.mode == Mode::kIdle);
  CHECK(step(s, write(reg::kCtrl, 0x6)).state.mode == Mode::kIdle);
  CHECK(step(s, write(reg::kDivider, 5)).state.mode == Mode::kPulsing);
}

TEST_CASE("rejected frames leave the state untouched") {
  auto s = square_wave_state();
  const ChipState before = s;
  CHECK_THROWS_AS(step(s, exec_go()), Error);
  CHECK_THROWS_AS(step(s, write(reg::kPatternLen, 0)), Error);
  CHECK_THROWS_AS(step(s, write(0x7F, 0)), Error);
  CHECK(s == before);
}

TEST_CASE("READ returns a response word") {
  auto s = run({}, {write(reg::kDivider, 8)});
  auto r = step(s, {static_cast<std::uint8_t>(Opcode::kRead), reg::kDivider, 0});
  REQUIRE(r.response.has_value());
  CHECK(*r.response == 0x02010008u);
  CHECK(r.state == s);
}

TEST_CASE("divided frequency") {
  ChipState s = run({}, {write(reg::kCtrl, 0x1), write(reg::kDivider, 8)});
  CHECK(divided_frequency(s) == doctest::Approx(140e3).epsilon(1e-15));
  CHECK(divided_frequency(s) == 35.84e6 / 256.0);

  s = run(s, {write(reg::kDivider, 0)});
  CHECK(divided_frequency(s) == s.master_freq_hz);

  const double f4 = divided_frequency(run(s, {write(reg::kDivider, 4)}));
  const double f5 = divided_frequency(run(s, {write(reg::kDivider, 5)}));
  CHECK(f5 * 2.0 == f4);

  CHECK(kind_of([] { divided_frequency(ChipState{}); }) == ErrorKind::kClockDisabled);
}

TEST_CASE("tick times do not drift over 1e6 ticks") {
  ChipState s = run({}, {write(reg::kCtrl, 0x1), write(reg::kDivider, 8)});
  const double f = divided_frequency(s);
  for (std::uint64_t k = 0; k <= 1000000; k += 997) {
    const double t = tick_time(s, k);
    // Exact rational k * 256 / 35.84e6, one rounding.
    CHECK(t == static_cast<double>(k) * 256.0 / 35.84e6);
    CHECK(std::abs(t * f - static_cast<double>(k)) < 1e-6);
  }
}

TEST_CASE("playback of a square wave") {
  auto s = square_wave_state();
  auto ev = playback(s, 1e-3);
  REQUIRE(ev.size() == 140);
  for (std::size_t i = 0; i < ev.size(); ++i) {
    CHECK(ev[i].cell == 0);
    CHECK(std::get<FgLevel>(ev[i].action) == (i % 2 == 0 ? FgLevel::kHigh : FgLevel::kLow));
    if (i > 0) CHECK(ev[i].time_s > ev[i - 1].time_s);
  }
  CHECK(playback(s, 0.0).empty());
  CHECK(kind_of([] { playback(ChipState{}, 1e-3); }) == ErrorKind::kNotInPlayback);
}

TEST_CASE("six pulse-enabled cells get the same level each tick") {
  auto s = run(square_wave_state(), {write(reg::kPulseMaskLo, 0x003F)});
  auto ev = playback(s, 1e-3);
  REQUIRE(ev.size() == 140 * 6);
  for (std::size_t tick = 0; tick < 140; ++tick) {
    const auto& first = ev[tick * 6];
    for (int c = 0; c < 6; ++c) {
      const auto& e = ev[tick * 6 + c];
      CHECK(e.cell == c);
      CHECK(e.time_s == first.time_s);
      CHECK(e.action == first.action);
    }
  }
}

TEST_CASE("event count and periodicity for random patterns") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> half(0, 0xFFFF), len(1, 128), div(0, 12);
  std::uniform_int_distribution<std::uint32_t> mask(0, 0xFFFFFFFFu);
  for (int trial = 0; trial < 50; ++trial) {
    ChipState s;
    s = run(s, {write(reg::kCtrl, 0x7), write(reg::kDivider, static_cast<std::uint16_t>(div(rng))),
                write(reg::kPatternLen, static_cast<std::uint16_t>(len(rng)))});
    for (int w = 0; w < 8; ++w) s = run(s, {write(reg::kPattern0 + w, static_cast<std::uint16_t>(half(rng)))});
    const std::uint32_t m = mask(rng) & 0xFF;
    s = run(s, {write(reg::kPulseMaskLo, static_cast<std::uint16_t>(m)), exec_go()});

    const int L = s.regs.pattern_len;
    const double f = divided_frequency(s);
    const std::uint64_t ticks = 3 * static_cast<std::uint64_t>(L) + 5;
    const double duration = (static_cast<double>(ticks) + 0.5) / f;
    auto ev = playback(s, duration);
    const auto per_tick = static_cast<std::size_t>(std::popcount(m));
    REQUIRE(ev.size() == ticks * per_tick);
    if (per_tick == 0) continue;
    for (std::size_t i = 0; i + L * per_tick < ev.size(); ++i) {
      CHECK(ev[i].action == ev[i + L * per_tick].action);
    }

    // Splitting playback with advance() reproduces the same stream.
    const std::uint64_t split = ticks / 2;
    auto a = playback_ticks(s, split);
    auto b = playback_ticks(advance(s, split), ticks - split);
    a.insert(a.end(), b.begin(), b.end());
    CHECK(a == ev);

    // Determinism.
    CHECK(playback(s, duration) == ev);
  }
}

TEST_CASE("ticks_before excludes a tick on the boundary") {
  auto s = square_wave_state();
  const double T = tick_time(s, 1);
  CHECK(ticks_before(s, 10 * T) == 10);
  CHECK(ticks_before(s, 10.5 * T) == 11);
  CHECK(ticks_before(s, 0.0) == 0);
  CHECK(ticks_before(s, 1e-3) == 140);
}

TEST_CASE("refresh schedule") {
  ChipState s;
  s.regs.refresh_period_s = 120;
  auto slots = refresh_schedule(s, 32, 10.0);
  REQUIRE(slots.size() == 32);
  for (int k = 0; k < 32; ++k) {
    CHECK(slots[k].cell == k);
    CHECK(slots[k].close_s == 10.0 + k * 3.75);
    CHECK(slots[k].open_s > slots[k].close_s);
    if (k > 0) CHECK(slots[k].close_s >= slots[k - 1].open_s);  // one lock closed at a time
  }

  auto one = refresh_schedule(s, 1, 0.0);
  REQUIRE(one.size() == 1);
  CHECK(one[0].close_s == 0.0);

  s.regs.lock_mask = 0b1010;
  auto masked = refresh_schedule(s, 32, 0.0);
  REQUIRE(masked.size() == 2);
  CHECK(masked[0].cell == 1);
  CHECK(masked[1].cell == 3);
  CHECK(masked[1].close_s == 60.0);
}

TEST_CASE("refresh covers each selected cell exactly once without overlap") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> n(1, 32), period(1, 600);
  std::uniform_real_distribution<double> dwell(1e-6, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    ChipState s;
    s.regs.refresh_period_s = static_cast<std::uint16_t>(period(rng));
    s.refresh_dwell_s = dwell(rng);
    const int cells = n(rng);
    auto slots = refresh_schedule(s, cells, 5.0);
    REQUIRE(static_cast<int>(slots.size()) == cells);
    for (int k = 0; k < cells; ++k) {
      CHECK(slots[k].cell == k);
      if (k + 1 < cells) CHECK(slots[k].open_s <= slots[k + 1].close_s);
    }
    CHECK(slots.back().open_s <= 5.0 + s.regs.refresh_period_s);
  }
}
