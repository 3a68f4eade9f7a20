#pragma once

// Serial command link and register map.
//
// A frame is one 32-bit word shifted MSB first:
//
//   31      24 23     16 15                0
//   +---------+---------+------------------+
//   | opcode  | address |       data       |
//   +---------+---------+------------------+
//
// The register map is a reconstruction; the real chip's command set is not
// public.

#include <array>
#include <cstdint>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace cryoctl::protocol {

enum class Opcode : std::uint8_t {
  kNop = 0x00,
  kWrite = 0x01,
  kRead = 0x02,
  kExec = 0x03,
};

struct Frame {
  std::uint8_t opcode = 0;
  std::uint8_t address = 0;
  std::uint16_t data = 0;

  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Register addresses.
namespace reg {
inline constexpr std::uint8_t kCtrl = 0x00;
inline constexpr std::uint8_t kDivider = 0x01;
inline constexpr std::uint8_t kLockMaskLo = 0x02;
inline constexpr std::uint8_t kLockMaskHi = 0x03;
inline constexpr std::uint8_t kPulseMaskLo = 0x04;
inline constexpr std::uint8_t kPulseMaskHi = 0x05;
inline constexpr std::uint8_t kPattern0 = 0x10;  // PATTERN[0..7] at 0x10..0x17
inline constexpr std::uint8_t kPatternLen = 0x20;
inline constexpr std::uint8_t kRefreshPeriod = 0x21;
}  // namespace reg

/// CTRL bits.
namespace ctrl {
inline constexpr std::uint16_t kClockEnable = 1u << 0;
inline constexpr std::uint16_t kFsmEnable = 1u << 1;
inline constexpr std::uint16_t kPlaybackEnable = 1u << 2;
}  // namespace ctrl

/// EXEC sub-commands, carried in the address field of an EXEC frame.
namespace exec {
inline constexpr std::uint8_t kGo = 0x00;       // start playback or locking per CTRL/LOCK_MASK
inline constexpr std::uint8_t kRefresh = 0x01;  // start round-robin refresh
inline constexpr std::uint8_t kHalt = 0xFF;     // return to IDLE
}  // namespace exec

inline constexpr int kPatternBits = 128;
inline constexpr int kPatternWords = 8;
inline constexpr int kMaxDividerExponent = 15;

struct RegisterFile {
  std::uint16_t ctrl = 0;
  std::uint16_t divider = 0;
  std::uint32_t lock_mask = 0;
  std::uint32_t pulse_mask = 0;
  std::array<std::uint16_t, kPatternWords> pattern{};  // pattern[0] = bits 127..112
  std::uint16_t pattern_len = kPatternBits;
  std::uint16_t refresh_period_s = 120;

  bool clock_enabled() const { return (ctrl & ctrl::kClockEnable) != 0; }
  bool fsm_enabled() const { return (ctrl & ctrl::kFsmEnable) != 0; }
  bool playback_enabled() const { return (ctrl & ctrl::kPlaybackEnable) != 0; }

  /// Bit `index` of the 128-bit pattern, 127 = most significant.
  bool pattern_bit(int index) const;

  /// Bit emitted at playback position `k` (0-based); playback starts at bit 127.
  bool playback_bit(int k) const { return pattern_bit(kPatternBits - 1 - k); }

  friend bool operator==(const RegisterFile&, const RegisterFile&) = default;
};

std::uint32_t encode_frame(const Frame& f);

/// Throws Error(kUnknownOpcode) for opcodes outside NOP/WRITE/READ/EXEC.
Frame decode_frame(std::uint32_t word);

/// Returns a copy of `regs` with one register written. The input is never
/// modified, so a rejected write has no effect.
RegisterFile apply_write(const RegisterFile& regs, std::uint8_t address, std::uint16_t data);

std::uint16_t read_register(const RegisterFile& regs, std::uint8_t address);

bool is_known_address(std::uint8_t address);

/// Response to a READ: same layout, opcode READ, data = register value.
std::uint32_t read_response(const RegisterFile& regs, std::uint8_t address);

/// Register name lookup for config files ("DIVIDER", "PATTERN3", ...).
std::uint8_t address_from_name(std::string_view name);
std::string name_from_address(std::uint8_t address);

/// One word of a command stream together with its 1-based source line.
struct StreamWord {
  std::uint32_t word;
  int line;
};

/// Parses the command stream format: one 8-hex-digit word per line, `#`
/// starts a comment, blank lines ignored. Throws Error(kMalformedStream)
/// naming the offending line.
std::vector<StreamWord> parse_command_stream(std::istream& in);

std::string format_word(std::uint32_t word);

}  // namespace cryoctl::protocol
