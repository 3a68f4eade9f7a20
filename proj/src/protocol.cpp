#include "cryoctl/protocol.hpp"

#include <cctype>
#include <charconv>

#include <fmt/format.h>

#include "cryoctl/error.hpp"

namespace cryoctl::protocol {

bool RegisterFile::pattern_bit(int index) const {
  const int from_top = kPatternBits - 1 - index;
  const int word = from_top / 16;
  const int bit_in_word = 15 - from_top % 16;
  return ((pattern[word] >> bit_in_word) & 1u) != 0;
}

std::uint32_t encode_frame(const Frame& f) {
  return (std::uint32_t{f.opcode} << 24) | (std::uint32_t{f.address} << 16) | f.data;
}

Frame decode_frame(std::uint32_t word) {
  Frame f;
  f.opcode = static_cast<std::uint8_t>(word >> 24);
  f.address = static_cast<std::uint8_t>(word >> 16);
  f.data = static_cast<std::uint16_t>(word);
  if (f.opcode > static_cast<std::uint8_t>(Opcode::kExec)) {
    throw Error(ErrorKind::kUnknownOpcode, fmt::format("opcode 0x{:02X}", f.opcode));
  }
  return f;
}

bool is_known_address(std::uint8_t address) {
  return address <= reg::kPulseMaskHi ||
         (address >= reg::kPattern0 && address < reg::kPattern0 + kPatternWords) ||
         address == reg::kPatternLen || address == reg::kRefreshPeriod;
}

namespace {

void set_lo(std::uint32_t& v, std::uint16_t d) { v = (v & 0xFFFF0000u) | d; }
void set_hi(std::uint32_t& v, std::uint16_t d) { v = (v & 0x0000FFFFu) | (std::uint32_t{d} << 16); }

[[noreturn]] void unknown(std::uint8_t address) {
  throw Error(ErrorKind::kUnknownAddress, fmt::format("register 0x{:02X}", address));
}

}  // namespace

RegisterFile apply_write(const RegisterFile& regs, std::uint8_t address, std::uint16_t data) {
  RegisterFile out = regs;
  switch (address) {
    case reg::kCtrl:
      if (data > 0x7) {
        throw Error(ErrorKind::kValueOutOfRange, fmt::format("CTRL=0x{:04X} sets reserved bits", data));
      }
      out.ctrl = data;
      return out;
    case reg::kDivider:
      if (data > kMaxDividerExponent) {
        throw Error(ErrorKind::kValueOutOfRange, fmt::format("DIVIDER={} exceeds 4 bits", data));
      }
      out.divider = data;
      return out;
    case reg::kLockMaskLo: set_lo(out.lock_mask, data); return out;
    case reg::kLockMaskHi: set_hi(out.lock_mask, data); return out;
    case reg::kPulseMaskLo: set_lo(out.pulse_mask, data); return out;
    case reg::kPulseMaskHi: set_hi(out.pulse_mask, data); return out;
    case reg::kPatternLen:
      if (data < 1 || data > kPatternBits) {
        throw Error(ErrorKind::kValueOutOfRange, fmt::format("PATTERN_LEN={} not in [1,128]", data));
      }
      out.pattern_len = data;
      return out;
    case reg::kRefreshPeriod:
      out.refresh_period_s = data;
      return out;
    default:
      if (address >= reg::kPattern0 && address < reg::kPattern0 + kPatternWords) {
        out.pattern[address - reg::kPattern0] = data;
        return out;
      }
      unknown(address);
  }
}

std::uint16_t read_register(const RegisterFile& regs, std::uint8_t address) {
  switch (address) {
    case reg::kCtrl: return regs.ctrl;
    case reg::kDivider: return regs.divider;
    case reg::kLockMaskLo: return static_cast<std::uint16_t>(regs.lock_mask);
    case reg::kLockMaskHi: return static_cast<std::uint16_t>(regs.lock_mask >> 16);
    case reg::kPulseMaskLo: return static_cast<std::uint16_t>(regs.pulse_mask);
    case reg::kPulseMaskHi: return static_cast<std::uint16_t>(regs.pulse_mask >> 16);
    case reg::kPatternLen: return regs.pattern_len;
    case reg::kRefreshPeriod: return regs.refresh_period_s;
    default:
      if (address >= reg::kPattern0 && address < reg::kPattern0 + kPatternWords) {
        return regs.pattern[address - reg::kPattern0];
      }
      unknown(address);
  }
}

std::uint32_t read_response(const RegisterFile& regs, std::uint8_t address) {
  return encode_frame({static_cast<std::uint8_t>(Opcode::kRead), address, read_register(regs, address)});
}

std::uint8_t address_from_name(std::string_view name) {
  if (name == "CTRL") return reg::kCtrl;
  if (name == "DIVIDER") return reg::kDivider;
  if (name == "LOCK_MASK_LO") return reg::kLockMaskLo;
  if (name == "LOCK_MASK_HI") return reg::kLockMaskHi;
  if (name == "PULSE_MASK_LO") return reg::kPulseMaskLo;
  if (name == "PULSE_MASK_HI") return reg::kPulseMaskHi;
  if (name == "PATTERN_LEN") return reg::kPatternLen;
  if (name == "REFRESH_PERIOD") return reg::kRefreshPeriod;
  if (name.size() == 8 && name.substr(0, 7) == "PATTERN" && name[7] >= '0' && name[7] <= '7') {
    return static_cast<std::uint8_t>(reg::kPattern0 + (name[7] - '0'));
  }
  throw Error(ErrorKind::kUnknownAddress, fmt::format("register name '{}'", name));
}

std::string name_from_address(std::uint8_t address) {
  switch (address) {
    case reg::kCtrl: return "CTRL";
    case reg::kDivider: return "DIVIDER";
    case reg::kLockMaskLo: return "LOCK_MASK_LO";
    case reg::kLockMaskHi: return "LOCK_MASK_HI";
    case reg::kPulseMaskLo: return "PULSE_MASK_LO";
    case reg::kPulseMaskHi: return "PULSE_MASK_HI";
    case reg::kPatternLen: return "PATTERN_LEN";
    case reg::kRefreshPeriod: return "REFRESH_PERIOD";
    default:
      if (address >= reg::kPattern0 && address < reg::kPattern0 + kPatternWords) {
        return fmt::format("PATTERN{}", address - reg::kPattern0);
      }
      unknown(address);
  }
}

std::vector<StreamWord> parse_command_stream(std::istream& in) {
  std::vector<StreamWord> words;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view body(line);
    if (auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.front()))) body.remove_prefix(1);
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.remove_suffix(1);
    if (body.empty()) continue;

    bool ok = body.size() == 8;
    std::uint32_t word = 0;
    if (ok) {
      for (char c : body) ok = ok && std::isxdigit(static_cast<unsigned char>(c));
    }
    if (ok) {
      auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), word, 16);
      ok = ec == std::errc{} && ptr == body.data() + body.size();
    }
    if (!ok) {
      throw Error(ErrorKind::kMalformedStream,
                  fmt::format("line {}: expected 8 hex digits, got '{}'", lineno, body));
    }
    words.push_back({word, lineno});
  }
  return words;
}

std::string format_word(std::uint32_t word) { return fmt::format("{:08X}", word); }

}  // namespace cryoctl::protocol
