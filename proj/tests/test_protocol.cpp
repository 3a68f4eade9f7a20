#include <random>
#include <sstream>

#include "doctest.h"

#include "cryoctl/error.hpp"
#include "cryoctl/protocol.hpp"

using namespace cryoctl;
using namespace cryoctl::protocol;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected cryoctl::Error");
  return ErrorKind::kInvalidParameter;
}

}  // namespace

TEST_CASE("encode_frame packs 8/8/16 MSB first") {
  CHECK(encode_frame({0, 0, 0}) == 0x00000000u);
  CHECK(encode_frame({1, 0x01, 8}) == 0x01010008u);
  CHECK(encode_frame({0x03, 0xFF, 0xFFFF}) == 0x03FFFFFFu);
}

TEST_CASE("decode_frame") {
  auto nop = decode_frame(0x00000000u);
  CHECK(nop.opcode == static_cast<std::uint8_t>(Opcode::kNop));

  auto w = decode_frame(0x01100ABCu);
  CHECK(w.opcode == static_cast<std::uint8_t>(Opcode::kWrite));
  CHECK(w.address == 0x10);
  CHECK(w.data == 0x0ABC);

  CHECK(kind_of([] { decode_frame(0xFF000000u); }) == ErrorKind::kUnknownOpcode);
  CHECK(kind_of([] { decode_frame(0x04000000u); }) == ErrorKind::kUnknownOpcode);
}

TEST_CASE("round trip over random valid frames") {
  std::mt19937_64 rng(0xC0FFEE);
  std::uniform_int_distribution<int> op(0, 3), byte(0, 255), half(0, 0xFFFF);
  for (int i = 0; i < 100000; ++i) {
    Frame f{static_cast<std::uint8_t>(op(rng)), static_cast<std::uint8_t>(byte(rng)),
            static_cast<std::uint16_t>(half(rng))};
    REQUIRE(decode_frame(encode_frame(f)) == f);
  }
}

TEST_CASE("apply_write read-after-write") {
  RegisterFile regs;
  auto r = apply_write(regs, reg::kDivider, 8);
  CHECK(read_register(r, reg::kDivider) == 8);
  CHECK(regs.divider == 0);  // input untouched

  r = apply_write(r, reg::kLockMaskLo, 0x1234);
  r = apply_write(r, reg::kLockMaskHi, 0xABCD);
  CHECK(r.lock_mask == 0xABCD1234u);
  CHECK(read_register(r, reg::kLockMaskHi) == 0xABCD);
}

TEST_CASE("pattern bit order: PATTERN[0] holds bits 127..112, playback starts at 127") {
  RegisterFile regs;
  for (int i = 0; i < kPatternWords; ++i) regs = apply_write(regs, reg::kPattern0 + i, 0xAAAA);
  for (int k = 0; k < kPatternBits; ++k) CHECK(regs.playback_bit(k) == (k % 2 == 0));
  CHECK(regs.pattern_bit(127));
  CHECK_FALSE(regs.pattern_bit(0));

  RegisterFile one;
  one = apply_write(one, reg::kPattern0 + 7, 0x0001);
  CHECK(one.pattern_bit(0));
  CHECK(one.playback_bit(127));
  one = apply_write(RegisterFile{}, reg::kPattern0, 0x8000);
  CHECK(one.playback_bit(0));
}

TEST_CASE("apply_write range and address checks") {
  RegisterFile regs;
  CHECK(kind_of([&] { apply_write(regs, reg::kPatternLen, 0); }) == ErrorKind::kValueOutOfRange);
  CHECK(kind_of([&] { apply_write(regs, reg::kPatternLen, 129); }) == ErrorKind::kValueOutOfRange);
  CHECK(apply_write(regs, reg::kPatternLen, 128).pattern_len == 128);
  CHECK(apply_write(regs, reg::kPatternLen, 1).pattern_len == 1);
  CHECK(kind_of([&] { apply_write(regs, reg::kDivider, 16); }) == ErrorKind::kValueOutOfRange);
  CHECK(kind_of([&] { apply_write(regs, 0x06, 1); }) == ErrorKind::kUnknownAddress);
  CHECK(kind_of([&] { apply_write(regs, 0x18, 1); }) == ErrorKind::kUnknownAddress);
  CHECK(kind_of([&] { read_register(regs, 0x22); }) == ErrorKind::kUnknownAddress);
}

TEST_CASE("writes are idempotent and rejected writes have no effect") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> byte(0, 255), half(0, 0xFFFF);
  RegisterFile regs;
  for (int i = 0; i < 20000; ++i) {
    const auto addr = static_cast<std::uint8_t>(byte(rng));
    const auto data = static_cast<std::uint16_t>(half(rng));
    const RegisterFile before = regs;
    try {
      RegisterFile once = apply_write(regs, addr, data);
      CHECK(apply_write(once, addr, data) == once);
      regs = once;
    } catch (const Error&) {
      CHECK(regs == before);
    }
  }
}

TEST_CASE("register names") {
  CHECK(address_from_name("PATTERN3") == 0x13);
  CHECK(address_from_name("REFRESH_PERIOD") == 0x21);
  CHECK(name_from_address(0x17) == "PATTERN7");
  CHECK(kind_of([] { address_from_name("PATTERN8"); }) == ErrorKind::kUnknownAddress);
  for (int a = 0; a < 256; ++a) {
    const auto addr = static_cast<std::uint8_t>(a);
    if (is_known_address(addr)) CHECK(address_from_name(name_from_address(addr)) == addr);
  }
}

TEST_CASE("read response uses the frame layout") {
  auto regs = apply_write(RegisterFile{}, reg::kDivider, 8);
  CHECK(read_response(regs, reg::kDivider) == 0x02010008u);
}

TEST_CASE("command stream parsing") {
  std::istringstream in(
      "# header comment\n"
      "01010008\n"
      "\n"
      "  0100000F   # enable\n"
      "03000000\n");
  auto words = parse_command_stream(in);
  REQUIRE(words.size() == 3);
  CHECK(words[0].word == 0x01010008u);
  CHECK(words[0].line == 2);
  CHECK(words[1].word == 0x0100000Fu);
  CHECK(words[2].line == 5);

  std::istringstream bad("01010008\n0101000\n");
  try {
    parse_command_stream(bad);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMalformedStream);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream bad2("0x010100\n");
  CHECK_THROWS_AS(parse_command_stream(bad2), Error);
  CHECK(format_word(0x01100ABCu) == "01100ABC");
}
