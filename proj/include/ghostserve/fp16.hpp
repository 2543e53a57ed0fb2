// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>

namespace ghostserve {

// IEEE-754 binary16 value carried as its raw bit pattern. Coding operates on
// bytes, so the only conversion the pipeline ever performs is this (identity)
// reinterpretation -- NaN payloads, infinities, subnormals and -0.0 all
// survive untouched.
struct Half {
  std::uint16_t bits = 0;

  bool operator==(const Half&) const = default;
};

constexpr std::uint16_t fp16_to_bits(Half h) { return h.bits; }
constexpr Half bits_to_fp16(std::uint16_t w) { return Half{w}; }

// float -> binary16 with round-to-nearest-even. Utility for tests and the
// CLI; the coding path never converts numerically.
inline Half float_to_half(float f) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  const std::uint32_t expo = (x >> 23) & 0xFFu;
  const std::uint32_t mant = x & 0x7FFFFFu;

  if (expo == 0xFF) {  // inf / NaN; keep a nonzero mantissa for NaN
    std::uint32_t m = mant >> 13;
    if (mant != 0 && m == 0) m = 1;
    return Half{static_cast<std::uint16_t>(sign | 0x7C00u | m)};
  }
  const int unbiased = static_cast<int>(expo) - 127;
  if (unbiased > 15) return Half{static_cast<std::uint16_t>(sign | 0x7C00u)};  // overflow -> inf
  if (unbiased >= -14) {
    // Normal range: 10-bit mantissa with RNE on the dropped 13 bits.
    std::uint32_t half = (static_cast<std::uint32_t>(unbiased + 15) << 10) | (mant >> 13);
    const std::uint32_t rem = mant & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;  // may carry into exponent
    return Half{static_cast<std::uint16_t>(sign | half)};
  }
  if (unbiased >= -25) {
    // Subnormal half: implicit bit becomes explicit, then shift and round.
    const std::uint32_t full = mant | 0x800000u;
    const int shift = -unbiased - 14 + 13;
    std::uint32_t half = full >> shift;
    const std::uint32_t rem = full & ((1u << shift) - 1u);
    const std::uint32_t mid = 1u << (shift - 1);
    if (rem > mid || (rem == mid && (half & 1u))) ++half;
    return Half{static_cast<std::uint16_t>(sign | half)};
  }
  return Half{static_cast<std::uint16_t>(sign)};  // underflow -> signed zero
}

inline float half_to_float(Half h) {
  const std::uint32_t sign = (static_cast<std::uint32_t>(h.bits) & 0x8000u) << 16;
  const std::uint32_t expo = (h.bits >> 10) & 0x1Fu;
  const std::uint32_t mant = h.bits & 0x3FFu;

  std::uint32_t out;
  if (expo == 0x1F) {
    out = sign | 0x7F800000u | (mant << 13);
  } else if (expo != 0) {
    out = sign | ((expo + 112u) << 23) | (mant << 13);
  } else if (mant != 0) {
    // Subnormal: renormalize.
    int e = 0;
    std::uint32_t m = mant;
    while ((m & 0x400u) == 0) {
      m <<= 1;
      --e;
    }
    out = sign | (static_cast<std::uint32_t>(113 + e) << 23) | ((m & 0x3FFu) << 13);
  } else {
    out = sign;
  }
  return std::bit_cast<float>(out);
}

}  // namespace ghostserve
