// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>

namespace ghostserve::gf256 {

// GF(2^8) with the primitive polynomial x^8 + x^4 + x^3 + x^2 + 1 (0x11D).
// 0x02 is a primitive element for this polynomial, so log/antilog tables
// cover all 255 nonzero field elements. Addition is bitwise XOR.
inline constexpr unsigned kPoly = 0x11D;

struct Tables {
  std::array<std::uint8_t, 512> exp{};  // exp[i] = 2^i, doubled to skip a mod
  std::array<std::uint8_t, 256> log{};  // log[0] unused
};

constexpr Tables build_tables() {
  Tables t{};
  unsigned x = 1;
  for (unsigned i = 0; i < 255; ++i) {
    t.exp[i] = static_cast<std::uint8_t>(x);
    t.exp[i + 255] = static_cast<std::uint8_t>(x);
    t.log[x] = static_cast<std::uint8_t>(i);
    x <<= 1;
    if (x & 0x100) x ^= kPoly;
  }
  t.exp[510] = t.exp[0];
  t.exp[511] = t.exp[1];
  return t;
}

inline constexpr Tables kTables = build_tables();

constexpr std::uint8_t add(std::uint8_t a, std::uint8_t b) {
  return a ^ b;
}

constexpr std::uint8_t mul(std::uint8_t a, std::uint8_t b) {
  if (a == 0 || b == 0) return 0;
  return kTables.exp[kTables.log[a] + kTables.log[b]];
}

constexpr std::uint8_t inv(std::uint8_t a) {
  if (a == 0) throw std::domain_error("gf256: zero has no multiplicative inverse");
  return kTables.exp[255 - kTables.log[a]];
}

constexpr std::uint8_t div(std::uint8_t a, std::uint8_t b) {
  if (b == 0) throw std::domain_error("gf256: division by zero");
  if (a == 0) return 0;
  return kTables.exp[kTables.log[a] + 255 - kTables.log[b]];
}

// 2^e for e >= 0.
constexpr std::uint8_t exp2(unsigned e) {
  return kTables.exp[e % 255];
}

// One row of the 256x256 product table: row(c)[x] = c * x. The full table is
// built once on first use and is read-only afterwards; encode/reconstruct
// inner loops index it instead of going through log/exp per byte.
inline const std::uint8_t* mul_row(std::uint8_t c) {
  struct MulTable {
    std::array<std::uint8_t, 256 * 256> rows;
    MulTable() {
      for (unsigned a = 0; a < 256; ++a)
        for (unsigned b = 0; b < 256; ++b)
          rows[a * 256 + b] = mul(static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b));
    }
  };
  static const MulTable table;
  return table.rows.data() + std::size_t{c} * 256;
}

}  // namespace ghostserve::gf256
