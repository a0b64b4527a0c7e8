#pragma once

#include <cstdint>
#include <string_view>

#include "mpgemmfi/fp_codec.hpp"

// Exponent-only hardware-style checks applied to an encoded dot-product term
// before it is written back.  All three look at nothing but exponent fields,
// which is what makes them cheap enough to sit next to a multiplier array.
// They are defined for bf16 operands.
//
// BoundCheck: a fixed pattern detector.  Every magnitude >= 2^17 has an
// exponent field 1eee xxxx with some bit of eee set (and nothing smaller
// does), so detection is (MSB set) && (bits 6..4 nonzero) and correction
// clears bits 6..4.
//
// RangeCheck: normal operands with raw exponent fields e1, e2 satisfy
// m1*m2 < 4, so the product exponent field can reach at most
//     bound = clamp(e1 + e2 - bias + 1, 0, 255),
// and the margin (m1*m2 <= (2 - 2^-7)^2, safely below 4 even after
// rounding) makes the bound sound for the rounded product too.  A faulty
// field above the bound is detected; -max replaces the field with the
// bound, -flip clears set bits LSB-first until the field fits.  Zero or
// subnormal operands (raw field 0) sit outside the derivation and bypass
// the check.

namespace mpgemmfi {

enum class GuardKind : std::uint8_t {
  none,
  bound_check,
  range_check_max,
  range_check_flip,
};

const char* guard_name(GuardKind k);
GuardKind parse_guard(std::string_view name);  // throws std::invalid_argument

struct GuardReport {
  bool detected = false;
  Encoded corrected{FpFormat::bf16, 0};  // == input when not detected
  std::uint32_t exponent_before = 0;
  std::uint32_t exponent_after = 0;
  std::uint32_t bound = 0;  // range checks only; 0 otherwise
};

// product must be bf16; throws std::invalid_argument otherwise.
GuardReport bound_check(Encoded product);

std::uint32_t range_bound(std::uint32_t e1_raw, std::uint32_t e2_raw,
                          FpFormat f);

GuardReport range_check_max(Encoded product, std::uint32_t e1_raw,
                            std::uint32_t e2_raw);
GuardReport range_check_flip(Encoded product, std::uint32_t e1_raw,
                             std::uint32_t e2_raw);

// Campaign-facing dispatch.  For non-bf16 products every kind degenerates to
// a transparent no-op report, so fp16/tf32 campaigns can carry a guard
// setting without changing behavior.
GuardReport apply_guard(GuardKind kind, Encoded product, std::uint32_t e1_raw,
                        std::uint32_t e2_raw);

}  // namespace mpgemmfi
