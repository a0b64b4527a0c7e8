#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

// Bit-accurate codecs for the three reduced-precision operand formats used by
// tensor-core style matrix units.  Layout inside the stored word, LSB first:
//
//   [ mantissa | exponent | sign ]
//
//   fp16: 1s / 5e / 10m, bias 15,  16 bits
//   bf16: 1s / 8e / 7m,  bias 127, 16 bits
//   tf32: 1s / 8e / 10m, bias 127, 19 bits (kept right-aligned in a 32-bit
//         container; only bits 0..18 are meaningful, bit 18 is the sign)
//
// Decode follows the usual IEEE-754 conventions: exponent field 0 holds zero
// and subnormals, the all-ones field holds Inf (mantissa 0) and NaN.  Encode
// rounds to nearest, ties to even, and is exact: it never goes through an
// intermediate float rounding.

namespace mpgemmfi {

enum class FpFormat : std::uint8_t { fp16 = 0, bf16 = 1, tf32 = 2 };

struct FormatInfo {
  int exponent_bits;
  int mantissa_bits;
  int total_bits;
  int exponent_bias;

  constexpr int sign_position() const { return total_bits - 1; }
  constexpr int exponent_shift() const { return mantissa_bits; }
  constexpr std::uint32_t exponent_field_max() const {
    return (1u << exponent_bits) - 1u;
  }
  constexpr std::uint32_t mantissa_mask() const {
    return (1u << mantissa_bits) - 1u;
  }
  constexpr std::uint32_t word_mask() const { return (1u << total_bits) - 1u; }
  // Largest exponent of a finite value, min exponent of a normal value.
  constexpr int emax() const { return int(exponent_field_max()) - 1 - exponent_bias; }
  constexpr int emin() const { return 1 - exponent_bias; }
  constexpr int hex_digits() const { return (total_bits + 3) / 4; }
};

constexpr FormatInfo format_info(FpFormat f) {
  switch (f) {
    case FpFormat::fp16: return FormatInfo{5, 10, 16, 15};
    case FpFormat::bf16: return FormatInfo{8, 7, 16, 127};
    case FpFormat::tf32: return FormatInfo{8, 10, 19, 127};
  }
  return FormatInfo{0, 0, 0, 0};
}

const char* format_name(FpFormat f);
FpFormat parse_format(std::string_view name);  // throws std::invalid_argument

// A bit pattern tagged with its format.  bits uses only the low total_bits.
struct Encoded {
  FpFormat format;
  std::uint32_t bits;

  friend bool operator==(const Encoded&, const Encoded&) = default;
};

// Pattern -> real value.  NaN patterns decode to a quiet NaN (query with
// is_nan on the encoding when the distinction matters).
double decode(Encoded e);

// Real value -> pattern, round to nearest even.  Handles subnormal targets,
// overflow to Inf, signed zero, and NaN (canonicalized, sign cleared).
Encoded encode(double v, FpFormat f);

// XOR the given bit positions (0 = mantissa LSB .. total_bits-1 = sign).
// Involution: applying the same positions twice restores the input.
// Throws std::out_of_range on a position >= total_bits.
Encoded flip_bits(Encoded e, std::span<const int> positions);
Encoded flip_bit(Encoded e, int position);

std::uint32_t sign_bit(Encoded e);
std::uint32_t exponent_field(Encoded e);
std::uint32_t mantissa_field(Encoded e);
Encoded replace_exponent_field(Encoded e, std::uint32_t field);

bool is_nan(Encoded e);
bool is_inf(Encoded e);
bool is_finite(Encoded e);

// Fixed-width lowercase hex of the stored word: 4 digits for the 16-bit
// formats, 5 for tf32.  from_hex requires exactly that width.
std::string to_hex(Encoded e);
Encoded from_hex(std::string_view hex, FpFormat f);  // throws std::invalid_argument

// Round a binary32 value through the format.  Every representable value of
// every supported format is exactly representable in binary32, so this is
// decode(encode(v)) with no further rounding.
float quantize(float v, FpFormat f);

}  // namespace mpgemmfi
