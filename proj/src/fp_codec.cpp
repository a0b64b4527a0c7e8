#include "mpgemmfi/fp_codec.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mpgemmfi {

const char* format_name(FpFormat f) {
  switch (f) {
    case FpFormat::fp16: return "fp16";
    case FpFormat::bf16: return "bf16";
    case FpFormat::tf32: return "tf32";
  }
  return "?";
}

FpFormat parse_format(std::string_view name) {
  if (name == "fp16") return FpFormat::fp16;
  if (name == "bf16") return FpFormat::bf16;
  if (name == "tf32") return FpFormat::tf32;
  throw std::invalid_argument("unknown format: " + std::string(name));
}

double decode(Encoded e) {
  const FormatInfo fi = format_info(e.format);
  const std::uint32_t man = mantissa_field(e);
  const std::uint32_t exp = exponent_field(e);
  const double sgn = sign_bit(e) ? -1.0 : 1.0;

  if (exp == fi.exponent_field_max()) {
    if (man != 0) return std::numeric_limits<double>::quiet_NaN();
    return sgn * std::numeric_limits<double>::infinity();
  }
  if (exp == 0) {
    // Zero and subnormals: man * 2^(emin - mb).  Exact in binary64.
    return sgn * std::ldexp(double(man), fi.emin() - fi.mantissa_bits);
  }
  const double sig = double((1u << fi.mantissa_bits) | man);
  return sgn * std::ldexp(sig, int(exp) - fi.exponent_bias - fi.mantissa_bits);
}

Encoded encode(double v, FpFormat f) {
  const FormatInfo fi = format_info(f);
  const std::uint32_t mb = std::uint32_t(fi.mantissa_bits);
  const std::uint32_t sign = std::signbit(v) ? 1u : 0u;
  const std::uint32_t sign_word = sign << fi.sign_position();
  const std::uint32_t exp_max = fi.exponent_field_max();

  if (std::isnan(v)) {
    // Canonical quiet NaN: all-ones exponent, mantissa MSB, positive sign.
    return Encoded{f, (exp_max << mb) | (1u << (mb - 1))};
  }
  if (std::isinf(v)) return Encoded{f, sign_word | (exp_max << mb)};
  if (v == 0.0) return Encoded{f, sign_word};

  const double a = std::fabs(v);

  // Values at or above the midpoint between the largest finite value and the
  // next power of two round to Inf.
  const double inf_threshold =
      std::ldexp(2.0 - std::ldexp(1.0, -int(mb) - 1), fi.emax());
  if (a >= inf_threshold) return Encoded{f, sign_word | (exp_max << mb)};

  int e2 = 0;
  std::frexp(a, &e2);
  int E = e2 - 1;  // a in [2^E, 2^(E+1)), and E <= emax after the Inf check

  // Scale so one unit in the last place of the target becomes 1.0.  The
  // scaled value is below 2^(mb+1) <= 2^12, so the integer part and the
  // fractional remainder are both exact doubles.
  const int ulp_exp = std::max(E, fi.emin()) - int(mb);
  const double scaled = std::ldexp(a, -ulp_exp);
  std::uint64_t q = std::uint64_t(scaled);
  const double frac = scaled - double(q);
  if (frac > 0.5 || (frac == 0.5 && (q & 1u))) ++q;

  if (E < fi.emin()) {
    // Subnormal target; rounding up to exactly 2^mb promotes to min normal.
    if (q >> mb) return Encoded{f, sign_word | (1u << mb)};
    return Encoded{f, sign_word | std::uint32_t(q)};
  }
  if (q >> (mb + 1)) {  // carry out of the binade: q == 2^(mb+1)
    q >>= 1;
    ++E;
    if (E > fi.emax()) return Encoded{f, sign_word | (exp_max << mb)};
  }
  const std::uint32_t field = std::uint32_t(E + fi.exponent_bias);
  const std::uint32_t man = std::uint32_t(q) & fi.mantissa_mask();
  return Encoded{f, sign_word | (field << mb) | man};
}

Encoded flip_bits(Encoded e, std::span<const int> positions) {
  const FormatInfo fi = format_info(e.format);
  std::uint32_t bits = e.bits;
  for (int p : positions) {
    if (p < 0 || p >= fi.total_bits)
      throw std::out_of_range("bit position " + std::to_string(p) +
                              " out of range for " + format_name(e.format));
    bits ^= 1u << p;
  }
  return Encoded{e.format, bits};
}

Encoded flip_bit(Encoded e, int position) {
  return flip_bits(e, std::span<const int>(&position, 1));
}

std::uint32_t sign_bit(Encoded e) {
  return (e.bits >> format_info(e.format).sign_position()) & 1u;
}

std::uint32_t exponent_field(Encoded e) {
  const FormatInfo fi = format_info(e.format);
  return (e.bits >> fi.exponent_shift()) & fi.exponent_field_max();
}

std::uint32_t mantissa_field(Encoded e) {
  return e.bits & format_info(e.format).mantissa_mask();
}

Encoded replace_exponent_field(Encoded e, std::uint32_t field) {
  const FormatInfo fi = format_info(e.format);
  if (field > fi.exponent_field_max())
    throw std::out_of_range("exponent field does not fit");
  const std::uint32_t cleared =
      e.bits & ~(fi.exponent_field_max() << fi.exponent_shift());
  return Encoded{e.format, cleared | (field << fi.exponent_shift())};
}

bool is_nan(Encoded e) {
  return exponent_field(e) == format_info(e.format).exponent_field_max() &&
         mantissa_field(e) != 0;
}

bool is_inf(Encoded e) {
  return exponent_field(e) == format_info(e.format).exponent_field_max() &&
         mantissa_field(e) == 0;
}

bool is_finite(Encoded e) {
  return exponent_field(e) != format_info(e.format).exponent_field_max();
}

std::string to_hex(Encoded e) {
  const int digits = format_info(e.format).hex_digits();
  std::string out(std::size_t(digits), '0');
  std::uint32_t bits = e.bits;
  for (int i = digits - 1; i >= 0; --i) {
    out[std::size_t(i)] = "0123456789abcdef"[bits & 0xf];
    bits >>= 4;
  }
  return out;
}

Encoded from_hex(std::string_view hex, FpFormat f) {
  const FormatInfo fi = format_info(f);
  if (int(hex.size()) != fi.hex_digits())
    throw std::invalid_argument("expected " + std::to_string(fi.hex_digits()) +
                                " hex digits for " + format_name(f));
  std::uint32_t bits = 0;
  for (char c : hex) {
    std::uint32_t d = 0;
    if (c >= '0' && c <= '9') d = std::uint32_t(c - '0');
    else if (c >= 'a' && c <= 'f') d = std::uint32_t(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') d = std::uint32_t(c - 'A' + 10);
    else throw std::invalid_argument("bad hex digit in encoding");
    bits = (bits << 4) | d;
  }
  if (bits & ~fi.word_mask())
    throw std::invalid_argument("encoding exceeds format width");
  return Encoded{f, bits};
}

float quantize(float v, FpFormat f) {
  return float(decode(encode(double(v), f)));
}

}  // namespace mpgemmfi
