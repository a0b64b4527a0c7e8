#include "mpgemmfi/guard.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mpgemmfi {
namespace {

void require_bf16(const Encoded& e, const char* who) {
  if (e.format != FpFormat::bf16)
    throw std::invalid_argument(std::string(who) + ": requires bf16, got " +
                                format_name(e.format));
}

GuardReport pass_through(const Encoded& product) {
  GuardReport r;
  r.detected = false;
  r.corrected = product;
  r.exponent_before = exponent_field(product);
  r.exponent_after = r.exponent_before;
  return r;
}

}  // namespace

const char* guard_name(GuardKind k) {
  switch (k) {
    case GuardKind::none: return "none";
    case GuardKind::bound_check: return "bound_check";
    case GuardKind::range_check_max: return "range_check_max";
    case GuardKind::range_check_flip: return "range_check_flip";
  }
  throw std::invalid_argument("guard_name: bad kind");
}

GuardKind parse_guard(std::string_view name) {
  if (name == "none") return GuardKind::none;
  if (name == "bound_check") return GuardKind::bound_check;
  if (name == "range_check_max") return GuardKind::range_check_max;
  if (name == "range_check_flip") return GuardKind::range_check_flip;
  throw std::invalid_argument("unknown guard kind: " + std::string(name));
}

GuardReport bound_check(Encoded product) {
  require_bf16(product, "bound_check");
  GuardReport r = pass_through(product);
  const std::uint32_t field = r.exponent_before;
  if ((field & 0x80u) && (field & 0x70u)) {
    r.detected = true;
    r.exponent_after = field & ~0x70u;
    r.corrected = replace_exponent_field(product, r.exponent_after);
  }
  return r;
}

std::uint32_t range_bound(std::uint32_t e1_raw, std::uint32_t e2_raw,
                          FpFormat f) {
  const FormatInfo& fi = format_info(f);
  const std::int64_t raw = std::int64_t(e1_raw) + std::int64_t(e2_raw) -
                           fi.exponent_bias + 1;
  return std::uint32_t(
      std::clamp<std::int64_t>(raw, 0, fi.exponent_field_max()));
}

GuardReport range_check_max(Encoded product, std::uint32_t e1_raw,
                            std::uint32_t e2_raw) {
  require_bf16(product, "range_check_max");
  if (e1_raw == 0 || e2_raw == 0) return pass_through(product);
  GuardReport r = pass_through(product);
  r.bound = range_bound(e1_raw, e2_raw, product.format);
  if (r.exponent_before > r.bound) {
    r.detected = true;
    r.exponent_after = r.bound;
    r.corrected = replace_exponent_field(product, r.exponent_after);
  }
  return r;
}

GuardReport range_check_flip(Encoded product, std::uint32_t e1_raw,
                             std::uint32_t e2_raw) {
  require_bf16(product, "range_check_flip");
  if (e1_raw == 0 || e2_raw == 0) return pass_through(product);
  GuardReport r = pass_through(product);
  r.bound = range_bound(e1_raw, e2_raw, product.format);
  if (r.exponent_before > r.bound) {
    r.detected = true;
    std::uint32_t field = r.exponent_before;
    for (int b = 0; field > r.bound; ++b)  // clearing all bits reaches 0
      field &= ~(1u << b);
    r.exponent_after = field;
    r.corrected = replace_exponent_field(product, r.exponent_after);
  }
  return r;
}

GuardReport apply_guard(GuardKind kind, Encoded product, std::uint32_t e1_raw,
                        std::uint32_t e2_raw) {
  if (product.format != FpFormat::bf16 || kind == GuardKind::none)
    return pass_through(product);
  switch (kind) {
    case GuardKind::bound_check: return bound_check(product);
    case GuardKind::range_check_max:
      return range_check_max(product, e1_raw, e2_raw);
    case GuardKind::range_check_flip:
      return range_check_flip(product, e1_raw, e2_raw);
    case GuardKind::none: break;
  }
  return pass_through(product);
}

}  // namespace mpgemmfi
