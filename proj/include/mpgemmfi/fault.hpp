#pragma once

#include <cstdint>
#include <vector>

#include "mpgemmfi/hmma.hpp"

// Write-back fault model.  A fault hits one dot-product term of one
// destination register of one instruction.  The term is re-encoded into the
// operand format, the chosen bits are flipped, the result is decoded, and
// the already-accumulated destination element is patched:
//
//   re_sum' = (re_sum - re_term) + re_err      (each step binary32)
//
// which mimics corrupting the term inside the multiply array without
// re-running the accumulation.  re_sum here is the element value after the
// instruction, including its C input.

namespace mpgemmfi {

enum class BitMode : std::uint8_t { random_positions, fixed_position };

struct FaultSpec {
  int n_bits = 1;  // 1, 2, or 4 simultaneous flips
  BitMode mode = BitMode::random_positions;
  int fixed_position = 0;      // only read in fixed_position mode
  std::uint64_t rng_seed = 0;  // standalone injections; campaigns use their own
};

// n_bits in {1,2,4}; fixed position inside the format word; fixed mode only
// with a single bit.  Throws std::invalid_argument.
void validate_fault_spec(const FaultSpec& spec, FpFormat format);

struct FaultSite {
  std::size_t instr = 0;
  int lane = 0;
  int dreg = 0;
  int term = 0;                    // k index within the dot product
  std::vector<int> bit_positions;  // distinct, ascending

  friend bool operator==(const FaultSite&, const FaultSite&) = default;
};

// Uniform over instructions x 32 lanes x 4 dregs x k terms, then the bit
// positions (fixed, or distinct uniform draws).  A pure function of
// (seed, trial_index): any thread can sample any trial in any order.
FaultSite sample_site(std::size_t total_instructions, const HmmaShape& shape,
                      const FaultSpec& spec, std::uint64_t seed,
                      std::uint64_t trial_index);

// For externally supplied sites: every index in range for the shape, bit
// positions strictly ascending inside the format word.  Throws
// std::invalid_argument naming the offending field.
void validate_site(const FaultSite& site, std::size_t total_instructions,
                   const HmmaShape& shape);

struct InjectionOutcome {
  float re_term;       // clean term value
  float re_sum;        // clean destination element
  float re_err;        // faulty term after encode-flip-decode
  float re_sum_prime;  // patched destination element
  double diff;         // binary64(re_sum_prime) - binary64(re_sum)
  Encoded original;    // term encoding before the flips
  Encoded faulty;      // after the flips
};

inline Encoded encode_term(float v, FpFormat f) { return encode(double(v), f); }

// site.bit_positions may be empty, which degenerates to re-encoding the
// term with no fault; re_sum' then differs from re_sum only when the term
// was not exactly representable in the operand format.
InjectionOutcome inject(const WarpState& state, const FaultSite& site);

}  // namespace mpgemmfi
