#include "mpgemmfi/fault.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "mpgemmfi/rng.hpp"

namespace mpgemmfi {

void validate_fault_spec(const FaultSpec& spec, FpFormat format) {
  if (spec.n_bits != 1 && spec.n_bits != 2 && spec.n_bits != 4)
    throw std::invalid_argument("n_bits must be 1, 2, or 4");
  if (spec.mode == BitMode::fixed_position) {
    if (spec.n_bits != 1)
      throw std::invalid_argument("fixed position mode implies a single bit");
    const int total = format_info(format).total_bits;
    if (spec.fixed_position < 0 || spec.fixed_position >= total)
      throw std::invalid_argument(
          "fixed bit position " + std::to_string(spec.fixed_position) +
          " out of range for " + format_name(format));
  }
}

FaultSite sample_site(std::size_t total_instructions, const HmmaShape& shape,
                      const FaultSpec& spec, std::uint64_t seed,
                      std::uint64_t trial_index) {
  validate_fault_spec(spec, shape.input_format);
  if (total_instructions == 0)
    throw std::invalid_argument("cannot sample a site from an empty stream");

  CounterRng rng(seed, trial_index);
  FaultSite site;
  site.instr = rng.bounded(total_instructions);
  site.lane = int(rng.bounded(kWarpLanes));
  site.dreg = int(rng.bounded(kDregsPerLane));
  site.term = int(rng.bounded(std::uint64_t(shape.k)));

  if (spec.mode == BitMode::fixed_position) {
    site.bit_positions = {spec.fixed_position};
  } else {
    // Partial Fisher-Yates for distinct positions, then canonical order.
    const int total = format_info(shape.input_format).total_bits;
    std::vector<int> pool(static_cast<std::size_t>(total));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < spec.n_bits; ++i) {
      const auto j = std::size_t(i) + rng.bounded(std::uint64_t(total - i));
      std::swap(pool[std::size_t(i)], pool[j]);
    }
    site.bit_positions.assign(pool.begin(), pool.begin() + spec.n_bits);
    std::sort(site.bit_positions.begin(), site.bit_positions.end());
  }
  return site;
}

void validate_site(const FaultSite& site, std::size_t total_instructions,
                   const HmmaShape& shape) {
  if (site.instr >= total_instructions)
    throw std::invalid_argument("site instr " + std::to_string(site.instr) +
                                " beyond instruction stream of " +
                                std::to_string(total_instructions));
  if (site.lane < 0 || site.lane >= kWarpLanes)
    throw std::invalid_argument("site lane " + std::to_string(site.lane) +
                                " outside the warp");
  if (site.dreg < 0 || site.dreg >= kDregsPerLane)
    throw std::invalid_argument("site dreg " + std::to_string(site.dreg) +
                                " outside 0..3");
  if (site.term < 0 || site.term >= shape.k)
    throw std::invalid_argument("site term " + std::to_string(site.term) +
                                " outside the k=" + std::to_string(shape.k) +
                                " dot product");
  const int total = format_info(shape.input_format).total_bits;
  int prev = -1;
  for (int b : site.bit_positions) {
    if (b < 0 || b >= total)
      throw std::invalid_argument("site bit " + std::to_string(b) +
                                  " outside the " + std::to_string(total) +
                                  "-bit word");
    if (b <= prev)
      throw std::invalid_argument("site bits must be strictly ascending");
    prev = b;
  }
}

InjectionOutcome inject(const WarpState& state, const FaultSite& site) {
  InjectionOutcome out;
  out.re_term = state.term(site.lane, site.dreg, site.term);

  // The element value after the instruction: C seed plus terms in k order.
  // Bit-identical to what execute_hmma wrote (same operations, same order).
  float sum = state.c_value(site.lane, site.dreg);
  for (int kk = 0; kk < state.shape.k; ++kk)
    sum += state.term(site.lane, site.dreg, kk);
  out.re_sum = sum;

  out.original = encode_term(out.re_term, state.shape.input_format);
  out.faulty = flip_bits(out.original, site.bit_positions);
  out.re_err = float(decode(out.faulty));
  out.re_sum_prime = (out.re_sum - out.re_term) + out.re_err;
  out.diff = double(out.re_sum_prime) - double(out.re_sum);
  return out;
}

}  // namespace mpgemmfi
