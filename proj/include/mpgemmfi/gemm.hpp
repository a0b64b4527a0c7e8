#pragma once

#include <cstddef>
#include <functional>

#include "mpgemmfi/hmma.hpp"
#include "mpgemmfi/types.hpp"

// Arbitrary-size D = A*B + C decomposed into warp-tile instructions.
// Operands are zero-padded up to multiples of the 16x8xk warp tile; the k
// dimension of one output tile is chained across instructions through the
// binary32 destination registers, exactly like back-to-back HMMA issues on
// one accumulator fragment.  Instruction order is fixed: tile_n outermost,
// tile_m, then tile_k innermost, so every run of the same problem executes
// the identical sequence.

namespace mpgemmfi {

struct GemmProblem {
  Index m, n, k;
  FpFormat input_format;
  Matrix32 a;  // m x k, entries quantized to input_format
  Matrix32 b;  // k x n
  Matrix32 c;  // m x n, binary32 accumulator seed
};

// Validates shapes and positivity; throws std::invalid_argument.
GemmProblem make_gemm_problem(Matrix32 a, Matrix32 b, Matrix32 c, FpFormat f);

struct TileIndex {
  Index tm, tn, tk;

  friend bool operator==(const TileIndex&, const TileIndex&) = default;
};

struct InstructionStream {
  HmmaShape shape;
  Index m_tiles, n_tiles, k_tiles;

  static InstructionStream plan(const GemmProblem& p);
  std::size_t size() const {
    return std::size_t(m_tiles) * std::size_t(n_tiles) * std::size_t(k_tiles);
  }
  TileIndex at(std::size_t i) const;
  std::size_t index_of(const TileIndex& t) const;
};

// Fires after the targeted instruction has accumulated its destination tile
// and before that tile is consumed by any later instruction.  The state is
// the full capture of the instruction; the 16x8 tile reference is writable
// and any change chains downstream exactly as a corrupted destination
// register would.
struct InstructionHook {
  std::size_t target = 0;
  std::function<void(const WarpState&, TileRef)> fn;
};

// Executes the plan and returns D restricted to the original m x n extents.
// A null hook and a hook with an empty function are equivalent to a clean
// run, bit for bit.
Matrix32 run_gemm(const GemmProblem& p, const InstructionHook* hook = nullptr,
                  std::size_t* executed_instructions = nullptr);

// Fault site count: instructions x lanes x destination registers x k terms.
std::size_t enumerate_sites(const GemmProblem& p);

// Elementwise round through a format.
Matrix32 quantized(const Matrix32& m, FpFormat f);

}  // namespace mpgemmfi
