#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mpgemmfi/fp_codec.hpp"
#include "mpgemmfi/types.hpp"

// Warp-level matrix-multiply-accumulate model for one Ampere-style tensor
// core instruction: D(16x8) = A(16xk) * B(kx8) + C(16x8), with k = 8 for
// tf32 operands and k = 16 for fp16/bf16.
//
// 32 lanes cooperate.  Lanes 4g..4g+3 form ThreadGroup g (g = 0..7) and own
// rows g and g+8 of A and D.  Writing t = lane % 4 for the position within
// the group, the per-lane register slots hold:
//
//   tf32   A slot s: (g, t) (g+8, t) (g, t+4) (g+8, t+4)              s=0..3
//          B slot s: (t, g) (t+4, g)                                  s=0..1
//   f16/bf A slot s: (g,2t) (g,2t+1) (g+8,2t) (g+8,2t+1)
//                    (g,2t+8) (g,2t+9) (g+8,2t+8) (g+8,2t+9)          s=0..7
//          B slot s: (2t, g) (2t+1, g) (2t+8, g) (2t+9, g)            s=0..3
//   D dreg r: (g, 2t) (g, 2t+1) (g+8, 2t) (g+8, 2t+1)                 r=0..3
//
// Each destination element accumulates its k per-thread dot-product terms
// sequentially in binary32, seeded by the C operand.  Operand entries are
// format values, so every individual product is exact in binary32 (two
// 11-bit-significand factors need at most 22 bits) as long as it does not
// leave the normal binary32 range.

namespace mpgemmfi {

inline constexpr int kWarpLanes = 32;
inline constexpr int kDregsPerLane = 4;

struct HmmaShape {
  int m;
  int n;
  int k;
  FpFormat input_format;

  static HmmaShape for_format(FpFormat f) {
    return HmmaShape{16, 8, f == FpFormat::tf32 ? 8 : 16, f};
  }

  int a_slots() const { return m * k / kWarpLanes; }
  int b_slots() const { return k * n / kWarpLanes; }

  friend bool operator==(const HmmaShape&, const HmmaShape&) = default;
};

struct Coord {
  std::int16_t row;
  std::int16_t col;

  friend bool operator==(const Coord&, const Coord&) = default;
};

// Lane/slot <-> matrix element tables for one shape.  Forward tables are
// indexed [lane * slots + slot]; owner tables invert them per element and
// are indexed [row * cols + col] in row-major.
struct FragmentMap {
  HmmaShape shape;
  std::vector<Coord> a;  // [lane * a_slots + slot]
  std::vector<Coord> b;  // [lane * b_slots + slot]
  std::vector<Coord> d;  // [lane * kDregsPerLane + dreg]
  std::vector<std::uint16_t> a_owner;  // [row * k + col]   -> lane * slots + slot
  std::vector<std::uint16_t> b_owner;  // [row * n + col]
  std::vector<std::uint16_t> d_owner;  // [row * n + col]   -> lane * 4 + dreg

  Coord a_coord(int lane, int slot) const;
  Coord b_coord(int lane, int slot) const;
  Coord d_coord(int lane, int dreg) const;
  // (lane, slot) owning an element.
  std::pair<int, int> a_owner_of(int row, int col) const;
  std::pair<int, int> b_owner_of(int row, int col) const;
  std::pair<int, int> d_owner_of(int row, int col) const;
};

FragmentMap build_fragment_map(const HmmaShape& shape);

// Snapshot of one executed instruction: operand fragments, the C input per
// destination register, and every dot-product term before accumulation.
struct WarpState {
  HmmaShape shape;
  const FragmentMap* map = nullptr;
  std::vector<float> a_frag;   // [lane * a_slots + slot]
  std::vector<float> b_frag;   // [lane * b_slots + slot]
  std::vector<float> c_vals;   // [lane * 4 + dreg]
  std::vector<float> terms;    // [(lane * 4 + dreg) * k + kk]

  // Term kk of the destination register dreg of a lane:
  // A(r, kk) * B(kk, c) for (r, c) = d_coord(lane, dreg).
  float term(int lane, int dreg, int kk) const;
  float c_value(int lane, int dreg) const;
  // The (A, B) operands whose product is that term, re-encoded into the
  // input format (lossless: fragments hold format values).
  std::pair<Encoded, Encoded> term_operands(int lane, int dreg, int kk) const;
};

// Strided views so tile blocks of larger matrices bind without copying.
using ConstTileRef = Eigen::Ref<const Matrix32, 0, Eigen::OuterStride<>>;
using TileRef = Eigen::Ref<Matrix32, 0, Eigen::OuterStride<>>;

// Execute one instruction.  a is 16xk, b is kx8, c is 16x8, all entries
// already quantized to the input format.  capture, when non-null, is filled
// with the full warp state of this execution.  d may alias c: every
// destination element is read from c before it is written.
void execute_hmma_into(const ConstTileRef& a, const ConstTileRef& b,
                       const ConstTileRef& c, TileRef d,
                       const FragmentMap& map, WarpState* capture = nullptr);

Matrix32 execute_hmma(const ConstTileRef& a, const ConstTileRef& b,
                      const ConstTileRef& c, const FragmentMap& map,
                      WarpState* capture = nullptr);

}  // namespace mpgemmfi
