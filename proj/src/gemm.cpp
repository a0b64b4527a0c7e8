#include "mpgemmfi/gemm.hpp"

#include <stdexcept>

namespace mpgemmfi {

namespace {

Index round_up(Index v, Index unit) { return (v + unit - 1) / unit * unit; }

}  // namespace

GemmProblem make_gemm_problem(Matrix32 a, Matrix32 b, Matrix32 c, FpFormat f) {
  if (a.rows() <= 0 || a.cols() <= 0 || b.cols() <= 0)
    throw std::invalid_argument("GEMM extents must be positive");
  if (b.rows() != a.cols())
    throw std::invalid_argument("A columns must match B rows");
  if (c.rows() != a.rows() || c.cols() != b.cols())
    throw std::invalid_argument("C must be m x n");
  GemmProblem p;
  p.m = a.rows();
  p.n = b.cols();
  p.k = a.cols();
  p.input_format = f;
  p.a = std::move(a);
  p.b = std::move(b);
  p.c = std::move(c);
  return p;
}

InstructionStream InstructionStream::plan(const GemmProblem& p) {
  const HmmaShape sh = HmmaShape::for_format(p.input_format);
  InstructionStream s;
  s.shape = sh;
  s.m_tiles = round_up(p.m, sh.m) / sh.m;
  s.n_tiles = round_up(p.n, sh.n) / sh.n;
  s.k_tiles = round_up(p.k, sh.k) / sh.k;
  return s;
}

TileIndex InstructionStream::at(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("instruction index out of range");
  const Index tk = Index(i) % k_tiles;
  const Index rest = Index(i) / k_tiles;
  return TileIndex{rest % m_tiles, rest / m_tiles, tk};
}

std::size_t InstructionStream::index_of(const TileIndex& t) const {
  return (std::size_t(t.tn) * std::size_t(m_tiles) + std::size_t(t.tm)) *
             std::size_t(k_tiles) +
         std::size_t(t.tk);
}

Matrix32 run_gemm(const GemmProblem& p, const InstructionHook* hook,
                  std::size_t* executed_instructions) {
  if (p.a.rows() != p.m || p.a.cols() != p.k || p.b.rows() != p.k ||
      p.b.cols() != p.n || p.c.rows() != p.m || p.c.cols() != p.n)
    throw std::invalid_argument("problem extents do not match its matrices");

  const InstructionStream stream = InstructionStream::plan(p);
  if (hook && hook->target >= stream.size())
    throw std::invalid_argument("hook target past the end of the stream");
  const HmmaShape sh = stream.shape;
  const FragmentMap fm = build_fragment_map(sh);

  const Index mp = stream.m_tiles * sh.m;
  const Index np = stream.n_tiles * sh.n;
  const Index kp = stream.k_tiles * sh.k;

  Matrix32 a = Matrix32::Zero(mp, kp);
  Matrix32 b = Matrix32::Zero(kp, np);
  a.topLeftCorner(p.m, p.k) = p.a;
  b.topLeftCorner(p.k, p.n) = p.b;
  // D doubles as the running accumulator; C seeds it and each k step chains
  // through it in binary32.
  Matrix32 d = Matrix32::Zero(mp, np);
  d.topLeftCorner(p.m, p.n) = p.c;

  std::size_t idx = 0;
  for (Index tn = 0; tn < stream.n_tiles; ++tn) {
    for (Index tm = 0; tm < stream.m_tiles; ++tm) {
      for (Index tk = 0; tk < stream.k_tiles; ++tk, ++idx) {
        TileRef d_tile = d.block(tm * sh.m, tn * sh.n, sh.m, sh.n);
        const bool captured = hook && hook->target == idx && hook->fn;
        WarpState st;
        execute_hmma_into(a.block(tm * sh.m, tk * sh.k, sh.m, sh.k),
                          b.block(tk * sh.k, tn * sh.n, sh.k, sh.n), d_tile,
                          d_tile, fm, captured ? &st : nullptr);
        if (captured) hook->fn(st, d_tile);
      }
    }
  }
  if (executed_instructions) *executed_instructions = idx;
  return d.topLeftCorner(p.m, p.n);
}

std::size_t enumerate_sites(const GemmProblem& p) {
  const InstructionStream stream = InstructionStream::plan(p);
  return stream.size() * std::size_t(kWarpLanes) *
         std::size_t(kDregsPerLane) * std::size_t(stream.shape.k);
}

Matrix32 quantized(const Matrix32& m, FpFormat f) {
  Matrix32 out(m.rows(), m.cols());
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r) out(r, c) = quantize(m(r, c), f);
  return out;
}

}  // namespace mpgemmfi
