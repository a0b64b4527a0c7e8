#include "mpgemmfi/hmma.hpp"

#include <stdexcept>
#include <string>

namespace mpgemmfi {

namespace {

void check_range(int v, int limit, const char* what) {
  if (v < 0 || v >= limit)
    throw std::out_of_range(std::string(what) + " " + std::to_string(v) +
                            " out of range [0, " + std::to_string(limit) + ")");
}

}  // namespace

Coord FragmentMap::a_coord(int lane, int slot) const {
  check_range(lane, kWarpLanes, "lane");
  check_range(slot, shape.a_slots(), "a slot");
  return a[std::size_t(lane * shape.a_slots() + slot)];
}

Coord FragmentMap::b_coord(int lane, int slot) const {
  check_range(lane, kWarpLanes, "lane");
  check_range(slot, shape.b_slots(), "b slot");
  return b[std::size_t(lane * shape.b_slots() + slot)];
}

Coord FragmentMap::d_coord(int lane, int dreg) const {
  check_range(lane, kWarpLanes, "lane");
  check_range(dreg, kDregsPerLane, "dreg");
  return d[std::size_t(lane * kDregsPerLane + dreg)];
}

std::pair<int, int> FragmentMap::a_owner_of(int row, int col) const {
  check_range(row, shape.m, "a row");
  check_range(col, shape.k, "a col");
  const int packed = a_owner[std::size_t(row * shape.k + col)];
  return {packed / shape.a_slots(), packed % shape.a_slots()};
}

std::pair<int, int> FragmentMap::b_owner_of(int row, int col) const {
  check_range(row, shape.k, "b row");
  check_range(col, shape.n, "b col");
  const int packed = b_owner[std::size_t(row * shape.n + col)];
  return {packed / shape.b_slots(), packed % shape.b_slots()};
}

std::pair<int, int> FragmentMap::d_owner_of(int row, int col) const {
  check_range(row, shape.m, "d row");
  check_range(col, shape.n, "d col");
  const int packed = d_owner[std::size_t(row * shape.n + col)];
  return {packed / kDregsPerLane, packed % kDregsPerLane};
}

FragmentMap build_fragment_map(const HmmaShape& shape) {
  if (shape.m != 16 || shape.n != 8 || (shape.k != 8 && shape.k != 16))
    throw std::invalid_argument("unsupported warp tile shape");
  if ((shape.k == 8) != (shape.input_format == FpFormat::tf32))
    throw std::invalid_argument("shape k does not match operand format");

  FragmentMap fm;
  fm.shape = shape;
  fm.a.resize(std::size_t(kWarpLanes * shape.a_slots()));
  fm.b.resize(std::size_t(kWarpLanes * shape.b_slots()));
  fm.d.resize(std::size_t(kWarpLanes * kDregsPerLane));
  fm.a_owner.resize(std::size_t(shape.m * shape.k));
  fm.b_owner.resize(std::size_t(shape.k * shape.n));
  fm.d_owner.resize(std::size_t(shape.m * shape.n));

  for (int lane = 0; lane < kWarpLanes; ++lane) {
    const std::int16_t g = std::int16_t(lane / 4);
    const std::int16_t t = std::int16_t(lane % 4);

    Coord* a = &fm.a[std::size_t(lane * shape.a_slots())];
    Coord* b = &fm.b[std::size_t(lane * shape.b_slots())];
    if (shape.k == 8) {
      a[0] = {g, t};
      a[1] = {std::int16_t(g + 8), t};
      a[2] = {g, std::int16_t(t + 4)};
      a[3] = {std::int16_t(g + 8), std::int16_t(t + 4)};
      b[0] = {t, g};
      b[1] = {std::int16_t(t + 4), g};
    } else {
      const std::int16_t c0 = std::int16_t(2 * t);
      for (int h = 0; h < 2; ++h) {  // h = 1 is the k+8 half
        const std::int16_t base = std::int16_t(c0 + 8 * h);
        a[4 * h + 0] = {g, base};
        a[4 * h + 1] = {g, std::int16_t(base + 1)};
        a[4 * h + 2] = {std::int16_t(g + 8), base};
        a[4 * h + 3] = {std::int16_t(g + 8), std::int16_t(base + 1)};
        b[2 * h + 0] = {base, g};
        b[2 * h + 1] = {std::int16_t(base + 1), g};
      }
    }

    Coord* d = &fm.d[std::size_t(lane * kDregsPerLane)];
    d[0] = {g, std::int16_t(2 * t)};
    d[1] = {g, std::int16_t(2 * t + 1)};
    d[2] = {std::int16_t(g + 8), std::int16_t(2 * t)};
    d[3] = {std::int16_t(g + 8), std::int16_t(2 * t + 1)};
  }

  for (int lane = 0; lane < kWarpLanes; ++lane) {
    for (int s = 0; s < shape.a_slots(); ++s) {
      const Coord c = fm.a[std::size_t(lane * shape.a_slots() + s)];
      fm.a_owner[std::size_t(c.row * shape.k + c.col)] =
          std::uint16_t(lane * shape.a_slots() + s);
    }
    for (int s = 0; s < shape.b_slots(); ++s) {
      const Coord c = fm.b[std::size_t(lane * shape.b_slots() + s)];
      fm.b_owner[std::size_t(c.row * shape.n + c.col)] =
          std::uint16_t(lane * shape.b_slots() + s);
    }
    for (int r = 0; r < kDregsPerLane; ++r) {
      const Coord c = fm.d[std::size_t(lane * kDregsPerLane + r)];
      fm.d_owner[std::size_t(c.row * shape.n + c.col)] =
          std::uint16_t(lane * kDregsPerLane + r);
    }
  }
  return fm;
}

float WarpState::term(int lane, int dreg, int kk) const {
  check_range(lane, kWarpLanes, "lane");
  check_range(dreg, kDregsPerLane, "dreg");
  check_range(kk, shape.k, "k index");
  return terms[std::size_t((lane * kDregsPerLane + dreg) * shape.k + kk)];
}

float WarpState::c_value(int lane, int dreg) const {
  check_range(lane, kWarpLanes, "lane");
  check_range(dreg, kDregsPerLane, "dreg");
  return c_vals[std::size_t(lane * kDregsPerLane + dreg)];
}

std::pair<Encoded, Encoded> WarpState::term_operands(int lane, int dreg,
                                                     int kk) const {
  check_range(lane, kWarpLanes, "lane");
  check_range(dreg, kDregsPerLane, "dreg");
  check_range(kk, shape.k, "k index");
  const Coord dc = map->d_coord(lane, dreg);
  const auto [al, as] = map->a_owner_of(dc.row, kk);
  const auto [bl, bs] = map->b_owner_of(kk, dc.col);
  const float av = a_frag[std::size_t(al * shape.a_slots() + as)];
  const float bv = b_frag[std::size_t(bl * shape.b_slots() + bs)];
  return {encode(double(av), shape.input_format),
          encode(double(bv), shape.input_format)};
}

void execute_hmma_into(const ConstTileRef& a, const ConstTileRef& b,
                       const ConstTileRef& c, TileRef d,
                       const FragmentMap& map, WarpState* capture) {
  const HmmaShape& sh = map.shape;
  if (a.rows() != sh.m || a.cols() != sh.k)
    throw std::invalid_argument("A operand must be 16 x k");
  if (b.rows() != sh.k || b.cols() != sh.n)
    throw std::invalid_argument("B operand must be k x 8");
  if (c.rows() != sh.m || c.cols() != sh.n)
    throw std::invalid_argument("C operand must be 16 x 8");
  if (d.rows() != sh.m || d.cols() != sh.n)
    throw std::invalid_argument("D tile must be 16 x 8");

  // Local row-major copy of A so the k loop walks contiguously.
  float al[16][16];
  float bl[16][8];
  for (int r = 0; r < sh.m; ++r)
    for (int kk = 0; kk < sh.k; ++kk) al[r][kk] = a(r, kk);
  for (int kk = 0; kk < sh.k; ++kk)
    for (int col = 0; col < sh.n; ++col) bl[kk][col] = b(kk, col);

  if (capture) {
    capture->shape = sh;
    capture->map = &map;
    capture->a_frag.resize(std::size_t(kWarpLanes * sh.a_slots()));
    capture->b_frag.resize(std::size_t(kWarpLanes * sh.b_slots()));
    capture->c_vals.resize(std::size_t(kWarpLanes * kDregsPerLane));
    capture->terms.resize(std::size_t(kWarpLanes * kDregsPerLane * sh.k));
    for (int lane = 0; lane < kWarpLanes; ++lane) {
      for (int s = 0; s < sh.a_slots(); ++s) {
        const Coord co = map.a[std::size_t(lane * sh.a_slots() + s)];
        capture->a_frag[std::size_t(lane * sh.a_slots() + s)] =
            al[co.row][co.col];
      }
      for (int s = 0; s < sh.b_slots(); ++s) {
        const Coord co = map.b[std::size_t(lane * sh.b_slots() + s)];
        capture->b_frag[std::size_t(lane * sh.b_slots() + s)] =
            bl[co.row][co.col];
      }
    }
  }

  for (int lane = 0; lane < kWarpLanes; ++lane) {
    for (int dreg = 0; dreg < kDregsPerLane; ++dreg) {
      const Coord dc = map.d[std::size_t(lane * kDregsPerLane + dreg)];
      float acc = c(dc.row, dc.col);
      if (capture) {
        capture->c_vals[std::size_t(lane * kDregsPerLane + dreg)] = acc;
        float* t =
            &capture->terms[std::size_t((lane * kDregsPerLane + dreg) * sh.k)];
        for (int kk = 0; kk < sh.k; ++kk) {
          const float p = al[dc.row][kk] * bl[kk][dc.col];
          t[kk] = p;
          acc += p;
        }
      } else {
        for (int kk = 0; kk < sh.k; ++kk)
          acc += al[dc.row][kk] * bl[kk][dc.col];
      }
      d(dc.row, dc.col) = acc;
    }
  }
}

Matrix32 execute_hmma(const ConstTileRef& a, const ConstTileRef& b,
                      const ConstTileRef& c, const FragmentMap& map,
                      WarpState* capture) {
  Matrix32 d(map.shape.m, map.shape.n);
  execute_hmma_into(a, b, c, d, map, capture);
  return d;
}

}  // namespace mpgemmfi
