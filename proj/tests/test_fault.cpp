#include "doctest.h"

#include <cmath>
#include <set>

#include "mpgemmfi/fault.hpp"
#include "mpgemmfi/gemm.hpp"
#include "mpgemmfi/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mpgemmfi;

namespace {

// One executed instruction with A(0,0)=a00, A(0,1)=a01, B(*,0)=1, C(0,0)=c00;
// destination element (0,0) is lane 0, dreg 0, terms 0 and 1.
WarpState capture_simple(FpFormat f, float a00, float a01, float c00) {
  const HmmaShape sh = HmmaShape::for_format(f);
  static FragmentMap maps[3] = {
      build_fragment_map(HmmaShape::for_format(FpFormat::fp16)),
      build_fragment_map(HmmaShape::for_format(FpFormat::bf16)),
      build_fragment_map(HmmaShape::for_format(FpFormat::tf32))};
  Matrix32 a = Matrix32::Zero(sh.m, sh.k);
  Matrix32 b = Matrix32::Zero(sh.k, sh.n);
  Matrix32 c = Matrix32::Zero(sh.m, sh.n);
  a(0, 0) = a00;
  a(0, 1) = a01;
  b(0, 0) = 1.0f;
  b(1, 0) = 1.0f;
  c(0, 0) = c00;
  WarpState st;
  (void)execute_hmma(a, b, c, maps[unsigned(f)], &st);
  return st;
}

FaultSite site_at(int term, std::vector<int> bits) {
  FaultSite s;
  s.lane = 0;
  s.dreg = 0;
  s.term = term;
  s.bit_positions = std::move(bits);
  return s;
}

}  // namespace

TEST_CASE("fault spec validation") {
  FaultSpec ok;
  ok.n_bits = 2;
  CHECK_NOTHROW(validate_fault_spec(ok, FpFormat::bf16));
  FaultSpec bad = ok;
  bad.n_bits = 3;
  CHECK_THROWS_AS(validate_fault_spec(bad, FpFormat::bf16),
                  std::invalid_argument);
  FaultSpec fixed;
  fixed.mode = BitMode::fixed_position;
  fixed.fixed_position = 18;
  CHECK_NOTHROW(validate_fault_spec(fixed, FpFormat::tf32));
  fixed.fixed_position = 19;
  CHECK_THROWS_AS(validate_fault_spec(fixed, FpFormat::tf32),
                  std::invalid_argument);
  fixed.fixed_position = 16;
  CHECK_THROWS_AS(validate_fault_spec(fixed, FpFormat::bf16),
                  std::invalid_argument);
  fixed.fixed_position = 2;
  fixed.n_bits = 2;
  CHECK_THROWS_AS(validate_fault_spec(fixed, FpFormat::bf16),
                  std::invalid_argument);
}

TEST_CASE("site sampling is a pure function of seed and trial") {
  const HmmaShape sh = HmmaShape::for_format(FpFormat::bf16);
  FaultSpec spec;
  spec.n_bits = 4;
  const FaultSite s1 = sample_site(1000, sh, spec, 42, 17);
  const FaultSite s2 = sample_site(1000, sh, spec, 42, 17);
  CHECK(s1 == s2);

  bool any_differs = false;
  for (std::uint64_t t = 0; t < 50; ++t)
    any_differs |= !(sample_site(1000, sh, spec, 42, t) == s1);
  CHECK(any_differs);

  for (std::uint64_t t = 0; t < 3000; ++t) {
    const FaultSite s = sample_site(1000, sh, spec, 7, t);
    REQUIRE(s.instr < 1000);
    REQUIRE(s.lane < kWarpLanes);
    REQUIRE(s.dreg < kDregsPerLane);
    REQUIRE(s.term < sh.k);
    REQUIRE(s.bit_positions.size() == 4);
    const std::set<int> uniq(s.bit_positions.begin(), s.bit_positions.end());
    REQUIRE(uniq.size() == 4);
    REQUIRE(std::is_sorted(s.bit_positions.begin(), s.bit_positions.end()));
    REQUIRE(*s.bit_positions.rbegin() < 16);
  }

  CHECK_THROWS_AS((void)sample_site(0, sh, spec, 1, 0), std::invalid_argument);
}

TEST_CASE("site sampling is uniform over a single-instruction space") {
  const HmmaShape sh = HmmaShape::for_format(FpFormat::tf32);
  FaultSpec spec;  // 1 random bit
  const std::uint64_t draws = 100000;
  // 32 lanes * 4 dregs * 8 terms = 1024 cells.
  std::vector<std::uint64_t> counts(1024, 0);
  for (std::uint64_t t = 0; t < draws; ++t) {
    const FaultSite s = sample_site(1, sh, spec, 2024, t);
    ++counts[std::size_t((s.lane * kDregsPerLane + s.dreg) * sh.k + s.term)];
  }
  // 1023 dof: mean 1023, sd ~45.2.
  CHECK(oracle::chi_square_uniform(counts, draws) < 1023 + 5 * 45.3);
}

TEST_CASE("fixed-position sampling pins the bit and nothing else") {
  const HmmaShape sh = HmmaShape::for_format(FpFormat::bf16);
  FaultSpec spec;
  spec.mode = BitMode::fixed_position;
  spec.fixed_position = 14;
  std::set<int> lanes;
  for (std::uint64_t t = 0; t < 200; ++t) {
    const FaultSite s = sample_site(64, sh, spec, 5, t);
    REQUIRE(s.bit_positions == std::vector<int>{14});
    lanes.insert(s.lane);
  }
  CHECK(lanes.size() > 10);
}

TEST_CASE("write-back splice: identity when the faulty term equals the term") {
  const WarpState st = capture_simple(FpFormat::bf16, 6.0f, 0.0f, 4.0f);
  const InjectionOutcome out = inject(st, site_at(0, {}));
  CHECK(out.re_term == 6.0f);
  CHECK(out.re_sum == 10.0f);
  CHECK(out.re_err == 6.0f);
  CHECK(out.re_sum_prime == 10.0f);
  CHECK(out.diff == 0.0);
  CHECK(out.original == out.faulty);
  CHECK(to_hex(out.original) == "40c0");
}

TEST_CASE("write-back splice: exponent burst on a bf16 term") {
  // Term 2.0, exponent field 10000000; flipping exponent bit 6 (word bit 13)
  // gives 11000000 -> 2^65.
  const WarpState st = capture_simple(FpFormat::bf16, 2.0f, 0.0f, 8.0f);
  const InjectionOutcome out = inject(st, site_at(0, {13}));
  CHECK(out.re_sum == 10.0f);
  CHECK(out.re_err == std::ldexp(1.0f, 65));
  CHECK(out.re_sum_prime == std::ldexp(1.0f, 65));  // 8 is absorbed
  CHECK(out.diff == std::ldexp(1.0, 65) - 10.0);
  CHECK(out.diff == doctest::Approx(3.68935e19).epsilon(1e-4));
}

TEST_CASE("mantissa-MSB flip on a zero term: fp16 perturbs, bf16 does not") {
  // re_sum ~ 1.0; the faulty term is the flipped encoding of +0.0.
  {
    const WarpState st = capture_simple(FpFormat::fp16, 1.0f, 0.0f, 0.0f);
    const InjectionOutcome out = inject(st, site_at(1, {9}));
    CHECK(out.re_term == 0.0f);
    CHECK(out.re_err == 3.0517578125e-05f);
    CHECK(out.re_sum_prime != out.re_sum);  // 2^-15 > ulp(1)/2
    CHECK(out.re_sum_prime == 1.0f + std::ldexp(1.0f, -15));
  }
  {
    const WarpState st = capture_simple(FpFormat::bf16, 1.0f, 0.0f, 0.0f);
    const InjectionOutcome out = inject(st, site_at(1, {6}));
    CHECK(out.re_err == std::ldexp(1.0f, -127));
    CHECK(out.re_sum_prime == out.re_sum);  // absorbed
    CHECK(out.diff == 0.0);
  }
}

TEST_CASE("sign flip negates the spliced term") {
  const WarpState st = capture_simple(FpFormat::tf32, 3.0f, 1.0f, 0.0f);
  const InjectionOutcome out = inject(st, site_at(0, {18}));
  CHECK(out.re_sum == 4.0f);
  CHECK(out.re_err == -3.0f);
  CHECK(out.re_sum_prime == -2.0f);
  CHECK(out.diff == -6.0);
}

TEST_CASE("re_sum reconstruction matches the engine output exactly") {
  for (FpFormat f : {FpFormat::fp16, FpFormat::bf16, FpFormat::tf32}) {
    const HmmaShape sh = HmmaShape::for_format(f);
    const FragmentMap fm = build_fragment_map(sh);
    CounterRng rng(404, unsigned(f));
    const Matrix32 a = testutil::quantized_uniform(sh.m, sh.k, f, rng);
    const Matrix32 b = testutil::quantized_uniform(sh.k, sh.n, f, rng);
    const Matrix32 c = testutil::quantized_uniform(sh.m, sh.n, f, rng);
    WarpState st;
    const Matrix32 d = execute_hmma(a, b, c, fm, &st);
    FaultSpec spec;
    for (std::uint64_t t = 0; t < 200; ++t) {
      const FaultSite s = sample_site(1, sh, spec, 31337, t);
      const InjectionOutcome out = inject(st, s);
      const Coord dc = fm.d_coord(s.lane, s.dreg);
      REQUIRE(out.re_sum == d(dc.row, dc.col));
    }
  }
}

TEST_CASE("mantissa flips on integer workloads undo exactly") {
  // Sequential re-injection at the same site with the same mask restores the
  // sum bit for bit whenever the splice arithmetic is exact, which integer
  // values and mantissa-confined flips guarantee.
  const HmmaShape sh = HmmaShape::for_format(FpFormat::bf16);
  const FragmentMap fm = build_fragment_map(sh);
  CounterRng rng(500, 0);
  const Matrix32 a = testutil::integer_matrix(sh.m, sh.k, rng);
  const Matrix32 b = testutil::integer_matrix(sh.k, sh.n, rng);
  const Matrix32 c = testutil::integer_matrix(sh.m, sh.n, rng);
  WarpState st;
  (void)execute_hmma(a, b, c, fm, &st);

  CounterRng pick(501, 0);
  for (int t = 0; t < 500; ++t) {
    FaultSite s;
    s.lane = int(pick.bounded(kWarpLanes));
    s.dreg = int(pick.bounded(kDregsPerLane));
    s.term = int(pick.bounded(std::uint64_t(sh.k)));
    s.bit_positions = {int(pick.bounded(7))};  // mantissa bits only
    const InjectionOutcome out = inject(st, s);

    // Undo: the faulty encoding round-trips, the flip is an involution, and
    // splicing the clean term back over the faulty one restores re_sum.
    const Encoded enc2 = encode_term(out.re_err, FpFormat::bf16);
    REQUIRE(enc2 == out.faulty);
    const Encoded restored = flip_bits(enc2, s.bit_positions);
    REQUIRE(restored == out.original);
    const float undone =
        (out.re_sum_prime - out.re_err) + float(decode(restored));
    REQUIRE(undone == out.re_sum);
  }
}

TEST_CASE("an injected run differs from golden in at most the hooked tile") {
  CounterRng rng(600, 0);
  const FpFormat f = FpFormat::bf16;
  const GemmProblem p =
      make_gemm_problem(testutil::quantized_uniform(32, 16, f, rng),
                        testutil::quantized_uniform(16, 16, f, rng),
                        testutil::quantized_uniform(32, 16, f, rng), f);
  const InstructionStream stream = InstructionStream::plan(p);
  CHECK(stream.k_tiles == 1);  // no chaining: divergence stays in the tile
  const Matrix32 golden = run_gemm(p);

  FaultSpec spec;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const FaultSite site =
        sample_site(stream.size(), stream.shape, spec, 777, t);
    InjectionOutcome out;
    InstructionHook hook;
    hook.target = site.instr;
    hook.fn = [&](const WarpState& st, TileRef tile) {
      out = inject(st, site);
      const Coord dc = st.map->d_coord(site.lane, site.dreg);
      REQUIRE(tile(dc.row, dc.col) == out.re_sum);
      tile(dc.row, dc.col) = out.re_sum_prime;
    };
    const Matrix32 faulty = run_gemm(p, &hook);

    const TileIndex ti = stream.at(site.instr);
    const Coord dc =
        build_fragment_map(stream.shape).d_coord(site.lane, site.dreg);
    const Index fr = ti.tm * 16 + dc.row;
    const Index fc = ti.tn * 8 + dc.col;
    for (Index r = 0; r < golden.rows(); ++r)
      for (Index col = 0; col < golden.cols(); ++col) {
        const float g = golden(r, col), x = faulty(r, col);
        if (r == fr && col == fc) {
          REQUIRE(double(x) - double(g) == out.diff);
        } else {
          REQUIRE(g == x);
        }
      }
  }
}

TEST_CASE("encode_term round-trips format values") {
  CHECK(encode_term(2.0f, FpFormat::bf16).bits == 0x4000u);
  CHECK(to_hex(encode_term(1.0f, FpFormat::fp16)) == "3c00");
  CHECK(to_hex(encode_term(2.0f, FpFormat::tf32)) == "20000");
}
