#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "mpgemmfi/fp_codec.hpp"
#include "mpgemmfi/workloads.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mpgemmfi;

namespace {

WorkloadSpec small_mlp_spec(FpFormat f = FpFormat::bf16) {
  WorkloadSpec spec;
  MlpSpec ml;
  ml.layer_dims = {16, 16, 10};
  ml.dataset_size = 64;
  ml.weight_seed = 7;
  spec.kind = ml;
  spec.format = f;
  spec.seed = 5;
  return spec;
}

bool format_exact(const Matrix32& m, FpFormat f) {
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r) {
      const float round_trip = decode(encode(m(r, c), f));
      if (std::bit_cast<std::uint32_t>(round_trip) !=
          std::bit_cast<std::uint32_t>(m(r, c)))
        return false;
    }
  return true;
}

}  // namespace

TEST_CASE("workload names and distribution parsing") {
  Workload g = build_workload(WorkloadSpec{});
  CHECK(g.name() == "random_gemm(64x32x64,uniform)");

  WorkloadSpec spec;
  spec.kind = MlpSpec{};
  Workload m = build_workload(spec);
  CHECK(m.name() == "mlp(64-128-64-10,ds=512)");

  for (GemmDist d : {GemmDist::uniform, GemmDist::normal, GemmDist::integer})
    CHECK(parse_dist(dist_name(d)) == d);
  CHECK_THROWS_AS(parse_dist("gaussian"), std::invalid_argument);
}

TEST_CASE("workload construction is deterministic and format-exact") {
  for (FpFormat f : {FpFormat::fp16, FpFormat::bf16, FpFormat::tf32}) {
    WorkloadSpec spec;
    spec.kind = RandomGemmSpec{24, 16, 24, GemmDist::normal};
    spec.format = f;
    spec.seed = 11;
    Workload w1 = build_workload(spec);
    Workload w2 = build_workload(spec);
    CHECK(testutil::bit_equal(w1.a(), w2.a()));
    CHECK(testutil::bit_equal(w1.b(), w2.b()));
    CHECK(format_exact(w1.a(), f));
    CHECK(format_exact(w1.b(), f));
    CHECK(testutil::bit_equal(w1.run().output, w2.run().output));
  }
}

TEST_CASE("random_gemm run matches the engine and the reference oracle") {
  WorkloadSpec spec;
  spec.kind = RandomGemmSpec{33, 17, 40, GemmDist::uniform};
  spec.format = FpFormat::fp16;
  spec.seed = 3;
  Workload w = build_workload(spec);
  RunResult r = w.run();
  CHECK(std::isnan(r.accuracy));
  CHECK(r.executed_instructions == w.instruction_count());

  Matrix32 zero = Matrix32::Zero(33, 17);
  GemmProblem p = make_gemm_problem(w.a(), w.b(), zero, spec.format);
  CHECK(testutil::bit_equal(r.output, run_gemm(p)));
  CHECK(testutil::bit_equal(r.output,
                            oracle::reference_gemm(w.a(), w.b(), zero)));
}

TEST_CASE("distribution ranges hold after quantization") {
  WorkloadSpec spec;
  spec.kind = RandomGemmSpec{32, 8, 16, GemmDist::integer};
  spec.seed = 21;
  Workload wi = build_workload(spec);
  for (Index c = 0; c < wi.a().cols(); ++c)
    for (Index r = 0; r < wi.a().rows(); ++r) {
      const float v = wi.a()(r, c);
      CHECK(v == std::nearbyint(v));
      CHECK(std::fabs(v) <= 8.0f);
    }

  spec.kind = RandomGemmSpec{32, 8, 16, GemmDist::uniform};
  Workload wu = build_workload(spec);
  CHECK(wu.a().cwiseAbs().maxCoeff() <= 1.0f);
  CHECK(wu.a().cwiseAbs().minCoeff() >= 0.0f);
}

TEST_CASE("mlp instruction bookkeeping spans all layer streams") {
  WorkloadSpec spec;
  spec.kind = MlpSpec{};
  spec.format = FpFormat::bf16;
  Workload w = build_workload(spec);
  // 512x128x64, 512x64x128, 512x10x64 over 16x8x16 tiles
  const std::size_t l0 = 32 * 16 * 4, l1 = 32 * 8 * 8, l2 = 32 * 2 * 4;
  CHECK(w.instruction_count() == l0 + l1 + l2);

  Workload s = build_workload(small_mlp_spec());
  // 64x16x16 and 64x10x16: 4*2*1 apiece
  CHECK(s.instruction_count() == 16);
  RunResult r = s.run();
  CHECK(r.executed_instructions == 16);
  CHECK(r.output.rows() == 64);
  CHECK(r.output.cols() == 10);

  int fired = 0;
  InstructionHook hook;
  hook.target = 8;  // first instruction of the second layer
  hook.fn = [&](const WarpState& st, TileRef) {
    ++fired;
    CHECK(st.shape.k == 16);
  };
  s.run(&hook);
  CHECK(fired == 1);

  hook.target = 15;
  fired = 0;
  s.run(&hook);
  CHECK(fired == 1);

  hook.target = 16;
  CHECK_THROWS_AS(s.run(&hook), std::out_of_range);
}

TEST_CASE("mlp labels come from the binary64 teacher and accuracy is high") {
  Workload w = build_workload(small_mlp_spec());
  CHECK(w.labels().size() == 64);
  for (int lab : w.labels()) {
    CHECK(lab >= 0);
    CHECK(lab < 10);
  }
  RunResult r = w.run();
  CHECK(r.accuracy <= 1.0);
  CHECK(r.accuracy >= 0.8);  // quantized forward rarely flips an argmax

  // accuracy counts argmax agreement row by row
  int correct = 0;
  for (Index row = 0; row < r.output.rows(); ++row) {
    Index best = 0;
    for (Index c = 1; c < r.output.cols(); ++c)
      if (r.output(row, c) > r.output(row, best)) best = c;
    correct += int(best) == w.labels()[std::size_t(row)];
  }
  CHECK(r.accuracy == doctest::Approx(double(correct) / 64.0).epsilon(1e-12));
}

TEST_CASE("dataset and weights move independently under their seeds") {
  WorkloadSpec base = small_mlp_spec();
  Workload w0 = build_workload(base);

  WorkloadSpec other_data = base;
  other_data.seed = 99;
  Workload w1 = build_workload(other_data);
  CHECK(!testutil::bit_equal(w0.dataset(), w1.dataset()));
  CHECK(testutil::bit_equal(w0.weights()[0], w1.weights()[0]));

  WorkloadSpec other_model = base;
  std::get<MlpSpec>(other_model.kind).weight_seed = 99;
  Workload w2 = build_workload(other_model);
  CHECK(testutil::bit_equal(w0.dataset(), w2.dataset()));
  CHECK(!testutil::bit_equal(w0.weights()[0], w2.weights()[0]));
}

TEST_CASE("zeroed imported weights score chance-level accuracy") {
  Workload w = build_workload(small_mlp_spec());
  std::vector<Matrix32> zeros;
  for (const Matrix32& layer : w.weights())
    zeros.push_back(Matrix32::Zero(layer.rows(), layer.cols()));

  const std::string path = "/tmp/mpgemmfi_test_zero.mpwl";
  save_weights(path, zeros);
  w.set_weights(load_weights(path));
  std::remove(path.c_str());

  // all logits are zero, every argmax ties down to class 0
  RunResult r = w.run();
  int zeros_in_labels = 0;
  for (int lab : w.labels()) zeros_in_labels += lab == 0;
  CHECK(r.accuracy == doctest::Approx(zeros_in_labels / 64.0).epsilon(1e-12));
  CHECK(r.accuracy < 0.4);  // chance-ish, not the vacuous 100%
}

TEST_CASE("weight bundles round-trip and reject damage") {
  Workload w = build_workload(small_mlp_spec());
  const std::string path = "/tmp/mpgemmfi_test_bundle.mpwl";
  save_weights(path, w.weights());
  std::vector<Matrix32> back = load_weights(path);
  REQUIRE(back.size() == w.weights().size());
  for (std::size_t i = 0; i < back.size(); ++i)
    CHECK(testutil::bit_equal(back[i], w.weights()[i]));

  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::ofstream bad("/tmp/mpgemmfi_test_badmagic.mpwl", std::ios::binary);
    bad << "XXXX" << bytes.substr(4);
  }
  CHECK_THROWS_AS(load_weights("/tmp/mpgemmfi_test_badmagic.mpwl"),
                  std::runtime_error);

  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::ofstream bad("/tmp/mpgemmfi_test_trunc.mpwl", std::ios::binary);
    bad << bytes.substr(0, bytes.size() - 3);
    std::ofstream trail("/tmp/mpgemmfi_test_trail.mpwl", std::ios::binary);
    trail << bytes << '\0';
  }
  CHECK_THROWS_AS(load_weights("/tmp/mpgemmfi_test_trunc.mpwl"),
                  std::runtime_error);
  CHECK_THROWS_AS(load_weights("/tmp/mpgemmfi_test_trail.mpwl"),
                  std::runtime_error);
  for (const char* p : {"/tmp/mpgemmfi_test_bundle.mpwl",
                        "/tmp/mpgemmfi_test_badmagic.mpwl",
                        "/tmp/mpgemmfi_test_trunc.mpwl",
                        "/tmp/mpgemmfi_test_trail.mpwl"})
    std::remove(p);

  std::vector<Matrix32> wrong = w.weights();
  wrong.pop_back();
  CHECK_THROWS_AS(w.set_weights(wrong), std::invalid_argument);
}

TEST_CASE("a hook perturbation propagates into the mlp logits") {
  Workload w = build_workload(small_mlp_spec());
  Matrix32 golden = w.run().output;

  InstructionHook hook;
  hook.target = 0;
  hook.fn = [](const WarpState&, TileRef tile) { tile.array() += 1.0e6f; };
  Matrix32 faulty = w.run(&hook).output;
  CHECK(!testutil::bit_equal(golden, faulty));

  // an empty hook function leaves the run untouched
  InstructionHook idle;
  idle.target = 3;
  idle.fn = {};
  CHECK(testutil::bit_equal(golden, w.run(&idle).output));
}
