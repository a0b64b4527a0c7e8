#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mpgemmfi/gemm.hpp"
#include "mpgemmfi/types.hpp"

// Reproducible targets for injection campaigns.  A workload owns immutable
// inputs (and, for the MLP, weights and teacher labels) generated from its
// spec, and exposes a single run() that drives the warp-level engine with an
// optional instruction hook.  Instruction indices are global across the
// MLP's layer GEMMs so a fault site addresses one instruction of the whole
// forward pass.

namespace mpgemmfi {

enum class GemmDist : std::uint8_t { uniform, normal, integer };

const char* dist_name(GemmDist d);
GemmDist parse_dist(std::string_view name);  // throws std::invalid_argument

struct RandomGemmSpec {
  Index m = 64;
  Index n = 32;
  Index k = 64;
  GemmDist dist = GemmDist::uniform;
};

struct MlpSpec {
  std::vector<int> layer_dims{64, 128, 64, 10};
  std::uint64_t weight_seed = 7;
  Index dataset_size = 512;
};

struct WorkloadSpec {
  std::variant<RandomGemmSpec, MlpSpec> kind = RandomGemmSpec{};
  FpFormat format = FpFormat::bf16;
  std::uint64_t seed = 1;
};

struct RunResult {
  Matrix32 output;  // random_gemm: the product; mlp: the logits
  double accuracy = 0.0;  // NaN for random_gemm
  std::size_t executed_instructions = 0;
};

class Workload {
 public:
  explicit Workload(WorkloadSpec spec);

  const WorkloadSpec& spec() const { return spec_; }
  // e.g. "random_gemm(64x32x64,uniform)" or "mlp(64-128-64-10,ds=512)"
  const std::string& name() const { return name_; }
  HmmaShape shape() const;
  std::size_t instruction_count() const { return instruction_count_; }
  bool is_mlp() const { return std::holds_alternative<MlpSpec>(spec_.kind); }

  // random_gemm inputs / mlp input activations, post-quantization
  const Matrix32& a() const { return a_; }
  const Matrix32& b() const { return b_; }
  const Matrix32& dataset() const { return dataset_; }

  // mlp only (empty / meaningless otherwise)
  const std::vector<Matrix32>& weights() const { return weights_; }
  const std::vector<int>& labels() const { return labels_; }
  // Replaces the model weights (quantized on the way in).  The dataset and
  // its teacher labels are pinned by the spec and do not move, so a zeroed
  // model scores roughly chance accuracy rather than a vacuous 100%.
  void set_weights(std::vector<Matrix32> w);

  RunResult run(const InstructionHook* hook = nullptr) const;

 private:
  WorkloadSpec spec_;
  std::string name_;
  std::size_t instruction_count_ = 0;
  Matrix32 a_, b_, c_;                // random_gemm inputs (quantized)
  Matrix32 dataset_;                  // mlp input activations (quantized)
  std::vector<Matrix32> weights_;     // mlp per-layer weights (quantized)
  std::vector<int> labels_;           // mlp teacher labels
};

Workload build_workload(const WorkloadSpec& spec);

// Weight bundle files: magic "MPWL", u32 matrix count, then per matrix
// u32 rows, u32 cols, and rows*cols little-endian float32 column-major.
void save_weights(const std::string& path, const std::vector<Matrix32>& w);
std::vector<Matrix32> load_weights(const std::string& path);

}  // namespace mpgemmfi
