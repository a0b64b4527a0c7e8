#include "mpgemmfi/workloads.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "mpgemmfi/rng.hpp"

namespace mpgemmfi {
namespace {

// Stream ids under the workload seed: 0/1 feed the standalone GEMM's A/B,
// 10 feeds the MLP dataset; weight streams live at 100+layer under the
// separate weight seed so the model can be regenerated independently of the
// data.
constexpr std::uint64_t kStreamA = 0;
constexpr std::uint64_t kStreamB = 1;
constexpr std::uint64_t kStreamDataset = 10;
constexpr std::uint64_t kStreamWeightBase = 100;

float draw(CounterRng& rng, GemmDist dist) {
  switch (dist) {
    case GemmDist::uniform: return float(rng.uniform(-1.0, 1.0));
    case GemmDist::normal: return float(rng.normal());
    case GemmDist::integer: return float(rng.uniform_int(-8, 8));
  }
  throw std::invalid_argument("draw: bad dist");
}

Matrix32 sample_matrix(Index rows, Index cols, GemmDist dist, CounterRng& rng) {
  Matrix32 m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = draw(rng, dist);
  return m;
}

Matrix32 sample_normal_scaled(Index rows, Index cols, double stddev,
                              CounterRng& rng) {
  Matrix32 m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = float(rng.normal() * stddev);
  return m;
}

std::vector<int> teacher_labels(const Matrix32& x_raw,
                                const std::vector<Matrix32>& w_raw) {
  // Binary64 forward pass over the unquantized data and weights defines the
  // ground truth; argmax ties resolve to the lowest class index.
  Matrix64 act = x_raw.cast<double>();
  for (std::size_t i = 0; i < w_raw.size(); ++i) {
    Matrix64 next = act * w_raw[i].cast<double>();
    if (i + 1 < w_raw.size()) next = next.cwiseMax(0.0);
    act = std::move(next);
  }
  std::vector<int> labels(std::size_t(act.rows()));
  for (Index r = 0; r < act.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < act.cols(); ++c)
      if (act(r, c) > act(r, best)) best = c;
    labels[std::size_t(r)] = int(best);
  }
  return labels;
}

std::size_t layer_instruction_count(const HmmaShape& shape, Index m, Index n,
                                    Index k) {
  auto tiles = [](Index extent, int tile) {
    return std::size_t((extent + tile - 1) / tile);
  };
  return tiles(m, shape.m) * tiles(n, shape.n) * tiles(k, shape.k);
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("truncated weight file: " + path);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

}  // namespace

const char* dist_name(GemmDist d) {
  switch (d) {
    case GemmDist::uniform: return "uniform";
    case GemmDist::normal: return "normal";
    case GemmDist::integer: return "integer";
  }
  throw std::invalid_argument("dist_name: bad dist");
}

GemmDist parse_dist(std::string_view name) {
  if (name == "uniform") return GemmDist::uniform;
  if (name == "normal") return GemmDist::normal;
  if (name == "integer") return GemmDist::integer;
  throw std::invalid_argument("unknown distribution: " + std::string(name));
}

Workload::Workload(WorkloadSpec spec) : spec_(std::move(spec)) {
  const HmmaShape sh = HmmaShape::for_format(spec_.format);
  if (const auto* g = std::get_if<RandomGemmSpec>(&spec_.kind)) {
    if (g->m <= 0 || g->n <= 0 || g->k <= 0)
      throw std::invalid_argument("random_gemm extents must be positive");
    CounterRng rng_a(spec_.seed, kStreamA);
    CounterRng rng_b(spec_.seed, kStreamB);
    a_ = quantized(sample_matrix(g->m, g->k, g->dist, rng_a), spec_.format);
    b_ = quantized(sample_matrix(g->k, g->n, g->dist, rng_b), spec_.format);
    c_ = Matrix32::Zero(g->m, g->n);
    instruction_count_ = layer_instruction_count(sh, g->m, g->n, g->k);
    char buf[96];
    std::snprintf(buf, sizeof buf, "random_gemm(%lldx%lldx%lld,%s)",
                  static_cast<long long>(g->m), static_cast<long long>(g->n),
                  static_cast<long long>(g->k), dist_name(g->dist));
    name_ = buf;
  } else {
    const auto& ml = std::get<MlpSpec>(spec_.kind);
    if (ml.layer_dims.size() < 2)
      throw std::invalid_argument("mlp needs at least two layer dims");
    for (int d : ml.layer_dims)
      if (d <= 0) throw std::invalid_argument("mlp layer dims must be positive");
    if (ml.dataset_size <= 0)
      throw std::invalid_argument("mlp dataset size must be positive");

    CounterRng rng_x(spec_.seed, kStreamDataset);
    Matrix32 x_raw = sample_matrix(ml.dataset_size, ml.layer_dims.front(),
                                   GemmDist::normal, rng_x);
    std::vector<Matrix32> w_raw;
    for (std::size_t i = 0; i + 1 < ml.layer_dims.size(); ++i) {
      const Index fan_in = ml.layer_dims[i];
      const Index fan_out = ml.layer_dims[i + 1];
      CounterRng rng_w(ml.weight_seed, kStreamWeightBase + i);
      w_raw.push_back(sample_normal_scaled(
          fan_in, fan_out, 1.0 / std::sqrt(double(fan_in)), rng_w));
    }
    labels_ = teacher_labels(x_raw, w_raw);
    dataset_ = quantized(x_raw, spec_.format);
    weights_.reserve(w_raw.size());
    for (const Matrix32& w : w_raw)
      weights_.push_back(quantized(w, spec_.format));

    instruction_count_ = 0;
    for (std::size_t i = 0; i + 1 < ml.layer_dims.size(); ++i)
      instruction_count_ += layer_instruction_count(
          sh, ml.dataset_size, ml.layer_dims[i + 1], ml.layer_dims[i]);

    name_ = "mlp(";
    for (std::size_t i = 0; i < ml.layer_dims.size(); ++i) {
      if (i) name_ += '-';
      name_ += std::to_string(ml.layer_dims[i]);
    }
    name_ += ",ds=" + std::to_string(ml.dataset_size) + ")";
  }
}

HmmaShape Workload::shape() const {
  return HmmaShape::for_format(spec_.format);
}

void Workload::set_weights(std::vector<Matrix32> w) {
  if (!is_mlp()) throw std::logic_error("set_weights: not an mlp workload");
  if (w.size() != weights_.size())
    throw std::invalid_argument("set_weights: expected " +
                                std::to_string(weights_.size()) + " matrices");
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i].rows() != weights_[i].rows() || w[i].cols() != weights_[i].cols())
      throw std::invalid_argument("set_weights: shape mismatch at layer " +
                                  std::to_string(i));
  for (std::size_t i = 0; i < w.size(); ++i)
    weights_[i] = quantized(w[i], spec_.format);
}

RunResult Workload::run(const InstructionHook* hook) const {
  if (hook && hook->target >= instruction_count_)
    throw std::out_of_range("hook target beyond workload instruction stream");

  RunResult result;
  if (!is_mlp()) {
    GemmProblem p = make_gemm_problem(a_, b_, c_, spec_.format);
    std::size_t executed = 0;
    result.output = run_gemm(p, hook, &executed);
    result.executed_instructions = executed;
    result.accuracy = std::numeric_limits<double>::quiet_NaN();
    return result;
  }

  const auto& ml = std::get<MlpSpec>(spec_.kind);
  Matrix32 act = dataset_;
  std::size_t offset = 0;
  std::size_t executed_total = 0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    GemmProblem p = make_gemm_problem(
        act, weights_[i], Matrix32::Zero(act.rows(), weights_[i].cols()),
        spec_.format);
    const std::size_t count = InstructionStream::plan(p).size();
    const InstructionHook* layer_hook = nullptr;
    InstructionHook local;
    if (hook && hook->target >= offset && hook->target < offset + count) {
      local.target = hook->target - offset;
      local.fn = hook->fn;
      layer_hook = &local;
    }
    std::size_t executed = 0;
    Matrix32 out = run_gemm(p, layer_hook, &executed);
    executed_total += executed;
    offset += count;
    if (i + 1 < weights_.size())
      act = quantized(out.cwiseMax(0.0f), spec_.format);
    else
      act = std::move(out);
  }
  result.output = std::move(act);
  result.executed_instructions = executed_total;

  int correct = 0;
  for (Index r = 0; r < result.output.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < result.output.cols(); ++c)
      if (result.output(r, c) > result.output(r, best)) best = c;
    if (int(best) == labels_[std::size_t(r)]) ++correct;
  }
  result.accuracy = double(correct) / double(ml.dataset_size);
  return result;
}

Workload build_workload(const WorkloadSpec& spec) { return Workload(spec); }

void save_weights(const std::string& path, const std::vector<Matrix32>& w) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out.write("MPWL", 4);
  write_u32(out, std::uint32_t(w.size()));
  for (const Matrix32& m : w) {
    write_u32(out, std::uint32_t(m.rows()));
    write_u32(out, std::uint32_t(m.cols()));
    for (Index c = 0; c < m.cols(); ++c)
      for (Index r = 0; r < m.rows(); ++r) {
        const float v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), 4);
      }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Matrix32> load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "MPWL")
    throw std::runtime_error("bad weight file magic: " + path);
  const std::uint32_t count = read_u32(in, path);
  if (count > 1024) throw std::runtime_error("implausible matrix count: " + path);
  std::vector<Matrix32> w;
  w.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t rows = read_u32(in, path);
    const std::uint32_t cols = read_u32(in, path);
    if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20))
      throw std::runtime_error("implausible weight extents: " + path);
    Matrix32 m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::uint32_t c = 0; c < cols; ++c)
      for (std::uint32_t r = 0; r < rows; ++r) {
        float v;
        if (!in.read(reinterpret_cast<char*>(&v), 4))
          throw std::runtime_error("truncated weight file: " + path);
        m(Index(r), Index(c)) = v;
      }
    w.push_back(std::move(m));
  }
  in.peek();
  if (!in.eof()) throw std::runtime_error("trailing bytes in weight file: " + path);
  return w;
}

}  // namespace mpgemmfi
