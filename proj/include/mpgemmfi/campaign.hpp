#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mpgemmfi/fault.hpp"
#include "mpgemmfi/guard.hpp"
#include "mpgemmfi/workloads.hpp"

// Injection campaigns: one golden run, then per-trial fault injection at
// sites sampled from (master_seed, trial index), with optional exponent
// guarding between the fault and the write-back.  Every trial is a pure
// function of the config and its index, so trials can run on any thread in
// any order and a campaign re-run reproduces its records byte for byte.

namespace mpgemmfi {

enum class Outcome : std::uint8_t { benign, sdc };

const char* outcome_name(Outcome o);
Outcome parse_outcome(std::string_view name);  // throws std::invalid_argument

struct CampaignConfig {
  WorkloadSpec workload;
  FaultSpec fault;
  GuardKind guard = GuardKind::none;
  std::size_t trials = 100;
  std::uint64_t master_seed = 1;
  double sdc_tolerance = 0.0;  // 0 compares bit for bit
};

struct TrialRecord {
  std::uint64_t trial_id = 0;
  FpFormat format = FpFormat::bf16;
  std::string workload;
  FaultSite site;
  std::string orig_hex;   // term encoding before the flips
  std::string fault_hex;  // after the flips, before any guard correction
  float re_sum = 0.0f;
  float re_sum_prime = 0.0f;  // written-back value, after any correction
  double diff = 0.0;          // binary64(re_sum_prime) - binary64(re_sum)
  GuardKind guard_kind = GuardKind::none;
  bool guard_detected = false;
  std::uint32_t guard_exp_before = 0;
  std::uint32_t guard_exp_after = 0;
  Outcome outcome = Outcome::benign;
  // mlp: golden accuracy minus faulty accuracy; NaN (serialized null) otherwise
  double metric_delta = std::numeric_limits<double>::quiet_NaN();
};

// Bit-exact at tolerance 0 (a NaN matches any NaN); otherwise flags any
// element whose relative deviation, measured against max(|golden|,
// FLT_MIN), exceeds the tolerance.  Extent mismatch throws.
Outcome classify(const Matrix32& golden, const Matrix32& faulty,
                 double tolerance);

std::vector<TrialRecord> run_campaign(const CampaignConfig& cfg);

struct CampaignSummary {
  std::size_t trials = 0;
  std::size_t sdc = 0;
  std::size_t benign = 0;
  std::size_t detected = 0;
  double sdc_rate = 0.0;
  // (log10|diff|, cumulative fraction) over finite nonzero diffs, ascending,
  // last point at 1.0; empty when no trial produced such a diff
  std::vector<std::pair<double, double>> diff_ecdf;
  // single-bit campaigns only: bit position -> SDC fraction at that position
  std::map<int, double> per_bit_sdc;
};

// Order-independent: records are sorted by trial id first, so merged or
// shuffled record sets summarize identically.
CampaignSummary summarize(std::vector<TrialRecord> records);

// One single-bit fixed-position campaign per requested position, all sharing
// the workload, golden run, and master seed, so position p and position q
// hit the same sites on the same trial index.  Record ids are globalized to
// position_index * trials_per_position + trial.
std::vector<TrialRecord> run_bit_sweep(const CampaignConfig& base,
                                       const std::vector<int>& positions,
                                       std::size_t trials_per_position);

struct EfficacyArm {
  double mean_loss = 0.0;       // mean golden-minus-faulty accuracy
  double detection_rate = 0.0;  // fraction of trials the guard fired on
  double reduction = 0.0;       // (loss_none - loss) / loss_none
  std::vector<TrialRecord> records;
};

struct EfficacyReport {
  double golden_accuracy = 0.0;
  std::map<GuardKind, EfficacyArm> arms;  // none plus the three guards
};

// Paired comparison on an mlp workload: every arm replays the identical
// fault sequence, differing only in the guard.  Throws for non-mlp configs.
EfficacyReport guard_efficacy(const CampaignConfig& base);

// One record per line.  Numbers are JSON numbers except non-finite values,
// which appear as the strings "inf", "-inf", "nan"; a non-mlp metric_delta
// is null.  Field order is fixed, so equal records give equal bytes.
std::string record_to_json(const TrialRecord& rec);
TrialRecord record_from_json(const std::string& line);
void write_records_jsonl(const std::string& path,
                         const std::vector<TrialRecord>& records);
std::vector<TrialRecord> read_records_jsonl(const std::string& path);

namespace detail {

struct TrialScratch {
  Matrix32 output;
  double accuracy = 0.0;
};

// The single-trial engine behind every campaign entry point.  forced_site
// overrides sampling (validated against the workload); apply_writeback
// false computes the whole record but leaves the destination register
// untouched, so the run must match the golden output bit for bit.
TrialRecord run_trial(const Workload& wl, const CampaignConfig& cfg,
                      const Matrix32& golden_output, double golden_accuracy,
                      std::uint64_t trial_id, std::uint64_t rng_index,
                      const FaultSite* forced_site, bool apply_writeback,
                      TrialScratch* scratch = nullptr);

// Worker count: MPGEMMFI_THREADS when set (clamped to at least 1),
// otherwise the hardware concurrency, both capped by the job count.
unsigned thread_budget(std::size_t jobs);

}  // namespace detail

}  // namespace mpgemmfi
