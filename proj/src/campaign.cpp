#include "mpgemmfi/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cfloat>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace mpgemmfi {
namespace {

using ordered_json = nlohmann::ordered_json;

void parallel_for(std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = detail::thread_budget(jobs);
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(body);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

ordered_json json_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from(const ordered_json& j, const char* what) {
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw std::runtime_error(std::string("bad numeric string for ") + what);
  }
  if (!j.is_number())
    throw std::runtime_error(std::string("expected a number for ") + what);
  return j.get<double>();
}

}  // namespace

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::benign: return "benign";
    case Outcome::sdc: return "sdc";
  }
  throw std::invalid_argument("outcome_name: bad outcome");
}

Outcome parse_outcome(std::string_view name) {
  if (name == "benign") return Outcome::benign;
  if (name == "sdc") return Outcome::sdc;
  throw std::invalid_argument("unknown outcome: " + std::string(name));
}

Outcome classify(const Matrix32& golden, const Matrix32& faulty,
                 double tolerance) {
  if (golden.rows() != faulty.rows() || golden.cols() != faulty.cols())
    throw std::invalid_argument("classify: extent mismatch");
  if (tolerance < 0.0)
    throw std::invalid_argument("classify: negative tolerance");
  for (Index c = 0; c < golden.cols(); ++c)
    for (Index r = 0; r < golden.rows(); ++r) {
      const float g = golden(r, c);
      const float f = faulty(r, c);
      if (std::isnan(g) || std::isnan(f)) {
        if (std::isnan(g) && std::isnan(f)) continue;
        return Outcome::sdc;
      }
      if (tolerance == 0.0) {
        if (std::bit_cast<std::uint32_t>(g) != std::bit_cast<std::uint32_t>(f))
          return Outcome::sdc;
        continue;
      }
      if (std::isinf(g) || std::isinf(f)) {
        if (g == f) continue;
        return Outcome::sdc;
      }
      const double rel = std::fabs(double(f) - double(g)) /
                         std::max(std::fabs(double(g)), double(FLT_MIN));
      if (rel > tolerance) return Outcome::sdc;
    }
  return Outcome::benign;
}

namespace detail {

unsigned thread_budget(std::size_t jobs) {
  unsigned workers = std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  if (const char* env = std::getenv("MPGEMMFI_THREADS")) {
    char* end = nullptr;
    const long parsed = std::strtol(env, &end, 10);
    if (end && *end == '\0' && parsed >= 1 && parsed <= 1024)
      workers = unsigned(parsed);
  }
  if (jobs < workers) workers = unsigned(jobs ? jobs : 1);
  return workers;
}

TrialRecord run_trial(const Workload& wl, const CampaignConfig& cfg,
                      const Matrix32& golden_output, double golden_accuracy,
                      std::uint64_t trial_id, std::uint64_t rng_index,
                      const FaultSite* forced_site, bool apply_writeback,
                      TrialScratch* scratch) {
  const HmmaShape shape = wl.shape();
  FaultSite site;
  if (forced_site) {
    site = *forced_site;
    validate_site(site, wl.instruction_count(), shape);
  } else {
    site = sample_site(wl.instruction_count(), shape, cfg.fault,
                       cfg.master_seed, rng_index);
  }

  TrialRecord rec;
  rec.trial_id = trial_id;
  rec.format = wl.spec().format;
  rec.workload = wl.name();
  rec.site = site;
  rec.guard_kind = cfg.guard;

  bool fired = false;
  InstructionHook hook;
  hook.target = site.instr;
  hook.fn = [&](const WarpState& st, TileRef tile) {
    const InjectionOutcome inj = inject(st, site);
    const auto [op_a, op_b] = st.term_operands(site.lane, site.dreg, site.term);
    const GuardReport rep = apply_guard(cfg.guard, inj.faulty,
                                        exponent_field(op_a),
                                        exponent_field(op_b));
    float written = inj.re_sum_prime;
    if (rep.detected)
      written = (inj.re_sum - inj.re_term) + float(decode(rep.corrected));

    rec.orig_hex = to_hex(inj.original);
    rec.fault_hex = to_hex(inj.faulty);
    rec.re_sum = inj.re_sum;
    rec.re_sum_prime = written;
    rec.diff = double(written) - double(inj.re_sum);
    rec.guard_detected = rep.detected;
    rec.guard_exp_before = rep.exponent_before;
    rec.guard_exp_after = rep.exponent_after;

    if (apply_writeback) {
      const Coord dc = st.map->d_coord(site.lane, site.dreg);
      tile(dc.row, dc.col) = written;
    }
    fired = true;
  };

  const RunResult res = wl.run(&hook);
  if (!fired) throw std::logic_error("fault hook never fired");
  rec.outcome = classify(golden_output, res.output, cfg.sdc_tolerance);
  if (wl.is_mlp()) rec.metric_delta = golden_accuracy - res.accuracy;
  if (scratch) {
    scratch->output = res.output;
    scratch->accuracy = res.accuracy;
  }
  return rec;
}

}  // namespace detail

std::vector<TrialRecord> run_campaign(const CampaignConfig& cfg) {
  validate_fault_spec(cfg.fault, cfg.workload.format);
  const Workload wl = build_workload(cfg.workload);
  const RunResult golden = wl.run();
  std::vector<TrialRecord> records(cfg.trials);
  parallel_for(cfg.trials, [&](std::size_t i) {
    records[i] = detail::run_trial(wl, cfg, golden.output, golden.accuracy, i,
                                   i, nullptr, true);
  });
  return records;
}

CampaignSummary summarize(std::vector<TrialRecord> records) {
  std::sort(records.begin(), records.end(),
            [](const TrialRecord& a, const TrialRecord& b) {
              return a.trial_id < b.trial_id;
            });
  CampaignSummary s;
  s.trials = records.size();
  for (const TrialRecord& rec : records) {
    if (rec.outcome == Outcome::sdc)
      ++s.sdc;
    else
      ++s.benign;
    if (rec.guard_detected) ++s.detected;
  }
  s.sdc_rate = s.trials ? double(s.sdc) / double(s.trials) : 0.0;

  std::vector<double> logs;
  for (const TrialRecord& rec : records)
    if (std::isfinite(rec.diff) && rec.diff != 0.0)
      logs.push_back(std::log10(std::fabs(rec.diff)));
  std::sort(logs.begin(), logs.end());
  for (std::size_t i = 0; i < logs.size(); ++i) {
    if (i + 1 < logs.size() && logs[i + 1] == logs[i]) continue;
    s.diff_ecdf.emplace_back(logs[i], double(i + 1) / double(logs.size()));
  }

  const bool single_bit =
      !records.empty() &&
      std::all_of(records.begin(), records.end(), [](const TrialRecord& r) {
        return r.site.bit_positions.size() == 1;
      });
  if (single_bit) {
    std::map<int, std::pair<std::size_t, std::size_t>> agg;  // sdc, total
    for (const TrialRecord& rec : records) {
      auto& cell = agg[rec.site.bit_positions.front()];
      cell.first += rec.outcome == Outcome::sdc;
      ++cell.second;
    }
    for (const auto& [pos, cell] : agg)
      s.per_bit_sdc[pos] = double(cell.first) / double(cell.second);
  }
  return s;
}

std::vector<TrialRecord> run_bit_sweep(const CampaignConfig& base,
                                       const std::vector<int>& positions,
                                       std::size_t trials_per_position) {
  if (positions.empty())
    throw std::invalid_argument("bit sweep needs at least one position");
  const Workload wl = build_workload(base.workload);
  const RunResult golden = wl.run();

  std::vector<CampaignConfig> configs;
  configs.reserve(positions.size());
  for (int pos : positions) {
    CampaignConfig cfg = base;
    cfg.fault.n_bits = 1;
    cfg.fault.mode = BitMode::fixed_position;
    cfg.fault.fixed_position = pos;
    cfg.trials = trials_per_position;
    validate_fault_spec(cfg.fault, cfg.workload.format);
    configs.push_back(std::move(cfg));
  }

  std::vector<TrialRecord> records(positions.size() * trials_per_position);
  parallel_for(records.size(), [&](std::size_t j) {
    const std::size_t pi = j / trials_per_position;
    const std::size_t i = j % trials_per_position;
    // paired across positions: the local index drives the rng stream
    records[j] = detail::run_trial(wl, configs[pi], golden.output,
                                   golden.accuracy, j, i, nullptr, true);
  });
  return records;
}

EfficacyReport guard_efficacy(const CampaignConfig& base) {
  validate_fault_spec(base.fault, base.workload.format);
  const Workload wl = build_workload(base.workload);
  if (!wl.is_mlp())
    throw std::invalid_argument("guard efficacy needs an mlp workload");
  const RunResult golden = wl.run();

  EfficacyReport report;
  report.golden_accuracy = golden.accuracy;
  const GuardKind kinds[] = {GuardKind::none, GuardKind::bound_check,
                             GuardKind::range_check_max,
                             GuardKind::range_check_flip};
  for (GuardKind kind : kinds) {
    CampaignConfig cfg = base;
    cfg.guard = kind;
    EfficacyArm arm;
    arm.records.resize(cfg.trials);
    parallel_for(cfg.trials, [&](std::size_t i) {
      arm.records[i] = detail::run_trial(wl, cfg, golden.output,
                                         golden.accuracy, i, i, nullptr, true);
    });
    double loss = 0.0;
    std::size_t detections = 0;
    for (const TrialRecord& rec : arm.records) {
      loss += rec.metric_delta;
      detections += rec.guard_detected;
    }
    arm.mean_loss = cfg.trials ? loss / double(cfg.trials) : 0.0;
    arm.detection_rate =
        cfg.trials ? double(detections) / double(cfg.trials) : 0.0;
    report.arms.emplace(kind, std::move(arm));
  }

  const double loss_none = report.arms.at(GuardKind::none).mean_loss;
  for (auto& [kind, arm] : report.arms)
    arm.reduction =
        loss_none == 0.0 ? 0.0 : (loss_none - arm.mean_loss) / loss_none;
  return report;
}

std::string record_to_json(const TrialRecord& rec) {
  ordered_json j;
  j["trial_id"] = rec.trial_id;
  j["format"] = format_name(rec.format);
  j["workload"] = rec.workload;
  ordered_json site;
  site["instr"] = rec.site.instr;
  site["lane"] = rec.site.lane;
  site["dreg"] = rec.site.dreg;
  site["term"] = rec.site.term;
  site["bits"] = rec.site.bit_positions;
  j["site"] = std::move(site);
  j["orig_hex"] = rec.orig_hex;
  j["fault_hex"] = rec.fault_hex;
  j["re_sum"] = json_number(double(rec.re_sum));
  j["re_sum_prime"] = json_number(double(rec.re_sum_prime));
  j["diff"] = json_number(rec.diff);
  ordered_json guard;
  guard["kind"] = guard_name(rec.guard_kind);
  guard["detected"] = rec.guard_detected;
  guard["exp_before"] = rec.guard_exp_before;
  guard["exp_after"] = rec.guard_exp_after;
  j["guard"] = std::move(guard);
  j["outcome"] = outcome_name(rec.outcome);
  if (std::isnan(rec.metric_delta))
    j["metric_delta"] = nullptr;
  else
    j["metric_delta"] = json_number(rec.metric_delta);
  return j.dump();
}

TrialRecord record_from_json(const std::string& line) {
  const ordered_json j = ordered_json::parse(line);
  TrialRecord rec;
  rec.trial_id = j.at("trial_id").get<std::uint64_t>();
  rec.format = parse_format(j.at("format").get_ref<const std::string&>());
  rec.workload = j.at("workload").get<std::string>();
  const ordered_json& site = j.at("site");
  rec.site.instr = site.at("instr").get<std::size_t>();
  rec.site.lane = site.at("lane").get<int>();
  rec.site.dreg = site.at("dreg").get<int>();
  rec.site.term = site.at("term").get<int>();
  rec.site.bit_positions = site.at("bits").get<std::vector<int>>();
  rec.orig_hex = j.at("orig_hex").get<std::string>();
  rec.fault_hex = j.at("fault_hex").get<std::string>();
  rec.re_sum = float(number_from(j.at("re_sum"), "re_sum"));
  rec.re_sum_prime = float(number_from(j.at("re_sum_prime"), "re_sum_prime"));
  rec.diff = number_from(j.at("diff"), "diff");
  const ordered_json& guard = j.at("guard");
  rec.guard_kind = parse_guard(guard.at("kind").get_ref<const std::string&>());
  rec.guard_detected = guard.at("detected").get<bool>();
  rec.guard_exp_before = guard.at("exp_before").get<std::uint32_t>();
  rec.guard_exp_after = guard.at("exp_after").get<std::uint32_t>();
  rec.outcome = parse_outcome(j.at("outcome").get_ref<const std::string&>());
  if (j.at("metric_delta").is_null())
    rec.metric_delta = std::numeric_limits<double>::quiet_NaN();
  else
    rec.metric_delta = number_from(j.at("metric_delta"), "metric_delta");
  return rec;
}

void write_records_jsonl(const std::string& path,
                         const std::vector<TrialRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  for (const TrialRecord& rec : records) out << record_to_json(rec) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<TrialRecord> read_records_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<TrialRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  return records;
}

}  // namespace mpgemmfi
