#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "mpgemmfi/campaign.hpp"
#include "mpgemmfi/config.hpp"
#include "mpgemmfi/fp_codec.hpp"
#include "mpgemmfi/rng.hpp"

// Command line front end.  Exit codes: 0 success, 1 a self-check or internal
// failure, 2 bad usage, config, or input data.  Machine output (records,
// CSV, summaries) goes to stdout; diagnostics go to stderr.

namespace {

using namespace mpgemmfi;

constexpr int kInternalError = 1;
constexpr int kUsageError = 2;

// ---- shared config assembly -----------------------------------------------

// Inline flags are synthesized into INI text and layered over --config, so
// both paths share one parser and one set of error messages.
struct FlagSink {
  std::vector<std::tuple<std::string, std::string, std::string>> kvs;

  std::string to_ini() const {
    std::string ini;
    for (const char* section : {"workload", "fault", "guard", "campaign"}) {
      bool open = false;
      for (const auto& [sec, key, value] : kvs) {
        if (sec != section) continue;
        if (!open) {
          ini += "[" + std::string(section) + "]\n";
          open = true;
        }
        ini += key + " = " + value + "\n";
      }
    }
    return ini;
  }
};

void register_config_flags(CLI::App* cmd, FlagSink& sink) {
  auto opt = [cmd, &sink](const char* flag, const char* section,
                          const char* key, const char* desc) {
    cmd->add_option_function<std::string>(
        flag,
        [&sink, section, key](const std::string& value) {
          if (value.find_first_of("#;[]=\n") != std::string::npos)
            throw CLI::ValidationError(std::string(key),
                                       "value must not contain #;[]= or "
                                       "newlines");
          sink.kvs.emplace_back(section, key, value);
        },
        desc);
  };
  opt("--type", "workload", "type", "workload type: random_gemm or mlp");
  opt("--format", "workload", "format", "operand format: fp16, bf16, tf32");
  opt("--seed", "workload", "seed", "input generation seed");
  opt("--m", "workload", "m", "rows of A (random_gemm)");
  opt("--n", "workload", "n", "columns of B (random_gemm)");
  opt("--k", "workload", "k", "inner extent (random_gemm)");
  opt("--dist", "workload", "dist",
      "entry distribution: uniform, normal, integer");
  opt("--layers", "workload", "layers", "mlp layer dims, e.g. 64-128-64-10");
  opt("--dataset", "workload", "dataset", "mlp dataset rows");
  opt("--weight-seed", "workload", "weight_seed", "mlp weight seed");
  opt("--bits", "fault", "bits", "simultaneous bit flips: 1, 2, or 4");
  opt("--mode", "fault", "mode", "bit position mode: random or fixed");
  opt("--position", "fault", "position", "bit position for fixed mode");
  opt("--guard", "guard", "kind",
      "guard: none, bound_check, range_check_max, range_check_flip");
  opt("--trials", "campaign", "trials", "number of trials");
  opt("--master-seed", "campaign", "master_seed", "campaign seed");
  opt("--tolerance", "campaign", "tolerance",
      "relative SDC tolerance (0 = bit exact)");
}

CampaignConfig assemble_config(const std::string& config_path,
                               const FlagSink& sink) {
  CampaignConfig cfg;
  if (!config_path.empty()) cfg = load_campaign_config(config_path);
  if (!sink.kvs.empty()) {
    std::istringstream ini(sink.to_ini());
    cfg = parse_campaign_config(ini, "<flags>", cfg);
  }
  validate_fault_spec(cfg.fault, cfg.workload.format);
  return cfg;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> values;
  std::stringstream pieces(text);
  std::string piece;
  while (std::getline(pieces, piece, ',')) {
    int v = 0;
    const auto [ptr, ec] =
        std::from_chars(piece.data(), piece.data() + piece.size(), v);
    if (ec != std::errc{} || ptr != piece.data() + piece.size())
      throw std::invalid_argument(std::string(what) +
                                  ": expected comma-separated integers, got '" +
                                  text + "'");
    values.push_back(v);
  }
  if (values.empty())
    throw std::invalid_argument(std::string(what) + ": empty list");
  return values;
}

// ---- campaign --------------------------------------------------------------

int cmd_campaign(const std::string& config_path, const FlagSink& sink,
                 const std::string& out_path) {
  const CampaignConfig cfg = assemble_config(config_path, sink);
  const std::vector<TrialRecord> records = run_campaign(cfg);
  write_records_jsonl(out_path, records);
  std::cerr << "wrote " << records.size() << " records to " << out_path
            << "\n";

  const CampaignSummary s = summarize(records);
  if (!records.empty()) {
    std::cout << "workload " << records.front().workload << "\n";
    std::cout << "format " << format_name(records.front().format) << "\n";
  }
  std::cout << "guard " << guard_name(cfg.guard) << "\n";
  std::cout << "trials " << s.trials << "\n";
  std::cout << "sdc " << s.sdc << "\n";
  std::cout << "benign " << s.benign << "\n";
  std::cout << "detected " << s.detected << "\n";
  std::printf("sdc_rate %.9g\n", s.sdc_rate);
  return 0;
}

// ---- inject ----------------------------------------------------------------

int cmd_inject(const std::string& config_path, const FlagSink& sink,
               const std::string& site_text, const std::string& positions_text,
               bool no_writeback, const std::string& out_path) {
  const CampaignConfig cfg = assemble_config(config_path, sink);
  const Workload wl = build_workload(cfg.workload);
  const RunResult golden = wl.run();

  // default: exactly what trial 0 of the equivalent campaign would do
  FaultSite site = sample_site(wl.instruction_count(), wl.shape(), cfg.fault,
                               cfg.master_seed, 0);
  bool forced = false;
  if (!site_text.empty()) {
    const std::vector<int> coords = parse_int_list(site_text, "--site");
    if (coords.size() != 4)
      throw std::invalid_argument(
          "--site needs exactly instr,lane,dreg,term");
    if (coords[0] < 0)
      throw std::invalid_argument("--site instr must be non-negative");
    site.instr = std::size_t(coords[0]);
    site.lane = coords[1];
    site.dreg = coords[2];
    site.term = coords[3];
    forced = true;
  }
  if (!positions_text.empty()) {
    std::vector<int> bits = parse_int_list(positions_text, "--positions");
    std::sort(bits.begin(), bits.end());
    if (std::adjacent_find(bits.begin(), bits.end()) != bits.end())
      throw std::invalid_argument("--positions repeats a bit");
    site.bit_positions = std::move(bits);
    forced = true;
  }

  detail::TrialScratch scratch;
  const TrialRecord rec =
      detail::run_trial(wl, cfg, golden.output, golden.accuracy, 0, 0,
                        forced ? &site : nullptr, !no_writeback, &scratch);

  std::cout << record_to_json(rec) << "\n";
  if (!out_path.empty()) write_records_jsonl(out_path, {rec});

  std::cerr << "site instr=" << rec.site.instr << " lane=" << rec.site.lane
            << " dreg=" << rec.site.dreg << " term=" << rec.site.term
            << " bits=[";
  for (std::size_t i = 0; i < rec.site.bit_positions.size(); ++i)
    std::cerr << (i ? "," : "") << rec.site.bit_positions[i];
  std::cerr << "]\n";
  std::cerr << "term 0x" << rec.orig_hex << " -> 0x" << rec.fault_hex << "\n";
  std::fprintf(stderr, "re_sum %.9g -> %.9g (diff %.9g)\n",
               double(rec.re_sum), double(rec.re_sum_prime), rec.diff);
  if (rec.guard_kind != GuardKind::none)
    std::cerr << "guard " << guard_name(rec.guard_kind) << " "
              << (rec.guard_detected ? "detected" : "passed") << "\n";
  if (no_writeback) std::cerr << "write-back suppressed\n";
  std::cerr << "outcome " << outcome_name(rec.outcome) << "\n";
  return 0;
}

// ---- analyze ---------------------------------------------------------------

void require_single_format(const std::vector<TrialRecord>& records) {
  std::set<std::string> formats;
  for (const TrialRecord& rec : records) formats.insert(format_name(rec.format));
  if (formats.size() > 1) {
    std::string list;
    for (const std::string& f : formats) list += (list.empty() ? "" : ", ") + f;
    throw std::invalid_argument("records mix formats: " + list);
  }
}

int cmd_analyze(const std::string& records_path, const std::string& report) {
  const std::vector<TrialRecord> records = read_records_jsonl(records_path);
  require_single_format(records);
  const CampaignSummary s = summarize(records);

  if (report == "zerodiff") {
    std::size_t zero_diff = 0;
    for (const TrialRecord& rec : records) zero_diff += rec.diff == 0.0;
    std::printf("metric,value\n");
    std::printf("trials,%zu\n", s.trials);
    std::printf("sdc,%zu\n", s.sdc);
    std::printf("benign,%zu\n", s.benign);
    std::printf("detected,%zu\n", s.detected);
    std::printf("sdc_rate,%.9g\n", s.sdc_rate);
    std::printf("zero_diff,%zu\n", zero_diff);
    std::printf("zero_diff_fraction,%.9g\n",
                s.trials ? double(zero_diff) / double(s.trials) : 0.0);
  } else if (report == "ecdf") {
    std::printf("log10_abs_diff,cumulative_fraction\n");
    for (const auto& [value, cum] : s.diff_ecdf)
      std::printf("%.9g,%.9g\n", value, cum);
  } else if (report == "bitpos") {
    if (!records.empty() && s.per_bit_sdc.empty())
      throw std::invalid_argument(
          "per-bit report needs single-bit records");
    std::printf("bit,sdc_rate\n");
    for (const auto& [bit, rate] : s.per_bit_sdc)
      std::printf("%d,%.9g\n", bit, rate);
  } else {  // guard
    std::map<GuardKind, std::pair<std::size_t, std::size_t>> by_kind;
    for (const TrialRecord& rec : records) {
      auto& cell = by_kind[rec.guard_kind];
      ++cell.first;
      cell.second += rec.guard_detected;
    }
    std::printf("guard_kind,trials,detected,detection_rate\n");
    for (const auto& [kind, cell] : by_kind)
      std::printf("%s,%zu,%zu,%.9g\n", guard_name(kind), cell.first,
                  cell.second, double(cell.second) / double(cell.first));
  }
  return 0;
}

// ---- verify ----------------------------------------------------------------

struct VerifyContext {
  int failures = 0;

  void report(bool ok, const std::string& scope, const char* suite,
              const std::string& detail = "") {
    if (ok) {
      std::cout << "ok " << scope << " " << suite << "\n";
    } else {
      std::cout << "FAIL " << scope << " " << suite
                << (detail.empty() ? "" : ": " + detail) << "\n";
      ++failures;
    }
  }
};

void verify_codec(VerifyContext& ctx, FpFormat f) {
  const FormatInfo& fi = format_info(f);
  const std::uint32_t limit = std::uint32_t(1) << fi.total_bits;
  const std::uint32_t step = fi.total_bits > 16 ? 8 : 1;
  bool ok = true;
  std::string detail;
  for (std::uint32_t w = 0; w < limit && ok; w += step) {
    const Encoded e{f, w};
    if (is_nan(e)) continue;  // NaNs re-encode to the canonical quiet word
    const Encoded back = encode(decode(e), f);
    if (back.bits != w) {
      ok = false;
      detail = "word 0x" + to_hex(e) + " re-encoded to 0x" + to_hex(back);
    }
  }
  struct Spot {
    double value;
    std::uint32_t word;
  };
  const Spot spots_fp16[] = {{1.0, 0x3c00}, {-2.5, 0xc100}, {65504.0, 0x7bff}};
  const Spot spots_bf16[] = {{1.0, 0x3f80}, {-2.5, 0xc020}, {131072.0, 0x4800}};
  const Spot spots_tf32[] = {{1.0, 0x1fc00}, {-2.5, 0x60100}, {8.0, 0x20800}};
  const Spot* spots = f == FpFormat::fp16   ? spots_fp16
                      : f == FpFormat::bf16 ? spots_bf16
                                            : spots_tf32;
  for (int i = 0; i < 3 && ok; ++i) {
    const Encoded e = encode(spots[i].value, f);
    if (e.bits != spots[i].word) {
      ok = false;
      detail = "encode(" + std::to_string(spots[i].value) + ") gave 0x" +
               to_hex(e);
    }
  }
  ctx.report(ok, format_name(f), "codec_round_trip", detail);
}

void verify_fragment_map(VerifyContext& ctx, FpFormat f) {
  const HmmaShape shape = HmmaShape::for_format(f);
  FragmentMap fm = build_fragment_map(shape);
  if (std::getenv("MPGEMMFI_TEST_CORRUPT_MAP") != nullptr)
    std::swap(fm.a[2], fm.a[5]);

  bool ok = true;
  std::string detail;
  auto check_inverse = [&](const std::vector<Coord>& fwd,
                           const std::vector<std::uint16_t>& owner, int cols,
                           const char* which) {
    for (std::size_t packed = 0; packed < fwd.size() && ok; ++packed) {
      const Coord co = fwd[packed];
      const std::size_t idx = std::size_t(co.row) * std::size_t(cols) + co.col;
      if (idx >= owner.size() || owner[idx] != packed) {
        ok = false;
        detail = std::string(which) + " table is not a bijection at slot " +
                 std::to_string(packed);
      }
    }
  };
  check_inverse(fm.a, fm.a_owner, shape.k, "A");
  check_inverse(fm.b, fm.b_owner, shape.n, "B");
  check_inverse(fm.d, fm.d_owner, shape.n, "D");

  // lane 5 sits in thread group 1, position 1
  if (ok) {
    const Coord d = fm.d_coord(5, 2);
    if (d.row != 9 || d.col != 2) {
      ok = false;
      detail = "lane 5 dreg 2 mapped off its thread group row";
    }
  }
  if (ok) {
    const Coord a0 = fm.a_coord(5, 0);
    const bool good = f == FpFormat::tf32 ? (a0.row == 1 && a0.col == 1)
                                          : (a0.row == 1 && a0.col == 2);
    if (!good) {
      ok = false;
      detail = "lane 5 A slot 0 mapped off its thread group";
    }
  }
  ctx.report(ok, format_name(f), "fragment_map", detail);
}

void verify_engine(VerifyContext& ctx, FpFormat f) {
  CounterRng rng(0xfeed, std::uint64_t(f));
  const Index m = 33, n = 17, k = 24;
  Matrix32 a(m, k), b(k, n);
  for (Index c = 0; c < k; ++c)
    for (Index r = 0; r < m; ++r)
      a(r, c) = float(rng.uniform(-1.0, 1.0));
  for (Index c = 0; c < n; ++c)
    for (Index r = 0; r < k; ++r)
      b(r, c) = float(rng.uniform(-1.0, 1.0));
  a = quantized(a, f);
  b = quantized(b, f);
  Matrix32 c = Matrix32::Zero(m, n);

  const Matrix32 got = run_gemm(make_gemm_problem(a, b, c, f));

  bool ok = true;
  std::string detail;
  for (Index col = 0; col < n && ok; ++col)
    for (Index row = 0; row < m && ok; ++row) {
      float acc = 0.0f;
      for (Index kk = 0; kk < k; ++kk) acc += a(row, kk) * b(kk, col);
      if (std::bit_cast<std::uint32_t>(acc) !=
          std::bit_cast<std::uint32_t>(got(row, col))) {
        ok = false;
        detail = "element (" + std::to_string(row) + "," +
                 std::to_string(col) + ") deviates from the scalar reference";
      }
    }
  ctx.report(ok, format_name(f), "engine_vs_reference", detail);
}

void verify_guard(VerifyContext& ctx, FpFormat f) {
  bool ok = true;
  std::string detail;
  if (f == FpFormat::bf16) {
    // detection threshold and fault-free soundness, sampled
    ok = bound_check(encode(131072.0, f)).detected &&
         !bound_check(encode(130560.0, f)).detected;
    if (!ok) detail = "bound_check threshold misplaced";
    CounterRng rng(0x9c, 1);
    for (int it = 0; it < 20000 && ok; ++it) {
      const std::uint32_t e1 = 1 + std::uint32_t(rng.bounded(254));
      const std::uint32_t e2 = 1 + std::uint32_t(rng.bounded(254));
      const std::uint32_t m1 = std::uint32_t(rng.bounded(128));
      const std::uint32_t m2 = std::uint32_t(rng.bounded(128));
      const float a = decode(Encoded{f, (e1 << 7) | m1});
      const float b = decode(Encoded{f, (e2 << 7) | m2});
      const Encoded term = encode(a * b, f);
      if (range_check_max(term, e1, e2).detected) {
        ok = false;
        detail = "range check flagged the fault-free product 0x" +
                 to_hex(term);
      }
    }
  } else {
    CounterRng rng(0x9c, 2);
    for (int it = 0; it < 1000 && ok; ++it) {
      const Encoded e{f, std::uint32_t(rng.next() &
                                       format_info(f).word_mask())};
      if (apply_guard(GuardKind::range_check_max, e, 100, 100).detected ||
          apply_guard(GuardKind::bound_check, e, 100, 100).detected) {
        ok = false;
        detail = "guard fired on a non-bf16 product";
      }
    }
  }
  ctx.report(ok, format_name(f), "guards", detail);
}

void verify_rng(VerifyContext& ctx) {
  CounterRng r1(42, 7), r2(42, 7);
  bool ok = true;
  std::string detail;
  for (int i = 0; i < 1000 && ok; ++i)
    if (r1.next() != r2.next()) {
      ok = false;
      detail = "identical seeds diverged";
    }
  ctx.report(ok, "any", "rng_determinism", detail);

  // 64-cell uniformity: chi-square stat within 5 sigma of its mean
  constexpr int kCells = 64;
  constexpr int kDraws = 200000;
  std::vector<std::size_t> counts(kCells, 0);
  CounterRng rng(7, 3);
  for (int i = 0; i < kDraws; ++i) ++counts[rng.bounded(kCells)];
  double stat = 0.0;
  const double expected = double(kDraws) / kCells;
  for (std::size_t c : counts) {
    const double d = double(c) - expected;
    stat += d * d / expected;
  }
  const double dof = kCells - 1;
  const double sigma = std::sqrt(2.0 * dof);
  ok = std::fabs(stat - dof) <= 5.0 * sigma;
  ctx.report(ok, "any", "rng_uniformity",
             ok ? "" : "chi-square " + std::to_string(stat));
}

int cmd_verify(const std::string& format_choice) {
  VerifyContext ctx;
  verify_rng(ctx);
  const FpFormat all[] = {FpFormat::fp16, FpFormat::bf16, FpFormat::tf32};
  for (FpFormat f : all) {
    if (format_choice != "all" && format_choice != format_name(f)) continue;
    verify_codec(ctx, f);
    verify_fragment_map(ctx, f);
    verify_engine(ctx, f);
    verify_guard(ctx, f);
  }
  if (ctx.failures) {
    std::cerr << ctx.failures << " self-check(s) failed\n";
    return kInternalError;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"warp-level mixed precision GEMM fault injection lab"};
  app.require_subcommand(1);

  FlagSink campaign_sink;
  std::string campaign_config, campaign_out = "records.jsonl";
  CLI::App* campaign_cmd =
      app.add_subcommand("campaign", "run an injection campaign");
  campaign_cmd->add_option("--config", campaign_config, "INI config file");
  register_config_flags(campaign_cmd, campaign_sink);
  campaign_cmd->add_option("--out", campaign_out,
                           "records output path (JSONL)");

  FlagSink inject_sink;
  std::string inject_config, inject_out, inject_site, inject_positions;
  bool inject_no_writeback = false;
  CLI::App* inject_cmd =
      app.add_subcommand("inject", "run a single injection trial");
  inject_cmd->add_option("--config", inject_config, "INI config file");
  register_config_flags(inject_cmd, inject_sink);
  inject_cmd->add_option("--site", inject_site,
                         "force the site: instr,lane,dreg,term");
  inject_cmd->add_option("--positions", inject_positions,
                         "force the flipped bits, e.g. 14 or 3,14");
  inject_cmd->add_flag("--no-writeback", inject_no_writeback,
                       "compute the record but keep the clean sum");
  inject_cmd->add_option("--out", inject_out, "also write the record here");

  std::string analyze_records, analyze_report;
  CLI::App* analyze_cmd =
      app.add_subcommand("analyze", "turn a records file into CSV");
  analyze_cmd->add_option("--records", analyze_records, "records JSONL path")
      ->required();
  analyze_cmd->add_option("--report", analyze_report,
                          "zerodiff, ecdf, bitpos, or guard")
      ->required()
      ->check(CLI::IsMember({"zerodiff", "ecdf", "bitpos", "guard"}));

  std::string verify_format = "all";
  CLI::App* verify_cmd = app.add_subcommand("verify", "run self checks");
  verify_cmd->add_option("--format", verify_format, "fp16, bf16, tf32, or all")
      ->check(CLI::IsMember({"fp16", "bf16", "tf32", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      std::cout << app.help();
      return 0;
    }
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    if (campaign_cmd->parsed())
      return cmd_campaign(campaign_config, campaign_sink, campaign_out);
    if (inject_cmd->parsed())
      return cmd_inject(inject_config, inject_sink, inject_site,
                        inject_positions, inject_no_writeback, inject_out);
    if (analyze_cmd->parsed()) return cmd_analyze(analyze_records, analyze_report);
    if (verify_cmd->parsed()) return cmd_verify(verify_format);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return 0;
}
