#include "mpgemmfi/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mpgemmfi {
namespace {

struct Entry {
  std::string key;
  std::string value;
  std::size_t line;
};

struct Section {
  std::string name;
  std::vector<Entry> entries;
};

std::string trimmed(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void fail(const std::string& origin, std::size_t line,
                       const std::string& what) {
  throw std::invalid_argument(origin + ":" + std::to_string(line) + ": " +
                              what);
}

std::vector<Section> parse_ini(std::istream& in, const std::string& origin) {
  std::vector<Section> sections;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (const auto pos = line.find_first_of("#;"); pos != std::string::npos)
      line.erase(pos);
    line = trimmed(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        fail(origin, lineno, "malformed section header '" + line + "'");
      const std::string name = trimmed(line.substr(1, line.size() - 2));
      if (name.empty()) fail(origin, lineno, "empty section name");
      for (const Section& s : sections)
        if (s.name == name)
          fail(origin, lineno, "duplicate section [" + name + "]");
      sections.push_back(Section{name, {}});
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(origin, lineno, "expected key = value, got '" + line + "'");
    if (sections.empty())
      fail(origin, lineno, "key outside any section");
    Entry entry{trimmed(line.substr(0, eq)), trimmed(line.substr(eq + 1)),
                lineno};
    if (entry.key.empty()) fail(origin, lineno, "empty key");
    if (entry.value.empty())
      fail(origin, lineno, "empty value for key '" + entry.key + "'");
    for (const Entry& prior : sections.back().entries)
      if (prior.key == entry.key)
        fail(origin, lineno,
             "duplicate key '" + entry.key + "' in [" + sections.back().name +
                 "]");
    sections.back().entries.push_back(std::move(entry));
  }
  return sections;
}

std::uint64_t parse_u64(const Entry& e, const std::string& origin) {
  std::uint64_t v = 0;
  const auto [ptr, ec] =
      std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
  if (ec != std::errc{} || ptr != e.value.data() + e.value.size())
    fail(origin, e.line,
         "key '" + e.key + "' needs a non-negative integer, got '" + e.value +
             "'");
  return v;
}

std::int64_t parse_i64(const Entry& e, const std::string& origin) {
  std::int64_t v = 0;
  const auto [ptr, ec] =
      std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
  if (ec != std::errc{} || ptr != e.value.data() + e.value.size())
    fail(origin, e.line,
         "key '" + e.key + "' needs an integer, got '" + e.value + "'");
  return v;
}

double parse_f64(const Entry& e, const std::string& origin) {
  const char* begin = e.value.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + e.value.size())
    fail(origin, e.line,
         "key '" + e.key + "' needs a number, got '" + e.value + "'");
  return v;
}

std::vector<int> parse_layers(const Entry& e, const std::string& origin) {
  std::vector<int> dims;
  std::stringstream segments(e.value);
  std::string piece;
  while (std::getline(segments, piece, '-')) {
    int v = 0;
    const auto [ptr, ec] =
        std::from_chars(piece.data(), piece.data() + piece.size(), v);
    if (ec != std::errc{} || ptr != piece.data() + piece.size() || v <= 0)
      fail(origin, e.line,
           "key 'layers' needs dash-separated positive integers like "
           "64-128-64-10, got '" +
               e.value + "'");
    dims.push_back(v);
  }
  if (dims.size() < 2)
    fail(origin, e.line, "key 'layers' needs at least two dimensions");
  return dims;
}

void apply_workload(const Section& sec, const std::string& origin,
                    WorkloadSpec& spec) {
  bool is_mlp = std::holds_alternative<MlpSpec>(spec.kind);
  for (const Entry& e : sec.entries)
    if (e.key == "type") {
      if (e.value == "mlp")
        is_mlp = true;
      else if (e.value == "random_gemm")
        is_mlp = false;
      else
        fail(origin, e.line,
             "key 'type' must be random_gemm or mlp, got '" + e.value + "'");
    }
  RandomGemmSpec gemm;
  MlpSpec mlp;
  if (const auto* g = std::get_if<RandomGemmSpec>(&spec.kind)) gemm = *g;
  if (const auto* m = std::get_if<MlpSpec>(&spec.kind)) mlp = *m;

  for (const Entry& e : sec.entries) {
    if (e.key == "type") continue;
    if (e.key == "format") {
      try {
        spec.format = parse_format(e.value);
      } catch (const std::invalid_argument& ex) {
        fail(origin, e.line, ex.what());
      }
    } else if (e.key == "seed") {
      spec.seed = parse_u64(e, origin);
    } else if (e.key == "m" || e.key == "n" || e.key == "k") {
      if (is_mlp)
        fail(origin, e.line,
             "key '" + e.key + "' applies to type=random_gemm only");
      const std::int64_t v = parse_i64(e, origin);
      if (v <= 0) fail(origin, e.line, "key '" + e.key + "' must be positive");
      (e.key == "m" ? gemm.m : e.key == "n" ? gemm.n : gemm.k) = Index(v);
    } else if (e.key == "dist") {
      if (is_mlp)
        fail(origin, e.line, "key 'dist' applies to type=random_gemm only");
      try {
        gemm.dist = parse_dist(e.value);
      } catch (const std::invalid_argument& ex) {
        fail(origin, e.line, ex.what());
      }
    } else if (e.key == "layers") {
      if (!is_mlp) fail(origin, e.line, "key 'layers' applies to type=mlp only");
      mlp.layer_dims = parse_layers(e, origin);
    } else if (e.key == "dataset") {
      if (!is_mlp)
        fail(origin, e.line, "key 'dataset' applies to type=mlp only");
      const std::int64_t v = parse_i64(e, origin);
      if (v <= 0) fail(origin, e.line, "key 'dataset' must be positive");
      mlp.dataset_size = Index(v);
    } else if (e.key == "weight_seed") {
      if (!is_mlp)
        fail(origin, e.line, "key 'weight_seed' applies to type=mlp only");
      mlp.weight_seed = parse_u64(e, origin);
    } else {
      fail(origin, e.line, "unknown key '" + e.key + "' in [workload]");
    }
  }
  if (is_mlp)
    spec.kind = std::move(mlp);
  else
    spec.kind = std::move(gemm);
}

void apply_fault(const Section& sec, const std::string& origin,
                 FaultSpec& spec) {
  for (const Entry& e : sec.entries) {
    if (e.key == "bits") {
      spec.n_bits = int(parse_i64(e, origin));
    } else if (e.key == "mode") {
      if (e.value == "random")
        spec.mode = BitMode::random_positions;
      else if (e.value == "fixed")
        spec.mode = BitMode::fixed_position;
      else
        fail(origin, e.line,
             "key 'mode' must be random or fixed, got '" + e.value + "'");
    } else if (e.key == "position") {
      spec.fixed_position = int(parse_i64(e, origin));
    } else {
      fail(origin, e.line, "unknown key '" + e.key + "' in [fault]");
    }
  }
}

void apply_guard_section(const Section& sec, const std::string& origin,
                         GuardKind& kind) {
  for (const Entry& e : sec.entries) {
    if (e.key == "kind") {
      try {
        kind = parse_guard(e.value);
      } catch (const std::invalid_argument& ex) {
        fail(origin, e.line, ex.what());
      }
    } else {
      fail(origin, e.line, "unknown key '" + e.key + "' in [guard]");
    }
  }
}

void apply_campaign(const Section& sec, const std::string& origin,
                    CampaignConfig& cfg) {
  for (const Entry& e : sec.entries) {
    if (e.key == "trials") {
      cfg.trials = std::size_t(parse_u64(e, origin));
    } else if (e.key == "master_seed") {
      cfg.master_seed = parse_u64(e, origin);
    } else if (e.key == "tolerance") {
      const double v = parse_f64(e, origin);
      if (v < 0.0) fail(origin, e.line, "key 'tolerance' must be >= 0");
      cfg.sdc_tolerance = v;
    } else {
      fail(origin, e.line, "unknown key '" + e.key + "' in [campaign]");
    }
  }
}

}  // namespace

CampaignConfig parse_campaign_config(std::istream& text,
                                     const std::string& origin,
                                     const CampaignConfig& base) {
  const std::vector<Section> sections = parse_ini(text, origin);
  CampaignConfig cfg = base;
  for (const Section& sec : sections) {
    if (sec.name == "workload")
      apply_workload(sec, origin, cfg.workload);
    else if (sec.name == "fault")
      apply_fault(sec, origin, cfg.fault);
    else if (sec.name == "guard")
      apply_guard_section(sec, origin, cfg.guard);
    else if (sec.name == "campaign")
      apply_campaign(sec, origin, cfg);
    else
      throw std::invalid_argument(origin + ": unknown section [" + sec.name +
                                  "]");
  }
  validate_fault_spec(cfg.fault, cfg.workload.format);
  return cfg;
}

CampaignConfig load_campaign_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return parse_campaign_config(in, path);
}

}  // namespace mpgemmfi
