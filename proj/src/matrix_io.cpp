#include "mpgemmfi/matrix_io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mpgemmfi {

namespace {

[[noreturn]] void fail(const std::filesystem::path& p, const std::string& why) {
  throw std::runtime_error(p.string() + ": " + why);
}

Matrix32 load_bin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::uint32_t dims[2];
  if (!in.read(reinterpret_cast<char*>(dims), sizeof dims))
    fail(path, "truncated header");
  const std::uint64_t count = std::uint64_t(dims[0]) * dims[1];
  if (count == 0 || count > (1u << 28)) fail(path, "implausible extents");
  Matrix32 m(static_cast<Index>(dims[0]), static_cast<Index>(dims[1]));
  if (!in.read(reinterpret_cast<char*>(m.data()),
               std::streamsize(count * sizeof(float))))
    fail(path, "truncated data");
  char extra;
  if (in.read(&extra, 1)) fail(path, "trailing bytes");
  return m;
}

void save_bin(const std::filesystem::path& path, const Matrix32& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  const std::uint32_t dims[2] = {std::uint32_t(m.rows()),
                                 std::uint32_t(m.cols())};
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(m.data()),
            std::streamsize(std::size_t(m.size()) * sizeof(float)));
  if (!out) fail(path, "write failed");
}

Matrix32 load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open");
  std::vector<std::vector<float>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<float> row;
    const char* s = line.c_str();
    while (true) {
      char* end = nullptr;
      const float v = std::strtof(s, &end);
      if (end == s) fail(path, "bad numeric field in row " +
                                   std::to_string(rows.size() + 1));
      row.push_back(v);
      s = end;
      while (*s == ' ' || *s == '\t') ++s;
      if (*s == ',') {
        ++s;
        continue;
      }
      if (*s == '\0' || *s == '\r') break;
      fail(path, "unexpected character in row " +
                     std::to_string(rows.size() + 1));
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(path, "ragged row " + std::to_string(rows.size() + 1));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(path, "no data rows");
  Matrix32 m(Index(rows.size()), Index(rows.front().size()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c)
      m(r, c) = rows[std::size_t(r)][std::size_t(c)];
  return m;
}

void save_csv(const std::filesystem::path& path, const Matrix32& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  char buf[64];
  for (Index r = 0; r < m.rows(); ++r) {
    std::string line;
    for (Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", double(m(r, c)));
      if (c) line += ',';
      line += buf;
    }
    line += '\n';
    out << line;
  }
  if (!out) fail(path, "write failed");
}

}  // namespace

Matrix32 load_matrix(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".bin") return load_bin(path);
  if (ext == ".csv") return load_csv(path);
  fail(path, "unsupported matrix extension (use .bin or .csv)");
}

void save_matrix(const std::filesystem::path& path, const Matrix32& m) {
  const auto ext = path.extension().string();
  if (ext == ".bin") return save_bin(path, m);
  if (ext == ".csv") return save_csv(path, m);
  fail(path, "unsupported matrix extension (use .bin or .csv)");
}

}  // namespace mpgemmfi
