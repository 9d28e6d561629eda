// SPDX-License-Identifier: Apache-2.0
#include "arcl/heatmap.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace arcl {

void write_csv(std::ostream& out, const Matrix& m) {
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      if (c > 0) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_csv(out, m);
  if (!out) throw IoError("write failed: " + path.string());
}

Matrix read_csv(std::istream& in) {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t count = 0;
    std::stringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      double v = 0.0;
      const char* first = field.data();
      const char* last = field.data() + field.size();
      while (first != last && *first == ' ') ++first;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last) throw IoError("read_csv: bad number '" + field + "'");
      values.push_back(v);
      ++count;
    }
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      throw IoError("read_csv: ragged row " + std::to_string(rows + 1));
    }
    ++rows;
  }
  return Matrix(rows, cols, std::move(values));
}

Matrix read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csv(in);
}

std::string to_pgm(const Matrix& m) {
  std::string out = "P5\n" + std::to_string(m.cols()) + " " + std::to_string(m.rows()) + "\n255\n";
  const auto v = m.values();
  if (v.empty()) return out;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  for (double x : v) {
    const double level = range > 0.0 ? std::round((x - *lo) / range * 255.0) : 0.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(level, 0.0, 255.0))));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = to_pgm(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace arcl
