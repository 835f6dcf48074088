#pragma once

// CSV ingestion and full-precision output.

#include <Eigen/Dense>

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wfactor/errors.hpp"
#include "wfactor/matrix_factor.hpp"
#include "wfactor/tsstats.hpp"

namespace wfactor {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string_view rest(line);
  while (true) {
    const auto pos = rest.find(',');
    cells.emplace_back(trim(rest.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    rest.remove_prefix(pos + 1);
  }
  return cells;
}

inline bool parse_number(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IngestError, "cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

// The first row is a header only when none of its cells parses as a number.
inline CsvTable read_numeric_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) fail(ErrorKind::IngestError, "'" + path + "' is empty");
  CsvTable table;
  std::size_t first = 0;
  {
    const auto cells = split_csv_line(lines.front());
    bool any_numeric = false;
    for (const auto& c : cells) {
      double v = 0.0;
      if (parse_number(c, v)) any_numeric = true;
    }
    if (!any_numeric) {
      table.header = cells;
      first = 1;
    }
  }
  std::size_t width = table.header.size();
  for (std::size_t i = first; i < lines.size(); ++i) {
    const long row_no = static_cast<long>(i + 1);
    const auto cells = split_csv_line(lines[i]);
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      fail(ErrorKind::IngestError,
           path + ": row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) + " cells, expected " +
               std::to_string(width),
           row_no);
    }
    std::vector<double> row(width);
    for (std::size_t j = 0; j < width; ++j) {
      if (!parse_number(cells[j], row[j])) {
        fail(ErrorKind::IngestError,
             path + ": row " + std::to_string(row_no) + ", column " + std::to_string(j + 1) + ": '" + cells[j] +
                 "' is not a finite number",
             row_no);
      }
    }
    table.rows.push_back(std::move(row));
  }
  if (table.rows.empty()) fail(ErrorKind::IngestError, "'" + path + "' has no data rows");
  return table;
}

}  // namespace detail

inline TimePanel ingest_csv(const std::string& path, bool demean_data = true) {
  detail::CsvTable table = detail::read_numeric_csv(path);
  const Index n = static_cast<Index>(table.rows.size());
  const Index p = static_cast<Index>(table.rows.front().size());
  if (n < 2) fail(ErrorKind::IngestError, "'" + path + "' needs at least 2 rows of data");
  Matrix y(n, p);
  for (Index t = 0; t < n; ++t)
    for (Index j = 0; j < p; ++j) y(t, j) = table.rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)];
  TimePanel panel(std::move(y), std::move(table.header));
  return demean_data ? demean(panel) : panel;
}

// Stacked matrix panel: a leading block-index column, then p2 values; each
// observation occupies p1 consecutive rows sharing the same index.
inline MatrixPanel ingest_matrix_csv(const std::string& path) {
  const detail::CsvTable table = detail::read_numeric_csv(path);
  const std::size_t width = table.rows.front().size();
  if (width < 2) fail(ErrorKind::IngestError, "'" + path + "' needs a block column and at least one value column");
  std::vector<Matrix> blocks;
  std::vector<std::vector<double>> current;
  double current_t = table.rows.front()[0];
  const long header_rows = table.header.empty() ? 0 : 1;
  auto flush = [&](long row_no) {
    const Index p1 = static_cast<Index>(current.size());
    if (!blocks.empty() && p1 != blocks.front().rows()) {
      fail(ErrorKind::IngestError,
           path + ": block ending before row " + std::to_string(row_no) + " has " + std::to_string(p1) +
               " rows, expected " + std::to_string(blocks.front().rows()),
           row_no);
    }
    Matrix m(p1, static_cast<Index>(width - 1));
    for (Index i = 0; i < p1; ++i)
      for (std::size_t j = 1; j < width; ++j) m(i, static_cast<Index>(j - 1)) = current[static_cast<std::size_t>(i)][j];
    blocks.push_back(std::move(m));
    current.clear();
  };
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const long row_no = static_cast<long>(i) + 1 + header_rows;
    if (row[0] != current_t) {
      if (row[0] < current_t) {
        fail(ErrorKind::IngestError, path + ": row " + std::to_string(row_no) + ": block index decreases", row_no);
      }
      flush(row_no);
      current_t = row[0];
    }
    current.push_back(row);
  }
  flush(static_cast<long>(table.rows.size()) + 1 + header_rows);
  if (blocks.size() < 2) fail(ErrorKind::IngestError, "'" + path + "' needs at least 2 blocks");
  return MatrixPanel(std::move(blocks));
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(const std::string& path, const Matrix& m, const std::vector<std::string>& header = {}) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IngestError, "cannot write '" + path + "'");
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

// Ordered key=value report.
class KeyValueWriter {
 public:
  void add(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
  void add(const std::string& key, const char* value) { add(key, std::string(value)); }
  void add(const std::string& key, double value) { add(key, format_double(value)); }
  void add(const std::string& key, int value) { add(key, std::to_string(value)); }
  void add(const std::string& key, long value) { add(key, std::to_string(value)); }
  void add(const std::string& key, long long value) { add(key, std::to_string(value)); }
  void add(const std::string& key, bool value) { add(key, std::string(value ? "true" : "false")); }

  void add(const std::string& key, const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + format_double(values[i]);
    add(key, s);
  }

  void add(const std::string& key, const std::vector<int>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + std::to_string(values[i]);
    add(key, s);
  }

  void add(const std::string& key, const Vector& values) {
    add(key, std::vector<double>(values.data(), values.data() + values.size()));
  }

  std::string str() const {
    std::ostringstream out;
    for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
    return out.str();
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::IngestError, "cannot write '" + path + "'");
    out << str();
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace wfactor
