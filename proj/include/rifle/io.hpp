#pragma once

// Plain CSV matrices: comma separated, no header, one row per line.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rifle/linalg.hpp"

namespace rifle {

/// Shortest round-trip decimal text for a double.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_cell(const std::string& cell, const std::string& where) {
  const std::string text = trim(cell);
  if (text.empty()) throw Error(Errc::ParseError, where + ": empty field");
  errno = 0;
  char* end = nullptr;
  const double value = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || errno == ERANGE)
    throw Error(Errc::ParseError, where + ": not a number: '" + text + "'");
  return value;
}

}  // namespace detail

/// Parses CSV text. Blank lines are skipped; row numbers in errors are
/// 1-based line numbers.
inline Matrix parse_csv_matrix(std::istream& in, const std::string& name = "input") {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      row.push_back(detail::parse_cell(cell, name + " row " + std::to_string(line_no) + " column " +
                                                 std::to_string(col)));
    }
    if (!line.empty() && line.back() == ',')
      throw Error(Errc::ParseError, name + " row " + std::to_string(line_no) + ": trailing comma");
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error(Errc::ParseError, name + " row " + std::to_string(line_no) + ": expected " +
                                        std::to_string(rows.front().size()) + " fields, found " +
                                        std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

inline Matrix read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot open " + path);
  return parse_csv_matrix(in, path);
}

inline void write_csv_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

inline void write_csv_matrix(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::InvalidArgument, "cannot write " + path);
  write_csv_matrix(out, m);
}

/// Reads a column of values; a single row is also accepted.
inline std::vector<double> read_csv_vector(const std::string& path) {
  const Matrix m = read_csv_matrix(path);
  if (m.cols() != 1 && m.rows() != 1) throw Error(Errc::DimMismatch, path + " is not a single row or column");
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) out[static_cast<std::size_t>(i)] = m(i);
  return out;
}

struct LoadedPair {
  MatrixPair pair;
  std::vector<std::string> warnings;
};

inline SymMatrix load_symmetric(const std::string& path, std::vector<std::string>& warnings) {
  const Matrix m = read_csv_matrix(path);
  if (m.rows() == 0) throw Error(Errc::ParseError, path + " is empty");
  if (m.rows() != m.cols())
    throw Error(Errc::DimMismatch, path + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                       ", not square");
  SymMatrix s(m);
  if (s.asymmetric()) warnings.push_back(path + " is not symmetric; using (M + M^T) / 2");
  return s;
}

inline LoadedPair load_pair_csv(const std::string& path_a, const std::string& path_b) {
  std::vector<std::string> warnings;
  SymMatrix a = load_symmetric(path_a, warnings);
  SymMatrix b = load_symmetric(path_b, warnings);
  if (a.dim() != b.dim())
    throw Error(Errc::DimMismatch, "A is " + std::to_string(a.dim()) + "-dimensional but B is " +
                                       std::to_string(b.dim()) + "-dimensional");
  return LoadedPair{MatrixPair(std::move(a), std::move(b)), std::move(warnings)};
}

}  // namespace rifle
