#pragma once

// Generic CSV tables and labelled matrices, used by the command-line tool to
// pass intermediate results between subcommands.

#include "rmtvol/core.hpp"
#include "rmtvol/data_ingest.hpp"
#include "rmtvol/spectrum.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace rmtvol {

/// A CSV file with one header row; '#' comment lines and blank lines are
/// skipped.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  bool has(const std::string& name) const { return std::find(header.begin(), header.end(), name) != header.end(); }

  std::size_t index(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing_column", "no column named '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }

  std::vector<double> numeric(const std::string& name) const {
    const std::size_t c = index(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto v = detail::parse_double(rows[r][c]);
      if (!v)
        throw DataError("malformed_number", "column '" + name + "', data row " + std::to_string(r + 1) + ": '" +
                                               rows[r][c] + "' is not a number");
      out.push_back(*v);
    }
    return out;
  }
};

inline Table read_table(std::istream& in) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  if (!detail::next_data_line(in, line, line_no)) throw DataError("empty_file", "no header row");
  t.header = detail::split_csv_line(line);
  while (detail::next_data_line(in, line, line_no)) {
    auto cells = detail::split_csv_line(line);
    if (cells.size() != t.header.size())
      throw DataError("ragged_row", "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                        " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline Table read_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("file_not_found", "cannot open '" + path + "'");
  return read_table(in);
}

/// Rows labelled in the first column, columns labelled in the header.
struct LabeledMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  Matrix values;
};

inline void write_matrix_csv(std::ostream& out, const std::string& schema, const LabeledMatrix& m) {
  out << "# rmtvol " << schema << " v1\n";
  out << "asset";
  for (const auto& c : m.col_labels) out << ',' << c;
  out << '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    out << m.row_labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m.values(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

inline LabeledMatrix read_matrix_csv(std::istream& in) {
  const Table t = read_table(in);
  if (t.header.size() < 2) throw DataError("empty_matrix", "matrix file has no value columns");
  LabeledMatrix m;
  m.col_labels.assign(t.header.begin() + 1, t.header.end());
  m.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(m.col_labels.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    m.row_labels.push_back(t.rows[r][0]);
    for (std::size_t c = 1; c < t.header.size(); ++c) {
      const auto v = detail::parse_double(t.rows[r][c]);
      if (!v)
        throw DataError("malformed_number", "row '" + t.rows[r][0] + "', column '" + t.header[c] + "' is not a number");
      m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 1)) = *v;
    }
  }
  return m;
}

inline LabeledMatrix read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("file_not_found", "cannot open '" + path + "'");
  return read_matrix_csv(in);
}

/// Spectrum as written by write_spectrum_csv; `names` holds the eigenvector
/// column labels when vectors are present.
struct SpectrumFile {
  SpectralDecomposition spectrum;
  std::vector<std::string> names;
  bool has_vectors = false;
};

inline SpectrumFile read_spectrum_file(const std::string& path) {
  const Table t = read_table_file(path);
  SpectrumFile f;
  const std::vector<double> lambda = t.numeric("lambda");
  const auto n = static_cast<Eigen::Index>(lambda.size());
  f.spectrum.eigenvalues = Eigen::Map<const Vector>(lambda.data(), n);
  const std::size_t first = t.index("lambda") + 1;
  f.has_vectors = t.header.size() > first;
  if (f.has_vectors) {
    f.names.assign(t.header.begin() + static_cast<std::ptrdiff_t>(first), t.header.end());
    f.spectrum.eigenvectors.resize(static_cast<Eigen::Index>(f.names.size()), n);
    for (std::size_t i = 0; i < f.names.size(); ++i) {
      const std::vector<double> comp = t.numeric(t.header[first + i]);
      for (Eigen::Index k = 0; k < n; ++k) f.spectrum.eigenvectors(static_cast<Eigen::Index>(i), k) = comp[static_cast<std::size_t>(k)];
    }
  }
  if (!std::is_sorted(lambda.begin(), lambda.end()))
    throw UsageError("unsorted_eigenvalues", "eigenvalues in '" + path + "' must be ascending");
  return f;
}

}  // namespace rmtvol
