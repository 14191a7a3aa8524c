#pragma once

// Price and industry-classification ingestion, log returns, row
// normalisation, volatility returns and marginal-distribution diagnostics.

#include "rmtvol/core.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace rmtvol {

/// N assets by T+1 trading days of strictly positive closes.
struct PricePanel {
  std::vector<std::string> assets;
  std::vector<std::string> dates;
  Matrix prices;  // assets x dates
};

/// Log returns; dates[t] labels the close that ends return t.
struct ReturnPanel {
  std::vector<std::string> assets;
  std::vector<std::string> dates;
  Matrix returns;  // assets x T
};

/// Rows with zero mean and unit variance, plus the moments that were removed.
struct NormalizedPanel {
  Matrix data;
  Vector means;
  Vector stds;
};

/// Divisor used for row moments: T (time average) or T - 1.
enum class MomentDivisor { Population, Sample };

struct DroppedAsset {
  std::string asset;
  std::string reason;
};

struct PriceLoad {
  PricePanel panel;
  std::vector<DroppedAsset> dropped;
};

struct IndustryGroup {
  std::string code;  // four-digit GICS industry-group code
  std::string name;
  std::vector<std::size_t> members;  // indices into the asset list
};

struct IndustryMap {
  std::vector<IndustryGroup> groups;
  std::vector<std::size_t> membership;  // asset index -> group index

  std::size_t group_count() const { return groups.size(); }
  std::size_t asset_count() const { return membership.size(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    const auto field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    out.emplace_back(trim(field));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Reads the next line that is neither blank nor a '#' comment.
inline bool next_data_line(std::istream& in, std::string& line, std::size_t& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    return true;
  }
  return false;
}

inline bool is_missing(std::string_view s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null" || s == "NULL";
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

inline std::string asset_label(std::span<const std::string> names, std::size_t i) {
  return i < names.size() ? names[i] : "row " + std::to_string(i);
}

}  // namespace detail

/// Parses the price CSV (`date,TICKER1,...`). Assets with any missing cell
/// are dropped and reported; malformed numbers and non-positive prices are
/// rejected with their location.
inline PriceLoad read_prices(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!detail::next_data_line(in, line, line_no))
    throw DataError("empty_price_csv", "price CSV has no header row");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "date")
    throw DataError("bad_price_header", "price CSV header must start with 'date' followed by tickers");
  const std::vector<std::string> tickers(header.begin() + 1, header.end());
  {
    std::unordered_set<std::string> seen;
    for (const auto& t : tickers)
      if (t.empty() || !seen.insert(t).second)
        throw DataError("bad_price_header", "empty or duplicate ticker '" + t + "' in price header");
  }

  std::vector<std::string> dates;
  std::vector<std::vector<double>> columns(tickers.size());
  std::vector<bool> missing(tickers.size(), false);
  std::unordered_set<std::string> seen_dates;
  while (detail::next_data_line(in, line, line_no)) {
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError("bad_price_row", "line " + std::to_string(line_no) + ": expected " +
                                           std::to_string(header.size()) + " fields, got " +
                                           std::to_string(fields.size()));
    if (!seen_dates.insert(fields[0]).second)
      throw DataError("duplicate_date", "line " + std::to_string(line_no) + ": duplicate date '" + fields[0] + "'");
    dates.push_back(fields[0]);
    for (std::size_t j = 0; j < tickers.size(); ++j) {
      const auto& cell = fields[j + 1];
      if (detail::is_missing(cell)) {
        missing[j] = true;
        columns[j].push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const auto v = detail::parse_double(cell);
      if (!v || !std::isfinite(*v))
        throw DataError("bad_price_value", "asset " + tickers[j] + ", date " + fields[0] +
                                               ": cannot parse '" + cell + "'");
      if (*v <= 0.0)
        throw DataError("non_positive_price", "asset " + tickers[j] + ", date " + fields[0] +
                                                  ": non-positive price " + cell);
      columns[j].push_back(*v);
    }
  }
  if (dates.size() < 2) throw DataError("too_few_dates", "price CSV needs at least two dates");

  PriceLoad out;
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < tickers.size(); ++j) {
    if (missing[j])
      out.dropped.push_back({tickers[j], "missing price in window"});
    else
      kept.push_back(j);
  }
  out.panel.dates = std::move(dates);
  out.panel.prices.resize(static_cast<Eigen::Index>(kept.size()),
                          static_cast<Eigen::Index>(out.panel.dates.size()));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    out.panel.assets.push_back(tickers[kept[r]]);
    for (std::size_t t = 0; t < out.panel.dates.size(); ++t)
      out.panel.prices(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = columns[kept[r]][t];
  }
  return out;
}

inline PriceLoad read_prices_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("file_not_found", "cannot open price file '" + path + "'");
  return read_prices(in);
}

inline void write_prices(std::ostream& out, const PricePanel& panel) {
  out << "# rmtvol price-panel v1\n";
  out << "date";
  for (const auto& a : panel.assets) out << ',' << a;
  out << '\n';
  char buf[64];
  for (Eigen::Index t = 0; t < panel.prices.cols(); ++t) {
    out << panel.dates[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < panel.prices.rows(); ++i) {
      std::snprintf(buf, sizeof buf, "%.10g", panel.prices(i, t));
      out << ',' << buf;
    }
    out << '\n';
  }
}

/// r[i][t] = ln(P[i][t+1] / P[i][t]).
inline ReturnPanel log_returns(const PricePanel& panel) {
  const Eigen::Index n = panel.prices.rows();
  const Eigen::Index cols = panel.prices.cols();
  if (cols < 2) throw DataError("too_few_dates", "need at least two prices per asset");
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index t = 0; t < cols; ++t)
      if (!(panel.prices(i, t) > 0.0))
        throw DataError("non_positive_price",
                        "asset " + detail::asset_label(panel.assets, static_cast<std::size_t>(i)) + ", date " +
                            (static_cast<std::size_t>(t) < panel.dates.size() ? panel.dates[static_cast<std::size_t>(t)]
                                                                               : std::to_string(t)) +
                            ": non-positive price");
  ReturnPanel out;
  out.assets = panel.assets;
  if (panel.dates.size() == static_cast<std::size_t>(cols)) out.dates.assign(panel.dates.begin() + 1, panel.dates.end());
  out.returns.resize(n, cols - 1);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index t = 0; t + 1 < cols; ++t)
      out.returns(i, t) = std::log(panel.prices(i, t + 1) / panel.prices(i, t));
  return out;
}

/// Removes each row's mean and divides by its standard deviation.
inline NormalizedPanel normalize_rows(const Matrix& m, MomentDivisor divisor = MomentDivisor::Population,
                                      std::span<const std::string> names = {}) {
  const Eigen::Index n = m.rows();
  const Eigen::Index t_len = m.cols();
  const double denom = divisor == MomentDivisor::Population ? static_cast<double>(t_len)
                                                            : static_cast<double>(t_len - 1);
  if (t_len < 2) throw DataError("too_few_observations", "normalisation needs at least two observations per row");
  NormalizedPanel out;
  out.data.resize(n, t_len);
  out.means.resize(n);
  out.stds.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = m.row(i).mean();
    const double var = (m.row(i).array() - mean).square().sum() / denom;
    const double sd = std::sqrt(var);
    if (!(sd > 0.0) || !std::isfinite(sd))
      throw DataError("zero_variance_row",
                      "asset " + detail::asset_label(names, static_cast<std::size_t>(i)) + " has zero variance");
    out.means[i] = mean;
    out.stds[i] = sd;
    out.data.row(i) = (m.row(i).array() - mean) / sd;
  }
  return out;
}

/// delta_sigma[i][t] = ln(sigma[i][t+1] / sigma[i][t]); N x (T-1).
inline Matrix volatility_returns(const Matrix& sigma) {
  if (sigma.cols() < 2) throw DataError("too_few_observations", "volatility path needs at least two points");
  if ((sigma.array() <= 0.0).any() || !sigma.allFinite())
    throw DataError("non_positive_volatility", "volatility paths must be strictly positive");
  Matrix out(sigma.rows(), sigma.cols() - 1);
  for (Eigen::Index i = 0; i < sigma.rows(); ++i)
    for (Eigen::Index t = 0; t + 1 < sigma.cols(); ++t) out(i, t) = std::log(sigma(i, t + 1) / sigma(i, t));
  return out;
}

/// Moments of ln(sigma) over a pooled sample. Kurtosis is the raw fourth
/// standardized moment (3 for a Gaussian).
struct LogVolStats {
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;
  double skewness = std::numeric_limits<double>::quiet_NaN();
  double kurtosis = std::numeric_limits<double>::quiet_NaN();
  double mean_stderr = 0.0;
  double std_stderr = 0.0;
  bool degenerate = false;  // std == 0: shape moments undefined
};

inline LogVolStats log_volatility_stats(std::span<const double> sigma) {
  if (sigma.empty()) throw DataError("empty_sample", "log-volatility statistics need a non-empty sample");
  LogVolStats s;
  s.n = sigma.size();
  const double n = static_cast<double>(s.n);
  double sum = 0.0;
  for (double v : sigma) {
    if (!(v > 0.0)) throw DataError("non_positive_volatility", "volatility must be positive");
    sum += std::log(v);
  }
  s.mean = sum / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : sigma) {
    const double d = std::log(v) - s.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.std = std::sqrt(m2);
  s.mean_stderr = s.std / std::sqrt(n);
  s.std_stderr = s.std / std::sqrt(2.0 * n);
  // Rounding leaves a spread of order 1e-16 |mean| in a constant sample.
  if (!(s.std > 1e-12 * std::max(1.0, std::abs(s.mean)))) {
    s.degenerate = true;
    s.std = 0.0;
    return s;
  }
  s.skewness = m3 / std::pow(m2, 1.5);
  s.kurtosis = m4 / (m2 * m2);
  return s;
}

inline LogVolStats log_volatility_stats(const Matrix& sigma) {
  return log_volatility_stats(std::span<const double>(sigma.data(), static_cast<std::size_t>(sigma.size())));
}

/// Hill estimate of a power-law tail exponent from the k largest values,
/// with estimates at k/2 and 2k as a stability diagnostic.
struct TailEstimate {
  double exponent = 0.0;
  double std_error = 0.0;
  std::size_t k = 0;
  double exponent_half_k = 0.0;
  double exponent_double_k = 0.0;
  bool stable = false;
};

namespace detail {
inline double hill(std::span<const double> desc, std::size_t k) {
  const double threshold = desc[k];
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += std::log(desc[i] / threshold);
  return static_cast<double>(k) / s;
}
}  // namespace detail

/// Only the strictly positive part of `sample` is used. k defaults to 5% of
/// the sample size.
inline TailEstimate tail_exponent(std::span<const double> sample, std::optional<std::size_t> k = std::nullopt) {
  std::vector<double> tail;
  for (double v : sample)
    if (v > 0.0 && std::isfinite(v)) tail.push_back(v);
  std::sort(tail.begin(), tail.end(), std::greater<>());
  const std::size_t kk = k.value_or(sample.size() / 20);
  if (kk < 10 || kk >= tail.size())
    throw DataError("insufficient_tail", "tail exponent needs 10 <= k < number of positive values (k = " +
                                             std::to_string(kk) + ", positives = " + std::to_string(tail.size()) + ")");
  TailEstimate e;
  e.k = kk;
  e.exponent = detail::hill(tail, kk);
  e.std_error = e.exponent / std::sqrt(static_cast<double>(kk));
  const std::size_t k_half = std::max<std::size_t>(5, kk / 2);
  const std::size_t k_double = std::min(2 * kk, tail.size() - 1);
  e.exponent_half_k = detail::hill(tail, k_half);
  e.exponent_double_k = detail::hill(tail, k_double);
  const double se_half = e.exponent_half_k / std::sqrt(static_cast<double>(k_half));
  const double se_double = e.exponent_double_k / std::sqrt(static_cast<double>(k_double));
  e.stable = std::abs(e.exponent_half_k - e.exponent_double_k) <= 3.0 * std::hypot(se_half, se_double);
  return e;
}

/// Builds an industry map from one group code per asset. Groups are ordered
/// by code.
inline IndustryMap make_industry_map(std::span<const std::string> codes, std::span<const std::string> names = {}) {
  std::map<std::string, std::size_t> by_code;
  for (const auto& c : codes) by_code.emplace(c, 0);
  IndustryMap m;
  for (auto& [code, idx] : by_code) {
    idx = m.groups.size();
    m.groups.push_back({code, code, {}});
  }
  m.membership.resize(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::size_t g = by_code.at(codes[i]);
    m.membership[i] = g;
    m.groups[g].members.push_back(i);
    if (i < names.size() && !names[i].empty()) m.groups[g].name = names[i];
  }
  return m;
}

/// Parses `ticker,gics_group_code,group_name` and maps every asset in
/// `assets` to its group. Tickers absent from `assets` are ignored.
inline IndustryMap read_industry(std::istream& in, std::span<const std::string> assets) {
  std::string line;
  std::size_t line_no = 0;
  if (!detail::next_data_line(in, line, line_no))
    throw DataError("empty_industry_csv", "industry CSV has no header row");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header[0] != "ticker" || header[1] != "gics_group_code" || header[2] != "group_name")
    throw DataError("bad_industry_header", "industry CSV header must be ticker,gics_group_code,group_name");
  std::unordered_map<std::string, std::pair<std::string, std::string>> rows;
  while (detail::next_data_line(in, line, line_no)) {
    const auto first = line.find(',');
    const auto second = first == std::string::npos ? std::string::npos : line.find(',', first + 1);
    if (second == std::string::npos)
      throw DataError("bad_industry_row", "line " + std::to_string(line_no) + ": expected three fields");
    const std::string ticker(detail::trim(std::string_view(line).substr(0, first)));
    const std::string code(detail::trim(std::string_view(line).substr(first + 1, second - first - 1)));
    const std::string name(detail::trim(std::string_view(line).substr(second + 1)));
    if (code.size() != 4 || !std::all_of(code.begin(), code.end(), [](char c) { return c >= '0' && c <= '9'; }))
      throw DataError("bad_group_code", "line " + std::to_string(line_no) + ": group code '" + code +
                                            "' is not a four-digit code");
    auto [it, inserted] = rows.emplace(ticker, std::make_pair(code, name));
    if (!inserted && it->second.first != code)
      throw DataError("conflicting_industry", "ticker " + ticker + " is assigned to two groups");
  }
  std::vector<std::string> codes, names;
  for (const auto& a : assets) {
    const auto it = rows.find(a);
    if (it == rows.end()) throw DataError("industry_missing_asset", "asset " + a + " has no industry group");
    codes.push_back(it->second.first);
    names.push_back(it->second.second);
  }
  return make_industry_map(codes, names);
}

inline IndustryMap read_industry_file(const std::string& path, std::span<const std::string> assets) {
  std::ifstream in(path);
  if (!in) throw DataError("industry_map_missing", "cannot open industry file '" + path + "'");
  return read_industry(in, assets);
}

inline void write_industry(std::ostream& out, std::span<const std::string> assets, const IndustryMap& map) {
  out << "# rmtvol industry-map v1\n";
  out << "ticker,gics_group_code,group_name\n";
  for (std::size_t i = 0; i < assets.size(); ++i) {
    const auto& g = map.groups[map.membership[i]];
    out << assets[i] << ',' << g.code << ',' << g.name << '\n';
  }
}

}  // namespace rmtvol
