#pragma once

// End-to-end analysis: prices -> volatility model -> correlation matrix ->
// spectrum -> MP fit -> unfolding and level statistics -> market mode,
// industry structure and generalized kurtosis. Produces CSV data files and a
// JSON report whose content depends only on the inputs and configuration.

#include "rmtvol/core.hpp"
#include "rmtvol/data_ingest.hpp"
#include "rmtvol/garch.hpp"
#include "rmtvol/goe_stats.hpp"
#include "rmtvol/modes.hpp"
#include "rmtvol/mp_fit.hpp"
#include "rmtvol/spectrum.hpp"
#include "rmtvol/unfold.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace rmtvol {

using json = nlohmann::ordered_json;

inline constexpr const char* kReportSchema = "rmtvol.report/1";

enum class VolModel { Garch, Pooled, ArmaGarch };
enum class Target { Volatility, Return, VolatilityReturn };

inline const char* to_string(VolModel m) {
  switch (m) {
    case VolModel::Garch: return "garch";
    case VolModel::Pooled: return "pooled";
    case VolModel::ArmaGarch: return "arma_garch";
  }
  return "unknown";
}

inline const char* to_string(Target t) {
  switch (t) {
    case Target::Volatility: return "vol";
    case Target::Return: return "return";
    case Target::VolatilityReturn: return "vol-return";
  }
  return "unknown";
}

inline std::optional<VolModel> parse_model(const std::string& s) {
  if (s == "garch") return VolModel::Garch;
  if (s == "pooled") return VolModel::Pooled;
  if (s == "arma_garch" || s == "arma-garch") return VolModel::ArmaGarch;
  return std::nullopt;
}

inline std::optional<Target> parse_target(const std::string& s) {
  if (s == "vol") return Target::Volatility;
  if (s == "return") return Target::Return;
  if (s == "vol-return") return Target::VolatilityReturn;
  return std::nullopt;
}

struct PipelineConfig {
  std::string prices_path;
  std::string industry_path;
  std::optional<bool> industry_analysis;  // default: on when an industry path is given
  VolModel model = VolModel::Garch;
  InnovationDist dist = InnovationDist::gaussian();
  int max_arma_p = 5;
  int max_arma_q = 5;
  Target target = Target::Volatility;
  MomentDivisor divisor = MomentDivisor::Population;
  UnfoldingParams unfolding{};
  double spacing_trim = 0.05;
  double nv_trim = 0.1;
  MPFitOptions mp{};
  std::vector<double> nv_ells{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 15, 20, 30, 40};
  KurtosisVariant kurtosis = KurtosisVariant::Literal;
  std::size_t tail_k = 0;  // 0: 5% of the sample
  std::size_t top_eigenvectors = 20;
  std::string output_dir = ".";
  std::uint64_t seed = 1;  // recorded; no stage draws random numbers
};

/// A failure inside one pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.kind(), cause.code(), "stage '" + stage + "': " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct PipelineResult {
  json report;
  std::string report_path;
  std::vector<std::string> files;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Finite doubles pass through; NaN and infinities become null.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json num_array(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& schema, const std::vector<std::string>& header)
      : out_(path) {
    if (!out_) throw DataError("output_unwritable", "cannot write '" + path.string() + "'");
    out_ << "# rmtvol " << schema << " v1\n";
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }
  template <typename... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }
  std::ostream& raw() { return out_; }

 private:
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  std::ofstream out_;
};

template <typename F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  } catch (const std::exception& e) {
    throw StageError(name, NumericalError("internal_error", e.what()));
  }
}

inline std::vector<double> to_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline std::vector<double> row_vector(const Matrix& m, Eigen::Index i) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index t = 0; t < m.cols(); ++t) out[static_cast<std::size_t>(t)] = m(i, t);
  return out;
}

inline json garch_json(const GarchFit& f) {
  json j;
  j["alpha0"] = num(f.params.alpha0);
  j["alpha1"] = num(f.params.alpha1);
  j["beta1"] = num(f.params.beta1);
  if (f.dist.kind == Innovation::StudentT) j["nu"] = num(f.dist.nu);
  if (f.arma) {
    j["phi0"] = num(f.arma->phi0);
    j["phi"] = num_array(f.arma->phi);
    j["theta"] = num_array(f.arma->theta);
  }
  json se;
  for (std::size_t k = 0; k < f.names.size(); ++k) se[f.names[k]] = num(f.stderrs[k]);
  j["stderrs"] = se;
  j["loglik"] = num(f.loglik);
  j["bic"] = num(f.bic);
  j["converged"] = f.converged;
  j["boundary"] = f.boundary;
  return j;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

inline json ks_json(const KSResult& r) { return {{"statistic", num(r.statistic)}, {"p_value", num(r.p_value)}, {"n", r.n}}; }

inline std::string utc_stamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%S", &tm);
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(now.time_since_epoch()).count() % 1000000;
  char out[48];
  std::snprintf(out, sizeof out, "%s.%06lldZ", buf, static_cast<long long>(us));
  return out;
}

}  // namespace detail

struct VolatilityFit {
  Matrix sigma;                        // N x T conditional volatility
  std::vector<GarchFit> fits;          // per asset (empty for the pooled model)
  std::vector<ArmaOrder> orders;       // per asset, ARMA-GARCH only
  std::optional<PooledGarchFit> pooled;
};

/// Fits the chosen volatility model to every row of `returns`. Per-asset
/// fits run in parallel; results do not depend on scheduling.
inline VolatilityFit fit_volatility(const Matrix& returns, VolModel model, const InnovationDist& dist, int max_p = 5,
                                    int max_q = 5, const GarchOptions& gopt = {}) {
  const Eigen::Index n = returns.rows(), T = returns.cols();
  VolatilityFit out;
  out.sigma.resize(n, T);
  if (model == VolModel::Pooled) {
    out.pooled = fit_pooled_garch(returns, dist, gopt);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index t = 0; t < T; ++t)
        out.sigma(i, t) = out.pooled->sigmas[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
    return out;
  }
  out.fits.resize(static_cast<std::size_t>(n));
  out.orders.resize(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const std::vector<double> r = detail::row_vector(returns, static_cast<Eigen::Index>(i));
    if (model == VolModel::ArmaGarch) {
      out.orders[i] = select_arma_order(r, max_p, max_q).order;
      out.fits[i] = fit_arma_garch(r, out.orders[i], dist, gopt);
    } else {
      out.fits[i] = fit_garch(r, dist, gopt);
    }
  });
  for (std::size_t i = 0; i < out.fits.size(); ++i)
    for (Eigen::Index t = 0; t < T; ++t)
      out.sigma(static_cast<Eigen::Index>(i), t) = out.fits[i].sigma[static_cast<std::size_t>(t)];
  return out;
}

inline void write_garch_fits_csv(std::ostream& out, std::span<const std::string> assets, const VolatilityFit& vf) {
  out << "# rmtvol garch-fits v1\n";
  out << "asset,p,q,phi0,alpha0,alpha1,beta1,nu,se_alpha0,se_alpha1,se_beta1,loglik,bic,converged,boundary\n";
  auto cell = [](double v) { return detail::fmt(v); };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto row = [&](const std::string& name, const GarchFit& f, ArmaOrder o) {
    out << name << ',' << o.p << ',' << o.q << ',' << cell(f.arma ? f.arma->phi0 : nan) << ',' << cell(f.params.alpha0)
        << ',' << cell(f.params.alpha1) << ',' << cell(f.params.beta1) << ','
        << cell(f.dist.kind == Innovation::StudentT ? f.dist.nu : nan) << ',' << cell(f.stderr_of("alpha0")) << ','
        << cell(f.stderr_of("alpha1")) << ',' << cell(f.stderr_of("beta1")) << ',' << cell(f.loglik) << ','
        << cell(f.bic) << ',' << (f.converged ? 1 : 0) << ',' << (f.boundary ? 1 : 0) << '\n';
  };
  if (vf.pooled) {
    row("pooled", vf.pooled->fit, {});
    return;
  }
  for (std::size_t i = 0; i < vf.fits.size(); ++i)
    row(i < assets.size() ? assets[i] : std::to_string(i + 1), vf.fits[i], vf.orders[i]);
}

inline CorrelationKind target_kind(Target t) {
  switch (t) {
    case Target::Return: return CorrelationKind::Return;
    case Target::Volatility: return CorrelationKind::Volatility;
    case Target::VolatilityReturn: return CorrelationKind::VolatilityReturn;
  }
  return CorrelationKind::Return;
}

/// Row-normalized panel G behind the requested correlation matrix: returns,
/// volatilities, or volatility returns. `sigma` is ignored for returns.
inline Matrix target_panel(const Matrix& returns, const Matrix& sigma, Target target,
                           MomentDivisor divisor = MomentDivisor::Population, std::span<const std::string> names = {}) {
  switch (target) {
    case Target::Return: return normalize_rows(returns, divisor, names).data;
    case Target::Volatility: return normalize_rows(sigma, divisor, names).data;
    case Target::VolatilityReturn: return normalize_rows(volatility_returns(sigma), divisor, names).data;
  }
  return {};
}

/// Configuration as recorded in the report. Paths are kept verbatim; the
/// output directory is left out so relocating outputs does not change the
/// report.
inline json config_json(const PipelineConfig& c) {
  json j;
  j["prices"] = c.prices_path;
  j["industry"] = c.industry_path;
  j["industry_analysis"] = c.industry_analysis.value_or(!c.industry_path.empty());
  j["model"] = to_string(c.model);
  j["dist"] = c.dist.kind == Innovation::Gaussian ? "gaussian" : "student_t";
  j["max_arma_p"] = c.max_arma_p;
  j["max_arma_q"] = c.max_arma_q;
  j["target"] = to_string(c.target);
  j["moment_divisor"] = c.divisor == MomentDivisor::Population ? "population" : "sample";
  j["w"] = c.unfolding.w;
  j["c"] = c.unfolding.c;
  j["eta_scale"] = c.unfolding.eta_scale;
  j["spacing_trim"] = c.spacing_trim;
  j["nv_trim"] = c.nv_trim;
  j["scan_min"] = c.mp.scan_min;
  j["scan_max"] = c.mp.scan_max;
  j["smoothing_window"] = c.mp.smoothing_window;
  j["nv_ells"] = c.nv_ells;
  j["kurtosis_variant"] = c.kurtosis == KurtosisVariant::Literal ? "literal" : "squared_cross";
  j["tail_k"] = c.tail_k;
  j["top_eigenvectors"] = c.top_eigenvectors;
  j["seed"] = c.seed;
  return j;
}

/// Runs every stage and writes CSV files plus a report named
/// report_<digest>_<UTC timestamp>.json into the output directory. Existing
/// reports are never overwritten.
inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  PipelineResult res;
  json& rep = res.report;
  const fs::path out_dir = cfg.output_dir.empty() ? fs::path(".") : fs::path(cfg.output_dir);
  const bool want_industry = cfg.industry_analysis.value_or(!cfg.industry_path.empty());

  auto file = [&](const std::string& name) {
    res.files.push_back(name);
    return out_dir / name;
  };

  // ingest
  PriceLoad load;
  ReturnPanel returns;
  std::string digest;
  detail::stage("ingest", [&] {
    if (cfg.prices_path.empty()) throw UsageError("missing_prices", "no price file given");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw DataError("output_unwritable", "cannot create output directory '" + out_dir.string() + "'");
    load = read_prices_file(cfg.prices_path);
    returns = log_returns(load.panel);
    std::uint64_t h = detail::fnv1a(detail::read_all(cfg.prices_path));
    if (want_industry && !cfg.industry_path.empty() && fs::exists(cfg.industry_path))
      h = detail::fnv1a(detail::read_all(cfg.industry_path), h);
    h = detail::fnv1a(config_json(cfg).dump(), h);
    digest = detail::hex64(h);
    json dropped = json::array();
    for (const auto& d : load.dropped) dropped.push_back({{"asset", d.asset}, {"reason", d.reason}});
    rep["schema"] = kReportSchema;
    rep["input_digest"] = digest;
    rep["config"] = config_json(cfg);
    rep["stages"]["ingest"] = {{"assets", load.panel.assets.size()},
                               {"dates", load.panel.dates.size()},
                               {"returns_per_asset", returns.returns.cols()},
                               {"dropped", dropped}};
  });
  const Eigen::Index N = returns.returns.rows();
  const Eigen::Index T = returns.returns.cols();

  // model
  Matrix sigma(N, T);
  detail::stage("model", [&] {
    json m;
    m["model"] = to_string(cfg.model);
    m["dist"] = cfg.dist.kind == Innovation::Gaussian ? "gaussian" : "student_t";
    VolatilityFit vf = fit_volatility(returns.returns, cfg.model, cfg.dist, cfg.max_arma_p, cfg.max_arma_q);
    sigma = vf.sigma;
    {
      std::ofstream out(file("garch_fits.csv"));
      write_garch_fits_csv(out, load.panel.assets, vf);
    }
    if (vf.pooled) {
      m["pooled"] = detail::garch_json(vf.pooled->fit);
    } else {
      const auto& fits = vf.fits;
      std::vector<double> a1, b1, pers;
      int converged = 0, boundary = 0;
      for (const auto& f : fits) {
        a1.push_back(f.params.alpha1);
        b1.push_back(f.params.beta1);
        pers.push_back(f.params.persistence());
        converged += f.converged;
        boundary += f.boundary;
      }
      m["assets"] = fits.size();
      m["converged"] = converged;
      m["boundary"] = boundary;
      m["median_alpha1"] = detail::num(detail::median(a1));
      m["median_beta1"] = detail::num(detail::median(b1));
      m["median_persistence"] = detail::num(detail::median(pers));
    }
    const LogVolStats lv = log_volatility_stats(sigma);
    m["log_volatility"] = {{"n", lv.n},           {"mean", detail::num(lv.mean)},
                           {"std", detail::num(lv.std)}, {"skewness", detail::num(lv.skewness)},
                           {"kurtosis", detail::num(lv.kurtosis)}, {"degenerate", lv.degenerate}};
    // Tail of the volatility-normalized returns, pooled over assets.
    std::vector<double> pooled_norm;
    pooled_norm.reserve(static_cast<std::size_t>(N * T));
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index t = 0; t < T; ++t) pooled_norm.push_back(returns.returns(i, t) / sigma(i, t));
    const NormalizedPanel one = normalize_rows(Eigen::Map<const Matrix>(pooled_norm.data(), 1, static_cast<Eigen::Index>(pooled_norm.size())));
    const std::vector<double> z(one.data.data(), one.data.data() + one.data.size());
    std::vector<double> positive;
    for (double v : z)
      if (v > 0.0) positive.push_back(v);
    try {
      const TailEstimate te = tail_exponent(positive, cfg.tail_k ? std::optional<std::size_t>(cfg.tail_k) : std::nullopt);
      m["tail"] = {{"exponent", detail::num(te.exponent)}, {"std_error", detail::num(te.std_error)}, {"k", te.k}, {"stable", te.stable}};
    } catch (const DataError& e) {
      m["tail"] = {{"error", e.code()}};
    }
    rep["stages"]["model"] = m;
  });

  // correlation
  Matrix g;
  CorrelationMatrix C;
  detail::stage("correlation", [&] {
    const CorrelationKind kind = target_kind(cfg.target);
    g = target_panel(returns.returns, sigma, cfg.target, cfg.divisor, load.panel.assets);
    C = correlation(g, kind);
    rep["stages"]["correlation"] = {{"kind", to_string(kind)}, {"N", C.size()}, {"T", g.cols()},
                                    {"Q", static_cast<double>(g.cols()) / static_cast<double>(C.size())},
                                    {"trace", detail::num(C.entries.trace())}};
  });
  const double Q = static_cast<double>(g.cols()) / static_cast<double>(N);

  // eigen
  SpectralDecomposition spec;
  std::vector<double> lambda;
  detail::stage("eigen", [&] {
    spec = eigendecompose(C);
    lambda = detail::to_vector(spec.eigenvalues);
    std::ofstream out(file("eigen.csv"));
    write_spectrum_csv(out, spec, true, load.panel.assets);
    rep["stages"]["eigen"] = {{"lambda_min", detail::num(lambda.front())},
                              {"lambda_max", detail::num(lambda.back())},
                              {"lambda_max_over_N", detail::num(lambda.back() / static_cast<double>(N))},
                              {"sum", detail::num(spec.eigenvalues.sum())}};
  });

  // mp_fit
  MPFitResult mp;
  detail::stage("mp_fit", [&] {
    mp = fit_mp(lambda, Q, cfg.mp);
    detail::CsvWriter csv(file("mp_fit.csv"), "mp-scan", {"N1", "rmse", "rmse_smoothed", "alpha", "s0_sq"});
    for (std::size_t k = 0; k < mp.scan.size(); ++k)
      csv.row(mp.scan[k], mp.rmse_curve[k], mp.smoothed_curve[k], mp.scan_alpha[k], mp.scan_s0_sq[k]);
    rep["stages"]["mp_fit"] = {{"Q", detail::num(Q)},
                               {"alpha", detail::num(mp.params.alpha)},
                               {"alpha_stderr", detail::num(mp.alpha_stderr)},
                               {"s0_sq", detail::num(mp.params.s0_sq)},
                               {"s0_sq_stderr", detail::num(mp.s0_sq_stderr)},
                               {"lambda_minus", detail::num(mp.lambda_minus)},
                               {"lambda_plus", detail::num(mp.lambda_plus)},
                               {"N1", mp.N1},
                               {"N0", mp.N0},
                               {"N0_over_N", detail::num(static_cast<double>(mp.N0) / static_cast<double>(N))},
                               {"effective_variance", detail::num(effective_variance(lambda, std::max(1, mp.N0)))},
                               {"rmse", detail::num(mp.rmse)},
                               {"warnings", mp.warnings}};
  });

  // unfold: eigenvalues inside the MP bulk
  UnfoldedSpectrum unfolded;
  std::pair<UnfoldedSpectrum, UnfoldedSpectrum> split;
  detail::stage("unfold", [&] {
    if (mp.N0 < 20) throw DataError("too_few_eigenvalues", "only " + std::to_string(mp.N0) + " eigenvalues lie below lambda_+");
    const std::span<const double> bulk(lambda.data(), static_cast<std::size_t>(mp.N0));
    unfolded = unfold(bulk, cfg.unfolding);
    split = unfold_even_odd(bulk, cfg.unfolding);
    detail::CsvWriter csv(file("unfold.csv"), "unfold", {"index", "lambda", "xi"});
    for (std::size_t i = 0; i < unfolded.xi.size(); ++i) csv.row(i + 1, unfolded.source[i], unfolded.xi[i]);
    rep["stages"]["unfold"] = {{"count", unfolded.xi.size()},
                               {"w", detail::num(unfolded.params.w)},
                               {"c", detail::num(unfolded.params.c)},
                               {"eta_scale", detail::num(unfolded.params.eta_scale)},
                               {"xi_range", detail::num(unfolded.xi.back() - unfolded.xi.front())}};
  });

  // spacings and number variance
  detail::stage("spacings", [&] {
    const SpacingSample nn = spacings(unfolded.xi, cfg.spacing_trim);
    const SpacingSample nnn = next_nearest_spacings(split.first.xi, split.second.xi, cfg.spacing_trim);
    auto cdf = [](Ensemble e) { return [e](double d) { return wigner_cdf(d, e); }; };
    json s;
    s["nearest"] = {{"count", nn.d.size()}, {"mean", detail::num(nn.mean())}};
    for (Ensemble e : {Ensemble::GOE, Ensemble::GUE, Ensemble::GSE})
      s["nearest"]["ks_" + std::string(to_string(e))] = detail::ks_json(ks_test(nn.d, cdf(e)));
    s["next_nearest"] = {{"count", nnn.d.size()}, {"mean", detail::num(nnn.mean())},
                         {"ks_gse", detail::ks_json(ks_test(nnn.d, cdf(Ensemble::GSE)))}};
    detail::CsvWriter csv(file("spacings.csv"), "spacing-histogram", {"kind", "bin_center", "density", "surmise", "ensemble"});
    auto fit_into = [&](const char* key, const SpacingSample& sample, Ensemble e) {
      try {
        const NormalizationFit f = fit_normalization(sample.d, e);
        s[key]["beta_" + std::string(to_string(e))] = {{"beta", detail::num(f.beta)}, {"stderr", detail::num(f.stderr_beta)},
                                                       {"bin_width", detail::num(f.bin_width)}};
        for (std::size_t k = 0; k < f.centers.size(); ++k) csv.row(std::string(key), f.centers[k], f.density[k], f.model[k], to_string(e));
      } catch (const DataError& err) {
        s[key]["beta_" + std::string(to_string(e))] = {{"error", err.code()}};
      }
    };
    fit_into("nearest", nn, Ensemble::GOE);
    fit_into("next_nearest", nnn, Ensemble::GSE);
    rep["stages"]["spacings"] = s;
  });

  detail::stage("number_variance", [&] {
    NumberVarianceOptions o;
    o.trim = cfg.nv_trim;
    const NumberVarianceCurve nv = number_variance(unfolded.xi, cfg.nv_ells, o);
    detail::CsvWriter csv(file("number_variance.csv"), "number-variance",
                          {"ell", "sigma2", "sigma2_mean_ell", "mean_count", "windows", "goe_theory", "poisson"});
    for (std::size_t k = 0; k < nv.ells.size(); ++k)
      csv.row(nv.ells[k], nv.about_empirical[k], nv.about_ell[k], nv.mean_count[k], nv.windows[k], nv.theory_goe[k], nv.poisson[k]);
    rep["stages"]["number_variance"] = {{"ells", detail::num_array(nv.ells)},
                                        {"sigma2", detail::num_array(nv.empirical)},
                                        {"goe_theory", detail::num_array(nv.theory_goe)},
                                        {"warnings", nv.warnings}};
  });

  // market mode
  MarketModeRemoval removal;
  Vector market;
  detail::stage("market_mode", [&] {
    const Vector v = spec.largest_vector();
    market = market_mode_series(g, v);
    removal = remove_market_mode(g, market);
    const std::vector<double> resid = detail::to_vector(removal.spectrum.eigenvalues);
    const RescalingReport rs = rescaling_check(lambda, resid, spec.largest(), static_cast<double>(N));
    json m;
    m["lambda_N"] = detail::num(spec.largest());
    m["market_second_moment"] = detail::num(market.squaredNorm() / static_cast<double>(market.size()));
    m["residual_min_eigenvalue"] = detail::num(resid.front());
    m["rescaling"] = {{"factor", detail::num(rs.factor)},
                      {"median_deviation", detail::num(rs.median_deviation)},
                      {"max_deviation", detail::num(rs.max_deviation)}};
    // The zero mode left by the regression is excluded from the refit.
    const std::span<const double> nonzero(resid.data() + 1, resid.size() - 1);
    try {
      const MPFitResult rmp = fit_mp(nonzero, Q, cfg.mp);
      m["residual_mp_fit"] = {{"alpha", detail::num(rmp.params.alpha)}, {"s0_sq", detail::num(rmp.params.s0_sq)},
                              {"lambda_plus", detail::num(rmp.lambda_plus)}, {"N1", rmp.N1}, {"N0", rmp.N0},
                              {"warnings", rmp.warnings}};
    } catch (const DataError& e) {
      m["residual_mp_fit"] = {{"error", e.code()}};
    }
    const ComponentStats ms = eigvec_component_stats(v);
    const ComponentStats bs = eigvec_component_stats(removal.spectrum.eigenvectors.col(removal.spectrum.size() / 2));
    m["market_vector"] = {{"excess_kurtosis", detail::num(ms.excess_kurtosis)}, {"ks", detail::ks_json(ms.ks)}, {"gaussian", ms.gaussian}};
    m["bulk_vector"] = {{"excess_kurtosis", detail::num(bs.excess_kurtosis)}, {"ks", detail::ks_json(bs.ks)}, {"gaussian", bs.gaussian}};
    {
      detail::CsvWriter csv(file("market_mode.csv"), "market-mode", {"t", "date", "M"});
      const auto& dates = load.panel.dates;
      const std::size_t offset = dates.size() - static_cast<std::size_t>(market.size());
      for (Eigen::Index t = 0; t < market.size(); ++t)
        csv.row(static_cast<long>(t + 1), dates[static_cast<std::size_t>(t) + offset], market[t]);
    }
    {
      std::ofstream out(file("residual_eigen.csv"));
      write_spectrum_csv(out, removal.spectrum, false);
    }
    rep["stages"]["market_mode"] = m;
  });

  // industry
  if (want_industry) {
    detail::stage("industry", [&] {
      if (cfg.industry_path.empty() || !fs::exists(cfg.industry_path))
        throw DataError("industry_map_missing", cfg.industry_path.empty() ? "industry analysis requested without an industry file"
                                                                          : "industry file '" + cfg.industry_path + "' not found");
      const IndustryMap map = read_industry_file(cfg.industry_path, load.panel.assets);
      const auto& sp = removal.spectrum;
      const std::size_t top = std::min<std::size_t>(cfg.top_eigenvectors, static_cast<std::size_t>(sp.size()));
      const double i0 = benchmark_ipr(static_cast<double>(map.group_count()) / 2.0);
      std::vector<WeightVector> weights;
      std::vector<double> top_lambda;
      for (std::size_t k = 0; k < top; ++k) {
        const Eigen::Index col = sp.size() - 1 - static_cast<Eigen::Index>(k);
        weights.push_back(weight_vector(sp.eigenvectors.col(col), map));
        top_lambda.push_back(sp.eigenvalues[col]);
      }
      std::vector<std::string> header{"rank", "lambda", "ipr", "dominant_group"};
      for (const auto& grp : map.groups) header.push_back("rho_" + grp.code);
      detail::CsvWriter csv(file("industry_weights.csv"), "industry-weights", header);
      for (std::size_t k = 0; k < weights.size(); ++k) {
        auto& o = csv.raw();
        o << (k + 1) << ',' << detail::fmt(top_lambda[k]) << ',' << detail::fmt(weights[k].ipr) << ','
          << map.groups[weights[k].dominant_group].code;
        for (double r : weights[k].rho) o << ',' << detail::fmt(r);
        o << '\n';
      }
      json ind;
      ind["groups"] = map.group_count();
      ind["benchmark_ipr"] = detail::num(i0);
      ind["eigenvectors"] = weights.size();
      ind["dominated"] = count_dominated(weights, i0);
      json lst = json::array();
      for (std::size_t k = 0; k < weights.size(); ++k)
        lst.push_back({{"lambda", detail::num(top_lambda[k])}, {"ipr", detail::num(weights[k].ipr)},
                       {"dominant_group", map.groups[weights[k].dominant_group].code}});
      ind["top"] = lst;
      // IPR power law over residual eigenvalues above the noise band.
      std::vector<double> xs, ys;
      const double lp = mp.lambda_plus;
      for (std::size_t k = 0; k < weights.size(); ++k)
        if (top_lambda[k] > lp) {
          xs.push_back(top_lambda[k]);
          ys.push_back(weights[k].ipr);
        }
      try {
        const PowerLawFit pf = ipr_powerlaw_fit(xs, ys);
        ind["ipr_powerlaw"] = {{"slope", detail::num(pf.slope)}, {"stderr", detail::num(pf.stderr_slope)}, {"n", pf.n}};
      } catch (const DataError& e) {
        ind["ipr_powerlaw"] = {{"error", e.code()}, {"points", xs.size()}};
      }
      rep["stages"]["industry"] = ind;
    });
  }

  // kurtosis
  detail::stage("kurtosis", [&] {
    const Matrix eh = gaussianize_rows(removal.regression.residuals);
    const std::vector<double> mv = detail::to_vector(market);
    const std::vector<double> mh = gaussianize(mv);
    const Eigen::Map<const Vector> mhv(mh.data(), static_cast<Eigen::Index>(mh.size()));
    const KurtosisReport kr = generalized_kurtosis(eh, mhv, cfg.kurtosis);
    const KurtosisVariant other = cfg.kurtosis == KurtosisVariant::Literal ? KurtosisVariant::SquaredCross : KurtosisVariant::Literal;
    const KurtosisReport ko = generalized_kurtosis(eh, mhv, other);
    detail::CsvWriter csv(file("kurtosis.csv"), "kurtosis", {"asset", "kappa", "kappa_alternate"});
    for (std::size_t i = 0; i < kr.kappas.size(); ++i) csv.row(load.panel.assets[i], kr.kappas[i], ko.kappas[i]);
    rep["stages"]["kurtosis"] = {{"variant", cfg.kurtosis == KurtosisVariant::Literal ? "literal" : "squared_cross"},
                                 {"K", detail::num(kr.K)},
                                 {"K_alternate", detail::num(ko.K)}};
  });

  rep["files"] = res.files;
  const std::string stamp = detail::utc_stamp();
  fs::path path = out_dir / ("report_" + digest + "_" + stamp + ".json");
  for (int k = 1; fs::exists(path); ++k) path = out_dir / ("report_" + digest + "_" + stamp + "-" + std::to_string(k) + ".json");
  std::ofstream out(path);
  if (!out) throw StageError("report", DataError("output_unwritable", "cannot write '" + path.string() + "'"));
  out << rep.dump(2) << '\n';
  res.report_path = path.string();
  return res;
}

}  // namespace rmtvol
