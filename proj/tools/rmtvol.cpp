// rmtvol: command-line front end. `run` executes the whole pipeline; the
// other subcommands wrap one module each and exchange CSV files.

#include "rmtvol/io.hpp"
#include "rmtvol/pipeline.hpp"
#include "rmtvol/synth.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace rmtvol;
using rmtvol::json;

namespace {

struct Common {
  std::string out_dir = ".";
  unsigned threads = 0;
};

// Output helpers

fs::path out_path(const Common& c, const std::string& name) {
  const fs::path dir = c.out_dir.empty() ? fs::path(".") : fs::path(c.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("output_unwritable", "cannot create output directory '" + dir.string() + "'");
  return dir / name;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(p);
  if (!out) throw DataError("output_unwritable", "cannot write '" + p.string() + "'");
  return out;
}

/// Writes `<name>.json` next to the CSV outputs and echoes it on stdout.
void emit_summary(const Common& c, const std::string& name, json j) {
  j["schema"] = std::string("rmtvol.") + name + "/1";
  auto out = open_out(out_path(c, name + ".json"));
  out << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
}

// Option parsing helpers

template <typename T, typename Parse>
T parse_choice(const std::string& s, Parse parse, const std::string& what) {
  const auto v = parse(s);
  if (!v) throw UsageError("invalid_option", "unknown " + what + " '" + s + "'");
  return *v;
}

InnovationDist parse_dist(const std::string& s, double nu) {
  if (s == "gaussian") return InnovationDist::gaussian();
  if (s == "student_t" || s == "t") return InnovationDist::student_t(nu);
  throw UsageError("invalid_option", "unknown innovation distribution '" + s + "'");
}

MomentDivisor parse_divisor(const std::string& s) {
  if (s == "population") return MomentDivisor::Population;
  if (s == "sample") return MomentDivisor::Sample;
  throw UsageError("invalid_option", "unknown moment divisor '" + s + "'");
}

KurtosisVariant parse_kurtosis(const std::string& s) {
  if (s == "literal") return KurtosisVariant::Literal;
  if (s == "squared_cross") return KurtosisVariant::SquaredCross;
  throw UsageError("invalid_option", "unknown kurtosis variant '" + s + "'");
}

// Inputs shared by several subcommands

struct ModelOpts {
  std::string model = "garch";
  std::string dist = "gaussian";
  double nu = 8.0;
  int max_p = 5;
  int max_q = 5;

  void add(CLI::App* app) {
    app->add_option("--model", model, "Volatility model: garch, pooled or arma_garch")->capture_default_str();
    app->add_option("--dist", dist, "Innovation distribution: gaussian or student_t")->capture_default_str();
    app->add_option("--nu", nu, "Starting degrees of freedom for student_t")->capture_default_str();
    app->add_option("--max-p", max_p, "Largest AR order searched by arma_garch")->capture_default_str();
    app->add_option("--max-q", max_q, "Largest MA order searched by arma_garch")->capture_default_str();
  }
};

struct UnfoldOpts {
  double w = 0.0;
  double c = 5.0;
  double eta_scale = 2.0;

  void add(CLI::App* app) {
    app->add_option("--w", w, "Sub-band width; 0 selects a quarter of the spectral range")->capture_default_str();
    app->add_option("--c", c, "Gaussian width in units of the local mean spacing")->capture_default_str();
    app->add_option("--eta-scale", eta_scale, "Width multiplier (2 for a full spectrum)")->capture_default_str();
  }
  UnfoldingParams params() const { return {w, c, eta_scale}; }
};

ReturnPanel load_returns(const std::string& prices, json& summary) {
  const PriceLoad load = read_prices_file(prices);
  json dropped = json::array();
  for (const auto& d : load.dropped) dropped.push_back({{"asset", d.asset}, {"reason", d.reason}});
  summary["dropped"] = dropped;
  return log_returns(load.panel);
}

/// Eigenvalues to unfold: an eigen CSV restricted to the first `count`
/// values or to those below `below`.
std::vector<double> select_eigenvalues(const std::string& path, int count, double below) {
  const SpectrumFile f = read_spectrum_file(path);
  std::vector<double> lambda = detail::to_vector(f.spectrum.eigenvalues);
  if (count > 0) {
    if (static_cast<std::size_t>(count) > lambda.size())
      throw UsageError("invalid_option", "--count exceeds the number of eigenvalues");
    lambda.resize(static_cast<std::size_t>(count));
  }
  if (std::isfinite(below)) std::erase_if(lambda, [&](double x) { return !(x < below); });
  return lambda;
}

/// Unfolded values from an unfold CSV (column xi) or, when only an eigen CSV
/// is given, by unfolding it with `u`.
std::vector<double> load_unfolded(const std::string& unfolded, const std::string& eigen, int count, double below,
                                  const UnfoldOpts& u) {
  if (!unfolded.empty()) {
    std::vector<double> xi = read_table_file(unfolded).numeric("xi");
    std::sort(xi.begin(), xi.end());
    return xi;
  }
  if (eigen.empty()) throw UsageError("missing_input", "give --unfolded or --eigen");
  return unfold(select_eigenvalues(eigen, count, below), u.params()).xi;
}

Vector column_of(const SpectralDecomposition& d, Eigen::Index k) { return d.eigenvectors.col(k); }

// Subcommand bodies

int cmd_run(const Common& c, PipelineConfig cfg, const ModelOpts& m, const std::string& target, const std::string& divisor,
            const std::string& kurt, bool no_industry) {
  cfg.model = parse_choice<VolModel>(m.model, parse_model, "model");
  cfg.dist = parse_dist(m.dist, m.nu);
  cfg.max_arma_p = m.max_p;
  cfg.max_arma_q = m.max_q;
  cfg.target = parse_choice<Target>(target, parse_target, "target");
  cfg.divisor = parse_divisor(divisor);
  cfg.kurtosis = parse_kurtosis(kurt);
  if (no_industry) cfg.industry_analysis = false;
  cfg.output_dir = c.out_dir;
  const PipelineResult r = run_pipeline(cfg);
  std::cout << r.report_path << '\n';
  return 0;
}

int cmd_fit_garch(const Common& c, const std::string& prices, const ModelOpts& m) {
  json s;
  const ReturnPanel rp = load_returns(prices, s);
  const VolModel model = parse_choice<VolModel>(m.model, parse_model, "model");
  const VolatilityFit vf = fit_volatility(rp.returns, model, parse_dist(m.dist, m.nu), m.max_p, m.max_q);
  {
    auto out = open_out(out_path(c, "garch_fits.csv"));
    write_garch_fits_csv(out, rp.assets, vf);
  }
  {
    auto out = open_out(out_path(c, "sigma.csv"));
    write_matrix_csv(out, "volatility", {rp.assets, rp.dates, vf.sigma});
  }
  s["model"] = to_string(model);
  s["assets"] = rp.assets.size();
  s["observations"] = rp.returns.cols();
  if (vf.pooled) {
    s["pooled"] = detail::garch_json(vf.pooled->fit);
  } else {
    int converged = 0, boundary = 0;
    for (const auto& f : vf.fits) {
      converged += f.converged;
      boundary += f.boundary;
    }
    s["converged"] = converged;
    s["boundary"] = boundary;
    if (vf.fits.size() == 1) s["fit"] = detail::garch_json(vf.fits.front());
  }
  emit_summary(c, "fit_garch", s);
  return 0;
}

int cmd_corr(const Common& c, const std::string& prices, const std::string& panel, const std::string& sigma_path,
             const std::string& target_s, const std::string& divisor_s, const ModelOpts& m) {
  json s;
  Matrix g;
  std::vector<std::string> assets;
  CorrelationKind kind = CorrelationKind::Return;
  const MomentDivisor divisor = parse_divisor(divisor_s);
  if (!panel.empty()) {
    // A raw N x T panel, correlated as is.
    const LabeledMatrix lm = read_matrix_file(panel);
    assets = lm.row_labels;
    g = normalize_rows(lm.values, divisor, assets).data;
  } else {
    if (prices.empty()) throw UsageError("missing_input", "give --prices or --panel");
    const Target target = parse_choice<Target>(target_s, parse_target, "target");
    const ReturnPanel rp = load_returns(prices, s);
    assets = rp.assets;
    Matrix sigma;
    if (target != Target::Return) {
      if (!sigma_path.empty()) {
        sigma = read_matrix_file(sigma_path).values;
        if (sigma.rows() != rp.returns.rows() || sigma.cols() != rp.returns.cols())
          throw DataError("shape_mismatch", "volatility matrix does not match the return panel");
      } else {
        sigma = fit_volatility(rp.returns, parse_choice<VolModel>(m.model, parse_model, "model"),
                                       parse_dist(m.dist, m.nu), m.max_p, m.max_q)
                    .sigma;
      }
    }
    kind = target_kind(target);
    g = target_panel(rp.returns, sigma, target, divisor, assets);
  }
  const CorrelationMatrix C = correlation(g, kind);
  std::vector<std::string> cols;
  for (Eigen::Index t = 0; t < g.cols(); ++t) cols.push_back(std::to_string(t + 1));
  {
    auto out = open_out(out_path(c, "correlation.csv"));
    write_matrix_csv(out, "correlation", {assets, assets, C.entries});
  }
  {
    auto out = open_out(out_path(c, "normalized_panel.csv"));
    write_matrix_csv(out, "normalized-panel", {assets, cols, g});
  }
  s["kind"] = to_string(kind);
  s["N"] = C.size();
  s["T"] = g.cols();
  s["Q"] = static_cast<double>(g.cols()) / static_cast<double>(C.size());
  s["trace"] = detail::num(C.entries.trace());
  emit_summary(c, "corr", s);
  return 0;
}

int cmd_eigen(const Common& c, const std::string& matrix, bool no_vectors) {
  const LabeledMatrix lm = read_matrix_file(matrix);
  if (lm.values.rows() != lm.values.cols()) throw DataError("not_square", "matrix is not square");
  if (!lm.values.isApprox(lm.values.transpose(), 1e-12)) throw DataError("not_symmetric", "matrix is not symmetric");
  const SpectralDecomposition d = eigendecompose(lm.values);
  {
    auto out = open_out(out_path(c, "eigen.csv"));
    write_spectrum_csv(out, d, !no_vectors, lm.row_labels);
  }
  json s;
  s["N"] = d.size();
  s["lambda_min"] = detail::num(d.eigenvalues[0]);
  s["lambda_max"] = detail::num(d.largest());
  s["sum"] = detail::num(d.eigenvalues.sum());
  emit_summary(c, "eigen", s);
  return 0;
}

int cmd_mp_fit(const Common& c, const std::string& eigen, double Q, int T, const MPFitOptions& opt) {
  const std::vector<double> lambda = detail::to_vector(read_spectrum_file(eigen).spectrum.eigenvalues);
  if (!(Q > 0.0)) {
    if (T <= 0) throw UsageError("missing_input", "give --Q or --T");
    Q = static_cast<double>(T) / static_cast<double>(lambda.size());
  }
  const MPFitResult mp = fit_mp(lambda, Q, opt);
  {
    detail::CsvWriter csv(out_path(c, "mp_fit.csv"), "mp-scan", {"N1", "rmse", "rmse_smoothed", "alpha", "s0_sq"});
    for (std::size_t k = 0; k < mp.scan.size(); ++k)
      csv.row(mp.scan[k], mp.rmse_curve[k], mp.smoothed_curve[k], mp.scan_alpha[k], mp.scan_s0_sq[k]);
  }
  json s;
  s["Q"] = detail::num(Q);
  s["alpha"] = detail::num(mp.params.alpha);
  s["alpha_stderr"] = detail::num(mp.alpha_stderr);
  s["s0_sq"] = detail::num(mp.params.s0_sq);
  s["s0_sq_stderr"] = detail::num(mp.s0_sq_stderr);
  s["lambda_minus"] = detail::num(mp.lambda_minus);
  s["lambda_plus"] = detail::num(mp.lambda_plus);
  s["N1"] = mp.N1;
  s["N0"] = mp.N0;
  s["N"] = lambda.size();
  s["rmse"] = detail::num(mp.rmse);
  s["warnings"] = mp.warnings;
  emit_summary(c, "mp_fit", s);
  return 0;
}

int cmd_unfold(const Common& c, const std::string& eigen, int count, double below, const UnfoldOpts& u, double trim) {
  const std::vector<double> lambda = select_eigenvalues(eigen, count, below);
  const UnfoldedSpectrum us = unfold(lambda, u.params());
  if (!(trim >= 0.0) || !(trim < 0.5)) throw UsageError("invalid_trim", "trim fraction must lie in [0, 0.5)");
  const auto k = static_cast<std::size_t>(std::floor(trim * static_cast<double>(us.xi.size())));
  {
    detail::CsvWriter csv(out_path(c, "unfold.csv"), "unfold", {"index", "lambda", "xi"});
    for (std::size_t i = k; i + k < us.xi.size(); ++i) csv.row(i + 1, us.source[i], us.xi[i]);
  }
  json s;
  s["count"] = us.xi.size();
  s["written"] = us.xi.size() - 2 * k;
  s["w"] = detail::num(us.params.w);
  s["c"] = detail::num(us.params.c);
  s["eta_scale"] = detail::num(us.params.eta_scale);
  s["xi_range"] = detail::num(us.xi.back() - us.xi.front());
  emit_summary(c, "unfold", s);
  return 0;
}

int cmd_spacings(const Common& c, const std::string& unfolded, const std::string& eigen, int count, double below,
                 const UnfoldOpts& u, const std::string& ensemble_s, bool next_nearest, double trim, double bin_width) {
  const bool all = ensemble_s == "all";
  const Ensemble chosen = all ? Ensemble::GOE : parse_choice<Ensemble>(ensemble_s, parse_ensemble, "ensemble");
  SpacingSample sample;
  if (next_nearest) {
    // Even/odd subsets come from the eigenvalues, not from an unfolded file.
    std::vector<double> lambda;
    if (!eigen.empty())
      lambda = select_eigenvalues(eigen, count, below);
    else if (!unfolded.empty())
      lambda = read_table_file(unfolded).numeric("lambda");
    else
      throw UsageError("missing_input", "give --eigen or --unfolded");
    std::sort(lambda.begin(), lambda.end());
    const auto split = unfold_even_odd(lambda, u.params());
    sample = next_nearest_spacings(split.first.xi, split.second.xi, trim);
  } else {
    sample = spacings(load_unfolded(unfolded, eigen, count, below, u), trim);
  }
  json s;
  s["kind"] = next_nearest ? "next_nearest" : "nearest";
  s["count"] = sample.d.size();
  s["mean"] = detail::num(sample.mean());
  std::vector<Ensemble> list = all ? std::vector<Ensemble>{Ensemble::GOE, Ensemble::GUE, Ensemble::GSE}
                                   : std::vector<Ensemble>{chosen};
  detail::CsvWriter hist(out_path(c, "spacings_histogram.csv"), "spacing-histogram",
                         {"ensemble", "bin_center", "density", "surmise"});
  for (Ensemble e : list) {
    const KSResult ks = ks_test(sample.d, [e](double d) { return wigner_cdf(d, e); });
    json ej;
    ej["ks"] = detail::ks_json(ks);
    try {
      const NormalizationFit f = fit_normalization(sample.d, e, bin_width > 0.0 ? std::optional<double>(bin_width) : std::nullopt);
      ej["beta"] = detail::num(f.beta);
      ej["beta_stderr"] = detail::num(f.stderr_beta);
      ej["bin_width"] = detail::num(f.bin_width);
      for (std::size_t k = 0; k < f.centers.size(); ++k) hist.row(std::string(to_string(e)), f.centers[k], f.density[k], f.model[k]);
    } catch (const DataError& err) {
      ej["beta_error"] = err.code();
    }
    s[to_string(e)] = ej;
  }
  {
    detail::CsvWriter csv(out_path(c, "spacings.csv"), "spacings", {"index", "spacing"});
    for (std::size_t i = 0; i < sample.d.size(); ++i) csv.row(i + 1, sample.d[i]);
  }
  emit_summary(c, "spacings", s);
  return 0;
}

int cmd_number_variance(const Common& c, const std::string& unfolded, const std::string& eigen, int count, double below,
                        const UnfoldOpts& u, std::vector<double> ells, const std::string& centering,
                        const std::string& mean, double trim) {
  NumberVarianceOptions o;
  o.trim = trim;
  if (centering == "uniform")
    o.centering = WindowCentering::Uniform;
  else if (centering == "eigenvalues")
    o.centering = WindowCentering::Eigenvalues;
  else
    throw UsageError("invalid_option", "unknown window centering '" + centering + "'");
  if (mean == "empirical")
    o.mean = CountMean::Empirical;
  else if (mean == "ell")
    o.mean = CountMean::Ell;
  else
    throw UsageError("invalid_option", "unknown count mean '" + mean + "'");
  const std::vector<double> xi = load_unfolded(unfolded, eigen, count, below, u);
  const NumberVarianceCurve nv = number_variance(xi, ells, o);
  {
    detail::CsvWriter csv(out_path(c, "number_variance.csv"), "number-variance",
                          {"ell", "sigma2", "sigma2_mean_ell", "mean_count", "windows", "goe_theory", "poisson"});
    for (std::size_t k = 0; k < nv.ells.size(); ++k)
      csv.row(nv.ells[k], nv.about_empirical[k], nv.about_ell[k], nv.mean_count[k], nv.windows[k], nv.theory_goe[k], nv.poisson[k]);
  }
  json s;
  s["ells"] = detail::num_array(nv.ells);
  s["sigma2"] = detail::num_array(nv.empirical);
  s["goe_theory"] = detail::num_array(nv.theory_goe);
  s["warnings"] = nv.warnings;
  emit_summary(c, "number_variance", s);
  return 0;
}

struct MarketInputs {
  LabeledMatrix panel;
  SpectralDecomposition spec;
  Vector market;
  MarketModeRemoval removal;
};

MarketInputs market_inputs(const std::string& panel_path) {
  MarketInputs in;
  in.panel = read_matrix_file(panel_path);
  in.panel.values = normalize_rows(in.panel.values, MomentDivisor::Population, in.panel.row_labels).data;
  in.spec = eigendecompose(correlation(in.panel.values, CorrelationKind::Return));
  in.market = market_mode_series(in.panel.values, in.spec.largest_vector());
  in.removal = remove_market_mode(in.panel.values, in.market);
  return in;
}

int cmd_market_mode(const Common& c, const std::string& panel_path) {
  const MarketInputs in = market_inputs(panel_path);
  const auto N = static_cast<double>(in.panel.values.rows());
  const std::vector<double> lambda = detail::to_vector(in.spec.eigenvalues);
  const std::vector<double> resid = detail::to_vector(in.removal.spectrum.eigenvalues);
  const RescalingReport rs = rescaling_check(lambda, resid, in.spec.largest(), N);
  const Matrix recon = reconstruct_residual_correlation(
      correlation(in.panel.values, CorrelationKind::Return).entries, in.removal.regression.betas,
      in.market.squaredNorm() / static_cast<double>(in.market.size()), in.removal.regression.residual_stds);
  {
    detail::CsvWriter csv(out_path(c, "market_mode.csv"), "market-mode", {"t", "M"});
    for (Eigen::Index t = 0; t < in.market.size(); ++t) csv.row(static_cast<long>(t + 1), in.market[t]);
  }
  {
    auto out = open_out(out_path(c, "residual_eigen.csv"));
    write_spectrum_csv(out, in.removal.spectrum, true, in.panel.row_labels);
  }
  {
    auto out = open_out(out_path(c, "residuals.csv"));
    std::vector<std::string> cols;
    for (Eigen::Index t = 0; t < in.market.size(); ++t) cols.push_back(std::to_string(t + 1));
    write_matrix_csv(out, "market-residuals", {in.panel.row_labels, cols, in.removal.regression.residuals});
  }
  {
    detail::CsvWriter csv(out_path(c, "market_betas.csv"), "market-betas", {"asset", "alpha", "beta", "residual_std"});
    const auto& r = in.removal.regression;
    for (Eigen::Index i = 0; i < r.betas.size(); ++i)
      csv.row(in.panel.row_labels[static_cast<std::size_t>(i)], r.alphas[i], r.betas[i], r.residual_stds[i]);
  }
  json s;
  s["N"] = in.panel.values.rows();
  s["T"] = in.panel.values.cols();
  s["lambda_N"] = detail::num(in.spec.largest());
  s["residual_min_eigenvalue"] = detail::num(resid.front());
  s["reconstruction_max_error"] = detail::num((recon - in.removal.residual_correlation.entries).cwiseAbs().maxCoeff());
  s["rescaling"] = {{"factor", detail::num(rs.factor)},
                    {"median_deviation", detail::num(rs.median_deviation)},
                    {"max_deviation", detail::num(rs.max_deviation)}};
  emit_summary(c, "market_mode", s);
  return 0;
}

int cmd_industry(const Common& c, const std::string& eigen, const std::string& industry, int top, double benchmark_groups) {
  if (industry.empty() || !fs::exists(industry))
    throw DataError("industry_map_missing", industry.empty() ? "no industry file given" : "industry file '" + industry + "' not found");
  const SpectrumFile f = read_spectrum_file(eigen);
  if (!f.has_vectors) throw DataError("missing_eigenvectors", "eigen file has no eigenvector columns");
  const IndustryMap map = read_industry_file(industry, f.names);
  const auto& sp = f.spectrum;
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(std::max(top, 1)), static_cast<std::size_t>(sp.size()));
  const double groups = benchmark_groups > 0.0 ? benchmark_groups : static_cast<double>(map.group_count()) / 2.0;
  const double i0 = benchmark_ipr(groups);
  std::vector<WeightVector> weights;
  std::vector<double> lambda;
  for (std::size_t k = 0; k < count; ++k) {
    const Eigen::Index col = sp.size() - 1 - static_cast<Eigen::Index>(k);
    weights.push_back(weight_vector(column_of(sp, col), map));
    lambda.push_back(sp.eigenvalues[col]);
  }
  std::vector<std::string> header{"rank", "lambda", "ipr", "dominant_group"};
  for (const auto& g : map.groups) header.push_back("rho_" + g.code);
  {
    detail::CsvWriter csv(out_path(c, "industry_weights.csv"), "industry-weights", header);
    for (std::size_t k = 0; k < weights.size(); ++k) {
      auto& o = csv.raw();
      o << (k + 1) << ',' << detail::fmt(lambda[k]) << ',' << detail::fmt(weights[k].ipr) << ','
        << map.groups[weights[k].dominant_group].code;
      for (double r : weights[k].rho) o << ',' << detail::fmt(r);
      o << '\n';
    }
  }
  {
    // IPR of every eigenvector, for the IPR-versus-eigenvalue plot.
    detail::CsvWriter csv(out_path(c, "industry_ipr.csv"), "industry-ipr", {"index", "lambda", "ipr"});
    for (Eigen::Index k = 0; k < sp.size(); ++k)
      csv.row(static_cast<long>(k + 1), sp.eigenvalues[k], weight_vector(column_of(sp, k), map).ipr);
  }
  json s;
  s["groups"] = map.group_count();
  s["benchmark_groups"] = detail::num(groups);
  s["benchmark_ipr"] = detail::num(i0);
  s["eigenvectors"] = weights.size();
  s["dominated"] = count_dominated(weights, i0);
  emit_summary(c, "industry", s);
  return 0;
}

int cmd_kurtosis(const Common& c, const std::string& panel_path, const std::string& variant_s) {
  const KurtosisVariant variant = parse_kurtosis(variant_s);
  const MarketInputs in = market_inputs(panel_path);
  const Matrix eh = gaussianize_rows(in.removal.regression.residuals);
  const std::vector<double> mh = gaussianize(detail::to_vector(in.market));
  const Eigen::Map<const Vector> mhv(mh.data(), static_cast<Eigen::Index>(mh.size()));
  const KurtosisReport kr = generalized_kurtosis(eh, mhv, variant);
  {
    detail::CsvWriter csv(out_path(c, "kurtosis.csv"), "kurtosis", {"asset", "kappa"});
    for (std::size_t i = 0; i < kr.kappas.size(); ++i) csv.row(in.panel.row_labels[i], kr.kappas[i]);
  }
  json s;
  s["variant"] = variant_s;
  s["K"] = detail::num(kr.K);
  s["assets"] = kr.kappas.size();
  emit_summary(c, "kurtosis", s);
  return 0;
}

/// Panels are written as prices whose log returns equal `scale` times the
/// generated values, so they feed straight back into the price reader.
PricePanel panel_as_prices(const Matrix& x, double scale) {
  PricePanel p;
  p.prices.resize(x.rows(), x.cols() + 1);
  char buf[32];
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "S%04ld", static_cast<long>(i + 1));
    p.assets.emplace_back(buf);
    double logp = std::log(100.0);
    p.prices(i, 0) = 100.0;
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
      logp += scale * x(i, t);
      p.prices(i, t + 1) = std::exp(logp);
    }
  }
  for (Eigen::Index t = 0; t <= x.cols(); ++t) {
    std::snprintf(buf, sizeof buf, "d%05ld", static_cast<long>(t));
    p.dates.emplace_back(buf);
  }
  return p;
}

int cmd_synth(const Common& c, SynthSpec spec, const std::string& kind_s, std::string output, std::string industry_out,
              const std::string& format, double scale) {
  spec.kind = parse_choice<SynthKind>(kind_s, parse_synth_kind, "synthetic kind");
  if (output.empty()) output = out_path(c, std::string("synth_") + to_string(spec.kind) + ".csv").string();
  json s;
  s["kind"] = to_string(spec.kind);
  s["N"] = spec.N;
  s["seed"] = spec.seed;
  s["output"] = output;
  if (spec.kind == SynthKind::MarketPanel) {
    const SynthMarket m = generate_market(spec);
    {
      auto out = open_out(output);
      write_prices(out, m.prices);
    }
    if (industry_out.empty()) industry_out = out_path(c, "synth_industry.csv").string();
    {
      auto out = open_out(industry_out);
      write_industry(out, m.prices.assets, m.industry);
    }
    s["T"] = spec.T;
    s["industry_output"] = industry_out;
    emit_summary(c, "synth", s);
    return 0;
  }
  const SynthOutput g = generate(spec);
  auto out = open_out(output);
  if (!g.spectrum.empty()) {
    out << "# rmtvol eigen v1\nindex,lambda\n";
    for (std::size_t i = 0; i < g.spectrum.size(); ++i) out << (i + 1) << ',' << detail::fmt(g.spectrum[i]) << '\n';
  } else if (spec.kind == SynthKind::Goe || format == "matrix") {
    std::vector<std::string> rows, cols;
    for (Eigen::Index i = 0; i < g.data.rows(); ++i) rows.push_back("S" + std::to_string(i + 1));
    for (Eigen::Index t = 0; t < g.data.cols(); ++t) cols.push_back(spec.kind == SynthKind::Goe ? rows[static_cast<std::size_t>(t)] : std::to_string(t + 1));
    write_matrix_csv(out, spec.kind == SynthKind::Goe ? "goe-matrix" : "panel", {rows, cols, g.data});
  } else if (format == "prices") {
    write_prices(out, panel_as_prices(g.data, scale));
  } else {
    throw UsageError("invalid_option", "unknown format '" + format + "'");
  }
  if (spec.kind != SynthKind::Goe && g.spectrum.empty()) s["T"] = spec.T;
  emit_summary(c, "synth", s);
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Usage: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numerical: return 4;
  }
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random-matrix analysis of volatility and return correlations"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Key = value configuration file; command-line flags take precedence");

  Common common;
  if (const char* env = std::getenv("RMTVOL_OUT_DIR"); env && *env) common.out_dir = env;
  app.add_option("--out", common.out_dir, "Output directory (default: $RMTVOL_OUT_DIR or .)");
  app.add_option("--threads", common.threads, "Maximum worker threads (0: hardware concurrency)");

  std::function<int()> action;

  // run
  PipelineConfig cfg;
  ModelOpts run_model;
  UnfoldOpts run_unfold;
  std::string run_target = "vol", run_divisor = "population", run_kurt = "literal";
  bool run_no_industry = false;
  {
    auto* sc = app.add_subcommand("run", "Run the whole pipeline and write a report");
    sc->add_option("--prices", cfg.prices_path, "Price CSV: date column then one column per asset")->required();
    sc->add_option("--industry", cfg.industry_path, "Industry CSV: asset,code[,name]");
    sc->add_flag("--no-industry", run_no_industry, "Skip the industry analysis");
    run_model.add(sc);
    run_unfold.add(sc);
    sc->add_option("--target", run_target, "Correlation target: vol, return or vol-return")->capture_default_str();
    sc->add_option("--divisor", run_divisor, "Row moment divisor: population or sample")->capture_default_str();
    sc->add_option("--trim", cfg.spacing_trim, "Edge fraction dropped before spacing statistics")->capture_default_str();
    sc->add_option("--nv-trim", cfg.nv_trim, "Edge fraction excluded from number-variance windows")->capture_default_str();
    sc->add_option("--scan-min", cfg.mp.scan_min, "Smallest N1 in the MP scan (0: automatic)");
    sc->add_option("--scan-max", cfg.mp.scan_max, "Largest N1 in the MP scan (0: N)");
    sc->add_option("--window", cfg.mp.smoothing_window, "Moving-average window over the MP error curve")->capture_default_str();
    sc->add_option("--ells", cfg.nv_ells, "Number-variance window lengths")->delimiter(',');
    sc->add_option("--kurtosis", run_kurt, "Kurtosis variant: literal or squared_cross")->capture_default_str();
    sc->add_option("--tail-k", cfg.tail_k, "Order statistics used by the tail estimator (0: 5% of the sample)");
    sc->add_option("--top", cfg.top_eigenvectors, "Eigenvectors analysed for industry weights")->capture_default_str();
    sc->add_option("--seed", cfg.seed, "Seed recorded in the report")->capture_default_str();
    sc->callback([&] {
      cfg.unfolding = run_unfold.params();
      action = [&] { return cmd_run(common, cfg, run_model, run_target, run_divisor, run_kurt, run_no_industry); };
    });
  }

  // fit-garch
  std::string fg_prices;
  ModelOpts fg_model;
  {
    auto* sc = app.add_subcommand("fit-garch", "Fit the volatility model to every asset");
    sc->add_option("--prices", fg_prices, "Price CSV")->required();
    fg_model.add(sc);
    sc->callback([&] { action = [&] { return cmd_fit_garch(common, fg_prices, fg_model); }; });
  }

  // corr
  std::string co_prices, co_panel, co_sigma, co_target = "vol", co_divisor = "population";
  ModelOpts co_model;
  {
    auto* sc = app.add_subcommand("corr", "Build a correlation matrix");
    sc->add_option("--prices", co_prices, "Price CSV");
    sc->add_option("--panel", co_panel, "Matrix CSV of series (rows) correlated as is");
    sc->add_option("--sigma", co_sigma, "Volatility matrix from fit-garch (otherwise fitted here)");
    sc->add_option("--target", co_target, "vol, return or vol-return")->capture_default_str();
    sc->add_option("--divisor", co_divisor, "population or sample")->capture_default_str();
    co_model.add(sc);
    sc->callback([&] { action = [&] { return cmd_corr(common, co_prices, co_panel, co_sigma, co_target, co_divisor, co_model); }; });
  }

  // eigen
  std::string ei_matrix;
  bool ei_no_vectors = false;
  {
    auto* sc = app.add_subcommand("eigen", "Eigendecompose a symmetric matrix");
    sc->add_option("--matrix", ei_matrix, "Matrix CSV")->required();
    sc->add_flag("--no-vectors", ei_no_vectors, "Write eigenvalues only");
    sc->callback([&] { action = [&] { return cmd_eigen(common, ei_matrix, ei_no_vectors); }; });
  }

  // mp-fit
  std::string mp_eigen;
  double mp_Q = 0.0;
  int mp_T = 0;
  MPFitOptions mp_opt;
  {
    auto* sc = app.add_subcommand("mp-fit", "Fit the modified Marchenko-Pastur law");
    sc->add_option("--eigen", mp_eigen, "Eigen CSV")->required();
    sc->add_option("--Q", mp_Q, "Q = T/N");
    sc->add_option("--T", mp_T, "Series length (Q = T/N)");
    sc->add_option("--scan-min", mp_opt.scan_min, "Smallest N1 (0: automatic)");
    sc->add_option("--scan-max", mp_opt.scan_max, "Largest N1 (0: N)");
    sc->add_option("--window", mp_opt.smoothing_window, "Moving-average window")->capture_default_str();
    sc->callback([&] { action = [&] { return cmd_mp_fit(common, mp_eigen, mp_Q, mp_T, mp_opt); }; });
  }

  // unfold, spacings, number-variance share their spectrum inputs
  struct SpectrumIn {
    std::string eigen, unfolded;
    int count = 0;
    double below = std::numeric_limits<double>::infinity();
    UnfoldOpts u;
  };
  auto add_spectrum_in = [](CLI::App* sc, SpectrumIn& in, bool with_unfolded) {
    sc->add_option("--eigen", in.eigen, "Eigen CSV");
    if (with_unfolded) sc->add_option("--unfolded", in.unfolded, "Unfold CSV");
    sc->add_option("--count", in.count, "Use only the first COUNT eigenvalues");
    sc->add_option("--below", in.below, "Use only eigenvalues below this value");
    in.u.add(sc);
  };

  SpectrumIn un_in;
  double un_trim = 0.0;
  {
    auto* sc = app.add_subcommand("unfold", "Unfold eigenvalues by Gaussian broadening");
    add_spectrum_in(sc, un_in, false);
    sc->add_option("--trim", un_trim, "Edge fraction left out of the output")->capture_default_str();
    sc->callback([&] {
      if (un_in.eigen.empty()) throw CLI::RequiredError("--eigen");
      action = [&] { return cmd_unfold(common, un_in.eigen, un_in.count, un_in.below, un_in.u, un_trim); };
    });
  }

  SpectrumIn sp_in;
  std::string sp_ensemble = "goe";
  bool sp_nnn = false;
  double sp_trim = 0.05, sp_bin = 0.0;
  {
    auto* sc = app.add_subcommand("spacings", "Spacing distributions and tests against the Wigner surmise");
    add_spectrum_in(sc, sp_in, true);
    sc->add_option("--ensemble", sp_ensemble, "goe, gue, gse or all")->capture_default_str();
    sc->add_flag("--next-nearest", sp_nnn, "Next-nearest spacings from the even/odd split");
    sc->add_option("--trim", sp_trim, "Edge fraction dropped")->capture_default_str();
    sc->add_option("--bin-width", sp_bin, "Histogram bin width (0: Freedman-Diaconis)");
    sc->callback([&] {
      action = [&] {
        return cmd_spacings(common, sp_in.unfolded, sp_in.eigen, sp_in.count, sp_in.below, sp_in.u, sp_ensemble, sp_nnn,
                            sp_trim, sp_bin);
      };
    });
  }

  SpectrumIn nv_in;
  std::vector<double> nv_ells{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 15, 20, 30, 40};
  std::string nv_centering = "uniform", nv_mean = "empirical";
  double nv_trim = 0.1;
  {
    auto* sc = app.add_subcommand("number-variance", "Number variance against GOE and Poisson");
    add_spectrum_in(sc, nv_in, true);
    sc->add_option("--ells", nv_ells, "Window lengths")->delimiter(',');
    sc->add_option("--centering", nv_centering, "uniform or eigenvalues")->capture_default_str();
    sc->add_option("--mean", nv_mean, "empirical or ell")->capture_default_str();
    sc->add_option("--trim", nv_trim, "Edge fraction excluded from window centres")->capture_default_str();
    sc->callback([&] {
      action = [&] {
        return cmd_number_variance(common, nv_in.unfolded, nv_in.eigen, nv_in.count, nv_in.below, nv_in.u, nv_ells,
                                   nv_centering, nv_mean, nv_trim);
      };
    });
  }

  // market-mode
  std::string mm_panel;
  {
    auto* sc = app.add_subcommand("market-mode", "Remove the market mode by regression");
    sc->add_option("--panel", mm_panel, "Normalized panel CSV from corr")->required();
    sc->callback([&] { action = [&] { return cmd_market_mode(common, mm_panel); }; });
  }

  // industry
  std::string in_eigen, in_industry;
  int in_top = 20;
  double in_groups = 0.0;
  {
    auto* sc = app.add_subcommand("industry", "Industry weight vectors and inverse participation ratios");
    sc->add_option("--eigen", in_eigen, "Eigen CSV with eigenvectors, e.g. residual_eigen.csv")->required();
    sc->add_option("--industry", in_industry, "Industry CSV");
    sc->add_option("--top", in_top, "Largest eigenvectors analysed")->capture_default_str();
    sc->add_option("--benchmark-groups", in_groups, "Groups in the benchmark IPR (0: half of all groups)");
    sc->callback([&] { action = [&] { return cmd_industry(common, in_eigen, in_industry, in_top, in_groups); }; });
  }

  // kurtosis
  std::string ku_panel, ku_variant = "literal";
  {
    auto* sc = app.add_subcommand("kurtosis", "Generalized kurtosis of the one-factor model");
    sc->add_option("--panel", ku_panel, "Normalized panel CSV from corr")->required();
    sc->add_option("--variant", ku_variant, "literal or squared_cross")->capture_default_str();
    sc->callback([&] { action = [&] { return cmd_kurtosis(common, ku_panel, ku_variant); }; });
  }

  // synth
  SynthSpec sy;
  std::string sy_kind = "gaussian_wishart", sy_output, sy_industry, sy_format = "prices";
  double sy_scale = 0.01;
  {
    auto* sc = app.add_subcommand("synth", "Generate seeded synthetic panels and spectra");
    sc->add_option("--kind", sy_kind,
                   "gaussian_wishart, lognormal_wishart, powerlaw_wishart, goe, one_factor_panel, poisson_spectrum, "
                   "picket_fence or market_panel")
        ->capture_default_str();
    sc->add_option("--N", sy.N, "Assets or matrix size")->capture_default_str();
    sc->add_option("--T", sy.T, "Observations")->capture_default_str();
    sc->add_option("--seed", sy.seed, "Seed")->capture_default_str();
    sc->add_option("--output", sy_output, "Output file (default: <out>/synth_<kind>.csv)");
    sc->add_option("--industry-out", sy_industry, "Industry CSV for market_panel");
    sc->add_option("--format", sy_format, "Panels as prices or matrix")->capture_default_str();
    sc->add_option("--scale", sy_scale, "Return scale when writing panels as prices")->capture_default_str();
    sc->add_option("--lognormal-s", sy.lognormal_s, "Log-scale of lognormal entries")->capture_default_str();
    sc->add_option("--tail-exponent", sy.powerlaw_exponent, "Tail exponent of power-law entries")->capture_default_str();
    sc->add_option("--loading", sy.loading_scale, "Mean factor loading")->capture_default_str();
    sc->add_option("--groups", sy.industry_groups, "Industry groups for market_panel")->capture_default_str();
    sc->callback([&] { action = [&] { return cmd_synth(common, sy, sy_kind, sy_output, sy_industry, sy_format, sy_scale); }; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  }

  try {
    set_max_threads(common.threads);
    return action ? action() : 2;
  } catch (const StageError& e) {
    std::cerr << "error [" << e.code() << "] in stage " << e.stage() << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error [internal_error]: " << e.what() << '\n';
    return 4;
  }
}
