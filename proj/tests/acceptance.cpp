// Acceptance run: one PASS/FAIL line per criterion, with the measured values
// and the wall time against its budget. Exits nonzero if any criterion fails.

#include "rmtvol/garch.hpp"
#include "rmtvol/goe_stats.hpp"
#include "rmtvol/modes.hpp"
#include "rmtvol/mp_fit.hpp"
#include "rmtvol/pipeline.hpp"
#include "rmtvol/spectrum.hpp"
#include "rmtvol/synth.hpp"
#include "rmtvol/unfold.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

using namespace rmtvol;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [miss]");
  }
};

std::string f(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> values(const SpectralDecomposition& d) {
  return {d.eigenvalues.data(), d.eigenvalues.data() + d.size()};
}

// Invariants of every correlation matrix built below.
struct InvariantLog {
  int matrices = 0;
  double worst_trace = 0.0;
  double lowest_eigenvalue = 1e300;
  double worst_residual = 0.0;

  SpectralDecomposition check(const Matrix& c) {
    const SpectralDecomposition d = eigendecompose(c);
    ++matrices;
    worst_trace = std::max(worst_trace, std::abs(d.eigenvalues.sum() - static_cast<double>(c.rows())));
    lowest_eigenvalue = std::min(lowest_eigenvalue, d.eigenvalues[0]);
    // Eigenvectors are scaled to v^T v = N; the residual is taken on unit vectors.
    for (Eigen::Index k = 0; k < d.size(); ++k) {
      const Vector v = d.eigenvectors.col(k).normalized();
      worst_residual = std::max(worst_residual, (c * v - d.eigenvalues[k] * v).cwiseAbs().maxCoeff());
    }
    return d;
  }
};

InvariantLog invariants;

Matrix wishart_correlation(SynthKind kind, int N, int T, std::uint64_t seed, double lognormal_s = 1.0) {
  SynthSpec s;
  s.kind = kind;
  s.N = N;
  s.T = T;
  s.seed = seed;
  s.lognormal_s = lognormal_s;
  return correlation(normalize_rows(generate(s).data).data).entries;
}

std::vector<double> goe_spectrum(int N, std::uint64_t seed) {
  SynthSpec s;
  s.kind = SynthKind::Goe;
  s.N = N;
  s.seed = seed;
  return values(eigendecompose(generate(s).data));
}

// Closed form of the GOE number variance in Si and Ci, each evaluated by
// Simpson's rule: a second scheme independent of the library's quadrature of
// the two-point cluster function.
double sigma2_closed_form(double L) {
  constexpr double pi = std::numbers::pi, gamma = std::numbers::egamma;
  auto si = [](double x) {
    return oracle::simpson([](double t) { return t == 0.0 ? 1.0 : std::sin(t) / t; }, 0.0, x, 400000);
  };
  auto ci = [](double x) {
    return gamma + std::log(x) +
           oracle::simpson([](double t) { return t == 0.0 ? 0.0 : (std::cos(t) - 1.0) / t; }, 0.0, x, 400000);
  };
  const double s1 = si(pi * L), s2 = si(2 * pi * L);
  return 2.0 / (pi * pi) *
         (std::log(2 * pi * L) + gamma + 1.0 + 0.5 * s1 * s1 - pi / 2 * s1 - std::cos(2 * pi * L) - ci(2 * pi * L) +
          pi * pi * L * (1.0 - 2.0 / pi * s2));
}

Outcome criterion1() {
  Outcome o;
  const auto [lo, hi] = mp_bounds(2.351, 0.009952);
  o.require(std::abs(lo - 0.0012) < 5e-4, "lambda_- " + f("%.5f", lo));
  o.require(std::abs(hi - 0.0272) < 5e-4, "lambda_+ " + f("%.5f", hi));
  return o;
}

Outcome criterion2() {
  Outcome o;
  const int N = 427, T = 1005;
  const double Q = static_cast<double>(T) / N;
  const SpectralDecomposition g = invariants.check(wishart_correlation(SynthKind::GaussianWishart, N, T, 1));
  const MPFitResult fit = fit_mp(values(g), Q);
  o.require(fit.params.alpha >= 0.95 && fit.params.alpha <= 1.0, "alpha " + f("%.4f", fit.params.alpha));
  o.require(std::abs(fit.params.s0_sq - 1.0) <= 0.05, "s0^2 " + f("%.4f", fit.params.s0_sq));
  const double n0 = static_cast<double>(fit.N0) / N;
  o.require(n0 >= 0.98, "N0/N " + f("%.4f", n0));
  const SpectralDecomposition l = invariants.check(wishart_correlation(SynthKind::LognormalWishart, N, T, 2));
  const MPCdfTable F(Q);
  const KSResult ks = ks_test(values(l), [&](double x) { return F(x); });
  o.require(ks.p_value > 0.01, "lognormal KS p " + f("%.3f", ks.p_value));
  return o;
}

Outcome criterion3() {
  Outcome o;
  std::vector<double> p_goe, beta, p_nnn, p_gue, p_gse;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const std::vector<double> ev = goe_spectrum(500, seed);
    const SpacingSample nn = spacings(unfold(ev).xi);
    const auto [even, odd] = unfold_even_odd(ev);
    const SpacingSample nnn = next_nearest_spacings(even.xi, odd.xi);
    auto ks = [](const SpacingSample& s, Ensemble e) {
      return ks_test(s.d, [e](double d) { return wigner_cdf(d, e); }).p_value;
    };
    p_goe.push_back(ks(nn, Ensemble::GOE));
    beta.push_back(fit_normalization(nn.d, Ensemble::GOE).beta);
    p_nnn.push_back(ks(nnn, Ensemble::GSE));
    p_gue.push_back(ks(nn, Ensemble::GUE));
    p_gse.push_back(ks(nn, Ensemble::GSE));
  }
  o.require(median(p_goe) > 0.01, "NN vs GOE p " + f("%.3f", median(p_goe)));
  o.require(median(beta) >= 0.9 && median(beta) <= 1.1, "beta " + f("%.3f", median(beta)));
  o.require(median(p_nnn) > 0.01, "NNN vs GSE p " + f("%.3f", median(p_nnn)));
  o.require(median(p_gue) < 0.05, "NN vs GUE p " + f("%.2g", median(p_gue)));
  o.require(median(p_gse) < 0.05, "NN vs GSE p " + f("%.2g", median(p_gse)));
  return o;
}

Outcome criterion4() {
  Outcome o;
  // Poisson spectrum, unit density.
  std::vector<double> ells(10);
  for (int k = 0; k < 10; ++k) ells[static_cast<std::size_t>(k)] = k + 1.0;
  std::vector<std::vector<double>> poisson(10);
  for (std::uint64_t seed = 1; seed <= 11; ++seed) {
    SynthSpec s;
    s.kind = SynthKind::PoissonSpectrum;
    s.N = 10000;
    s.seed = seed;
    const NumberVarianceCurve c = number_variance(generate(s).spectrum, ells);
    for (std::size_t k = 0; k < 10; ++k) poisson[k].push_back(c.empirical[k]);
  }
  double worst_poisson = 0.0;
  for (std::size_t k = 0; k < 10; ++k) worst_poisson = std::max(worst_poisson, std::abs(median(poisson[k]) - ells[k]) / ells[k]);
  o.require(worst_poisson < 0.05, "Poisson max rel dev " + f("%.3f", worst_poisson));

  // GOE N = 500.
  std::vector<double> goe_ells = ells;
  goe_ells.push_back(30.0);
  goe_ells.push_back(40.0);
  std::vector<std::vector<double>> goe(goe_ells.size());
  std::vector<double> theory;
  for (std::uint64_t seed = 101; seed <= 120; ++seed) {
    const NumberVarianceCurve c = number_variance(unfold(goe_spectrum(500, seed)).xi, goe_ells);
    if (c.ells.size() != goe_ells.size()) {
      o.require(false, "window lengths omitted");
      return o;
    }
    for (std::size_t k = 0; k < goe_ells.size(); ++k) goe[k].push_back(c.empirical[k]);
    theory = c.theory_goe;
  }
  double worst_goe = 0.0;
  for (std::size_t k = 0; k < 10; ++k) worst_goe = std::max(worst_goe, std::abs(median(goe[k]) - theory[k]) / theory[k]);
  o.require(worst_goe < 0.10, "GOE l<=10 max rel dev " + f("%.3f", worst_goe));
  bool diverges = true;
  std::string tail;
  for (std::size_t k = 10; k < goe_ells.size(); ++k) {
    const double m = median(goe[k]);
    diverges = diverges && m > theory[k] && m < goe_ells[k];
    tail += " " + f("%.2f", m) + "/" + f("%.2f", theory[k]);
  }
  o.require(diverges, "GOE l>=30 above theory toward Poisson (emp/theory)" + tail);

  double worst_theory = 0.0;
  for (double L : {0.25, 0.5, 1.0, 2.5, 5.0, 10.0, 20.0, 30.0, 40.0})
    worst_theory = std::max(worst_theory, std::abs(goe_number_variance_theory(L) - sigma2_closed_form(L)));
  o.require(worst_theory < 1e-6, "theory vs closed form " + f("%.1e", worst_theory));
  return o;
}

Outcome criterion5() {
  Outcome o;
  const GarchParams truth{2e-6, 0.09, 0.90};
  const int runs = 100, T = 5000, pooled_series = 50;
  int within[3] = {0, 0, 0};
  std::vector<double> se_alpha1;
  Matrix pool(pooled_series, T);
  const char* names[3] = {"alpha0", "alpha1", "beta1"};
  for (int s = 1; s <= runs; ++s) {
    const GarchSimulation sim = simulate_garch(truth, std::nullopt, InnovationDist::gaussian(), T, 1000 + s);
    if (s <= pooled_series)
      for (int t = 0; t < T; ++t) pool(s - 1, t) = sim.returns[static_cast<std::size_t>(t)];
    const GarchFit fit = fit_garch(sim.returns);
    const double est[3] = {fit.params.alpha0, fit.params.alpha1, fit.params.beta1};
    const double tru[3] = {truth.alpha0, truth.alpha1, truth.beta1};
    for (int k = 0; k < 3; ++k) {
      const double se = fit.stderr_of(names[k]);
      if (std::isfinite(se) && std::abs(est[k] - tru[k]) <= 2.0 * se) ++within[k];
    }
    se_alpha1.push_back(fit.stderr_of("alpha1"));
  }
  for (int k = 0; k < 3; ++k)
    o.require(within[k] >= 90, std::string(names[k]) + " within 2 SE " + std::to_string(within[k]) + "/100");
  const PooledGarchFit pooled = fit_pooled_garch(pool);
  const double med = median(se_alpha1), pse = pooled.fit.stderr_of("alpha1");
  o.require(pse <= 0.5 * med, "pooled alpha1 SE " + f("%.5f", pse) + " vs median individual " + f("%.5f", med));
  return o;
}

Outcome criterion6() {
  Outcome o;
  double worst_zero = 0.0, worst_b2 = 0.0, worst_rescale = 0.0;
  int rescaled = 0;
  for (double loading : {0.3, 0.45, 1.0}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      SynthSpec s;
      s.kind = SynthKind::OneFactorPanel;
      s.N = 100;
      s.T = 3000;
      s.seed = seed;
      s.loading_scale = loading;
      const Matrix g = normalize_rows(generate(s).data).data;
      const CorrelationMatrix c = correlation(g);
      const SpectralDecomposition d = invariants.check(c.entries);
      const double lambda_n = d.largest();
      const Vector M = market_mode_series(g, d.eigenvectors.col(99));
      const MarketModeRemoval rm = remove_market_mode(g, M);
      const SpectralDecomposition r = invariants.check(rm.residual_correlation.entries);
      worst_zero = std::max(worst_zero, std::abs(r.eigenvalues[0]));
      const double m2 = M.squaredNorm() / 3000.0;
      const Matrix rec = reconstruct_residual_correlation(c.entries, rm.regression.betas, m2, rm.regression.residual_stds);
      worst_b2 = std::max(worst_b2, (rec - rm.residual_correlation.entries).cwiseAbs().maxCoeff());
      if (lambda_n <= 0.2 * 100) {
        ++rescaled;
        const RescalingReport rr = rescaling_check(values(d), values(r), lambda_n, 100.0);
        worst_rescale = std::max(worst_rescale, rr.median_deviation);
      }
    }
  }
  o.require(worst_zero < 1e-8, "smallest residual eigenvalue " + f("%.1e", worst_zero));
  o.require(worst_b2 < 1e-8, "reconstruction error " + f("%.1e", worst_b2));
  o.require(rescaled > 0 && worst_rescale < 0.05,
            "rescaling median dev " + f("%.4f", worst_rescale) + " over " + std::to_string(rescaled) + " panels");
  return o;
}

Outcome criterion7() {
  Outcome o;
  const int g = 24;
  std::vector<std::string> codes;
  for (int a = 0; a < g; ++a)
    for (int k = 0; k <= a % 3; ++k) codes.push_back(std::to_string(1010 + 10 * a));
  const IndustryMap map = make_industry_map(codes);
  const auto n = static_cast<Eigen::Index>(codes.size());
  auto spread_over = [&](int groups) {
    Vector v = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
      if (static_cast<int>(map.membership[static_cast<std::size_t>(i)]) < groups) v[i] = (i % 2 ? -1.0 : 1.0);
    return v;
  };
  const WeightVector single = weight_vector(spread_over(1), map);
  const WeightVector uniform = weight_vector(spread_over(g), map);
  o.require(single.ipr == 1.0, "single-group IPR " + f("%.17g", single.ipr));
  o.require(std::abs(uniform.ipr * g * g * g - 1.0) < 1e-13, "uniform IPR x g^3 " + f("%.17g", uniform.ipr * g * g * g));
  double worst_sum = 0.0;
  CounterRng r(7, 0);
  for (int trial = 0; trial < 20; ++trial) {
    Vector v(n);
    for (auto& x : v) x = r.normal();
    const WeightVector w = weight_vector(v, map);
    double s = 0.0;
    for (double x : w.rho) s += x;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
  }
  o.require(worst_sum < 1e-14, "sum rho - 1 " + f("%.1e", worst_sum));
  const double i0 = benchmark_ipr(g / 2.0);
  o.require(i0 == 1.0 / 1728.0, "I0 = 1/12^3");
  std::vector<WeightVector> ws;
  for (int groups : {1, 6, 11, 13, 24}) ws.push_back(weight_vector(spread_over(groups), map));
  const std::size_t dominated = count_dominated(ws, i0);
  o.require(dominated == 3, "dominated by I0: " + std::to_string(dominated) + " of {1,6,11,13,24}-group spreads");
  return o;
}

Outcome criterion8() {
  Outcome o;
  const int T = 10000;
  std::vector<double> kappas;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CounterRng re(seed, 0), rm(seed, 1);
    std::vector<double> e(T), m(T);
    for (int t = 0; t < T; ++t) {
      e[static_cast<std::size_t>(t)] = std::exp(re.normal());  // skewed input; gaussianize removes it
      m[static_cast<std::size_t>(t)] = re.uniform() + rm.normal();
    }
    const auto eg = gaussianize(e), mg = gaussianize(m);
    const Matrix E = Eigen::Map<const Matrix>(eg.data(), 1, T);
    const Vector M = Eigen::Map<const Vector>(mg.data(), T);
    kappas.push_back(std::abs(generalized_kurtosis(E, M).kappas[0]));
  }
  o.require(median(kappas) < 0.05, "median |kappa| " + f("%.4f", median(kappas)));

  CounterRng r(99, 0);
  Matrix E(12, 500);
  Vector M(500);
  for (auto& x : M) x = r.normal();
  for (Eigen::Index i = 0; i < 12; ++i)
    for (Eigen::Index t = 0; t < 500; ++t) E(i, t) = r.normal() * (1.0 + 0.5 * M[t] * M[t]);
  bool exact = true;
  for (KurtosisVariant v : {KurtosisVariant::Literal, KurtosisVariant::SquaredCross}) {
    const KurtosisReport k = generalized_kurtosis(E, M, v);
    double s = 0.0;
    for (double x : k.kappas) s += x;
    exact = exact && k.K == s / 12.0;
  }
  o.require(exact, "K equals mean of kappa_i");
  return o;
}

Outcome criterion10(double& pipeline_seconds) {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / ("rmtvol_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  PipelineConfig cfg;
  cfg.prices_path = std::string(RMTVOL_FIXTURES) + "/prices.csv";
  cfg.industry_path = std::string(RMTVOL_FIXTURES) + "/industry.csv";
  cfg.output_dir = dir.string();
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  const auto t0 = std::chrono::steady_clock::now();
  const PipelineResult a = run_pipeline(cfg);
  pipeline_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const PipelineResult b = run_pipeline(cfg);
  const std::string ra = slurp(a.report_path), rb = slurp(b.report_path);
  o.require(!ra.empty() && ra == rb, "reports byte-identical (" + std::to_string(ra.size()) + " bytes)");
  o.require(pipeline_seconds < 300.0, "fixture pipeline " + f("%.1f", pipeline_seconds) + " s");

  // Correlation matrices of the fixture for the invariant check.
  const PriceLoad load = read_prices_file(cfg.prices_path);
  const ReturnPanel ret = log_returns(load.panel);
  const VolatilityFit vf = fit_volatility(ret.returns, VolModel::Garch, InnovationDist::gaussian());
  for (Target t : {Target::Volatility, Target::Return, Target::VolatilityReturn}) {
    const Matrix g = target_panel(ret.returns, vf.sigma, t);
    const CorrelationMatrix c = correlation(g, target_kind(t));
    const SpectralDecomposition d = invariants.check(c.entries);
    if (t == Target::Volatility) {
      const MarketModeRemoval rm = remove_market_mode(g, market_mode_series(g, d.eigenvectors.col(d.size() - 1)));
      invariants.check(rm.residual_correlation.entries);
    }
  }
  fs::remove_all(dir);
  return o;
}

Outcome criterion9() {
  Outcome o;
  // Extra matrices beyond those built by the other criteria.
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    invariants.check(wishart_correlation(SynthKind::GaussianWishart, 200, 210, seed));
    invariants.check(wishart_correlation(SynthKind::PowerlawWishart, 150, 600, seed));
  }
  o.require(invariants.matrices >= 20, std::to_string(invariants.matrices) + " matrices");
  o.require(invariants.worst_trace < 1e-8, "max |sum lambda - N| " + f("%.1e", invariants.worst_trace));
  o.require(invariants.lowest_eigenvalue > -1e-8, "min lambda " + f("%.1e", invariants.lowest_eigenvalue));
  o.require(invariants.worst_residual < 1e-9, "max |Cv - lambda v| " + f("%.1e", invariants.worst_residual));
  return o;
}

bool report(int id, double budget, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget > 0.0) o.require(secs < budget, f("%.2f", secs) + " s of " + f("%.0f", budget) + " s");
  std::printf("criterion %2d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
  return o.pass;
}

}  // namespace

int main() {
  bool ok = true;
  double pipeline_seconds = 0.0;
  ok &= report(1, 1.0, criterion1);
  ok &= report(2, 60.0, criterion2);
  ok &= report(3, 60.0, criterion3);
  ok &= report(4, 120.0, criterion4);
  ok &= report(5, 300.0, criterion5);
  ok &= report(6, 30.0, criterion6);
  ok &= report(7, 1.0, criterion7);
  ok &= report(8, 10.0, criterion8);
  // Criterion 10 runs before 9 so the fixture matrices join the invariant log;
  // its time budget applies to a single pipeline run and is checked inside.
  const bool ok10 = report(10, 0.0, [&] { return criterion10(pipeline_seconds); });
  ok &= report(9, 0.0, criterion9);
  ok &= ok10;
  std::printf("acceptance: %s\n", ok ? "all criteria PASS" : "at least one criterion FAILED");
  return ok ? 0 : 1;
}
