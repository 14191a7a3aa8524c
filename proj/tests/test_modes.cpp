#include "rmtvol/modes.hpp"
#include "rmtvol/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace rmtvol;

namespace {

struct OneFactor {
  SynthOutput raw;
  Matrix g;
  CorrelationMatrix c;
  SpectralDecomposition d;
  Vector market;
};

OneFactor one_factor(int N, int T, std::uint64_t seed, double scale = 0.5) {
  SynthSpec s;
  s.kind = SynthKind::OneFactorPanel;
  s.N = N;
  s.T = T;
  s.seed = seed;
  s.loading_scale = scale;
  OneFactor f;
  f.raw = generate(s);
  f.g = normalize_rows(f.raw.data).data;
  f.c = correlation(f.g);
  f.d = eigendecompose(f.c);
  f.market = market_mode_series(f.g, f.d.eigenvectors.col(N - 1));
  return f;
}

double corr(const Vector& a, const Vector& b) {
  const Vector x = a.array() - a.mean(), y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

IndustryMap groups_of(const std::vector<std::string>& codes) { return make_industry_map(codes); }

}  // namespace

TEST(MarketMode, TracksTheCommonFactor) {
  // corr^2 is about N beta^2 / (N beta^2 + 1) for loading beta.
  const OneFactor f = one_factor(100, 2000, 1, 1.0);
  const Eigen::Map<const Vector> factor(f.raw.factor.data(), static_cast<Eigen::Index>(f.raw.factor.size()));
  EXPECT_GT(corr(f.market, factor), 0.99);
  // All components of the market eigenvector share one sign.
  EXPECT_GT(f.d.eigenvectors.col(99).minCoeff(), 0.0);
  // Sign: positively correlated with the cross-sectional mean.
  const Vector xs = f.g.colwise().mean().transpose();
  EXPECT_GT(corr(f.market, xs), 0.0);
}

TEST(MarketMode, IdenticalRowsGiveScaledRow) {
  CounterRng r(2, 0);
  Matrix m(4, 50);
  for (int t = 0; t < 50; ++t) {
    const double x = r.normal();
    for (int i = 0; i < 4; ++i) m(i, t) = x;
  }
  const Matrix g = normalize_rows(m).data;
  const SpectralDecomposition d = eigendecompose(correlation(g));
  EXPECT_NEAR(d.largest(), 4.0, 1e-10);
  const Vector M = market_mode_series(g, d.eigenvectors.col(3));
  EXPECT_LT((M - 4.0 * g.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_THROW(market_mode_series(g, Vector::Ones(3)), UsageError);
}

TEST(MarketModeRemoval, ResidualsAreOrthogonalAndCarryAZeroMode) {
  const OneFactor f = one_factor(80, 1000, 3);
  const MarketModeRemoval rm = remove_market_mode(f.g, f.market);
  const double T = 1000.0;
  for (Eigen::Index i = 0; i < 80; ++i) {
    const Vector e = rm.regression.residuals.row(i).transpose();
    EXPECT_LT(std::abs(e.sum() / T), 1e-10);
    EXPECT_LT(std::abs(e.dot(f.market) / T), 1e-10);
  }
  EXPECT_NEAR(rm.residual_correlation.entries.trace(), 80.0, 1e-9);
  EXPECT_LT(std::abs(rm.spectrum.eigenvalues[0]), 1e-8);
  EXPECT_GT(rm.spectrum.eigenvalues[1], 1e-3);
}

TEST(MarketModeRemoval, MatchesAlgebraicReconstruction) {
  const OneFactor f = one_factor(60, 800, 4);
  const MarketModeRemoval rm = remove_market_mode(f.g, f.market);
  const double m2 = f.market.squaredNorm() / 800.0;
  EXPECT_NEAR(m2, f.d.largest() * 60.0, 1e-8 * m2);
  const Matrix rec = reconstruct_residual_correlation(f.c.entries, rm.regression.betas, m2, rm.regression.residual_stds);
  EXPECT_LT((rec - rm.residual_correlation.entries).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(MarketModeRemoval, RescalingRelation) {
  // Strong factor so that lambda_N is about 0.2 N.
  const OneFactor f = one_factor(100, 3000, 5, 0.5);
  const double lambda_n = f.d.largest();
  EXPECT_GT(lambda_n, 15.0);
  const MarketModeRemoval rm = remove_market_mode(f.g, f.market);
  const std::vector<double> a(f.d.eigenvalues.data(), f.d.eigenvalues.data() + 100);
  const std::vector<double> b(rm.spectrum.eigenvalues.data(), rm.spectrum.eigenvalues.data() + 100);
  const RescalingReport r = rescaling_check(a, b, lambda_n, 100.0);
  EXPECT_NEAR(r.factor, (100.0 - lambda_n) / 100.0, 1e-15);
  EXPECT_LT(r.median_deviation, 0.05);
  EXPECT_EQ(r.relative_deviation.size(), 99u);
}

TEST(MarketModeRemoval, ErrorPaths) {
  const OneFactor f = one_factor(10, 100, 6);
  EXPECT_THROW(remove_market_mode(f.g, Vector::Ones(100)), DataError);
  EXPECT_THROW(remove_market_mode(f.g, Vector::Zero(99)), UsageError);
  const std::vector<double> a{1, 2}, b{0, 2};
  EXPECT_THROW(rescaling_check(a, b, 3.0, 2.0), UsageError);
}

TEST(WeightVector, ConcentratedAndUniform) {
  const IndustryMap map = groups_of({"10", "10", "20", "20", "30", "30"});
  Vector v(6);
  v << 2, 1, 0, 0, 0, 0;
  const WeightVector one = weight_vector(v, map);
  EXPECT_DOUBLE_EQ(one.ipr, 1.0);
  EXPECT_EQ(one.dominant_group, 0u);
  v << 1, 1, -1, 1, 1, -1;
  const WeightVector flat = weight_vector(v, map);
  EXPECT_NEAR(flat.ipr, 1.0 / 27.0, 1e-15);
  EXPECT_NEAR(flat.gamma, 1.0 / 3.0, 1e-15);
  double sum = 0.0;
  for (double x : flat.rho) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-15);
}

TEST(WeightVector, GroupSizeIsNormalizedAway) {
  // Group 1 has three members, group 2 one; equal per-asset weight gives equal rho.
  const IndustryMap map = groups_of({"10", "10", "10", "20"});
  const Vector v = Vector::Ones(4);
  const WeightVector w = weight_vector(v, map);
  EXPECT_NEAR(w.rho[0], 0.5, 1e-15);
  EXPECT_NEAR(w.rho[1], 0.5, 1e-15);
  EXPECT_THROW(weight_vector(Vector::Ones(3), map), UsageError);
  EXPECT_THROW(weight_vector(Vector::Zero(4), map), DataError);
}

TEST(WeightVector, BenchmarkAndDominatedCount) {
  EXPECT_DOUBLE_EQ(benchmark_ipr(12.0), 1.0 / 1728.0);
  EXPECT_THROW(benchmark_ipr(0.0), UsageError);
  const IndustryMap map = groups_of({"10", "20", "30", "40"});
  Matrix vecs(4, 3);
  vecs.col(0) << 1, 1, 1, 1;
  vecs.col(1) << 0, 2, 0, 0;
  vecs.col(2) << 1, 1, 0, 0;
  const auto w = weight_vectors(vecs, map);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_NEAR(w[2].ipr, 2.0 / 16.0, 1e-15);
  EXPECT_EQ(count_dominated(w, benchmark_ipr(2.0)), 1u);
  EXPECT_EQ(count_dominated(w, benchmark_ipr(4.0)), 2u);
}

TEST(PowerLawFit, ExactAndNoisy) {
  std::vector<double> lam, ipr;
  for (int i = 1; i <= 20; ++i) {
    lam.push_back(0.1 * i);
    ipr.push_back(0.3 * std::pow(0.1 * i, 1.5));
  }
  const PowerLawFit exact = ipr_powerlaw_fit(lam, ipr);
  EXPECT_NEAR(exact.slope, 1.5, 1e-12);
  EXPECT_NEAR(std::exp(exact.intercept), 0.3, 1e-12);
  EXPECT_NEAR(exact.stderr_slope, 0.0, 1e-10);

  CounterRng r(7, 0);
  std::vector<double> noisy;
  std::vector<double> lam2;
  for (int i = 1; i <= 200; ++i) {
    lam2.push_back(0.01 * i);
    noisy.push_back(0.3 * std::pow(0.01 * i, 1.5) * std::exp(0.1 * r.normal()));
  }
  const PowerLawFit f = ipr_powerlaw_fit(lam2, noisy);
  EXPECT_LT(std::abs(f.slope - 1.5), 2.0 * f.stderr_slope + 1e-12);
  EXPECT_THROW(ipr_powerlaw_fit(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), DataError);
}

TEST(Gaussianize, MomentsRanksAndTies) {
  CounterRng r(8, 0);
  std::vector<double> x(2000);
  for (auto& v : x) v = std::exp(r.normal());
  const auto z = gaussianize(x);
  double m = 0.0, v2 = 0.0;
  for (double s : z) m += s;
  m /= 2000.0;
  for (double s : z) v2 += (s - m) * (s - m);
  v2 /= 2000.0;
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(v2, 1.0, 0.01);
  for (std::size_t i = 1; i < x.size(); ++i) EXPECT_EQ(x[i] < x[i - 1], z[i] < z[i - 1]);

  // Rank invariance: any increasing transform gives the same output.
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::log(x[i]) * 3.0 + 1.0;
  EXPECT_EQ(gaussianize(y), z);

  // Already Gaussian input is barely changed.
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = std::log(x[i]);
  const auto gz = gaussianize(g);
  const Eigen::Map<const Vector> a(g.data(), 2000), b(gz.data(), 2000);
  EXPECT_GT(corr(a, b), 0.99);

  std::vector<double> tied{3, 1, 3, 2, 5, 6, 7, 8, 9, 10};
  const auto tz = gaussianize(tied);
  EXPECT_DOUBLE_EQ(tz[0], tz[2]);
  EXPECT_DOUBLE_EQ(tz[0], normal_quantile(3.5 / 11.0));
  EXPECT_THROW(gaussianize(std::vector<double>(20, 1.0)), DataError);
  EXPECT_THROW(gaussianize(std::vector<double>(5, 1.0)), DataError);
}

TEST(Kurtosis, MeanOfKappasAndGaussianBaseline) {
  const int T = 10000;
  CounterRng r(9, 0);
  Vector m(T);
  for (int t = 0; t < T; ++t) m[t] = r.normal();
  Matrix e(5, T);
  for (int i = 0; i < 5; ++i) {
    CounterRng ri(9, static_cast<std::uint64_t>(i + 1));
    for (int t = 0; t < T; ++t) e(i, t) = ri.normal();
  }
  const KurtosisReport k = generalized_kurtosis(e, m);
  double mean = 0.0;
  for (double x : k.kappas) mean += x;
  EXPECT_DOUBLE_EQ(k.K, mean / 5.0);
  for (double x : k.kappas) EXPECT_LT(std::abs(x), 0.1);
  EXPECT_THROW(generalized_kurtosis(e, Vector::Zero(10)), UsageError);
}

TEST(Kurtosis, VariantsDifferOnlyInTheCrossTerm) {
  Matrix e(1, 4);
  e << 1, -1, 2, 0;
  Vector m(4);
  m << 1, 1, 1, -1;
  // <e^2 M^2> = 1.5, <e^2> = 1.5, <M^2> = 1, <eM> = 0.5.
  EXPECT_DOUBLE_EQ(generalized_kurtosis(e, m, KurtosisVariant::Literal).kappas[0], 1.5 - 1.5 - 1.0);
  EXPECT_DOUBLE_EQ(generalized_kurtosis(e, m, KurtosisVariant::SquaredCross).kappas[0], 1.5 - 1.5 - 0.5);
}

TEST(ComponentStats, GaussianAndConcentrated) {
  CounterRng r(10, 0);
  Vector v(400);
  for (auto& x : v) x = r.normal();
  v *= std::sqrt(400.0) / v.norm();
  const ComponentStats g = eigvec_component_stats(v);
  EXPECT_TRUE(g.gaussian);
  EXPECT_LT(std::abs(g.excess_kurtosis), 0.6);
  Vector c = Vector::Zero(400);
  c[0] = 20.0;
  const ComponentStats s = eigvec_component_stats(c);
  EXPECT_FALSE(s.gaussian);
  EXPECT_GT(s.excess_kurtosis, 100.0);
}
