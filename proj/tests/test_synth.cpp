#include "rmtvol/goe_stats.hpp"
#include "rmtvol/mp_fit.hpp"
#include "rmtvol/spectrum.hpp"
#include "rmtvol/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rmtvol;

namespace {

struct ThreadCap {
  explicit ThreadCap(unsigned n) { set_max_threads(n); }
  ~ThreadCap() { set_max_threads(0); }
};

}  // namespace

TEST(Synth, KindNamesRoundTrip) {
  for (SynthKind k : {SynthKind::GaussianWishart, SynthKind::LognormalWishart, SynthKind::PowerlawWishart, SynthKind::Goe,
                      SynthKind::OneFactorPanel, SynthKind::PoissonSpectrum, SynthKind::PicketFence, SynthKind::MarketPanel})
    EXPECT_EQ(parse_synth_kind(to_string(k)), k);
  EXPECT_FALSE(parse_synth_kind("wishart").has_value());
}

TEST(Synth, DeterministicAndThreadIndependent) {
  for (SynthKind k : {SynthKind::GaussianWishart, SynthKind::LognormalWishart, SynthKind::PowerlawWishart, SynthKind::Goe,
                      SynthKind::OneFactorPanel}) {
    SynthSpec s;
    s.kind = k;
    s.N = 30;
    s.T = 60;
    s.seed = 11;
    Matrix one, many;
    {
      ThreadCap cap(1);
      one = generate(s).data;
    }
    {
      ThreadCap cap(4);
      many = generate(s).data;
    }
    EXPECT_EQ(one, many) << to_string(k);
    EXPECT_EQ(generate(s).data, many) << to_string(k);
    s.seed = 12;
    EXPECT_NE(generate(s).data, many) << to_string(k);
  }
}

TEST(Synth, ShapesAndGoeSymmetry) {
  SynthSpec s;
  s.N = 7;
  s.T = 13;
  EXPECT_EQ(generate(s).data.rows(), 7);
  EXPECT_EQ(generate(s).data.cols(), 13);
  s.kind = SynthKind::Goe;
  s.N = 300;
  const Matrix g = generate(s).data;
  ASSERT_EQ(g.cols(), 300);
  EXPECT_EQ(g, g.transpose());
  // Diagonal variance 2, off-diagonal variance 1.
  EXPECT_NEAR(g.diagonal().squaredNorm() / 300.0, 2.0, 0.35);
  double off = 0.0;
  for (int i = 0; i < 300; ++i)
    for (int j = i + 1; j < 300; ++j) off += g(i, j) * g(i, j);
  EXPECT_NEAR(off / (300.0 * 299.0 / 2.0), 1.0, 0.02);
}

TEST(Synth, WishartSpectrumFollowsMarchenkoPastur) {
  SynthSpec s;
  s.N = 300;
  s.T = 900;
  s.seed = 13;
  const auto d = eigendecompose(correlation(normalize_rows(generate(s).data).data));
  const std::vector<double> ev(d.eigenvalues.data(), d.eigenvalues.data() + d.size());
  const MPCdfTable F(3.0);
  EXPECT_GT(ks_test(ev, [&](double x) { return F(x); }).p_value, 0.01);
}

TEST(Synth, SpectraKinds) {
  SynthSpec s;
  s.kind = SynthKind::PoissonSpectrum;
  s.N = 500;
  const auto p = generate(s).spectrum;
  ASSERT_EQ(p.size(), 500u);
  EXPECT_TRUE(std::is_sorted(p.begin(), p.end()));
  EXPECT_GT(p.front(), 0.0);
  EXPECT_LT(p.back(), 500.0);
  s.kind = SynthKind::PicketFence;
  const auto f = generate(s).spectrum;
  EXPECT_DOUBLE_EQ(f.front(), 1.0);
  EXPECT_DOUBLE_EQ(f.back(), 500.0);
}

TEST(Synth, OneFactorLoadings) {
  SynthSpec s;
  s.kind = SynthKind::OneFactorPanel;
  s.N = 20;
  s.T = 50;
  const auto o = generate(s);
  ASSERT_EQ(o.loadings.size(), 20u);
  ASSERT_EQ(o.factor.size(), 50u);
  for (double b : o.loadings) {
    EXPECT_GE(b, 0.5 * 0.75);
    EXPECT_LE(b, 0.5 * 1.25);
  }
  s.loadings.assign(20, 0.0);
  const auto z = generate(s);
  EXPECT_EQ(z.factor, o.factor);
  s.loadings.assign(3, 1.0);
  EXPECT_THROW(generate(s), UsageError);
}

TEST(Synth, MarketPanel) {
  SynthSpec s;
  s.N = 24;
  s.T = 300;
  s.industry_groups = 6;
  s.seed = 14;
  const SynthMarket m = generate_market(s);
  EXPECT_EQ(m.prices.prices.rows(), 24);
  EXPECT_EQ(m.prices.prices.cols(), 301);
  EXPECT_EQ(m.prices.assets.front(), "S0001");
  EXPECT_EQ(m.industry.group_count(), 6u);
  EXPECT_EQ(m.industry.asset_count(), 24u);
  EXPECT_GT(m.prices.prices.minCoeff(), 0.0);
  EXPECT_TRUE(m.prices.prices.allFinite());
  // Common market factor: the largest eigenvalue stands well above the bulk.
  const auto d = eigendecompose(correlation(normalize_rows(log_returns(m.prices).returns).data));
  EXPECT_GT(d.largest(), 3.0);
  EXPECT_EQ(generate_market(s).prices.prices, m.prices.prices);
  s.industry_groups = 30;
  EXPECT_THROW(generate_market(s), UsageError);
}

TEST(Synth, InvalidSpecs) {
  SynthSpec s;
  s.N = 1;
  EXPECT_THROW(generate(s), UsageError);
  s.N = 10;
  s.T = 1;
  EXPECT_THROW(generate(s), UsageError);
  s.kind = SynthKind::LognormalWishart;
  s.T = 10;
  s.lognormal_s = 0.0;
  EXPECT_THROW(generate(s), UsageError);
  s.kind = SynthKind::MarketPanel;
  EXPECT_THROW(generate(s), UsageError);
}
