#pragma once

// Seeded generators for synthetic panels and spectra. Row i of any panel is
// drawn from stream i of the counter-based generator, so output does not
// depend on how rows are scheduled across threads.

#include "rmtvol/core.hpp"
#include "rmtvol/data_ingest.hpp"
#include "rmtvol/garch.hpp"
#include "rmtvol/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace rmtvol {

enum class SynthKind {
  GaussianWishart,
  LognormalWishart,
  PowerlawWishart,
  Goe,
  OneFactorPanel,
  PoissonSpectrum,
  PicketFence,
  MarketPanel,
};

inline const char* to_string(SynthKind k) {
  switch (k) {
    case SynthKind::GaussianWishart: return "gaussian_wishart";
    case SynthKind::LognormalWishart: return "lognormal_wishart";
    case SynthKind::PowerlawWishart: return "powerlaw_wishart";
    case SynthKind::Goe: return "goe";
    case SynthKind::OneFactorPanel: return "one_factor_panel";
    case SynthKind::PoissonSpectrum: return "poisson_spectrum";
    case SynthKind::PicketFence: return "picket_fence";
    case SynthKind::MarketPanel: return "market_panel";
  }
  return "unknown";
}

inline std::optional<SynthKind> parse_synth_kind(const std::string& s) {
  for (SynthKind k : {SynthKind::GaussianWishart, SynthKind::LognormalWishart, SynthKind::PowerlawWishart,
                      SynthKind::Goe, SynthKind::OneFactorPanel, SynthKind::PoissonSpectrum, SynthKind::PicketFence,
                      SynthKind::MarketPanel})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

struct SynthSpec {
  SynthKind kind = SynthKind::GaussianWishart;
  int N = 100;
  int T = 500;
  std::uint64_t seed = 1;

  double lognormal_mu = 0.0;
  double lognormal_s = 1.0;
  double powerlaw_exponent = 4.5;

  /// One-factor panel: beta_i = loading_scale * (1 + loading_spread * (u_i - 1/2)),
  /// unless `loadings` is given explicitly.
  double loading_scale = 0.5;
  double loading_spread = 0.5;
  std::vector<double> loadings;

  /// Market panel: industry groups, factor loadings, and the GARCH law of
  /// the idiosyncratic and market volatility processes.
  int industry_groups = 12;
  double market_loading = 0.5;
  double industry_loading = 0.45;
  GarchParams asset_garch{2e-6, 0.08, 0.90};
  GarchParams market_garch{0.02, 0.10, 0.88};
};

struct SynthOutput {
  Matrix data;                  // N x T panel, or N x N for goe
  std::vector<double> spectrum; // poisson_spectrum / picket_fence
  std::vector<double> factor;   // one_factor_panel: the common factor f_t
  std::vector<double> loadings; // one_factor_panel: beta_i
};

struct SynthMarket {
  PricePanel prices;
  IndustryMap industry;
  std::vector<std::string> codes;  // per asset
  std::vector<std::string> names;  // per asset
};

namespace detail {

inline void check_spec(const SynthSpec& s) {
  if (s.N < 2) throw UsageError("invalid_synth_spec", "N must be at least 2");
  const bool needs_t = s.kind != SynthKind::Goe && s.kind != SynthKind::PoissonSpectrum && s.kind != SynthKind::PicketFence;
  if (needs_t && s.T < 2) throw UsageError("invalid_synth_spec", "T must be at least 2");
  if (s.kind == SynthKind::LognormalWishart && !(s.lognormal_s > 0.0))
    throw UsageError("invalid_synth_spec", "lognormal s must be positive");
  if (s.kind == SynthKind::PowerlawWishart && !(s.powerlaw_exponent > 0.0))
    throw UsageError("invalid_synth_spec", "power-law exponent must be positive");
  if (s.kind == SynthKind::OneFactorPanel && !s.loadings.empty() && static_cast<int>(s.loadings.size()) != s.N)
    throw UsageError("invalid_synth_spec", "explicit loadings must have length N");
  if (s.kind == SynthKind::MarketPanel) {
    if (s.industry_groups < 1 || s.industry_groups > s.N)
      throw UsageError("invalid_synth_spec", "industry group count must lie in [1, N]");
    if (!s.asset_garch.valid() || !s.market_garch.valid())
      throw UsageError("invalid_synth_spec", "GARCH parameters must be stationary");
  }
}

// Stream offsets keep factor series disjoint from per-row streams.
inline constexpr std::uint64_t kFactorStream = 1ULL << 40;

template <typename Draw>
Matrix iid_panel(const SynthSpec& s, Draw draw) {
  Matrix m(s.N, s.T);
  parallel_for(static_cast<std::size_t>(s.N), [&](std::size_t i) {
    CounterRng rng(s.seed, i);
    for (int t = 0; t < s.T; ++t) m(static_cast<Eigen::Index>(i), t) = draw(rng);
  });
  return m;
}

}  // namespace detail

inline SynthOutput generate(const SynthSpec& s) {
  detail::check_spec(s);
  SynthOutput out;
  switch (s.kind) {
    case SynthKind::GaussianWishart:
      out.data = detail::iid_panel(s, [](CounterRng& r) { return r.normal(); });
      break;
    case SynthKind::LognormalWishart:
      out.data = detail::iid_panel(s, [&](CounterRng& r) { return std::exp(s.lognormal_mu + s.lognormal_s * r.normal()); });
      break;
    case SynthKind::PowerlawWishart:
      out.data = detail::iid_panel(s, [&](CounterRng& r) { return r.two_sided_pareto(s.powerlaw_exponent); });
      break;
    case SynthKind::Goe: {
      out.data.resize(s.N, s.N);
      parallel_for(static_cast<std::size_t>(s.N), [&](std::size_t i) {
        CounterRng rng(s.seed, i);
        const auto r = static_cast<Eigen::Index>(i);
        out.data(r, r) = std::numbers::sqrt2 * rng.normal();
        for (Eigen::Index j = r + 1; j < s.N; ++j) out.data(r, j) = rng.normal();
      });
      for (Eigen::Index i = 0; i < s.N; ++i)
        for (Eigen::Index j = i + 1; j < s.N; ++j) out.data(j, i) = out.data(i, j);
      break;
    }
    case SynthKind::OneFactorPanel: {
      CounterRng frng(s.seed, detail::kFactorStream);
      out.factor.resize(static_cast<std::size_t>(s.T));
      for (auto& f : out.factor) f = frng.normal();
      if (!s.loadings.empty()) {
        out.loadings = s.loadings;
      } else {
        CounterRng lrng(s.seed, detail::kFactorStream + 1);
        out.loadings.resize(static_cast<std::size_t>(s.N));
        for (auto& b : out.loadings) b = s.loading_scale * (1.0 + s.loading_spread * (lrng.uniform() - 0.5));
      }
      out.data.resize(s.N, s.T);
      parallel_for(static_cast<std::size_t>(s.N), [&](std::size_t i) {
        CounterRng rng(s.seed, i);
        for (int t = 0; t < s.T; ++t)
          out.data(static_cast<Eigen::Index>(i), t) = out.loadings[i] * out.factor[static_cast<std::size_t>(t)] + rng.normal();
      });
      break;
    }
    case SynthKind::PoissonSpectrum: {
      // Unit mean density on (0, N).
      CounterRng rng(s.seed, 0);
      out.spectrum.resize(static_cast<std::size_t>(s.N));
      for (auto& x : out.spectrum) x = s.N * rng.uniform();
      std::sort(out.spectrum.begin(), out.spectrum.end());
      break;
    }
    case SynthKind::PicketFence:
      out.spectrum.resize(static_cast<std::size_t>(s.N));
      for (int i = 0; i < s.N; ++i) out.spectrum[static_cast<std::size_t>(i)] = i + 1.0;
      break;
    case SynthKind::MarketPanel:
      throw UsageError("invalid_synth_spec", "market_panel produces prices; use generate_market");
  }
  return out;
}

/// Price panel with a market factor, industry factors and GARCH volatility
/// (a common market volatility process times per-asset GARCH processes).
/// Asset i belongs to group i mod g.
inline SynthMarket generate_market(const SynthSpec& s) {
  SynthSpec spec = s;
  spec.kind = SynthKind::MarketPanel;
  detail::check_spec(spec);
  const int n = s.N, T = s.T, g = s.industry_groups;
  constexpr int burn = 500;

  auto garch_path = [&](const GarchParams& p, CounterRng& rng, std::vector<double>& shocks) {
    std::vector<double> var(static_cast<std::size_t>(T));
    double s2 = p.unconditional_variance();
    double prev = 0.0;
    for (int t = -burn; t < T; ++t) {
      if (t > -burn) s2 = p.alpha0 + p.alpha1 * prev * prev + p.beta1 * s2;
      const double z = rng.normal();
      prev = std::sqrt(s2) * z;
      if (t >= 0) {
        var[static_cast<std::size_t>(t)] = s2;
        shocks[static_cast<std::size_t>(t)] = z;
      }
    }
    return var;
  };

  // Market volatility multiplier with unit mean variance.
  CounterRng mrng(s.seed, detail::kFactorStream);
  std::vector<double> market_shock(static_cast<std::size_t>(T));
  std::vector<double> market_var = garch_path(s.market_garch, mrng, market_shock);
  const double mv = s.market_garch.unconditional_variance();
  for (auto& v : market_var) v /= mv;

  std::vector<std::vector<double>> industry(static_cast<std::size_t>(g), std::vector<double>(static_cast<std::size_t>(T)));
  for (int a = 0; a < g; ++a) {
    CounterRng irng(s.seed, detail::kFactorStream + 1 + static_cast<std::uint64_t>(a));
    for (auto& x : industry[static_cast<std::size_t>(a)]) x = irng.normal();
  }
  const double scale = std::sqrt(1.0 + s.market_loading * s.market_loading + s.industry_loading * s.industry_loading);

  SynthMarket out;
  out.prices.prices.resize(n, T + 1);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    CounterRng rng(s.seed, i);
    std::vector<double> own(static_cast<std::size_t>(T));
    const std::vector<double> var = garch_path(s.asset_garch, rng, own);
    const auto& ind = industry[i % static_cast<std::size_t>(g)];
    double logp = std::log(20.0 + 80.0 * rng.uniform());
    const auto r = static_cast<Eigen::Index>(i);
    out.prices.prices(r, 0) = std::exp(logp);
    for (int t = 0; t < T; ++t) {
      const auto k = static_cast<std::size_t>(t);
      const double eps = (s.market_loading * market_shock[k] + s.industry_loading * ind[k] + own[k]) / scale;
      logp += std::sqrt(var[k] * market_var[k]) * eps;
      out.prices.prices(r, t + 1) = std::exp(logp);
    }
  });

  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "S%04d", i + 1);
    out.prices.assets.emplace_back(buf);
    const int a = i % g;
    std::snprintf(buf, sizeof buf, "%04d", 1010 + 10 * a);
    out.codes.emplace_back(buf);
    std::snprintf(buf, sizeof buf, "Group %02d", a + 1);
    out.names.emplace_back(buf);
  }
  for (int t = 0; t <= T; ++t) {
    std::snprintf(buf, sizeof buf, "d%05d", t);
    out.prices.dates.emplace_back(buf);
  }
  out.industry = make_industry_map(out.codes, out.names);
  return out;
}

}  // namespace rmtvol
