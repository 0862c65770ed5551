#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "blockjm/diagnostics.hpp"
#include "blockjm/error.hpp"
#include "blockjm/nuts.hpp"
#include "blockjm/rng.hpp"
#include "support.hpp"

using namespace blockjm;

using testsupport::check_moments;
using testsupport::Gaussian;
using testsupport::invert;
using testsupport::total_divergences;

TEST_CASE("standard normal in five dimensions") {
  Gaussian g{std::vector<double>(5, 0.0), {}};
  g.prec.assign(25, 0.0);
  for (int i = 0; i < 5; ++i) g.prec[i * 5 + i] = 1.0;
  NutsConfig cfg;
  cfg.seed = 11;
  auto out = sample(std::cref(g), 5, cfg);
  REQUIRE(out.size() == 2);
  CHECK(out[0].num_draws() == 1000);
  CHECK(total_divergences(out) == 0);
  for (std::size_t i = 0; i < 5; ++i) {
    ChainDraws x = column(out, i);
    double m = 0.0, m2 = 0.0;
    for (const auto& ch : x) {
      for (double v : ch) m += v, m2 += v * v;
    }
    m /= 2000.0;
    double var = m2 / 2000.0 - m * m;
    CHECK(std::abs(m) < 3.0 * mcse_mean(x));
    CHECK(std::abs(var - 1.0) < 0.1);
  }
}

TEST_CASE("correlated two-dimensional Gaussian") {
  const double s1 = 1.0, s2 = 5.0, rho = 0.7;
  std::vector<double> cov{s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2};
  Gaussian g{{1.0, -3.0}, invert(cov, 2)};
  NutsConfig cfg;
  cfg.seed = 12;
  auto out = sample(std::cref(g), 2, cfg);
  CHECK(total_divergences(out) == 0);
  auto mc = check_moments(out, g.mu, cov, true);
  CHECK(mc.checks == 5);
  CHECK(mc.failures == 0);
}

TEST_CASE("correlated twenty-dimensional Gaussian") {
  const std::size_t n = 20;
  std::vector<double> sd(n), mu(n), cov(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    sd[i] = 0.5 + 0.15 * static_cast<double>(i);
    mu[i] = static_cast<double>(i % 5) - 2.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cov[i * n + j] = sd[i] * sd[j] * std::pow(0.6, std::abs(static_cast<double>(i) - static_cast<double>(j)));
    }
  }
  Gaussian g{mu, invert(cov, n)};
  NutsConfig cfg;
  cfg.seed = 13;
  auto out = sample(std::cref(g), n, cfg);
  CHECK(total_divergences(out) == 0);
  // Means, variances and neighbour covariances.
  auto mc = check_moments(out, mu, cov, false);
  CHECK(mc.checks == 59);
  CHECK(mc.failures == 0);
}

TEST_CASE("Kolmogorov-Smirnov on a one-dimensional normal") {
  auto f = [](std::span<const double> q, std::span<double> g) {
    g[0] = -q[0];
    return -0.5 * q[0] * q[0];
  };
  NutsConfig cfg;
  cfg.seed = 14;
  cfg.draws = 2000;
  auto out = sample(f, 1, cfg);
  CHECK(total_divergences(out) == 0);
  ChainDraws x = column(out, 0);
  std::vector<double> all;
  for (const auto& ch : x) all.insert(all.end(), ch.begin(), ch.end());
  double D = testsupport::ks_statistic(all, [](double v) { return testsupport::normal_cdf(v); });
  double ess = ess_bulk(x);
  double p = testsupport::ks_pvalue(D, static_cast<std::size_t>(std::min<double>(ess, all.size())));
  INFO("D " << D << " ess " << ess << " p " << p);
  CHECK(p > 0.01);
}

TEST_CASE("sampling is deterministic and independent of chain scheduling") {
  Gaussian g{{0.5, -0.5, 2.0}, {2.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 0.5}};
  NutsConfig cfg;
  cfg.seed = 99;
  cfg.chains = 3;
  cfg.warmup = 150;
  cfg.draws = 200;
  auto a = sample(std::cref(g), 3, cfg);
  auto b = sample(std::cref(g), 3, cfg);
  cfg.parallel_chains = false;
  auto c = sample(std::cref(g), 3, cfg);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(a[k].draws == b[k].draws);
    CHECK(a[k].draws == c[k].draws);
    CHECK(a[k].step_size == c[k].step_size);
    CHECK(a[k].inv_metric == c[k].inv_metric);
  }
  CHECK(a[0].draws != a[1].draws);
  cfg.seed = 100;
  auto d = sample(std::cref(g), 3, cfg);
  CHECK(a[0].draws != d[0].draws);
  // A single chain reproduces its slot in the multi-chain run.
  auto one = sample_chain(std::cref(g), 3, cfg, 1);
  CHECK(one.draws == d[1].draws);
}

TEST_CASE("chain output bookkeeping") {
  Gaussian g{{0.0, 0.0}, {1.0, 0.0, 0.0, 4.0}};
  NutsConfig cfg;
  cfg.seed = 5;
  cfg.warmup = 200;
  cfg.draws = 300;
  cfg.init = InitSpec::uniform();
  auto out = sample(std::cref(g), 2, cfg);
  for (const auto& ch : out) {
    CHECK(ch.num_draws() == 300);
    CHECK(ch.accept_stats.size() == 300);
    CHECK(ch.tree_depths.size() == 300);
    CHECK(ch.log_density.size() == 300);
    auto h = ch.tree_depth_histogram(cfg.max_tree_depth);
    int total = 0;
    for (int v : h) total += v;
    CHECK(total == 300);
    CHECK(ch.step_size > 0.0);
    for (double a : ch.accept_stats) CHECK((a >= 0.0 && a <= 1.0));
    for (double v : ch.draws) CHECK(std::isfinite(v));
    // The adapted metric tracks the marginal variances (1 and 1/4).
    CHECK(ch.inv_metric[0] == doctest::Approx(1.0).epsilon(0.35));
    CHECK(ch.inv_metric[1] == doctest::Approx(0.25).epsilon(0.35));
  }
}

TEST_CASE("leapfrog energy error is second order and the integrator is reversible") {
  // A non-Gaussian target: log p = -q1^4 / 4 - (q2 - q1^2)^2 / 2.
  LogDensityFn f = [](std::span<const double> q, std::span<double> g) {
    double r = q[1] - q[0] * q[0];
    g[0] = -q[0] * q[0] * q[0] + 2.0 * q[0] * r;
    g[1] = -r;
    return -0.25 * std::pow(q[0], 4) - 0.5 * r * r;
  };
  std::vector<double> inv_metric{1.0, 0.5};
  auto start = [&] {
    PhasePoint z;
    z.q = {0.7, 0.2};
    z.p = {0.4, -0.9};
    z.grad.resize(2);
    z.log_density = f(z.q, z.grad);
    return z;
  };
  std::vector<double> err;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    PhasePoint z = start();
    double h0 = hamiltonian(z, inv_metric);
    double worst = 0.0;
    const int steps = static_cast<int>(std::lround(1.0 / eps));
    for (int s = 0; s < steps; ++s) {
      leapfrog(f, z, eps, inv_metric);
      worst = std::max(worst, std::abs(hamiltonian(z, inv_metric) - h0));
    }
    err.push_back(worst);
  }
  for (std::size_t k = 0; k + 1 < err.size(); ++k) {
    double order = std::log10(err[k] / err[k + 1]);
    INFO("errors " << err[k] << " " << err[k + 1]);
    CHECK(order == doctest::Approx(2.0).epsilon(0.1));
  }

  PhasePoint z = start();
  for (int s = 0; s < 50; ++s) leapfrog(f, z, 0.05, inv_metric);
  for (double& p : z.p) p = -p;
  for (int s = 0; s < 50; ++s) leapfrog(f, z, 0.05, inv_metric);
  PhasePoint z0 = start();
  CHECK(z.q[0] == doctest::Approx(z0.q[0]).epsilon(1e-12));
  CHECK(z.q[1] == doctest::Approx(z0.q[1]).epsilon(1e-12));
  CHECK(-z.p[0] == doctest::Approx(z0.p[0]).epsilon(1e-12));
  CHECK(-z.p[1] == doctest::Approx(z0.p[1]).epsilon(1e-12));
}

TEST_CASE("sampler errors") {
  NutsConfig cfg;
  cfg.warmup = 50;
  cfg.draws = 50;
  cfg.init = InitSpec::uniform();
  LogDensityFn nowhere = [](std::span<const double>, std::span<double> g) {
    for (double& v : g) v = 0.0;
    return -std::numeric_limits<double>::infinity();
  };
  try {
    sample(nowhere, 2, cfg);
    FAIL("expected InitializationFailed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InitializationFailed);
  }

  // Finite only at the origin: every trajectory leaves it and diverges.
  cfg.init = InitSpec::zero();
  LogDensityFn spike = [](std::span<const double> q, std::span<double> g) {
    for (double& v : g) v = 0.0;
    for (double v : q) {
      if (v != 0.0) return -std::numeric_limits<double>::infinity();
    }
    return 0.0;
  };
  try {
    sample(spike, 2, cfg);
    FAIL("expected AllDivergent");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AllDivergent);
  }
}
