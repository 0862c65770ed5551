#include <doctest.h>

#include <cmath>
#include <vector>

#include "blockjm/diagnostics.hpp"
#include "blockjm/engine.hpp"
#include "blockjm/rng.hpp"

using namespace blockjm;

namespace {

ChainDraws iid_normal(std::size_t chains, std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  ChainDraws x(chains, std::vector<double>(n));
  for (auto& ch : x) {
    for (double& v : ch) v = standard_normal(rng);
  }
  return x;
}

ChainDraws ar1(std::size_t chains, std::size_t n, double phi, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  ChainDraws x(chains, std::vector<double>(n));
  const double innov = std::sqrt(1.0 - phi * phi);
  for (auto& ch : x) {
    double v = standard_normal(rng);
    for (double& o : ch) {
      o = v;
      v = phi * v + innov * standard_normal(rng);
    }
  }
  return x;
}

}  // namespace

TEST_CASE("split R-hat on iid and on shifted chains") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    ChainDraws x = iid_normal(4, 1000, seed);
    double r = split_rhat(x);
    // Split halves of 500 draws: sqrt((n - 1) / n) is the smallest value possible.
    CHECK(r >= 1.0 - 1.0 / 500.0);
    CHECK(r <= 1.02);
    x[2] = iid_normal(1, 1000, seed + 100)[0];
    for (double& v : x[2]) v += 10.0;
    CHECK(split_rhat(x) > 1.5);
  }
  // A trend within a single chain is caught by splitting it.
  ChainDraws trend(1, std::vector<double>(1000));
  for (std::size_t i = 0; i < 1000; ++i) trend[0][i] = static_cast<double>(i) / 100.0;
  CHECK(split_rhat(trend) > 1.5);
}

TEST_CASE("effective sample size") {
  ChainDraws x = iid_normal(4, 1000, 21);
  CHECK(ess_bulk(x) == doctest::Approx(4000.0).epsilon(0.2));
  CHECK(ess_basic(x) == doctest::Approx(4000.0).epsilon(0.2));
  // AR(1): ESS = N (1 - phi) / (1 + phi).
  for (double phi : {0.5, 0.8}) {
    ChainDraws y = ar1(4, 5000, phi, 22);
    double expected = 20000.0 * (1.0 - phi) / (1.0 + phi);
    CHECK(ess_basic(y) == doctest::Approx(expected).epsilon(0.2));
    CHECK(ess_bulk(y) == doctest::Approx(expected).epsilon(0.2));
  }
  // Rank normalization leaves monotone transforms alone.
  ChainDraws z = ar1(2, 2000, 0.5, 23);
  ChainDraws ez = z;
  for (auto& ch : ez) {
    for (double& v : ch) v = std::exp(3.0 * v);
  }
  CHECK(ess_bulk(ez) == doctest::Approx(ess_bulk(z)).epsilon(1e-12));
  CHECK(split_rhat(ez) == doctest::Approx(split_rhat(z)).epsilon(1e-12));
}

TEST_CASE("Monte Carlo standard error of the mean") {
  ChainDraws x = iid_normal(2, 5000, 31);
  CHECK(mcse_mean(x) == doctest::Approx(1.0 / std::sqrt(10000.0)).epsilon(0.15));
  ChainDraws y = ar1(2, 5000, 0.5, 32);
  CHECK(mcse_mean(y) == doctest::Approx(std::sqrt(3.0 / 10000.0)).epsilon(0.2));
}

TEST_CASE("per-parameter diagnostics over chain outputs") {
  Rng rng = make_rng(41);
  std::vector<ChainOutput> chains(2);
  for (std::size_t c = 0; c < 2; ++c) {
    chains[c].dim = 2;
    for (int s = 0; s < 800; ++s) {
      chains[c].draws.push_back(standard_normal(rng));
      chains[c].draws.push_back(standard_normal(rng) + (c == 1 ? 5.0 : 0.0));
    }
  }
  auto col = column(chains, 1);
  REQUIRE(col.size() == 2);
  CHECK(col[1][0] == chains[1].draws[1]);
  auto diag = diagnostics(chains);
  REQUIRE(diag.size() == 2);
  CHECK_FALSE(diag[0].flagged);
  CHECK(diag[1].flagged);
  CHECK(diag[1].rhat > 1.01);
  CHECK(diag[0].ess_bulk > 1000.0);
}

TEST_CASE("type-7 quantiles") {
  std::vector<double> x{10.0, 1.0, 5.0, 2.0, 4.0, 3.0};
  // Sorted 1 2 3 4 5 10; h = (n - 1) p.
  CHECK(quantile_type7(x, 0.0) == 1.0);
  CHECK(quantile_type7(x, 1.0) == 10.0);
  CHECK(quantile_type7(x, 0.3) == doctest::Approx(2.5));
  CHECK(quantile_type7(x, 0.5) == doctest::Approx(3.5));
  CHECK(quantile_type7(x, 0.9) == doctest::Approx(7.5));
  CHECK(quantile_type7(x, 0.025) == doctest::Approx(1.125));
  CHECK(quantile_type7({7.0}, 0.975) == 7.0);
}
