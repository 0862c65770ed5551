#include "blockjm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

namespace blockjm {

namespace {

double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
  double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

ChainDraws split(const ChainDraws& chains) {
  ChainDraws out;
  for (const auto& c : chains) {
    std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<long>(half));
    out.emplace_back(c.end() - static_cast<long>(half), c.end());
  }
  return out;
}

// Normal scores of pooled average ranks: Phi^-1((r - 3/8) / (S + 1/4)).
ChainDraws rank_normalize(const ChainDraws& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (std::size_t i = 0; i < chains[c].size(); ++i) pooled.push_back({chains[c][i], pooled.size()});
  }
  std::vector<double> ranks(pooled.size());
  std::vector<std::pair<double, std::size_t>> sorted = pooled;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1].first == sorted[i].first) ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[sorted[k].second] = avg;
    i = j + 1;
  }
  const boost::math::normal_distribution<double> normal;
  const double S = static_cast<double>(pooled.size());
  ChainDraws out;
  std::size_t idx = 0;
  for (const auto& c : chains) {
    std::vector<double> z(c.size());
    for (auto& v : z) v = boost::math::quantile(normal, (ranks[idx++] - 0.375) / (S + 0.25));
    out.push_back(std::move(z));
  }
  return out;
}

double rhat_plain(const ChainDraws& chains) {
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean(c));
    vars.push_back(sample_variance(c));
  }
  double W = mean(vars);
  double B = n * sample_variance(means);
  if (W <= 0.0) return B > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

double ess_plain(const ChainDraws& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  if (n < 4) return static_cast<double>(m * n);

  std::vector<double> chain_mean(m), chain_var(m);
  for (std::size_t c = 0; c < m; ++c) {
    chain_mean[c] = mean(chains[c]);
    double s = 0.0;
    for (double v : chains[c]) s += (v - chain_mean[c]) * (v - chain_mean[c]);
    chain_var[c] = s / static_cast<double>(n - 1);
  }
  auto acov_mean = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      const auto& x = chains[c];
      for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - chain_mean[c]) * (x[i + lag] - chain_mean[c]);
      total += s / static_cast<double>(n);
    }
    return total / static_cast<double>(m);
  };

  const double nd = static_cast<double>(n);
  double mean_var = mean(chain_var);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) var_plus += sample_variance(chain_mean);
  if (!(var_plus > 0.0)) return static_cast<double>(m * n);

  std::vector<double> rho(n, 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mean_var - acov_mean(1)) / var_plus;
  rho[1] = rho_odd;
  std::size_t t = 1;
  while (t < n - 5 && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - acov_mean(t + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - acov_mean(t + 2)) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[t + 1] = rho_even;
      rho[t + 2] = rho_odd;
    }
    t += 2;
  }
  std::size_t max_t = t;
  if (rho_even > 0.0) rho[max_t + 1] = rho_even;

  for (std::size_t s = 1; s + 3 <= max_t; s += 2) {
    if (rho[s + 1] + rho[s + 2] > rho[s - 1] + rho[s]) {
      rho[s + 1] = 0.5 * (rho[s - 1] + rho[s]);
      rho[s + 2] = rho[s + 1];
    }
  }
  double total = static_cast<double>(m * n);
  double tau = -1.0 + 2.0 * std::accumulate(rho.begin(), rho.begin() + static_cast<long>(max_t + 1), 0.0) +
               rho[max_t + 1];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

}  // namespace

double split_rhat(const ChainDraws& chains) { return rhat_plain(rank_normalize(split(chains))); }

double ess_basic(const ChainDraws& chains) { return ess_plain(chains); }

double ess_bulk(const ChainDraws& chains) { return ess_plain(rank_normalize(split(chains))); }

double mcse_mean(const ChainDraws& chains) {
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  double sd = std::sqrt(sample_variance(pooled));
  return sd / std::sqrt(ess_plain(split(chains)));
}

ChainDraws column(const std::vector<ChainOutput>& chains, std::size_t param) {
  ChainDraws out;
  for (const auto& c : chains) {
    std::vector<double> x(c.num_draws());
    for (std::size_t s = 0; s < x.size(); ++s) x[s] = c.draws[s * c.dim + param];
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<ParamDiagnostics> diagnostics(const std::vector<ChainOutput>& chains) {
  std::vector<ParamDiagnostics> out;
  if (chains.empty()) return out;
  for (std::size_t p = 0; p < chains.front().dim; ++p) {
    ChainDraws col = column(chains, p);
    ParamDiagnostics d;
    d.rhat = split_rhat(col);
    d.ess_bulk = ess_bulk(col);
    d.mcse_mean = mcse_mean(col);
    d.flagged = d.rhat > 1.01;
    out.push_back(d);
  }
  return out;
}

}  // namespace blockjm
