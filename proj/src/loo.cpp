#include "blockjm/loo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "blockjm/error.hpp"

namespace blockjm {

namespace {

double log_sum_exp(std::span<const double> x) {
  double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

double sd(std::span<const double> x) {
  double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return x.size() > 1 ? std::sqrt(s / static_cast<double>(x.size() - 1)) : 0.0;
}

}  // namespace

std::string to_string(LooDefinition d) {
  switch (d) {
    case LooDefinition::LongitudinalOnly: return "longitudinal";
    case LooDefinition::EventOnly: return "event";
    case LooDefinition::Joint: return "joint";
  }
  return "joint";
}

LooDefinition loo_definition_from_string(const std::string& s) {
  if (s == "longitudinal" || s == "i") return LooDefinition::LongitudinalOnly;
  if (s == "event" || s == "ii") return LooDefinition::EventOnly;
  if (s == "joint" || s == "iii") return LooDefinition::Joint;
  throw Error(ErrorCode::ConfigInvalid, "unknown LOO definition '" + s + "'");
}

std::vector<double> PointwiseLogLik::column(std::size_t i) const {
  std::vector<double> out(draws);
  for (std::size_t s = 0; s < draws; ++s) out[s] = at(s, i);
  return out;
}

GpdFit gpd_fit_tail(std::span<const double> exceedances) {
  std::vector<double> x(exceedances.begin(), exceedances.end());
  if (x.size() < 5) throw Error(ErrorCode::DegenerateTail, "tail has fewer than 5 values");
  std::sort(x.begin(), x.end());
  if (x.front() == x.back()) throw Error(ErrorCode::DegenerateTail, "all tail values are equal");

  const std::size_t N = x.size();
  const double prior = 3.0;
  const std::size_t M = 30 + static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(N))));
  const double xstar = x[static_cast<std::size_t>(std::floor(N / 4.0 + 0.5)) - 1];

  std::vector<double> theta(M), l_theta(M);
  for (std::size_t j = 0; j < M; ++j) {
    theta[j] = 1.0 / x[N - 1] + (1.0 - std::sqrt(static_cast<double>(M) / (j + 0.5))) / prior / xstar;
    double a = -theta[j];
    double kk = 0.0;
    for (double v : x) kk += std::log1p(a * v);
    kk /= static_cast<double>(N);
    l_theta[j] = static_cast<double>(N) * (std::log(a / kk) - kk - 1.0);
  }
  double lse = log_sum_exp(l_theta);
  double theta_hat = 0.0;
  for (std::size_t j = 0; j < M; ++j) theta_hat += theta[j] * std::exp(l_theta[j] - lse);

  double k = 0.0;
  for (double v : x) k += std::log1p(-theta_hat * v);
  k /= static_cast<double>(N);
  double sigma = -k / theta_hat;
  const double a = 10.0;
  k = k * static_cast<double>(N) / (N + a) + a * 0.5 / (N + a);
  if (std::isnan(k)) k = std::numeric_limits<double>::infinity();
  return {k, sigma};
}

double gpd_quantile(double p, double k, double sigma) {
  if (k == 0.0) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

PsisWeights psis_smooth(std::span<const double> log_ratios) {
  const std::size_t S = log_ratios.size();
  PsisWeights out;
  std::vector<double> lw(log_ratios.begin(), log_ratios.end());
  double max_lw = *std::max_element(lw.begin(), lw.end());
  for (auto& v : lw) v -= max_lw;

  const auto M = static_cast<std::size_t>(
      std::ceil(std::min(0.2 * static_cast<double>(S), 3.0 * std::sqrt(static_cast<double>(S)))));
  std::vector<std::size_t> order(S);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lw[a] < lw[b]; });

  if (M < 5 || M >= S) {
    out.degenerate = true;
    out.pareto_k = std::numeric_limits<double>::infinity();
  } else {
    const double cutoff = lw[order[S - M - 1]];
    const double exp_cutoff = std::exp(cutoff);
    std::vector<double> tail(M);
    for (std::size_t j = 0; j < M; ++j) tail[j] = std::exp(lw[order[S - M + j]]) - exp_cutoff;
    try {
      GpdFit fit = gpd_fit_tail(tail);
      out.pareto_k = fit.k;
      if (std::isfinite(fit.k)) {
        for (std::size_t j = 0; j < M; ++j) {
          double p = (static_cast<double>(j) + 0.5) / static_cast<double>(M);
          lw[order[S - M + j]] = std::log(gpd_quantile(p, fit.k, fit.sigma) + exp_cutoff);
        }
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateTail) throw;
      out.degenerate = true;
      out.pareto_k = 0.0;
    }
  }
  for (auto& v : lw) v = std::min(v, 0.0);
  double lse = log_sum_exp(lw);
  for (auto& v : lw) v -= lse;
  out.log_weights = std::move(lw);
  return out;
}

std::size_t LooResult::num_high_k() const {
  return static_cast<std::size_t>(
      std::count_if(pareto_k.begin(), pareto_k.end(), [](double k) { return k > kWarnThreshold; }));
}

LooResult psis_loo(const PointwiseLogLik& pw) {
  if (pw.draws < 100) throw Error(ErrorCode::ConfigInvalid, "PSIS-LOO needs at least 100 draws");
  if (pw.values.size() != pw.draws * pw.subjects) throw Error(ErrorCode::ConfigInvalid, "pointwise matrix shape");
  for (double v : pw.values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "pointwise log-likelihood is not finite");
  }
  LooResult r;
  r.definition = pw.definition;
  r.subject_ids = pw.subject_ids;
  const double log_S = std::log(static_cast<double>(pw.draws));
  for (std::size_t i = 0; i < pw.subjects; ++i) {
    std::vector<double> ll = pw.column(i);
    std::vector<double> ratios(ll.size());
    for (std::size_t s = 0; s < ll.size(); ++s) ratios[s] = -ll[s];
    PsisWeights w = psis_smooth(ratios);
    std::vector<double> terms(ll.size());
    for (std::size_t s = 0; s < ll.size(); ++s) terms[s] = w.log_weights[s] + ll[s];
    r.pointwise.push_back(log_sum_exp(terms));
    r.pareto_k.push_back(w.pareto_k);
    r.degenerate.push_back(w.degenerate);
    r.lpd += log_sum_exp(ll) - log_S;
  }
  r.elpd_loo = std::accumulate(r.pointwise.begin(), r.pointwise.end(), 0.0);
  r.se = std::sqrt(static_cast<double>(pw.subjects)) * sd(r.pointwise);
  return r;
}

LooComparison compare_loo(const LooResult& a, const LooResult& b) {
  if (a.pointwise.size() != b.pointwise.size() || a.subject_ids != b.subject_ids || a.definition != b.definition) {
    throw Error(ErrorCode::SubjectMismatch, "LOO results cover different subjects or definitions");
  }
  std::vector<double> diff(a.pointwise.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a.pointwise[i] - b.pointwise[i];
  return {a.elpd_loo - b.elpd_loo, std::sqrt(static_cast<double>(diff.size())) * sd(diff)};
}

}  // namespace blockjm
