#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blockjm/cohort.hpp"
#include "blockjm/diagnostics.hpp"
#include "blockjm/graph.hpp"
#include "blockjm/loo.hpp"
#include "blockjm/nuts.hpp"
#include "blockjm/posterior.hpp"
#include "blockjm/rng.hpp"
#include "blockjm/submodels.hpp"

namespace testsupport {

using namespace blockjm;

// 0 -> {1, 2}, 1 -> {3, 4}, 2 -> {5, 6}.
inline TransitionDiagram model1_diagram() {
  return TransitionDiagram::build({0, 1, 2, 3, 4, 5, 6}, {{0, 1}, {0, 2}, {1, 3}, {1, 4}, {2, 5}, {2, 6}});
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// A random path through the diagram with its measurements.
inline Subject random_subject(const TransitionDiagram& d, Rng& rng, const std::string& id, std::size_t ncov = 1) {
  Subject s;
  s.id = id;
  for (std::size_t c = 0; c < ncov; ++c) s.covariates.push_back(uniform(rng, -1.5, 1.5));
  double C = uniform(rng, 4.0, 20.0);
  int state = 0;
  double t = 0.0;
  s.events.visited_states = {0};
  while (!d.is_absorbing(state)) {
    if (uniform01(rng) < 0.2) break;  // censored here
    double next = t + uniform(rng, 0.3, 6.0);
    if (next >= C) break;
    auto targets = d.targets(state);
    state = targets[static_cast<std::size_t>(uniform01(rng) * targets.size())];
    s.events.visited_states.push_back(state);
    s.events.transition_times.push_back(next);
    t = next;
  }
  s.events.censoring_time = std::max(C, t + 0.5);
  for (double v = 0.0; v <= s.events.censoring_time; v += uniform(rng, 0.4, 1.8)) {
    s.longitudinal.push_back({v, uniform(rng, 0.0, 8.0)});
  }
  return s;
}

inline Cohort random_cohort(const TransitionDiagram& d, std::size_t n, std::uint64_t seed, std::size_t ncov = 1) {
  Rng rng = make_rng(seed);
  Cohort c;
  for (std::size_t k = 0; k < ncov; ++k) c.covariate_names.push_back(k == 0 ? "age" : "x" + std::to_string(k));
  for (std::size_t i = 0; i < n; ++i) c.subjects.push_back(random_subject(d, rng, std::to_string(i + 1), ncov));
  return c;
}

inline TransitionParams random_transition_params(Rng& rng, AssocForm form, std::size_t ncov = 1) {
  TransitionParams tp;
  tp.shape = uniform(rng, 0.6, 2.0);
  tp.scale = std::exp(uniform(rng, -5.0, -2.0));
  for (std::size_t c = 0; c < ncov; ++c) tp.gamma.push_back(uniform(rng, -0.5, 0.5));
  tp.alpha = {uniform(rng, -0.4, 0.4), uniform(rng, -0.1, 0.1)};
  tp.form = form;
  return tp;
}

inline LongitudinalParams random_longitudinal(Rng& rng) {
  return {uniform(rng, 0.5, 2.0), uniform(rng, -0.2, 0.3), uniform(rng, 0.05, 0.5), uniform(rng, 0.2, 0.8),
          uniform(rng, 0.05, 0.4), uniform(rng, -0.6, 0.6)};
}

// Composite Simpson rule with `panels` (even) subintervals.
inline double composite_simpson(const std::function<double(double)>& f, double a, double b, int panels) {
  double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int k = 1; k < panels; ++k) s += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
  return s * h / 3.0;
}

// P(sqrt(n) D > x) under H0, with the finite-sample correction of Stephens.
inline double ks_pvalue(double D, std::size_t n) {
  double sn = std::sqrt(static_cast<double>(n));
  double x = D * (sn + 0.12 + 0.11 / sn);
  if (x < 0.2) return 1.0;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * x * x);
    p += term;
    if (std::abs(term) < 1e-16) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

// One-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  double n = static_cast<double>(x.size()), D = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double F = cdf(x[i]);
    D = std::max({D, (i + 1) / n - F, F - i / n});
  }
  return D;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Central differences of f at x.
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double xi = x[i];
    double hi = h * std::max(1.0, std::abs(xi));
    x[i] = xi + hi;
    double fp = f(x);
    x[i] = xi - hi;
    double fm = f(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * hi);
  }
  return g;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

// log N(x; mu, Sigma) up to a constant, with Sigma^{-1} given densely.
struct Gaussian {
  std::vector<double> mu;
  std::vector<double> prec;  // row-major
  std::size_t dim() const { return mu.size(); }
  double operator()(std::span<const double> q, std::span<double> g) const {
    const std::size_t n = dim();
    double lp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += prec[i * n + j] * (q[j] - mu[j]);
      g[i] = -s;
      lp -= 0.5 * (q[i] - mu[i]) * s;
    }
    return lp;
  }
};

// Inverse of a small SPD matrix by Gauss-Jordan.
inline std::vector<double> invert(std::vector<double> a, std::size_t n) {
  std::vector<double> inv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    double p = a[c * n + c];
    for (std::size_t k = 0; k < n; ++k) {
      a[c * n + k] /= p;
      inv[c * n + k] /= p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      double m = a[r * n + c];
      for (std::size_t k = 0; k < n; ++k) {
        a[r * n + k] -= m * a[c * n + k];
        inv[r * n + k] -= m * inv[c * n + k];
      }
    }
  }
  return inv;
}

struct MomentCheck {
  int failures = 0;
  int checks = 0;
};

// Means and selected covariance entries against their true values, each
// within 3 Monte Carlo standard errors.
inline MomentCheck check_moments(const std::vector<ChainOutput>& out, const std::vector<double>& mu,
                          const std::vector<double>& cov, bool all_pairs) {
  const std::size_t n = mu.size();
  MomentCheck mc;
  for (std::size_t i = 0; i < n; ++i) {
    ChainDraws x = column(out, i);
    double m = 0.0, cnt = 0.0;
    for (const auto& ch : x) {
      for (double v : ch) m += v, cnt += 1.0;
    }
    m /= cnt;
    ++mc.checks;
    if (std::abs(m - mu[i]) > 3.0 * mcse_mean(x)) ++mc.failures;
    for (std::size_t j = i; j < n; ++j) {
      if (!all_pairs && j > i + 1) break;
      ChainDraws prod = x;
      ChainDraws y = column(out, j);
      double pm = 0.0;
      for (std::size_t c = 0; c < prod.size(); ++c) {
        for (std::size_t s = 0; s < prod[c].size(); ++s) {
          prod[c][s] = (x[c][s] - mu[i]) * (y[c][s] - mu[j]);
          pm += prod[c][s];
        }
      }
      pm /= cnt;
      ++mc.checks;
      if (std::abs(pm - cov[i * n + j]) > 3.0 * mcse_mean(prod)) ++mc.failures;
    }
  }
  return mc;
}

inline int total_divergences(const std::vector<ChainOutput>& out) {
  int d = 0;
  for (const auto& c : out) d += c.divergences;
  return d;
}

inline double normal_logpdf(double x, double mean, double var) {
  return -0.5 * std::log(2.0 * M_PI * var) - 0.5 * (x - mean) * (x - mean) / var;
}

// y_i ~ N(theta, 1), theta ~ N(0, tau2).
struct Conjugate {
  std::vector<double> y;
  double tau2 = 100.0;

  void posterior(double& mean, double& var, std::size_t skip = static_cast<std::size_t>(-1)) const {
    double prec = 1.0 / tau2, sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (i == skip) continue;
      prec += 1.0;
      sum += y[i];
    }
    var = 1.0 / prec;
    mean = sum * var;
  }
};

inline PointwiseLogLik conjugate_pointwise(const Conjugate& model, std::size_t S, std::uint64_t seed) {
  double m, v;
  model.posterior(m, v);
  Rng rng = make_rng(seed);
  PointwiseLogLik pw;
  pw.draws = S;
  pw.subjects = model.y.size();
  for (std::size_t s = 0; s < S; ++s) {
    double theta = m + std::sqrt(v) * standard_normal(rng);
    for (double yi : model.y) pw.values.push_back(normal_logpdf(yi, theta, 1.0));
  }
  for (std::size_t i = 0; i < pw.subjects; ++i) pw.subject_ids.push_back(std::to_string(i));
  return pw;
}

inline bool starts_with(const std::string& s, const char* p) { return s.rfind(p, 0) == 0; }

// A point on the unconstrained scale at magnitudes met in practice.
inline std::vector<double> random_point(const Target& t, Rng& rng) {
  const auto& names = t.parameter_names();
  std::vector<double> u(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string& n = names[i];
    double& x = u[i];
    if (n == "beta1") x = uniform(rng, 0.0, 3.0);
    else if (n == "beta2") x = uniform(rng, -0.3, 0.5);
    else if (n == "log_sigma_e2") x = uniform(rng, -3.0, 0.0);
    else if (n == "log_sigma1_sq") x = uniform(rng, -2.0, 0.0);
    else if (n == "log_sigma2_sq") x = uniform(rng, -3.5, -1.0);
    else if (n == "atanh_rho") x = uniform(rng, -0.8, 0.8);
    else if (starts_with(n, "log_shape")) x = uniform(rng, -0.5, 0.8);
    else if (starts_with(n, "log_scale")) x = uniform(rng, -7.0, -2.0);
    else if (starts_with(n, "gamma")) x = uniform(rng, -1.0, 1.0);
    else if (starts_with(n, "alpha2")) x = uniform(rng, -0.15, 0.15);
    else if (starts_with(n, "alpha")) x = uniform(rng, -1.0, 1.0);
    else if (starts_with(n, "icpt")) x = u[0] + uniform(rng, -1.0, 1.0);
    else if (starts_with(n, "slope")) x = u[1] + uniform(rng, -0.3, 0.3);
    else x = uniform(rng, -2.0, 2.0);  // z1, z2
  }
  return u;
}

// Worst |g - fd| / max(1, |fd|) over coordinates, h = 1e-5 max(1, |u|).
inline double gradient_error(const Target& t, std::vector<double> u) {
  std::vector<double> g(u.size());
  t.log_density_gradient(u, g);
  double worst = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    double h = 1e-5 * std::max(1.0, std::abs(u[j]));
    double x = u[j];
    u[j] = x + h;
    double fp = t.log_density(u);
    u[j] = x - h;
    double fm = t.log_density(u);
    u[j] = x;
    double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(g[j] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("blockjm-test-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void drop_timing(nlohmann::json& j) {
  if (j.is_object()) {
    j.erase("wall_time_seconds");
    for (auto& [_, v] : j.items()) drop_timing(v);
  } else if (j.is_array()) {
    for (auto& v : j) drop_timing(v);
  }
}

inline std::vector<std::filesystem::path> files_under(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(std::filesystem::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// CSV text with the last field of every line removed.
inline std::string without_last_column(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
  return out;
}

// Artifacts that differ between two output trees, ignoring timing fields.
// A file present on one side only counts as differing.
inline std::vector<std::string> differing_files(const std::filesystem::path& a, const std::filesystem::path& b) {
  auto fa = files_under(a);
  auto fb = files_under(b);
  std::vector<std::string> out;
  for (const auto& f : fa) {
    if (!std::binary_search(fb.begin(), fb.end(), f)) {
      out.push_back(f.string());
    } else if (f.filename() == "manifest.json") {
      nlohmann::json ja = nlohmann::json::parse(slurp(a / f)), jb = nlohmann::json::parse(slurp(b / f));
      drop_timing(ja);
      drop_timing(jb);
      if (ja != jb) out.push_back(f.string());
    } else if (f.filename() == "timing.csv") {
      if (without_last_column(slurp(a / f)) != without_last_column(slurp(b / f))) out.push_back(f.string());
    } else if (slurp(a / f) != slurp(b / f)) {
      out.push_back(f.string());
    }
  }
  for (const auto& f : fb) {
    if (!std::binary_search(fa.begin(), fa.end(), f)) out.push_back(f.string());
  }
  return out;
}

}  // namespace testsupport
