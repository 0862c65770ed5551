#include "blockjm/nuts.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include <tbb/parallel_for.h>

#include "blockjm/error.hpp"

namespace blockjm {

namespace {

constexpr double kMaxDeltaH = 1000.0;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double evaluate(const LogDensityFn& f, PhasePoint& z) {
  double lp;
  try {
    lp = f(z.q, z.grad);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NonFinite && e.code() != ErrorCode::NonFiniteIntensity) throw;
    lp = kNegInf;
  }
  if (std::isnan(lp)) lp = kNegInf;
  for (double g : z.grad) {
    if (!std::isfinite(g)) {
      lp = kNegInf;
      break;
    }
  }
  z.log_density = lp;
  return lp;
}

/// Step-size dual averaging.
struct DualAveraging {
  double mu = 0.0, s_bar = 0.0, x_bar = 0.0, delta = 0.8;
  double gamma = 0.05, kappa = 0.75, t0 = 10.0;
  int counter = 0;

  void restart(double eps) {
    mu = std::log(10.0 * eps);
    s_bar = x_bar = 0.0;
    counter = 0;
  }
  double learn(double accept_stat) {
    ++counter;
    accept_stat = std::min(1.0, accept_stat);
    double eta = 1.0 / (counter + t0);
    s_bar = (1.0 - eta) * s_bar + eta * (delta - accept_stat);
    double x = mu - s_bar * std::sqrt(static_cast<double>(counter)) / gamma;
    double x_eta = std::pow(static_cast<double>(counter), -kappa);
    x_bar = (1.0 - x_eta) * x_bar + x_eta * x;
    return std::exp(x);
  }
  double final_step() const { return std::exp(x_bar); }
};

/// Windowed variance estimation: fast initial buffer, doubling slow windows,
/// fast terminal buffer.
class MetricAdaptation {
 public:
  MetricAdaptation(std::size_t dim, int warmup) : mean_(dim, 0.0), m2_(dim, 0.0), warmup_(warmup) {
    if (init_buffer_ + base_window_ + term_buffer_ > warmup) {
      init_buffer_ = static_cast<int>(0.15 * warmup);
      term_buffer_ = static_cast<int>(0.1 * warmup);
      base_window_ = warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + window_size_ - 1;
  }

  /// Returns true when the metric was updated.
  bool learn(std::span<const double> q, std::vector<double>& inv_metric) {
    if (warmup_ < 20) return false;
    if (in_window()) add(q);
    if (end_of_window()) {
      compute_next_window();
      double n = static_cast<double>(n_);
      for (std::size_t i = 0; i < mean_.size(); ++i) {
        double var = m2_[i] / (n - 1.0);
        inv_metric[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
      }
      std::fill(mean_.begin(), mean_.end(), 0.0);
      std::fill(m2_.begin(), m2_.end(), 0.0);
      n_ = 0;
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  bool in_window() const {
    return counter_ >= init_buffer_ && counter_ < warmup_ - term_buffer_ && counter_ != warmup_;
  }
  bool end_of_window() const { return counter_ == next_window_ && counter_ != warmup_; }
  void compute_next_window() {
    if (next_window_ == warmup_ - term_buffer_ - 1) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != warmup_ - term_buffer_ - 1) {
      int boundary = next_window_ + 2 * window_size_;
      if (boundary >= warmup_ - term_buffer_) next_window_ = warmup_ - term_buffer_ - 1;
    }
  }
  void add(std::span<const double> q) {
    ++n_;
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      double d = q[i] - mean_[i];
      mean_[i] += d / n_;
      m2_[i] += d * (q[i] - mean_[i]);
    }
  }

  std::vector<double> mean_, m2_;
  long n_ = 0;
  int warmup_;
  int init_buffer_ = 75, term_buffer_ = 50, base_window_ = 25;
  int window_size_ = 25, next_window_ = 0, counter_ = 0;
};

class Chain {
 public:
  Chain(const LogDensityFn& f, std::size_t dim, const NutsConfig& cfg, Rng rng)
      : f_(f), dim_(dim), cfg_(cfg), rng_(std::move(rng)), inv_metric_(dim, 1.0) {
    z_.q.assign(dim, 0.0);
    z_.p.assign(dim, 0.0);
    z_.grad.assign(dim, 0.0);
    da_.delta = cfg.target_accept;
  }

  void initialize(std::span<const double> init) {
    if (!init.empty()) {
      if (init.size() != dim_) throw Error(ErrorCode::InitializationFailed, "initial point has wrong dimension");
      std::copy(init.begin(), init.end(), z_.q.begin());
      if (!std::isfinite(evaluate(f_, z_))) {
        throw Error(ErrorCode::InitializationFailed, "log density is not finite at the supplied initial point");
      }
      return;
    }
    if (cfg_.init.kind == InitSpec::Kind::Zero) {
      std::fill(z_.q.begin(), z_.q.end(), 0.0);
      if (!std::isfinite(evaluate(f_, z_))) {
        throw Error(ErrorCode::InitializationFailed, "log density is not finite at the origin");
      }
      return;
    }
    for (int attempt = 0; attempt < cfg_.init.max_retries; ++attempt) {
      for (auto& x : z_.q) x = cfg_.init.lo + (cfg_.init.hi - cfg_.init.lo) * uniform01(rng_);
      if (std::isfinite(evaluate(f_, z_))) return;
    }
    throw Error(ErrorCode::InitializationFailed,
                "no finite log density after " + std::to_string(cfg_.init.max_retries) + " uniform draws");
  }

  ChainOutput run() {
    auto start = std::chrono::steady_clock::now();
    ChainOutput out;
    out.dim = dim_;
    out.draws.reserve(static_cast<std::size_t>(cfg_.draws) * dim_);

    init_step_size();
    da_.restart(eps_);
    MetricAdaptation metric(dim_, cfg_.warmup);

    for (int it = 0; it < cfg_.warmup + cfg_.draws; ++it) {
      bool warm = it < cfg_.warmup;
      Transition t = transition();
      if (warm) {
        if (t.divergent) ++out.warmup_divergences;
        eps_ = da_.learn(t.accept_stat);
        if (metric.learn(z_.q, inv_metric_)) {
          init_step_size();
          da_.restart(eps_);
        }
        if (it == cfg_.warmup - 1) eps_ = da_.final_step();
        continue;
      }
      if (t.divergent) ++out.divergences;
      out.draws.insert(out.draws.end(), z_.q.begin(), z_.q.end());
      out.log_density.push_back(z_.log_density);
      out.accept_stats.push_back(t.accept_stat);
      out.energy.push_back(t.energy);
      out.tree_depths.push_back(t.depth);
    }
    out.step_size = eps_;
    out.inv_metric = inv_metric_;
    out.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
  }

 private:
  struct Transition {
    double accept_stat = 0.0;
    double energy = 0.0;
    int depth = 0;
    bool divergent = false;
  };

  void draw_momentum(PhasePoint& z) {
    for (std::size_t i = 0; i < dim_; ++i) z.p[i] = standard_normal(rng_) / std::sqrt(inv_metric_[i]);
  }

  std::vector<double> p_sharp(const PhasePoint& z) const {
    std::vector<double> out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) out[i] = inv_metric_[i] * z.p[i];
    return out;
  }

  void init_step_size() {
    PhasePoint z0 = z_;
    PhasePoint z = z_;
    draw_momentum(z);
    double H0 = hamiltonian(z, inv_metric_);
    leapfrog(f_, z, eps_, inv_metric_);
    double h = hamiltonian(z, inv_metric_);
    if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
    double delta_H = H0 - h;
    int direction = delta_H > std::log(0.8) ? 1 : -1;
    for (int iter = 0; iter < 200; ++iter) {
      z = z0;
      draw_momentum(z);
      H0 = hamiltonian(z, inv_metric_);
      leapfrog(f_, z, eps_, inv_metric_);
      h = hamiltonian(z, inv_metric_);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      delta_H = H0 - h;
      if (direction == 1 && !(delta_H > std::log(0.8))) break;
      if (direction == -1 && !(delta_H < std::log(0.8))) break;
      eps_ = direction == 1 ? 2.0 * eps_ : 0.5 * eps_;
      if (eps_ > 1e7 || eps_ == 0.0) break;
    }
    eps_ = std::clamp(eps_, 1e-10, 1e7);
  }

  static bool criterion(const std::vector<double>& p_sharp_minus, const std::vector<double>& p_sharp_plus,
                        const std::vector<double>& rho) {
    return dot(p_sharp_plus, rho) > 0 && dot(p_sharp_minus, rho) > 0;
  }

  static void add_to(std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  }

  static std::vector<double> sum(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a);
    add_to(out, b);
    return out;
  }

  bool build_tree(int depth, PhasePoint& z, PhasePoint& z_propose, std::vector<double>& p_sharp_beg,
                  std::vector<double>& p_sharp_end, std::vector<double>& rho, std::vector<double>& p_beg,
                  std::vector<double>& p_end, double H0, double sign, int& n_leapfrog, double& log_sum_weight,
                  double& sum_metro_prob) {
    if (depth == 0) {
      leapfrog(f_, z, sign * eps_, inv_metric_);
      ++n_leapfrog;
      double h = hamiltonian(z, inv_metric_);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      if (h - H0 > kMaxDeltaH) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, H0 - h);
      sum_metro_prob += H0 - h > 0 ? 1.0 : std::exp(H0 - h);
      z_propose = z;
      p_sharp_beg = p_sharp(z);
      p_sharp_end = p_sharp_beg;
      add_to(rho, z.p);
      p_beg = z.p;
      p_end = p_beg;
      return !divergent_;
    }

    std::vector<double> p_sharp_init_end(dim_), p_init_end(dim_), rho_init(dim_, 0.0);
    double log_sum_weight_init = kNegInf;
    if (!build_tree(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end, H0, sign,
                    n_leapfrog, log_sum_weight_init, sum_metro_prob)) {
      return false;
    }

    PhasePoint z_propose_final = z;
    std::vector<double> p_final_beg(dim_), p_sharp_final_beg(dim_), rho_final(dim_, 0.0);
    double log_sum_weight_final = kNegInf;
    if (!build_tree(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end,
                    H0, sign, n_leapfrog, log_sum_weight_final, sum_metro_prob)) {
      return false;
    }

    double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = std::move(z_propose_final);
    } else if (uniform01(rng_) < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = std::move(z_propose_final);
    }

    std::vector<double> rho_subtree = sum(rho_init, rho_final);
    add_to(rho, rho_subtree);
    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, sum(rho_init, p_final_beg));
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, sum(rho_final, p_init_end));
    return persist;
  }

  Transition transition() {
    draw_momentum(z_);
    divergent_ = false;
    PhasePoint z_fwd = z_, z_bck = z_, z_sample = z_, z_propose = z_;

    std::vector<double> p_fwd_fwd = z_.p, p_fwd_bck = z_.p, p_bck_fwd = z_.p, p_bck_bck = z_.p;
    std::vector<double> p_sharp_fwd_fwd = p_sharp(z_);
    std::vector<double> p_sharp_fwd_bck = p_sharp_fwd_fwd, p_sharp_bck_fwd = p_sharp_fwd_fwd,
                        p_sharp_bck_bck = p_sharp_fwd_fwd;
    std::vector<double> rho = z_.p;
    double log_sum_weight = 0.0;
    double H0 = hamiltonian(z_, inv_metric_);
    int n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    int depth = 0;

    while (depth < cfg_.max_tree_depth) {
      std::vector<double> rho_fwd(dim_, 0.0), rho_bck(dim_, 0.0);
      bool valid = false;
      double log_sum_weight_subtree = kNegInf;
      if (uniform01(rng_) > 0.5) {
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        valid = build_tree(depth, z_fwd, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd,
                           H0, 1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
      } else {
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        valid = build_tree(depth, z_bck, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd, p_bck_bck,
                           H0, -1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob);
      }
      if (!valid) break;
      ++depth;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (uniform01(rng_) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = sum(rho_bck, rho_fwd);
      bool persist = criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      persist = persist && criterion(p_sharp_bck_bck, p_sharp_fwd_bck, sum(rho_bck, p_fwd_bck));
      persist = persist && criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, sum(rho_fwd, p_bck_fwd));
      if (!persist) break;
    }

    z_ = std::move(z_sample);
    Transition t;
    t.accept_stat = n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0;
    t.depth = depth;
    t.divergent = divergent_;
    t.energy = hamiltonian(z_, inv_metric_);
    return t;
  }

  const LogDensityFn& f_;
  std::size_t dim_;
  NutsConfig cfg_;
  Rng rng_;
  PhasePoint z_;
  std::vector<double> inv_metric_;
  double eps_ = 1.0;
  DualAveraging da_;
  bool divergent_ = false;
};

}  // namespace

std::vector<int> ChainOutput::tree_depth_histogram(int max_depth) const {
  std::vector<int> hist(static_cast<std::size_t>(max_depth) + 1, 0);
  for (int d : tree_depths) ++hist[static_cast<std::size_t>(std::clamp(d, 0, max_depth))];
  return hist;
}

double hamiltonian(const PhasePoint& z, std::span<const double> inv_metric) {
  double k = 0.0;
  for (std::size_t i = 0; i < z.p.size(); ++i) k += inv_metric[i] * z.p[i] * z.p[i];
  return -z.log_density + 0.5 * k;
}

void leapfrog(const LogDensityFn& f, PhasePoint& z, double eps, std::span<const double> inv_metric) {
  const std::size_t n = z.q.size();
  for (std::size_t i = 0; i < n; ++i) z.p[i] += 0.5 * eps * z.grad[i];
  for (std::size_t i = 0; i < n; ++i) z.q[i] += eps * inv_metric[i] * z.p[i];
  evaluate(f, z);
  for (std::size_t i = 0; i < n; ++i) z.p[i] += 0.5 * eps * z.grad[i];
}

ChainOutput sample_chain(const LogDensityFn& f, std::size_t dim, const NutsConfig& config, int chain,
                         std::span<const double> init) {
  if (config.chains < 1 || config.draws < 1 || config.warmup < 0 || config.max_tree_depth < 1 ||
      !(config.target_accept > 0.0 && config.target_accept < 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "invalid sampler configuration");
  }
  Chain c(f, dim, config, make_rng(derive_seed(config.seed, static_cast<std::uint64_t>(chain))));
  c.initialize(init);
  ChainOutput out = c.run();
  if (out.divergences > 0.9 * config.draws) {
    throw Error(ErrorCode::AllDivergent, "chain " + std::to_string(chain) + ": " +
                                             std::to_string(out.divergences) + " of " +
                                             std::to_string(config.draws) + " post-warmup transitions diverged");
  }
  return out;
}

std::vector<ChainOutput> sample(const LogDensityFn& f, std::size_t dim, const NutsConfig& config) {
  std::vector<ChainOutput> out(static_cast<std::size_t>(std::max(config.chains, 0)));
  auto run = [&](std::size_t c) { out[c] = sample_chain(f, dim, config, static_cast<int>(c)); };
  if (config.parallel_chains && out.size() > 1) {
    tbb::parallel_for(std::size_t{0}, out.size(), run);
  } else {
    for (std::size_t c = 0; c < out.size(); ++c) run(c);
  }
  return out;
}

}  // namespace blockjm
