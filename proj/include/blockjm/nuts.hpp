#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "blockjm/rng.hpp"

namespace blockjm {

/// Log density with gradient. Must be callable from several threads at once.
using LogDensityFn = std::function<double(std::span<const double> q, std::span<double> grad)>;

struct InitSpec {
  enum class Kind { Zero, Uniform };
  Kind kind = Kind::Zero;
  double lo = -2.0;
  double hi = 2.0;
  int max_retries = 100;

  static InitSpec zero() { return {}; }
  static InitSpec uniform(double lo = -2.0, double hi = 2.0) { return {Kind::Uniform, lo, hi, 100}; }
};

struct NutsConfig {
  int chains = 2;
  int warmup = 300;
  int draws = 1000;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  InitSpec init;
  bool parallel_chains = true;
};

struct ChainOutput {
  std::size_t dim = 0;
  std::vector<double> draws;  // draws x dim, row-major, unconstrained scale
  std::vector<double> log_density;
  std::vector<double> accept_stats;
  std::vector<double> energy;
  std::vector<int> tree_depths;
  int divergences = 0;         // post-warmup
  int warmup_divergences = 0;
  double step_size = 0.0;
  std::vector<double> inv_metric;
  double wall_time_seconds = 0.0;

  std::size_t num_draws() const { return dim == 0 ? 0 : draws.size() / dim; }
  std::span<const double> draw(std::size_t s) const { return {draws.data() + s * dim, dim}; }
  std::vector<int> tree_depth_histogram(int max_depth) const;
};

/// Multinomial NUTS with dual-averaging step size and windowed diagonal
/// metric adaptation. Deterministic given config.seed; chain c draws from
/// the stream derive_seed(seed, c).
std::vector<ChainOutput> sample(const LogDensityFn& f, std::size_t dim, const NutsConfig& config);

/// One chain; `init` overrides config.init when non-empty.
ChainOutput sample_chain(const LogDensityFn& f, std::size_t dim, const NutsConfig& config, int chain,
                         std::span<const double> init = {});

/// State of a Hamiltonian trajectory.
struct PhasePoint {
  std::vector<double> q, p, grad;
  double log_density = 0.0;
};

/// Potential plus kinetic energy under the diagonal inverse metric.
double hamiltonian(const PhasePoint& z, std::span<const double> inv_metric);

/// One leapfrog step of size eps.
void leapfrog(const LogDensityFn& f, PhasePoint& z, double eps, std::span<const double> inv_metric);

}  // namespace blockjm
