#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "blockjm/cohort.hpp"
#include "blockjm/graph.hpp"
#include "blockjm/rng.hpp"
#include "blockjm/submodels.hpp"

namespace blockjm {

/// Mixture of uniforms for raw age; standardized within the cohort afterwards.
struct AgeMixture {
  std::vector<std::array<double, 2>> intervals{{18.0, 65.0}, {65.0, 80.0}, {80.0, 90.0}};
  std::vector<double> weights{0.45, 0.30, 0.25};

  double draw(Rng& rng) const;
};

struct SimSpec {
  TransitionDiagram diagram;
  std::size_t n = 100;
  LongitudinalParams longitudinal;
  /// (beta1', beta2') applied from the first transition onwards.
  std::optional<std::array<double, 2>> post_change_beta;
  std::vector<TransitionParams> transitions;  // parallel to diagram.transitions()
  AgeMixture age;
  double censor_lo = 6.0;
  double censor_hi = 22.0;
  /// Visit interval by block depth (number of transitions so far); the last
  /// entry covers every deeper level.
  std::vector<double> visit_intervals{1.6, 0.6};
  std::uint64_t seed = 1;

  void validate() const;
};

/// Trajectory value at global time t for the sojourn that started at `start`.
using TrajectoryFn = std::function<double(double start, double t)>;

/// Root of Lambda(T) = target on [0, horizon], where Lambda integrates the
/// intensity with the same Gauss-Legendre rule used for inference. Returns
/// nullopt when Lambda(horizon) < target.
std::optional<double> invert_cumulative_hazard(const TransitionParams& tp, std::span<const double> covariates,
                                               const std::function<double(double)>& mu_at, double target,
                                               double horizon);

/// Clock-reset event history from the initial state until absorption or C.
EventHistory simulate_event_history(const TransitionDiagram& diagram, std::span<const TransitionParams> params,
                                    std::span<const double> covariates, double censoring_time,
                                    const TrajectoryFn& trajectory, Rng& rng, int initial_state = 0);

/// Equidistant visits restarting at time 0 and at every transition, with the
/// interval for the current depth, up to and including C.
std::vector<double> simulate_visits(const EventHistory& history, std::span<const double> intervals,
                                    double censoring_time);

Cohort simulate_cohort(const SimSpec& spec);

}  // namespace blockjm
