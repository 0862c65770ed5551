#include "blockjm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <boost/math/tools/toms748_solve.hpp>
#include <tbb/parallel_for.h>

#include "blockjm/error.hpp"

namespace blockjm {

double AgeMixture::draw(Rng& rng) const {
  double u = uniform01(rng);
  double v = uniform01(rng);
  double acc = 0.0;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    acc += weights[c];
    if (u < acc || c + 1 == weights.size()) {
      return intervals[c][0] + (intervals[c][1] - intervals[c][0]) * v;
    }
  }
  return intervals.back()[1];
}

void SimSpec::validate() const {
  if (n == 0) throw Error(ErrorCode::ConfigInvalid, "simulation needs at least one subject");
  if (transitions.size() != diagram.transitions().size()) {
    throw Error(ErrorCode::ConfigInvalid, "one set of transition parameters per diagram transition is required");
  }
  if (!(longitudinal.sigma_e2 > 0 && longitudinal.sigma1 > 0 && longitudinal.sigma2 > 0 &&
        std::abs(longitudinal.rho) < 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "longitudinal variances must be positive and |rho| < 1");
  }
  if (!(censor_lo >= 0.0 && censor_lo < censor_hi)) throw Error(ErrorCode::ConfigInvalid, "censoring needs 0 <= a < b");
  if (visit_intervals.empty()) throw Error(ErrorCode::ConfigInvalid, "at least one visit interval is required");
  for (double d : visit_intervals) {
    if (!(d > 0.0)) throw Error(ErrorCode::ConfigInvalid, "visit intervals must be positive");
  }
  if (age.intervals.size() != age.weights.size() || age.weights.empty()) {
    throw Error(ErrorCode::ConfigInvalid, "age mixture needs one weight per interval");
  }
  double total = std::accumulate(age.weights.begin(), age.weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::ConfigInvalid, "age mixture weights must sum to 1");
  for (const auto& tp : transitions) {
    if (!(tp.shape > 0 && tp.scale > 0)) throw Error(ErrorCode::ConfigInvalid, "Weibull parameters must be positive");
  }
}

std::optional<double> invert_cumulative_hazard(const TransitionParams& tp, std::span<const double> covariates,
                                               const std::function<double(double)>& mu_at, double target,
                                               double horizon) {
  auto f = [&](double T) { return cumulative_hazard_with(tp, covariates, T, mu_at) - target; };
  double f_hi = f(horizon);
  if (std::isnan(f_hi)) throw Error(ErrorCode::RootBracketFailure, "cumulative hazard is NaN at the horizon");
  if (f_hi < 0.0) return std::nullopt;
  if (f_hi == 0.0) return horizon;
  std::uintmax_t max_iter = 200;
  auto tol = [](double a, double b) { return std::abs(b - a) < 1e-10; };
  try {
    auto [lo, hi] = boost::math::tools::toms748_solve(f, 0.0, horizon, -target, f_hi, tol, max_iter);
    return 0.5 * (lo + hi);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::RootBracketFailure, e.what());
  }
}

EventHistory simulate_event_history(const TransitionDiagram& diagram, std::span<const TransitionParams> params,
                                    std::span<const double> covariates, double censoring_time,
                                    const TrajectoryFn& trajectory, Rng& rng, int initial_state) {
  if (!(censoring_time > 0.0)) throw Error(ErrorCode::ConfigInvalid, "censoring time must be positive");
  EventHistory h;
  h.censoring_time = censoring_time;
  h.visited_states.push_back(initial_state);
  int state = initial_state;
  double start = 0.0;
  while (true) {
    std::vector<int> targets = diagram.targets(state);
    if (targets.empty()) break;
    double remaining = censoring_time - start;
    auto mu_at = [&](double u) { return trajectory(start, start + u); };
    double best = std::numeric_limits<double>::infinity();
    int dest = -1;
    for (int k : targets) {
      double e = standard_exponential(rng);
      std::size_t idx = *diagram.transition_index(state, k);
      auto T = invert_cumulative_hazard(params[idx], covariates, mu_at, e, remaining + 1.0);
      if (T && *T < best) {
        best = *T;
        dest = k;
      }
    }
    if (dest < 0 || !(best < remaining) || !(best > 0.0)) break;
    start += best;
    h.transition_times.push_back(start);
    h.visited_states.push_back(dest);
    state = dest;
  }
  return h;
}

std::vector<double> simulate_visits(const EventHistory& history, std::span<const double> intervals,
                                    double censoring_time) {
  std::vector<double> out;
  const std::size_t segments = history.transition_times.size() + 1;
  for (std::size_t l = 0; l < segments; ++l) {
    double start = l == 0 ? 0.0 : history.transition_times[l - 1];
    bool last = l + 1 == segments;
    double stop = last ? censoring_time : history.transition_times[l];
    double delta = intervals[std::min(l, intervals.size() - 1)];
    for (std::size_t j = 0;; ++j) {
      double t = start + static_cast<double>(j) * delta;
      if (last ? t > stop : t >= stop) break;
      out.push_back(t);
    }
  }
  return out;
}

Cohort simulate_cohort(const SimSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n;
  const auto& lp = spec.longitudinal;
  const double sigma_e = std::sqrt(lp.sigma_e2);
  const double chol_c = std::sqrt(1.0 - lp.rho * lp.rho);

  std::vector<Rng> rngs;
  rngs.reserve(n);
  std::vector<double> age(n);
  for (std::size_t i = 0; i < n; ++i) {
    rngs.push_back(make_rng(derive_seed(spec.seed, i)));
    age[i] = spec.age.draw(rngs[i]);
  }
  double mean = std::accumulate(age.begin(), age.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double a : age) ss += (a - mean) * (a - mean);
  double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 1.0;
  if (!(sd > 0.0)) sd = 1.0;

  int initial_state = 0;
  for (int s : spec.diagram.states()) {
    if (spec.diagram.is_initial(s)) {
      initial_state = s;
      break;
    }
  }

  Cohort cohort;
  cohort.covariate_names = {"age"};
  cohort.subjects.resize(n);
  tbb::parallel_for(std::size_t{0}, n, [&](std::size_t i) {
    Rng& rng = rngs[i];
    Subject& s = cohort.subjects[i];
    s.id = std::to_string(i + 1);
    s.covariates = {(age[i] - mean) / sd};

    double z1 = standard_normal(rng);
    double z2 = standard_normal(rng);
    RandomEffects re{lp.sigma1 * z1, lp.sigma2 * (lp.rho * z1 + chol_c * z2)};
    double C = spec.censor_lo + (spec.censor_hi - spec.censor_lo) * uniform01(rng);

    // Fixed effects switch at the first transition (sojourns starting after 0).
    auto trajectory = [&](double start, double t) {
      double b1 = lp.beta1, b2 = lp.beta2;
      if (spec.post_change_beta && start > 0.0) {
        b1 = (*spec.post_change_beta)[0];
        b2 = (*spec.post_change_beta)[1];
      }
      return (b1 + re.b1) + (b2 + re.b2) * t;
    };
    s.events = simulate_event_history(spec.diagram, spec.transitions, s.covariates, C, trajectory, rng,
                                      initial_state);
    double first = s.events.transition_times.empty() ? std::numeric_limits<double>::infinity()
                                                     : s.events.transition_times.front();
    for (double t : simulate_visits(s.events, spec.visit_intervals, C)) {
      double mu = trajectory(t >= first ? first : 0.0, t);
      s.longitudinal.push_back({t, mu + sigma_e * standard_normal(rng)});
    }
  });
  return cohort;
}

}  // namespace blockjm
