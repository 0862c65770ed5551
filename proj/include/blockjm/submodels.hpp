#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "blockjm/cohort.hpp"
#include "blockjm/graph.hpp"

namespace blockjm {

/// Association between the current trajectory value and a transition:
///   M1: alpha * mu
///   M2: alpha1 * mu + alpha2 * age * mu
///   M3: alpha1 * mu + alpha2 * mu^2
enum class AssocForm { M1, M2, M3 };

/// Time scale the trajectory is evaluated on inside a block. Local: time
/// since block entry. Global: entry time + time since entry.
enum class Clock { Local, Global };

std::string to_string(AssocForm form);
AssocForm assoc_form_from_string(const std::string& s);
inline std::size_t num_assoc(AssocForm f) { return f == AssocForm::M1 ? 1 : 2; }

struct LongitudinalParams {
  double beta1 = 0.0;
  double beta2 = 0.0;
  double sigma_e2 = 1.0;  // residual variance
  double sigma1 = 1.0;    // random intercept sd
  double sigma2 = 1.0;    // random slope sd
  double rho = 0.0;
};

/// Weibull baseline shape * u^(shape-1) * scale with log-linear covariate and
/// association terms.
struct TransitionParams {
  double shape = 1.0;
  double scale = 1.0;
  std::vector<double> gamma;
  std::array<double, 2> alpha{0.0, 0.0};
  AssocForm form = AssocForm::M1;
  std::size_t age_covariate = 0;  // covariate entering the M2 interaction
};

struct RandomEffects {
  double b1 = 0.0;
  double b2 = 0.0;
};

double trajectory_value(const LongitudinalParams& lp, const RandomEffects& re, double t);

/// Association term A for a trajectory value mu.
double association(const TransitionParams& tp, std::span<const double> covariates, double mu);

/// log of scale * exp(eta + A): the intensity without its Weibull factor.
double log_rate_given_mu(const TransitionParams& tp, std::span<const double> covariates, double mu);

/// log h(u) given the trajectory value at the evaluation time.
double log_intensity_given_mu(const TransitionParams& tp, std::span<const double> covariates, double u,
                              double mu);

struct HazardContext {
  std::span<const double> covariates;
  double entry_time = 0.0;
  Clock clock = Clock::Local;

  double trajectory_time(double u) const { return clock == Clock::Local ? u : entry_time + u; }
};

double log_transition_intensity(const TransitionParams& tp, const LongitudinalParams& lp, const RandomEffects& re,
                                const HazardContext& ctx, double u);

/// Throws NonFiniteIntensity when the intensity overflows.
double transition_intensity(const TransitionParams& tp, const LongitudinalParams& lp, const RandomEffects& re,
                            const HazardContext& ctx, double u);

/// Integral of the intensity over [0, T] by 15-point Gauss-Legendre in
/// v = u^shape (see quadrature::weibull_rule).
double cumulative_hazard(const TransitionParams& tp, const LongitudinalParams& lp, const RandomEffects& re,
                         const HazardContext& ctx, double T);

/// Same rule for an arbitrary trajectory: mu_at(u) gives the trajectory value
/// at sojourn time u.
template <class MuAt>
double cumulative_hazard_with(const TransitionParams& tp, std::span<const double> covariates, double T,
                              MuAt&& mu_at);

/// Single-transition survival log-likelihood: delta log h(D) - Lambda(D).
double event_loglik_st(const TransitionParams& tp, const LongitudinalParams& lp, const RandomEffects& re,
                       std::span<const double> covariates, const BlockEvent& ev, int to_state, Clock clock);

/// Competing-risks block log-likelihood; params[k] belongs to destinations[k].
double event_loglik_cr(std::span<const TransitionParams> params, std::span<const int> destinations,
                       const LongitudinalParams& lp, const RandomEffects& re, std::span<const double> covariates,
                       const BlockEvent& ev, Clock clock);

/// Full multistate log-likelihood over every sojourn interval, integrating the
/// summed intensity out of each occupied state. Trajectory on the global clock.
/// params is indexed like diagram.transitions().
double event_loglik_msm(const Subject& subject, const TransitionDiagram& diagram,
                        std::span<const TransitionParams> params, const LongitudinalParams& lp,
                        const RandomEffects& re);

/// Sum of Gaussian log-densities of the measurements around the trajectory.
double longitudinal_loglik(const LongitudinalParams& lp, const RandomEffects& re,
                           std::span<const Measurement> measurements);

}  // namespace blockjm

#include "blockjm/quadrature.hpp"

template <class MuAt>
double blockjm::cumulative_hazard_with(const TransitionParams& tp, std::span<const double> covariates, double T,
                                       MuAt&& mu_at) {
  if (T == 0.0) return 0.0;
  const auto rule = quadrature::weibull_rule(T, tp.shape);
  double sum = 0.0;
  for (std::size_t q = 0; q < quadrature::kPoints; ++q) {
    sum += rule.weights[q] * std::exp(log_rate_given_mu(tp, covariates, mu_at(rule.nodes[q])));
  }
  return sum;
}
