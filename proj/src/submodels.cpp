#include "blockjm/submodels.hpp"

#include <cmath>
#include <numbers>

#include "blockjm/error.hpp"
#include "blockjm/quadrature.hpp"

namespace blockjm {

std::string to_string(AssocForm form) {
  switch (form) {
    case AssocForm::M1: return "M1";
    case AssocForm::M2: return "M2";
    case AssocForm::M3: return "M3";
  }
  return "M1";
}

AssocForm assoc_form_from_string(const std::string& s) {
  if (s == "M1") return AssocForm::M1;
  if (s == "M2") return AssocForm::M2;
  if (s == "M3") return AssocForm::M3;
  throw Error(ErrorCode::ConfigInvalid, "unknown association form '" + s + "'");
}

double trajectory_value(const LongitudinalParams& lp, const RandomEffects& re, double t) {
  return (lp.beta1 + re.b1) + (lp.beta2 + re.b2) * t;
}

double association(const TransitionParams& tp, std::span<const double> covariates, double mu) {
  switch (tp.form) {
    case AssocForm::M1: return tp.alpha[0] * mu;
    case AssocForm::M2: return tp.alpha[0] * mu + tp.alpha[1] * (covariates[tp.age_covariate] * mu);
    case AssocForm::M3: return tp.alpha[0] * mu + tp.alpha[1] * (mu * mu);
  }
  return 0.0;
}

double log_rate_given_mu(const TransitionParams& tp, std::span<const double> covariates, double mu) {
  double eta = 0.0;
  for (std::size_t c = 0; c < tp.gamma.size(); ++c) eta += covariates[c] * tp.gamma[c];
  return std::log(tp.scale) + eta + association(tp, covariates, mu);
}

double log_intensity_given_mu(const TransitionParams& tp, std::span<const double> covariates, double u,
                              double mu) {
  return std::log(tp.shape) + (tp.shape - 1.0) * std::log(u) + log_rate_given_mu(tp, covariates, mu);
}

double log_transition_intensity(const TransitionParams& tp, const LongitudinalParams& lp, const RandomEffects& re,
                                const HazardContext& ctx, double u) {
  return log_intensity_given_mu(tp, ctx.covariates, u, trajectory_value(lp, re, ctx.trajectory_time(u)));
}

double transition_intensity(const TransitionParams& tp, const LongitudinalParams& lp, const RandomEffects& re,
                            const HazardContext& ctx, double u) {
  double h = std::exp(log_transition_intensity(tp, lp, re, ctx, u));
  if (!std::isfinite(h)) throw Error(ErrorCode::NonFiniteIntensity, "at sojourn time " + std::to_string(u));
  return h;
}

double cumulative_hazard(const TransitionParams& tp, const LongitudinalParams& lp, const RandomEffects& re,
                         const HazardContext& ctx, double T) {
  double out = cumulative_hazard_with(tp, ctx.covariates, T,
                                      [&](double u) { return trajectory_value(lp, re, ctx.trajectory_time(u)); });
  if (!std::isfinite(out)) throw Error(ErrorCode::NonFiniteIntensity, "cumulative hazard overflow");
  return out;
}

double event_loglik_st(const TransitionParams& tp, const LongitudinalParams& lp, const RandomEffects& re,
                       std::span<const double> covariates, const BlockEvent& ev, int to_state, Clock clock) {
  HazardContext ctx{covariates, ev.entry_time, clock};
  double ll = -cumulative_hazard(tp, lp, re, ctx, ev.sojourn);
  if (ev.transitioned_to(to_state)) ll += log_transition_intensity(tp, lp, re, ctx, ev.sojourn);
  return ll;
}

double event_loglik_cr(std::span<const TransitionParams> params, std::span<const int> destinations,
                       const LongitudinalParams& lp, const RandomEffects& re, std::span<const double> covariates,
                       const BlockEvent& ev, Clock clock) {
  double ll = 0.0;
  for (std::size_t k = 0; k < destinations.size(); ++k) {
    ll += event_loglik_st(params[k], lp, re, covariates, ev, destinations[k], clock);
  }
  return ll;
}

double event_loglik_msm(const Subject& subject, const TransitionDiagram& diagram,
                        std::span<const TransitionParams> params, const LongitudinalParams& lp,
                        const RandomEffects& re) {
  const auto& ev = subject.events;
  const auto& all = diagram.transitions();
  double ll = 0.0;
  for (std::size_t l = 0; l < ev.visited_states.size(); ++l) {
    int state = ev.visited_states[l];
    double start = l == 0 ? 0.0 : ev.transition_times[l - 1];
    bool exited = l < ev.transition_times.size();
    double stop = exited ? ev.transition_times[l] : ev.censoring_time;
    double D = stop - start;

    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < all.size(); ++t) {
      if (all[t].from == state) out.push_back(t);
    }
    if (out.empty()) continue;  // absorbing: no further contribution

    // Leaving the state: the summed intensity, integrated term by term.
    for (std::size_t t : out) {
      ll -= cumulative_hazard_with(params[t], subject.covariates, D,
                                   [&](double u) { return trajectory_value(lp, re, start + u); });
    }
    if (exited) {
      auto t = diagram.transition_index(state, ev.visited_states[l + 1]);
      double mu = trajectory_value(lp, re, stop);
      ll += log_intensity_given_mu(params[*t], subject.covariates, D, mu);
    }
  }
  return ll;
}

double longitudinal_loglik(const LongitudinalParams& lp, const RandomEffects& re,
                           std::span<const Measurement> measurements) {
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * std::log(lp.sigma_e2);
  double ll = 0.0;
  for (const auto& m : measurements) {
    double r = m.value - trajectory_value(lp, re, m.time);
    ll += log_norm - 0.5 * r * r / lp.sigma_e2;
  }
  return ll;
}

}  // namespace blockjm
