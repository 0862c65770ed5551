#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "blockjm/cohort.hpp"
#include "blockjm/graph.hpp"
#include "blockjm/quadrature.hpp"
#include "blockjm/submodels.hpp"

namespace blockjm {

enum class Approach { MSM, CR, ST };

std::string to_string(Approach a);

/// Weakly informative defaults: N(0, 100^2) on regression coefficients,
/// half-Cauchy(0, 1) on Weibull shape and scale, inverse-Gamma(0.01, 0.01) on
/// the three variances and Beta(0.5, 0.5) on (rho + 1) / 2.
struct PriorSpec {
  double normal_sd = 100.0;
  double half_cauchy_scale = 1.0;
  double inv_gamma_shape = 0.01;
  double inv_gamma_scale = 0.01;
  double beta_a = 0.5;
  double beta_b = 0.5;
};

/// How random effects enter the unconstrained vector: standardized z with
/// b = chol(Sigma) z, or the subject-level line beta + b under N(beta, Sigma).
enum class RandomEffectsScale { NonCentered, Centered };

std::string to_string(RandomEffectsScale r);
RandomEffectsScale random_effects_scale_from_string(const std::string& s);

/// Per-transition association forms. Transitions not listed use default_form.
struct ModelSpec {
  AssocForm default_form = AssocForm::M1;
  std::map<Transition, AssocForm> forms;
  std::size_t age_covariate = 0;
  RandomEffectsScale random_effects = RandomEffectsScale::Centered;

  AssocForm form_for(const Transition& t) const;
};

/// Parameters on the constrained scale for one target.
struct ParameterVector {
  LongitudinalParams longitudinal;
  std::vector<Transition> transitions;
  std::vector<TransitionParams> transition_params;  // parallel to transitions
  std::vector<RandomEffects> random_effects;        // parallel to Target::subjects()

  const TransitionParams& of(const Transition& t) const;
  TransitionParams& of(const Transition& t);
};

/// Log-posterior of the joint model restricted to one estimation block:
/// the whole process (MSM), one competing-risks block (CR) or one
/// transition (ST).
///
/// Unconstrained layout, in order:
///   beta1, beta2, log_sigma_e2, log_sigma1_sq, log_sigma2_sq, atanh_rho,
///   then per transition (sorted by from, to): log_shape, log_scale,
///   gamma[...] (one per covariate), alpha (M1) or alpha1, alpha2 (M2/M3),
///   then per subject: z1, z2 with b = chol(Sigma) * z (non-centered), or
///   icpt = beta1 + b1, slope = beta2 + b2 (centered).
class Target {
 public:
  static constexpr std::size_t kLongitudinalDim = 6;

  /// block_index indexes decompose_cr (CR) or decompose_st (ST); ignored for MSM.
  static Target build(const Cohort& cohort, const TransitionDiagram& diagram, Approach approach,
                      std::size_t block_index, Linkage linkage, const ModelSpec& model, const PriorSpec& priors);

  /// Same, but with an explicit subject list in place of the block risk set.
  /// Used to construct deliberately mis-routed targets.
  static Target build_with_subjects(const Cohort& cohort, const TransitionDiagram& diagram, Approach approach,
                                    std::size_t block_index, Linkage linkage, const ModelSpec& model,
                                    const PriorSpec& priors, std::vector<std::size_t> subjects);

  Approach approach() const { return approach_; }
  Linkage linkage() const { return linkage_; }
  Clock clock() const { return clock_; }
  RandomEffectsScale random_effects_scale() const { return re_scale_; }
  const std::string& name() const { return name_; }
  std::size_t dim() const { return dim_; }
  const std::vector<std::size_t>& subjects() const { return subjects_; }
  const std::vector<std::string>& subject_ids() const { return subject_ids_; }
  const std::vector<Transition>& transitions() const { return transitions_; }
  const PriorSpec& priors() const { return priors_; }

  const std::vector<std::string>& parameter_names() const { return names_; }
  const std::vector<std::string>& constrained_names() const { return constrained_names_; }
  std::size_t transition_offset(std::size_t slot) const { return slots_[slot].offset; }
  std::size_t random_effects_offset() const { return re_offset_; }

  /// Log density on the unconstrained scale. Returns -inf on overflow.
  double log_density(std::span<const double> u) const;
  /// Log density and its exact gradient.
  double log_density_gradient(std::span<const double> u, std::span<double> grad) const;

  ParameterVector to_constrained(std::span<const double> u, double* log_jacobian = nullptr) const;
  std::vector<double> from_constrained(const ParameterVector& p) const;
  /// Constrained values in constrained_names() order.
  std::vector<double> constrained_row(std::span<const double> u) const;

  struct Components {
    double event = 0.0;
    double longitudinal = 0.0;
    double random_effects = 0.0;  // density of z (non-centered) or of b under N(0, Sigma)
    double prior = 0.0;           // priors evaluated at constrained values
    double log_jacobian = 0.0;
    double total() const { return event + longitudinal + random_effects + prior + log_jacobian; }
  };
  Components components(std::span<const double> u) const;

  /// Per-subject log-likelihoods for leave-one-out. `longitudinal` covers only
  /// the records observed inside the block window (all records for MSM),
  /// `event` the subject's event contribution to this target.
  struct Pointwise {
    std::vector<double> longitudinal;
    std::vector<double> event;
  };
  Pointwise pointwise_loglik(std::span<const double> u) const;

 private:
  struct Slot {
    Transition transition;
    AssocForm form = AssocForm::M1;
    std::size_t age = 0;
    std::size_t offset = 0;
  };
  struct Group {
    std::size_t subject = 0;  // local subject index
    double D = 0.0;
    double logD = 0.0;
    double t0 = 0.0;          // trajectory time at entry
    double tD = 0.0;          // trajectory time at the end of the sojourn
    int observed = -1;        // local slot index, or -1 if censored for every slot
    std::size_t slot_begin = 0, slot_end = 0;  // range in group_slots_
  };
  // Quadrature nodes padded to a SIMD-friendly count; padding repeats node 0 with weight 0.
  static constexpr std::size_t kLanes = (quadrature::kPoints + 7) / 8 * 8;
  double evaluate(std::span<const double> u, std::span<double> grad, bool want_grad, Components* parts,
                  Pointwise* pointwise) const;

  Approach approach_ = Approach::MSM;
  Linkage linkage_ = Linkage::Historical;
  Clock clock_ = Clock::Global;
  RandomEffectsScale re_scale_ = RandomEffectsScale::Centered;
  std::string name_;
  PriorSpec priors_;
  std::size_t num_covariates_ = 0;
  std::size_t dim_ = 0;
  std::size_t re_offset_ = 0;

  std::vector<Slot> slots_;
  std::vector<Transition> transitions_;
  std::vector<std::size_t> subjects_;
  std::vector<std::string> subject_ids_;
  std::vector<double> covariates_;  // subjects x covariates, row-major
  std::vector<Measurement> measurements_;
  std::vector<std::size_t> meas_begin_;  // size subjects + 1
  // Per-subject least-squares summary of measurements_, so the residual sum
  // of squares of any line a + b t is rss + n (a + b tbar - ybar)^2 + sctt (b - bhat)^2.
  struct LongSummary {
    double n = 0.0, tbar = 0.0, ybar = 0.0, sctt = 0.0, bhat = 0.0, rss = 0.0;
  };
  std::vector<LongSummary> long_summary_;
  std::vector<Measurement> loo_measurements_;
  std::vector<std::size_t> loo_begin_;
  std::vector<Group> groups_;
  std::vector<std::size_t> group_begin_;  // size subjects + 1
  std::vector<std::size_t> group_slots_;
  std::vector<std::string> names_;
  std::vector<std::string> constrained_names_;
};

}  // namespace blockjm
