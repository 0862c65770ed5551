#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blockjm/cohort.hpp"
#include "blockjm/diagnostics.hpp"
#include "blockjm/graph.hpp"
#include "blockjm/loo.hpp"
#include "blockjm/nuts.hpp"
#include "blockjm/posterior.hpp"

namespace blockjm {

struct FitSpec {
  Approach approach = Approach::MSM;
  Linkage linkage = Linkage::Concurrent;  // ignored for MSM
  ModelSpec model;
  PriorSpec priors;
  NutsConfig nuts;
  /// Restrict the fit to these block names; empty fits every block.
  std::vector<std::string> blocks;
  bool parallel_blocks = true;
  bool keep_unconstrained = false;

  /// "JM-MSM", "JM-CR-C", "JM-ST-H", ...
  std::string label() const;
};

/// Parses "MSM", "CR-C", "JM-ST-H", ...
FitSpec fit_spec_from_label(const std::string& label);

struct SummaryRow {
  std::string parameter;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double rhat = 1.0;
  double ess = 0.0;
};

/// Type-7 (linear interpolation) sample quantile.
double quantile_type7(std::vector<double> x, double p);

struct BlockResult {
  std::string name;
  std::vector<Transition> transitions;
  std::vector<std::string> subject_ids;
  std::vector<std::string> parameter_names;  // constrained scale
  std::uint64_t seed = 0;

  std::size_t chains = 0;
  std::size_t draws_per_chain = 0;
  std::vector<double> draws;  // (chains * draws_per_chain) x parameters, chain-major
  std::vector<double> unconstrained;  // only with keep_unconstrained
  std::vector<SummaryRow> summary;

  PointwiseLogLik loglik_longitudinal;  // definition i
  PointwiseLogLik loglik_event;         // definition ii
  PointwiseLogLik loglik_joint;         // definition iii

  int divergences = 0;
  std::vector<double> step_sizes;
  double wall_time_seconds = 0.0;
  bool ok = true;
  std::string error;

  std::size_t num_parameters() const { return parameter_names.size(); }
  std::size_t parameter_index(const std::string& name) const;  // throws UnknownParameter
  std::vector<double> parameter_draws(const std::string& name) const;
  const PointwiseLogLik& loglik(LooDefinition d) const;
  bool converged(double threshold = 1.01) const;
};

struct FitResult {
  FitSpec spec;
  std::vector<BlockResult> blocks;
  /// Max over blocks (CR, ST); the single block's time for MSM.
  double wall_time_seconds = 0.0;

  bool all_ok() const;
  const BlockResult& block(const std::string& name) const;
  /// Block whose transitions include t.
  const BlockResult& block_for(const Transition& t) const;
};

/// Names of the blocks the approach decomposes the diagram into.
std::vector<std::string> block_names(const TransitionDiagram& diagram, Approach approach);

FitResult fit(const Cohort& cohort, const TransitionDiagram& diagram, const FitSpec& spec);

/// Posterior summaries for selected parameters of one block.
std::vector<SummaryRow> summarize(const FitResult& fit, const std::string& block,
                                  const std::vector<std::string>& parameters);

struct FullConditionalCheck {
  double max_deviation = 0.0;
  std::size_t probes = 0;
};

/// Compares changes in log density when only the parameters of `transition`
/// move, across the MSM, CR and ST targets (Historical linkage), at random
/// shared values of everything else. `block_subjects` replaces the block
/// risk set of the CR and ST targets when given.
FullConditionalCheck full_conditional_check(const Cohort& cohort, const TransitionDiagram& diagram,
                                            const Transition& transition, std::size_t probes, std::uint64_t seed,
                                            const ModelSpec& model = {}, const PriorSpec& priors = {},
                                            const std::optional<std::vector<std::size_t>>& block_subjects = {});

}  // namespace blockjm
