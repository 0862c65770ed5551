#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "blockjm/cohort.hpp"
#include "blockjm/config.hpp"
#include "blockjm/engine.hpp"
#include "blockjm/loo.hpp"
#include "blockjm/simulator.hpp"

namespace blockjm {

struct StudySpec {
  SimSpec sim;
  std::vector<FitSpec> fits;
  std::vector<std::string> names;  // parallel to fits; empty uses the approach labels
  std::size_t replicates = 20;
  std::uint64_t seed = 1;
  std::vector<std::string> parameters{"alpha"};  // base names, e.g. "alpha" matches alpha[0->1]
  std::vector<LooDefinition> loo{LooDefinition::LongitudinalOnly, LooDefinition::Joint};
};

struct EstimateRow {
  std::size_t replicate = 0;
  std::string approach, block, parameter;
  double truth = 0.0, mean = 0.0, sd = 0.0, q025 = 0.0, q975 = 0.0, rhat = 1.0, ess = 0.0;
  bool covered = false;
};

struct CoverageRow {
  std::string parameter, approach;
  std::size_t replicates = 0, covered = 0;
  double coverage = 0.0;
  double median_estimate = 0.0;
  double median_bias = 0.0;
};

struct TimingRow {
  std::size_t replicate = 0;
  std::string approach, block;  // block "max" holds the max-over-blocks aggregate
  double seconds = 0.0;
};

/// Concurrent versus Historical linkage on one block.
struct LinkageComparison {
  std::size_t replicate = 0;
  std::string approach, block;
  LooDefinition definition = LooDefinition::Joint;
  double elpd_concurrent = 0.0, elpd_historical = 0.0, delta = 0.0, se = 0.0;
  std::size_t high_k_concurrent = 0, high_k_historical = 0;

  /// "concurrent", "historical", or "tie" when the difference is exactly 0.
  std::string preferred() const;
};

struct StudyResult {
  std::vector<EstimateRow> estimates;
  std::vector<CoverageRow> coverage;
  std::vector<TimingRow> timing;
  std::vector<LinkageComparison> loo;
  std::vector<std::string> failures;  // "replicate/approach/block: message"
};

/// Called after each replicate with the simulated cohort and one fit per spec.
using ReplicateHook = std::function<void(std::size_t, const Cohort&, const std::vector<FitResult>&)>;

std::uint64_t replicate_sim_seed(std::uint64_t seed, std::size_t replicate);
std::uint64_t replicate_fit_seed(std::uint64_t seed, std::size_t replicate, const std::string& label);

/// Replicates run one after another; blocks inside each fit run on the pool.
StudyResult run_study(const StudySpec& spec, const ReplicateHook& hook = {});

/// Rows of `estimates` for parameters whose base name is in `parameters`.
std::vector<EstimateRow> estimate_rows(std::size_t replicate, const std::string& name, const FitResult& fit,
                                       const SimSpec& sim,
                                       const std::vector<std::string>& covariate_names,
                                       const std::vector<std::string>& parameters);
std::vector<CoverageRow> coverage_table(const std::vector<EstimateRow>& estimates);
std::vector<LinkageComparison> linkage_comparisons(std::size_t replicate, const std::vector<FitResult>& fits,
                                                   const std::vector<LooDefinition>& definitions);

StudySpec study_spec_from_config(const RunConfig& config);
void write_study(const StudyResult& result, const std::filesystem::path& dir);

}  // namespace blockjm
