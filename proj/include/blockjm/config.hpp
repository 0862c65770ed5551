#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blockjm/cohort.hpp"
#include "blockjm/engine.hpp"
#include "blockjm/graph.hpp"
#include "blockjm/loo.hpp"
#include "blockjm/simulator.hpp"

namespace blockjm {

struct StudySettings {
  std::size_t replicates = 20;
  /// Parameter name prefixes reported in study tables, e.g. "alpha".
  std::vector<std::string> parameters{"alpha"};
};

struct RunConfig {
  TransitionDiagram diagram;
  std::optional<SimSpec> simulation;
  std::optional<std::filesystem::path> cohort_json;
  std::optional<std::filesystem::path> longitudinal_csv;
  std::optional<std::filesystem::path> events_csv;
  std::vector<FitSpec> fits;
  std::vector<std::string> fit_names;  // parallel to fits; unique, default is the approach label
  std::vector<std::string> age_covariate_names;  // parallel to fits; empty when given by index
  std::vector<LooDefinition> loo{LooDefinition::LongitudinalOnly, LooDefinition::Joint};
  StudySettings study;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: library default
  nlohmann::json source;  // resolved config, recorded in manifests
};

/// Names of the built-in presets.
std::vector<std::string> preset_names();
/// Preset body as JSON (diagram, simulate, fits, study).
nlohmann::json preset(const std::string& name);

/// Resolves "preset", then applies the remaining keys as a JSON merge patch,
/// and validates every field. Throws ConfigInvalid naming the offending key.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

SimSpec sim_spec_from_json(const nlohmann::json& j, const TransitionDiagram& diagram);
TransitionDiagram diagram_from_json(const nlohmann::json& j);
nlohmann::json diagram_to_json(const TransitionDiagram& d);

/// Warmup rule: 300 for n <= 1000, 500 above.
int default_warmup(std::size_t n);

/// Data-generating value of a constrained parameter name, if the simulation
/// defines one (fixed effects report their pre-change values).
std::optional<double> true_value(const SimSpec& sim, const std::vector<std::string>& covariate_names,
                                 const std::string& parameter);

/// Binds covariate names used by the fits to indices of the cohort.
void resolve_covariates(RunConfig& config, const Cohort& cohort);

/// Cohort from the config's data source (simulated with the run seed, or read).
Cohort load_or_simulate(const RunConfig& config);

}  // namespace blockjm
