#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blockjm/config.hpp"
#include "blockjm/engine.hpp"

namespace blockjm {

enum class Command { Simulate, Fit, Compare, Study };

Command command_from_string(const std::string& s);
std::string to_string(Command c);

/// Exit statuses of run().
inline constexpr int kExitOk = 0;
inline constexpr int kExitBlockFailure = 3;

/// A named fit, as listed in the config.
struct NamedFit {
  std::string name;
  FitResult result;
};

/// Fits every FitSpec of the config on `cohort`. NUTS seeds derive from the
/// run seed and the fit name.
std::vector<NamedFit> fit_all(const RunConfig& config, const Cohort& cohort);

/// Writes summaries.csv and the draws directory. One fit writes
/// draws/<block>.csv; several write draws/<fit>/<block>.csv.
void write_fit_tables(const std::vector<NamedFit>& fits, const std::filesystem::path& dir);

/// LOO of every block under each definition, plus comparisons between fits
/// that share a block over the same subjects.
nlohmann::json loo_report(const std::vector<NamedFit>& fits, const std::vector<LooDefinition>& definitions);

/// Executes one command and writes its artifacts under `out`. Returns
/// kExitOk, or kExitBlockFailure when any block failed (artifacts for the
/// remaining blocks are still written).
int run(Command command, const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

}  // namespace blockjm
