#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "blockjm/cohort.hpp"

namespace blockjm {

// longitudinal.csv: subject_id,time,value
// events.csv: subject_id,<covariate columns...>,visited_states,transition_times,censoring_time
//   [,pre_baseline_time,pre_baseline_value]
// visited_states / transition_times are '|'-joined. Reals are written in
// shortest round-trip form, so a write/read cycle is exact.

void write_cohort_csv(const Cohort& cohort, const std::filesystem::path& dir);
Cohort read_cohort_csv(const std::filesystem::path& longitudinal_csv, const std::filesystem::path& events_csv);

nlohmann::json cohort_to_json(const Cohort& cohort);
Cohort cohort_from_json(const nlohmann::json& j);

void write_cohort_json(const Cohort& cohort, const std::filesystem::path& file);
Cohort read_cohort_json(const std::filesystem::path& file);

/// Shortest decimal form that reads back to the same double.
std::string format_real(double x);

}  // namespace blockjm
