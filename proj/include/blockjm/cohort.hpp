#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "blockjm/graph.hpp"

namespace blockjm {

enum class Linkage { Concurrent, Historical };

std::string to_string(Linkage linkage);

struct Measurement {
  double time = 0.0;  // global process time unless stated otherwise
  double value = 0.0;
};

struct EventHistory {
  std::vector<int> visited_states;       // starts at an initial state
  std::vector<double> transition_times;  // one per transition, strictly increasing
  double censoring_time = 0.0;

  std::size_t num_transitions() const { return transition_times.size(); }
};

struct Subject {
  std::string id;
  std::vector<double> covariates;
  std::vector<Measurement> longitudinal;  // sorted by time
  EventHistory events;
  std::optional<Measurement> pre_baseline;
};

struct Cohort {
  std::vector<std::string> covariate_names;
  std::vector<Subject> subjects;
};

/// Event data for one subject in one CR block, on the block-local clock.
struct BlockEvent {
  double entry_time = 0.0;   // global time of entry into the block's initial state
  double sojourn = 0.0;      // D^(i)
  std::optional<int> outcome;  // destination state, or nullopt if censored

  bool transitioned_to(int state) const { return outcome && *outcome == state; }
};

struct BlockData {
  std::size_t subject_index = 0;
  double entry_time = 0.0;
  double sojourn = 0.0;
  std::optional<int> outcome;
  /// Concurrent: block-local times. Historical: global times.
  std::vector<Measurement> measurements;
  bool imputed = false;  // true when the single record came from LOCF
};

/// Checks every event history against the diagram and the record invariants.
/// Throws InvalidHistory (or NonPositiveSojourn) naming the offending subject.
void validate_cohort(const Cohort& cohort, const TransitionDiagram& diagram);

/// Position of `state` in the subject's path, if visited.
std::optional<std::size_t> path_position(const Subject& subject, int state);

/// Subjects whose path visits the block's initial state, ascending.
std::vector<std::size_t> block_risk_set(const Cohort& cohort, const CrBlock& block);

/// Sojourn and outcome for a subject in a block. Pre: subject in the risk set.
BlockEvent block_event_data(const Subject& subject, const CrBlock& block);

/// Longitudinal data routed to a block. Windows are closed on the left:
/// a record taken exactly at a transition time belongs to the block entered
/// at that time. Concurrent linkage re-centres times at block entry and falls
/// back to last-observation-carried-forward when the window is empty.
BlockData link_longitudinal(const Subject& subject, std::size_t subject_index,
                            const CrBlock& block, Linkage linkage);

/// Records with global time inside the block's own window (no imputation).
std::vector<Measurement> block_window_measurements(const Subject& subject, const BlockEvent& event);

}  // namespace blockjm
