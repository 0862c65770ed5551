#include "blockjm/cohort.hpp"

#include <cmath>

#include "blockjm/error.hpp"

namespace blockjm {

std::string to_string(Linkage linkage) {
  return linkage == Linkage::Concurrent ? "concurrent" : "historical";
}

void validate_cohort(const Cohort& cohort, const TransitionDiagram& diagram) {
  for (const auto& s : cohort.subjects) {
    const auto& ev = s.events;
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::InvalidHistory, "subject " + s.id + ": " + why);
    };
    if (ev.visited_states.empty()) fail("empty state path");
    if (ev.visited_states.size() != ev.transition_times.size() + 1) {
      fail("path length does not match number of transition times");
    }
    if (!(ev.censoring_time > 0.0) || !std::isfinite(ev.censoring_time)) fail("censoring time must be positive");
    if (!diagram.has_state(ev.visited_states.front()) || !diagram.is_initial(ev.visited_states.front())) {
      fail("path must start in an initial state");
    }
    double prev = 0.0;
    for (std::size_t l = 0; l < ev.transition_times.size(); ++l) {
      int from = ev.visited_states[l];
      int to = ev.visited_states[l + 1];
      if (!diagram.permitted(from, to)) fail("transition " + to_string(Transition{from, to}) + " not permitted");
      double t = ev.transition_times[l];
      if (!(t > prev)) throw Error(ErrorCode::NonPositiveSojourn, "subject " + s.id);
      prev = t;
    }
    if (prev > ev.censoring_time) fail("transition after censoring time");
    if (!diagram.is_absorbing(ev.visited_states.back()) && !(ev.censoring_time > prev)) {
      throw Error(ErrorCode::NonPositiveSojourn, "subject " + s.id + " censored at entry");
    }
    for (double w : s.covariates) {
      if (!std::isfinite(w)) fail("covariate is not finite");
    }
    for (std::size_t j = 0; j < s.longitudinal.size(); ++j) {
      const auto& m = s.longitudinal[j];
      if (!std::isfinite(m.value) || !std::isfinite(m.time)) fail("measurement is not finite");
      if (m.time < 0.0 || m.time > ev.censoring_time) fail("measurement outside follow-up");
      if (j > 0 && m.time < s.longitudinal[j - 1].time) fail("measurements not sorted by time");
    }
  }
}

std::optional<std::size_t> path_position(const Subject& subject, int state) {
  const auto& path = subject.events.visited_states;
  for (std::size_t m = 0; m < path.size(); ++m) {
    if (path[m] == state) return m;
  }
  return std::nullopt;
}

std::vector<std::size_t> block_risk_set(const Cohort& cohort, const CrBlock& block) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    if (path_position(cohort.subjects[i], block.initial_state)) out.push_back(i);
  }
  return out;
}

BlockEvent block_event_data(const Subject& subject, const CrBlock& block) {
  auto pos = path_position(subject, block.initial_state);
  if (!pos) throw Error(ErrorCode::InvalidHistory, "subject " + subject.id + " not in block " + block.name());
  const auto& ev = subject.events;
  BlockEvent out;
  out.entry_time = *pos == 0 ? 0.0 : ev.transition_times[*pos - 1];
  if (*pos + 1 < ev.visited_states.size()) {
    out.sojourn = ev.transition_times[*pos] - out.entry_time;
    out.outcome = ev.visited_states[*pos + 1];
  } else {
    out.sojourn = ev.censoring_time - out.entry_time;
  }
  if (!(out.sojourn > 0.0)) {
    throw Error(ErrorCode::NonPositiveSojourn, "subject " + subject.id + " in block " + block.name());
  }
  return out;
}

namespace {

bool in_window(double t, const BlockEvent& ev) {
  double exit = ev.entry_time + ev.sojourn;
  if (t < ev.entry_time) return false;
  return ev.outcome ? t < exit : t <= exit;
}

bool before_exit(double t, const BlockEvent& ev) {
  double exit = ev.entry_time + ev.sojourn;
  return ev.outcome ? t < exit : t <= exit;
}

}  // namespace

std::vector<Measurement> block_window_measurements(const Subject& subject, const BlockEvent& event) {
  std::vector<Measurement> out;
  for (const auto& m : subject.longitudinal) {
    if (in_window(m.time, event)) out.push_back(m);
  }
  return out;
}

BlockData link_longitudinal(const Subject& subject, std::size_t subject_index, const CrBlock& block,
                            Linkage linkage) {
  BlockEvent ev = block_event_data(subject, block);
  BlockData out;
  out.subject_index = subject_index;
  out.entry_time = ev.entry_time;
  out.sojourn = ev.sojourn;
  out.outcome = ev.outcome;

  if (linkage == Linkage::Historical) {
    for (const auto& m : subject.longitudinal) {
      if (before_exit(m.time, ev)) out.measurements.push_back(m);
    }
    return out;
  }

  for (const auto& m : block_window_measurements(subject, ev)) {
    out.measurements.push_back({m.time - ev.entry_time, m.value});
  }
  if (out.measurements.empty()) {
    // LOCF: most recent record at or before entry, else the pre-baseline record.
    const Measurement* last = nullptr;
    for (const auto& m : subject.longitudinal) {
      if (m.time <= ev.entry_time) last = &m;
    }
    if (last == nullptr && subject.pre_baseline) last = &*subject.pre_baseline;
    if (last == nullptr) {
      throw Error(ErrorCode::NoImputableValue, "subject " + subject.id + " in block " + block.name());
    }
    out.measurements.push_back({0.0, last->value});
    out.imputed = true;
  }
  return out;
}

}  // namespace blockjm
