#include "blockjm/graph.hpp"

#include <algorithm>
#include <map>

#include "blockjm/error.hpp"

namespace blockjm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::CyclicDiagram: return "CyclicDiagram";
    case ErrorCode::UnknownState: return "UnknownState";
    case ErrorCode::SelfLoop: return "SelfLoop";
    case ErrorCode::InvalidHistory: return "InvalidHistory";
    case ErrorCode::NoImputableValue: return "NoImputableValue";
    case ErrorCode::NonPositiveSojourn: return "NonPositiveSojourn";
    case ErrorCode::NonFiniteIntensity: return "NonFiniteIntensity";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InitializationFailed: return "InitializationFailed";
    case ErrorCode::AllDivergent: return "AllDivergent";
    case ErrorCode::DegenerateTail: return "DegenerateTail";
    case ErrorCode::SubjectMismatch: return "SubjectMismatch";
    case ErrorCode::UnknownParameter: return "UnknownParameter";
    case ErrorCode::RootBracketFailure: return "RootBracketFailure";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::string to_string(const Transition& t) {
  return std::to_string(t.from) + "->" + std::to_string(t.to);
}

TransitionDiagram TransitionDiagram::build(std::vector<int> states,
                                           std::vector<Transition> transitions) {
  std::sort(states.begin(), states.end());
  states.erase(std::unique(states.begin(), states.end()), states.end());
  for (int s : states) {
    if (s < 0) throw Error(ErrorCode::UnknownState, "state ids must be non-negative");
  }
  auto known = [&](int s) { return std::binary_search(states.begin(), states.end(), s); };
  for (const auto& t : transitions) {
    if (!known(t.from) || !known(t.to)) {
      throw Error(ErrorCode::UnknownState, "transition " + to_string(t) + " uses an undeclared state");
    }
    if (t.from == t.to) throw Error(ErrorCode::SelfLoop, "transition " + to_string(t));
  }
  std::sort(transitions.begin(), transitions.end());
  transitions.erase(std::unique(transitions.begin(), transitions.end()), transitions.end());

  // Kahn's algorithm; leftover states sit on a cycle.
  std::map<int, int> indegree;
  for (int s : states) indegree[s] = 0;
  for (const auto& t : transitions) ++indegree[t.to];
  std::vector<int> ready;
  for (auto [s, d] : indegree) {
    if (d == 0) ready.push_back(s);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    int s = ready.back();
    ready.pop_back();
    ++visited;
    for (const auto& t : transitions) {
      if (t.from == s && --indegree[t.to] == 0) ready.push_back(t.to);
    }
  }
  if (visited != states.size()) throw Error(ErrorCode::CyclicDiagram, "transition graph has a cycle");

  TransitionDiagram d;
  d.states_ = std::move(states);
  d.transitions_ = std::move(transitions);
  return d;
}

bool TransitionDiagram::has_state(int s) const {
  return std::binary_search(states_.begin(), states_.end(), s);
}

bool TransitionDiagram::permitted(int from, int to) const {
  return std::binary_search(transitions_.begin(), transitions_.end(), Transition{from, to});
}

std::optional<std::size_t> TransitionDiagram::transition_index(int from, int to) const {
  auto it = std::lower_bound(transitions_.begin(), transitions_.end(), Transition{from, to});
  if (it == transitions_.end() || *it != Transition{from, to}) return std::nullopt;
  return static_cast<std::size_t>(it - transitions_.begin());
}

std::vector<int> TransitionDiagram::targets(int from) const {
  std::vector<int> out;
  for (const auto& t : transitions_) {
    if (t.from == from) out.push_back(t.to);
  }
  return out;
}

bool TransitionDiagram::is_initial(int s) const {
  return std::none_of(transitions_.begin(), transitions_.end(),
                      [s](const Transition& t) { return t.to == s; });
}

bool TransitionDiagram::is_absorbing(int s) const {
  return std::none_of(transitions_.begin(), transitions_.end(),
                      [s](const Transition& t) { return t.from == s; });
}

std::vector<Transition> CrBlock::transitions() const {
  std::vector<Transition> out;
  out.reserve(absorbing_states.size());
  for (int k : absorbing_states) out.push_back({initial_state, k});
  return out;
}

std::string CrBlock::name() const { return "cr_" + std::to_string(initial_state); }

std::string StBlock::name() const {
  return "st_" + std::to_string(from_state) + "_" + std::to_string(to_state);
}

std::vector<CrBlock> decompose_cr(const TransitionDiagram& diagram) {
  std::vector<CrBlock> blocks;
  for (const auto& t : diagram.transitions()) {
    if (blocks.empty() || blocks.back().initial_state != t.from) {
      blocks.push_back({t.from, {}});
    }
    blocks.back().absorbing_states.push_back(t.to);
  }
  return blocks;
}

std::vector<StBlock> decompose_st(const TransitionDiagram& diagram) {
  std::vector<StBlock> blocks;
  std::size_t parent = 0;
  int current = diagram.transitions().empty() ? 0 : diagram.transitions().front().from;
  for (const auto& t : diagram.transitions()) {
    if (t.from != current) {
      ++parent;
      current = t.from;
    }
    blocks.push_back({t.from, t.to, parent});
  }
  return blocks;
}

}  // namespace blockjm
