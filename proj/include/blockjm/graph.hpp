#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace blockjm {

struct Transition {
  int from = 0;
  int to = 0;

  auto operator<=>(const Transition&) const = default;
};

std::string to_string(const Transition& t);  // "0->1"

/// Directed acyclic multistate diagram. Transitions are kept sorted by
/// (from, to); that order defines parameter layout everywhere downstream.
class TransitionDiagram {
 public:
  /// Validates and builds a diagram. Throws UnknownState, SelfLoop or
  /// CyclicDiagram.
  static TransitionDiagram build(std::vector<int> states, std::vector<Transition> transitions);

  const std::vector<int>& states() const { return states_; }
  const std::vector<Transition>& transitions() const { return transitions_; }

  bool has_state(int s) const;
  bool permitted(int from, int to) const;
  std::optional<std::size_t> transition_index(int from, int to) const;

  /// Destinations reachable in one step from `from`, ascending.
  std::vector<int> targets(int from) const;
  bool is_initial(int s) const;
  bool is_absorbing(int s) const;

 private:
  std::vector<int> states_;
  std::vector<Transition> transitions_;
};

/// Competing-risks block: one origin state and its out-neighbourhood.
struct CrBlock {
  int initial_state = 0;
  std::vector<int> absorbing_states;

  std::vector<Transition> transitions() const;
  std::string name() const;  // "cr_0"
};

/// Single-transition block, linked to the CR block sharing its origin.
struct StBlock {
  int from_state = 0;
  int to_state = 0;
  std::size_t parent_cr_block = 0;

  Transition transition() const { return {from_state, to_state}; }
  std::string name() const;  // "st_0_1"
};

std::vector<CrBlock> decompose_cr(const TransitionDiagram& diagram);
std::vector<StBlock> decompose_st(const TransitionDiagram& diagram);

}  // namespace blockjm
