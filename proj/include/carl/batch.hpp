#pragma once

// Flattened minibatch in structure-of-arrays form; the unit the loss
// functions consume. Actions are zero-filled where absent (cached
// requests), with has_action recording which rows carry a real one.

#include <cstdint>
#include <span>
#include <vector>

#include "carl/types.hpp"

namespace carl::algos {

struct Batch {
  int n = 0;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> states;       // n x state_dim
  std::vector<double> next_states;  // n x state_dim
  std::vector<double> actions;      // n x action_dim
  std::vector<std::uint8_t> has_action;
  std::vector<double> rewards;
  std::vector<std::uint8_t> cache;       // C_t
  std::vector<std::uint8_t> next_cache;  // C_{t+1}
  std::vector<std::uint8_t> done;
  std::vector<double> sim_times;

  static Batch from_transitions(std::span<const Transition> ts,
                                int state_dim, int action_dim);

  const double* state(int i) const { return states.data() + i * state_dim; }
  const double* next_state(int i) const {
    return next_states.data() + i * state_dim;
  }
};

}  // namespace carl::algos
