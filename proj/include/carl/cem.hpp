#pragma once

// Cross-entropy search for the best constant fusion action: iterated
// Gaussian elite refitting over [0,3]^n.

#include <functional>
#include <vector>

#include "carl/rng.hpp"
#include "carl/types.hpp"

namespace carl::algos {

struct CemParams {
  int dim = 5;
  int pop = 24;
  int elites = 6;
  int generations = 12;
  double init_std = 0.8;
  double std_floor = 0.02;
};

struct CemResult {
  std::vector<double> mean;  // final distribution mean (clamped)
  std::vector<double> stddev;
  std::vector<double> best_action;  // best sampled action
  double best_value = 0.0;          // its objective value
  std::vector<double> best_per_generation;
};

// objective(action, generation) is maximized; actions passed to it are
// already clamped to [0,3]. The generation index lets callers reuse
// common random numbers within a generation.
CemResult cem_search(
    const std::function<double(const Action&, int generation)>& objective,
    const CemParams& params, Rng& rng);

}  // namespace carl::algos
