#include "carl/cem.hpp"

#include <algorithm>
#include <cmath>

namespace carl::algos {

CemResult cem_search(
    const std::function<double(const Action&, int generation)>& objective,
    const CemParams& params, Rng& rng) {
  const int d = params.dim;
  std::vector<double> mean(d, 0.5 * (Action::kLo + Action::kHi));
  std::vector<double> stddev(d, params.init_std);

  CemResult res;
  res.best_value = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, std::vector<double>>> scored(params.pop);

  for (int gen = 0; gen < params.generations; ++gen) {
    for (int p = 0; p < params.pop; ++p) {
      std::vector<double> x(d);
      for (int j = 0; j < d; ++j)
        x[j] = mean[j] + stddev[j] * rng.normal();
      Action a(std::move(x));
      a = a.clamped();
      const double value = objective(a, gen);
      scored[p] = {value, a.fusion};
      if (value > res.best_value) {
        res.best_value = value;
        res.best_action = a.fusion;
      }
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& l, const auto& r) {
                       return l.first > r.first;
                     });
    res.best_per_generation.push_back(scored.front().first);

    // refit to the elites
    for (int j = 0; j < d; ++j) {
      double m = 0.0;
      for (int e = 0; e < params.elites; ++e) m += scored[e].second[j];
      m /= params.elites;
      double var = 0.0;
      for (int e = 0; e < params.elites; ++e) {
        const double dx = scored[e].second[j] - m;
        var += dx * dx;
      }
      var /= params.elites;
      mean[j] = m;
      stddev[j] = std::sqrt(var) + params.std_floor;
    }
  }
  res.mean = mean;
  Action final_a(res.mean);
  res.mean = final_a.clamped().fusion;
  res.stddev = stddev;
  return res;
}

}  // namespace carl::algos
