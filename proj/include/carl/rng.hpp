#pragma once

// Seeded RNG with hand-rolled distributions. std::mt19937_64 output is
// pinned by the standard; the distribution algorithms below are written
// out explicitly so streams are reproducible independent of the standard
// library implementation.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace carl {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

  // Box-Muller, polar form
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  double exponential(double rate) {
    return -std::log(1.0 - uniform()) / rate;
  }

  // Knuth's method; fine for the small rates used here.
  std::uint64_t poisson(double lambda) {
    const double limit = std::exp(-lambda);
    double p = 1.0;
    std::uint64_t k = 0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  // uniform integer in [0, n), n > 0, rejection-sampled
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t rem = std::uint64_t(-1) % n;
    const std::uint64_t bound = std::uint64_t(-1) - rem;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x > bound);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[uniform_int(i)]);
  }

  // Derive an independent child stream (e.g. per seed x method job).
  Rng child(std::uint64_t tag) {
    return Rng(engine_() ^ (0x9e3779b97f4a7c15ULL * (tag + 1)));
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace carl
