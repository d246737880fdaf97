#pragma once

// Loss functions with exact reverse-mode gradients for every learner, the
// eigen transforms between conditional and decoupled value functions, and
// the load-bucket cache-ratio estimator.
//
// Target actions are precomputed by the caller (trainer or test), so each
// loss is a deterministic function of the network parameters; that is what
// the finite-difference checks rely on.

#include <array>
#include <functional>
#include <utility>
#include <vector>

#include "carl/batch.hpp"
#include "carl/mlp.hpp"
#include "carl/types.hpp"

namespace carl::algos {

// Batched policy evaluation: states (n x sd) -> actions (n x ad).
using BatchPolicy =
    std::function<std::vector<double>(const std::vector<double>&, int)>;
BatchPolicy mlp_policy(const nn::Mlp& net);

std::vector<double> concat_state_action(const std::vector<double>& states,
                                        const std::vector<double>& actions,
                                        int n, int state_dim,
                                        int action_dim);

// Plain single-critic TD loss. The cache distinction is ignored: rows
// without an action keep the zero vector already present in the batch (a
// baseline-only concession, flagged by the caller).
// grads is resized/zeroed to the critic parameter count.
double ddpg_critic_loss(const Batch& b, const nn::Mlp& critic,
                        const nn::Mlp& critic_tgt,
                        const std::vector<double>& target_actions,
                        double gamma, std::vector<double>& grads);

// Twin-critic TD loss with min-target. predictor_actions supply the
// imputed action for cached rows; target_actions already carry the
// clipped smoothing noise.
double td3_critic_loss(const Batch& b, const nn::Mlp& c1, const nn::Mlp& c2,
                       const nn::Mlp& c1_tgt, const nn::Mlp& c2_tgt,
                       const std::vector<double>& predictor_actions,
                       const std::vector<double>& target_actions,
                       double gamma, std::vector<double>& g1,
                       std::vector<double>& g2);

// Conditional-critic TD loss: the predictor is Q0(s,a) when C_t=0 and
// Q1(s) otherwise; the bootstrap follows C_{t+1}. Gradients flow only to
// the predictor side. case_counts (when given) accumulates the four
// (C_t, C_{t+1}) cells in order 00, 01, 10, 11.
double carl_dl_loss(const Batch& b, const nn::Mlp& q0, const nn::Mlp& q1,
                    const nn::Mlp& q0_tgt, const nn::Mlp& q1_tgt,
                    const std::vector<double>& target_actions, double gamma,
                    std::vector<double>& g_q0, std::vector<double>& g_q1,
                    std::array<long, 4>* case_counts = nullptr);

// Immediate-reward regression: [r - V0(s,a)]^2 on real-time rows,
// [r - V1(s)]^2 on cached rows; mean over the batch.
double immediate_loss(const Batch& b, const nn::Mlp& v0, const nn::Mlp& v1,
                      std::vector<double>& g_v0, std::vector<double>& g_v1);

// Difference / load-weighted transform of the immediate values and its
// inverse on the long-term values.
inline std::pair<double, double> eigen_immediate(double v0, double v1,
                                                 double d0) {
  return {v0 - v1, d0 * v0 + (1.0 - d0) * v1};
}
inline std::pair<double, double> recover_q(double lambda_a, double lambda_b,
                                           double d0) {
  return {(1.0 - d0) * lambda_a + lambda_b, -d0 * lambda_a + lambda_b};
}

// TD loss of the self-contained eigen value: the target
// Gamma_b + gamma * Lambda_b^-(s', mu^-(s')) depends on (s, a, s', bucket)
// only, never on the sampled cache bits. The immediate heads are read
// with stopped gradients. predictor_actions carry a_t, or the imputed
// policy action where a_t is absent.
double eigen_td_loss(const Batch& b, const nn::Mlp& lambda_b,
                     const nn::Mlp& lambda_b_tgt, const nn::Mlp& v0,
                     const nn::Mlp& v1,
                     const std::vector<double>& predictor_actions,
                     const std::vector<double>& target_actions,
                     const std::vector<double>& d0_per_row, double gamma,
                     std::vector<double>& g_rho);

// Per-time-of-day-bucket empirical frequencies of the two service paths,
// with pseudo-count smoothing.
class CacheRatioEstimator {
 public:
  CacheRatioEstimator(double bucket_s, double alpha);

  void observe(double sim_time, CacheState c);
  // (d0, d1), smoothed; throws std::runtime_error when alpha == 0 and the
  // bucket is empty.
  std::pair<double, double> query(double sim_time) const;

  int n_buckets() const { return static_cast<int>(n_realtime_.size()); }
  int bucket_of(double sim_time) const;
  long realtime_count(int b) const { return n_realtime_[b]; }
  long cached_count(int b) const { return n_cached_[b]; }

 private:
  double bucket_s_, alpha_;
  std::vector<long> n_realtime_, n_cached_;
};

// Value surface the actor climbs: q(s,a) with its action gradient.
struct CriticForPolicy {
  virtual ~CriticForPolicy() = default;
  virtual void eval(const std::vector<double>& states, int n,
                    const std::vector<double>& actions,
                    std::vector<double>& q, std::vector<double>& dq_da) = 0;
};

// One gradient-ascent step on mean q(s, mu(s)). Returns the objective
// value before the update.
double actor_step(const std::vector<double>& states, int n, nn::Mlp& actor,
                  CriticForPolicy& critic, nn::Adam& opt, double grad_clip);

}  // namespace carl::algos
