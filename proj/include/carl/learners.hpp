#pragma once

// The gradient-based learners: plain DDPG and TD3 baselines (cache-blind),
// and the two cache-aware variants — direct learning of the conditional
// critics, and eigenfunction learning of the self-contained pair
// (immediate heads + load-weighted long-term head).

#include <array>
#include <memory>
#include <string>

#include "carl/config.hpp"
#include "carl/losses.hpp"
#include "carl/mlp.hpp"
#include "carl/rng.hpp"
#include "carl/types.hpp"

namespace carl::algos {

enum class Method { cem, ddpg, td3, carl_dl, carl_el };
Method parse_method(const std::string& name);  // throws on unknown
const char* method_name(Method m);

struct TrainStats {
  double critic_loss = 0.0;  // normalized units, the method's own loss
};

// Policy-value means over a batch, unnormalized; computed at the
// diagnostics cadence rather than every step.
struct DiagValues {
  double mean_q0 = 0.0;
  double mean_q1 = 0.0;
  double mean_lambda_a = 0.0;
};

// Running mean of real-time rewards; keeps critic magnitudes O(1).
class RewardNormalizer {
 public:
  explicit RewardNormalizer(bool enabled) : enabled_(enabled) {}
  void observe(const Transition& t) {
    if (t.cache_state == CacheState::RealTime) {
      sum_ += t.reward;
      ++n_;
    }
  }
  double scale() const {
    if (!enabled_ || n_ == 0) return 1.0;
    return std::max(sum_ / static_cast<double>(n_), 1e-6);
  }

 private:
  bool enabled_;
  double sum_ = 0.0;
  long n_ = 0;
};

class Learner {
 public:
  Learner(const RunConfig& cfg, std::uint64_t seed);
  virtual ~Learner() = default;

  virtual Method method() const = 0;
  // Takes the batch by value: rewards are normalized in place.
  virtual TrainStats train_step(Batch batch) = 0;

  Action act(const UserState& s) const;
  Action act_explore(const UserState& s, Rng& rng) const;

  virtual void observe(const Transition& t) { norm_.observe(t); }

  // Unnormalized value estimates, used by the common evaluation loss.
  virtual double value_predictor(const Transition& t) const = 0;
  virtual double value_bootstrap(const UserState& next, CacheState c2,
                                 double sim_time) const = 0;
  // (Q0(s, mu(s)), Q1(s)); Q1 is NaN for the cache-blind baselines.
  virtual std::pair<double, double> q0_q1_flat(
      const std::vector<double>& flat_state, double sim_time) const = 0;
  std::pair<double, double> q0_q1(const UserState& s) const {
    return q0_q1_flat(s.flatten(), s.time_of_day() * 86400.0);
  }

  // Mean value estimates at (s, mu(s)) over a batch of states.
  DiagValues diag_values(const Batch& b) const;

  virtual void save_checkpoints(const std::string& dir) const;

  const nn::Mlp& actor() const { return actor_; }
  double reward_scale() const { return norm_.scale(); }
  double gamma() const { return gamma_; }

  // Replaces the target policy with a fixed one and freezes the actor
  // (used when verifying critics against the tabular solution).
  void set_fixed_policy(BatchPolicy policy);

  // Multiplies every optimizer's learning rate (step-size decay for
  // convergence runs).
  virtual void scale_lr(double factor);

  // Snapshot / restore of the policy parameters (checkpoint selection).
  const std::vector<double>& actor_params() const { return actor_.params(); }
  void restore_actor(const std::vector<double>& params);

 protected:
  int state_dim_, action_dim_;
  std::vector<double> greedy_action(const std::vector<double>& flat) const;
  double gamma_, tau_, grad_clip_, exploration_std_;
  double critic_lr_, actor_lr_;
  double target_noise_std_, target_noise_clip_;
  int actor_delay_;
  int actor_warmup_steps_;
  long train_calls_ = 0;
  bool update_actor_ = true;
  // critics settle before the first policy update
  bool actor_turn() {
    ++train_calls_;
    return update_actor_ && train_calls_ > actor_warmup_steps_;
  }
  nn::Mlp actor_, actor_tgt_;
  nn::Adam actor_opt_;
  RewardNormalizer norm_;
  Rng noise_rng_;
  BatchPolicy fixed_policy_;  // empty unless set_fixed_policy was called

  std::vector<double> target_policy_actions(const std::vector<double>& states,
                                            int n) const;
  // a_t where present, the target policy's action elsewhere
  std::vector<double> imputed_actions(const Batch& b) const;
  void normalize_rewards(Batch& b) const;
  std::vector<int> critic_dims(const RunConfig& cfg, bool with_action) const;
};

class DdpgLearner : public Learner {
 public:
  DdpgLearner(const RunConfig& cfg, std::uint64_t seed);
  Method method() const override { return Method::ddpg; }
  TrainStats train_step(Batch b) override;
  double value_predictor(const Transition& t) const override;
  double value_bootstrap(const UserState& next, CacheState c2,
                         double sim_time) const override;
  std::pair<double, double> q0_q1_flat(const std::vector<double>& flat,
                                       double sim_time) const override;
  void save_checkpoints(const std::string& dir) const override;
  void scale_lr(double factor) override;
  const nn::Mlp& critic() const { return critic_; }

 private:
  nn::Mlp critic_, critic_tgt_;
  nn::Adam critic_opt_;
};

class Td3Learner : public Learner {
 public:
  Td3Learner(const RunConfig& cfg, std::uint64_t seed);
  Method method() const override { return Method::td3; }
  TrainStats train_step(Batch b) override;
  double value_predictor(const Transition& t) const override;
  double value_bootstrap(const UserState& next, CacheState c2,
                         double sim_time) const override;
  std::pair<double, double> q0_q1_flat(const std::vector<double>& flat,
                                       double sim_time) const override;
  void save_checkpoints(const std::string& dir) const override;
  void scale_lr(double factor) override;

 private:
  nn::Mlp c1_, c2_, c1_tgt_, c2_tgt_;
  nn::Adam opt1_, opt2_;
  long step_count_ = 0;
  double min_q(const std::vector<double>& sa) const;
};

class CarlDlLearner : public Learner {
 public:
  CarlDlLearner(const RunConfig& cfg, std::uint64_t seed);
  Method method() const override { return Method::carl_dl; }
  TrainStats train_step(Batch b) override;
  double value_predictor(const Transition& t) const override;
  double value_bootstrap(const UserState& next, CacheState c2,
                         double sim_time) const override;
  std::pair<double, double> q0_q1_flat(const std::vector<double>& flat,
                                       double sim_time) const override;
  void save_checkpoints(const std::string& dir) const override;
  void scale_lr(double factor) override;
  const std::array<long, 4>& case_counts() const { return case_counts_; }
  const nn::Mlp& q0_net() const { return q0_; }
  const nn::Mlp& q1_net() const { return q1_; }

 private:
  nn::Mlp q0_, q1_, q0_tgt_, q1_tgt_;
  nn::Adam opt0_, opt1_;
  std::array<long, 4> case_counts_{0, 0, 0, 0};
};

class CarlElLearner : public Learner {
 public:
  CarlElLearner(const RunConfig& cfg, std::uint64_t seed);
  Method method() const override { return Method::carl_el; }
  TrainStats train_step(Batch b) override;
  void observe(const Transition& t) override;
  double value_predictor(const Transition& t) const override;
  double value_bootstrap(const UserState& next, CacheState c2,
                         double sim_time) const override;
  std::pair<double, double> q0_q1_flat(const std::vector<double>& flat,
                                       double sim_time) const override;
  void save_checkpoints(const std::string& dir) const override;
  void scale_lr(double factor) override;

  const nn::Mlp& v0_net() const { return v0_; }
  const nn::Mlp& v1_net() const { return v1_; }
  const nn::Mlp& lambda_b_net() const { return lambda_b_; }
  const CacheRatioEstimator& estimator() const { return d_; }
  CacheRatioEstimator& estimator() { return d_; }

  // Values recovered from the eigen pair. lambda_a IS V0(s,a) - V1(s):
  // there is no separately learned difference head, so the reported gap
  // cannot drift from the immediate heads.
  struct RecoveredQ {
    double q0 = 0.0;
    double q1 = 0.0;
    double lambda_a = 0.0;
  };
  RecoveredQ recovered_q(const std::vector<double>& flat_state,
                         const std::vector<double>& action,
                         double sim_time) const;

 private:
  nn::Mlp v0_, v1_, lambda_b_, lambda_b_tgt_;
  nn::Adam opt_v0_, opt_v1_, opt_lb_;
  CacheRatioEstimator d_;
};

// Factory for the gradient-based methods (Method::cem has no Learner).
std::unique_ptr<Learner> make_learner(Method m, const RunConfig& cfg,
                                      std::uint64_t seed);

}  // namespace carl::algos
