#pragma once

// Run configuration and the `key = value` config file format. Every key
// is registered in one table (see config.cpp); unknown keys are errors.
// Vector values are comma-separated; '#' starts a comment anywhere on a
// line.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace carl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // mdp
  double gamma = 0.8;
  int list_size = 40;   // L, candidates kept per real-time computation
  int shown_size = 8;   // K, items shown per request
  int n_heads = 5;      // prediction heads == action dimension
  double session_gap_s = 900.0;
  int cache_capacity = 128;
  std::string fusion = "linear";  // "linear" | "multiplicative"
  double fusion_eps = 1e-6;

  // state layout
  int profile_dim = 8;

  // reward model (vectors are per head)
  std::vector<double> head_scale{1.2, 0.6, 0.8, 1.0, 0.3};
  std::vector<double> cache_ratio{0.85, 0.68, 0.54, 0.80, 0.75};
  double tau_stale_s = 1800.0;
  double x_max = 4.0;
  std::vector<double> quality_mean{2.2, 1.6, 1.8, 2.2, 1.2};
  std::vector<double> latent_load{0.6, 0.15, 0.3, 0.4, 0.05};
  std::vector<double> obs_noise{0.12, 0.90, 0.35, 0.15, 1.20};
  double item_noise = 0.11;
  double user_spread = 0.3;
  int n_candidates = 50;
  double cache_ttl_s = 240.0;

  // user dynamics
  double fatigue_rate = 1.0;
  double fatigue_recovery_s = 7200.0;
  double hazard_base = 0.02;
  double hazard_fatigue = 0.004;
  double hazard_reward = 0.09;
  double think_time_s = 3.0;
  double watch_delay_scale = 0.6;
  double reward_ref = 20.0;

  // traffic profile and router
  double qps_base = 1.5;
  double qps_peak_amplitude = 3.0;
  std::vector<double> qps_peak_times{0.50, 0.79};
  std::vector<double> qps_peak_width{0.07, 0.05};
  double qps_noise_std = 0.0;
  std::string router = "queue";  // "queue" | "prob"
  double service_rate = 0.43;    // completions/s per in-flight slot
  int queue_limit = 7;
  double req_per_session_est = 9.0;
  int users = 2000;

  // learners
  int batch_size = 64;
  int replay_capacity = 200000;
  int warmup_requests = 1500;
  double critic_lr = 1e-3;
  double actor_lr = 3e-4;
  double polyak_tau = 0.005;
  double grad_clip = 5.0;
  int actor_warmup_steps = 800;
  double exploration_std = 0.3;
  double target_noise_std = 0.2;
  double target_noise_clip = 0.5;
  int actor_delay = 2;
  bool reward_norm = true;
  double train_every = 16.0;  // requests collected per gradient step
  int train_steps = 4000;
  std::vector<int> actor_hidden{64, 64};
  std::vector<int> critic_hidden{128, 128};

  // cache-ratio estimator
  double d_bucket_s = 600.0;
  double d_alpha = 1.0;

  // cem baseline
  int cem_pop = 24;
  int cem_elites = 6;
  int cem_generations = 12;
  int cem_eval_sessions = 150;
  double cem_init_std = 0.8;

  // experiment budgets
  double train_days = 1.0;
  double eval_days = 5.0;

  // runtime
  std::string kernel_backend = "auto";

  // derived state layout
  int history_dim() const { return n_heads + 3; }
  int context_dim() const { return 4; }
  int candidate_stats_dim() const { return 6 * n_heads; }
  int state_dim() const {
    return profile_dim + history_dim() + context_dim() +
           candidate_stats_dim();
  }
  int action_dim() const { return n_heads; }
};

// Throws ConfigError naming the offending key/value.
RunConfig load_config(const std::string& path);
void apply_config_text(RunConfig& cfg, const std::string& text);
void validate_config(const RunConfig& cfg);

// All documented keys, one per line, with current values of `cfg`.
std::string dump_config(const RunConfig& cfg);

}  // namespace carl
