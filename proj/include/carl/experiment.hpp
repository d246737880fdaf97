#pragma once

// Experiment orchestration: the collect/train pipeline per method, the
// frozen-policy evaluation, the cross-method report with relative
// improvements over CEM, and CSV/SVG emission.

#include <memory>
#include <string>
#include <vector>

#include "carl/cem.hpp"
#include "carl/config.hpp"
#include "carl/env.hpp"
#include "carl/learners.hpp"
#include "carl/replay.hpp"

namespace carl::harness {

std::uint64_t mix_seed(std::uint64_t seed, const std::string& tag);

struct DiagRow {
  long step = 0;
  double critic_loss = 0, mean_q0 = 0, mean_q1 = 0, mean_lambda_a = 0;
  double mean_reward_rt = 0, mean_reward_cached = 0, cached_fraction = 0;
};
std::string diagnostics_header();
std::string diagnostics_row(const DiagRow& r);

struct TrainOutput {
  algos::Method method = algos::Method::cem;
  std::unique_ptr<algos::Learner> learner;  // null for CEM
  Action cem_action;
  std::vector<DiagRow> diagnostics;
  double final_train_loss = 0.0;  // EMA of the method's own critic loss
};

TrainOutput train_method(algos::Method m, const RunConfig& cfg,
                         std::uint64_t seed);

struct EvalOutput {
  double session_watch = 0.0;  // mean engagement per session
  double daily_watch = 0.0;    // mean engagement per active user-day
  double critic_loss = 0.0;    // common TD residual, unnormalized units
  double cached_rt_ratio = 0.0;
  std::uint64_t sessions = 0;
  std::vector<double> q0_curve, q1_curve;  // per time-of-day bucket
  std::vector<double> day_qps, day_cached;
};

// Held-out transitions produced by a fixed reference policy; the common
// yardstick for cross-method critic-loss comparison.
std::vector<Transition> reference_transitions(const RunConfig& cfg,
                                              std::uint64_t seed,
                                              std::size_t max_n = 24000);

// Mean TD residual of the learner's critics on the given transitions, in
// unnormalized reward units.
double critic_loss_on(const algos::Learner& learner,
                      const std::vector<Transition>& ts);

// Evaluates the frozen policy on a fresh simulator. When `reference` is
// non-null, critic loss and value curves are computed on it (identical
// inputs for every method under the same seed); otherwise on transitions
// collected from the evaluation run itself.
EvalOutput evaluate_method(const RunConfig& cfg, const TrainOutput& trained,
                           std::uint64_t eval_seed,
                           const std::vector<Transition>* reference =
                               nullptr);

struct MethodSeedResult {
  algos::Method method = algos::Method::cem;
  std::uint64_t seed = 0;
  EvalOutput eval;
  double final_train_loss = 0.0;
};

struct ExperimentReport {
  std::vector<algos::Method> methods;
  std::vector<std::uint64_t> seeds;
  std::vector<MethodSeedResult> rows;  // method-major, then seed
  std::vector<std::string> flags;     // ordering inversions, not failures

  const MethodSeedResult* find(algos::Method m, std::uint64_t seed) const;
  // across-seed (mean, std) of a per-run metric
  std::pair<double, double> aggregate(
      algos::Method m,
      const std::function<double(const MethodSeedResult&)>& f) const;
};

ExperimentReport run_experiment(const RunConfig& cfg,
                                const std::vector<algos::Method>& methods,
                                const std::vector<std::uint64_t>& seeds);

// report.csv, report_seeds.csv, curves.csv, day.csv, flags.txt
void write_report_files(const ExperimentReport& rep, const RunConfig& cfg,
                        const std::string& dir);

// Renders qps_day.svg, q_curves.svg, method_rewards.svg from the CSVs
// written by write_report_files.
void emit_plots(const std::string& report_dir, const std::string& out_dir);

// Session accounting used by evaluation and the CEM objective: groups a
// user's requests by the inactivity rule and accumulates watch time.
class SessionWatchTracker {
 public:
  explicit SessionWatchTracker(double gap_s) : gap_s_(gap_s) {}
  void feed(const RequestRecord& r);
  void flush();
  double mean_session_watch() const {
    return n_sessions_ ? watch_sum_ / n_sessions_ : 0.0;
  }
  // mean per (user, day) with at least one request
  double mean_daily_watch() const {
    return n_user_days_ ? day_sum_ / n_user_days_ : 0.0;
  }
  std::uint64_t sessions() const { return n_sessions_; }

 private:
  struct PerUser {
    double session_sum = 0.0;
    double last_time = -1.0;
    std::map<long, double> day_sums;
  };
  double gap_s_;
  std::map<std::uint64_t, PerUser> users_;
  double watch_sum_ = 0.0;
  std::uint64_t n_sessions_ = 0;
  double day_sum_ = 0.0;
  std::uint64_t n_user_days_ = 0;
};

}  // namespace carl::harness
