#pragma once

// Seeded simulator of users, items, the ranking/fusion step, the per-user
// result cache and the load-based traffic router. A request is served in
// real time when the router admits it (the policy picks fusion weights,
// the top K of L ranked items are shown, ranks K+1..L refill the cache)
// or from the cache head otherwise. Item latents are derived from a hash
// of the item id, so cached items can be re-evaluated without storing
// ground truth in the buffer.

#include <cstdint>
#include <functional>
#include <memory>
#include <queue>
#include <stdexcept>
#include <vector>

#include "carl/config.hpp"
#include "carl/rng.hpp"
#include "carl/types.hpp"

namespace carl::env {

struct EnvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ItemScores {
  std::vector<double> x;
};

enum class FusionKind { linear, multiplicative };
FusionKind fusion_kind(const std::string& name);

// z = sum_i a_i x_i, or prod_i (x_i + eps)^(a_i) for the multiplicative
// form. Throws EnvError on dimension mismatch.
double fusion_score(const ItemScores& x, const Action& a, FusionKind kind,
                    double eps = 1e-6);

struct Candidate {
  std::uint64_t item_id = 0;
  std::vector<double> true_q;  // per-head true quality
  std::vector<double> pred;    // per-head predicted score
};

struct RankSplit {
  std::vector<Candidate> shown;   // top K by fused score
  std::vector<Candidate> cached;  // ranks K+1..L
};

// Sorts descending by fused predicted score, ties broken by smaller
// item_id. Throws EnvError when fewer than L candidates are offered.
RankSplit rank_and_split(std::vector<Candidate> candidates, const Action& a,
                         int list_size, int shown_size, FusionKind kind,
                         double eps = 1e-6);

// Diurnal request-rate profile; always strictly positive.
struct QpsProfile {
  double base = 1.0;
  double amplitude = 0.0;
  std::vector<double> peak_times;   // day fractions
  std::vector<double> peak_widths;  // day fractions
  double noise_std = 0.0;

  static QpsProfile from_config(const RunConfig& cfg);
  double at(double time_of_day) const;  // deterministic part
};

// Erlang-B blocking probability of a loss system with `servers` slots and
// `offered` erlangs of load.
double erlang_b(int servers, double offered);

// Admission controller. route() decides one arrival at `now`;
// advance(now) first completes due real-time computations.
class Router {
 public:
  virtual ~Router() = default;
  virtual void advance(double now) = 0;
  virtual CacheState route(double now, Rng& rng) = 0;
  // Unconditional real-time admission (cache-underflow override).
  virtual void force_admit(double now) = 0;
  virtual long queue_len() const = 0;

  long emitted_realtime = 0;
  long completed = 0;
};

// Queue-based reference: admit while fewer than queue_limit computations
// are in flight; each admitted computation finishes 1/service_rate
// seconds later.
class QueueRouter : public Router {
 public:
  QueueRouter(int queue_limit, double service_rate);
  void advance(double now) override;
  CacheState route(double now, Rng& rng) override;
  void force_admit(double now) override;
  long queue_len() const override {
    return static_cast<long>(in_flight_.size());
  }

 private:
  int queue_limit_;
  double service_time_;
  std::priority_queue<double, std::vector<double>, std::greater<>>
      in_flight_;
};

// Probabilistic variant for variance-controlled training: caches with the
// Erlang-B blocking probability implied by the profile at that time.
class ProbRouter : public Router {
 public:
  ProbRouter(int queue_limit, double service_rate, QpsProfile profile);
  void advance(double now) override;
  CacheState route(double now, Rng& rng) override;
  void force_admit(double now) override;
  long queue_len() const override { return pseudo_in_flight_; }

 private:
  int queue_limit_;
  double service_rate_;
  QpsProfile profile_;
  long pseudo_in_flight_ = 0;
};

std::unique_ptr<Router> make_router(const RunConfig& cfg);

struct SyntheticUser {
  std::uint64_t id = 0;
  std::vector<double> profile;
  std::vector<double> affinity;        // per-head mean quality
  std::vector<double> engagement_mix;  // head weights driving watch time
  double fatigue = 0.0;
  std::vector<double> ema;  // per-head engagement history
  double last_reward = 0.0;
  int session_requests = 0;
  double session_start = 0.0;
  double last_request_time = -1.0;
  bool in_session = false;
  double eligible_time = 0.0;
  CacheBuffer cache;

  explicit SyntheticUser(std::size_t cache_capacity) : cache(cache_capacity) {}
};

struct Feedback {
  double reward = 0.0;                  // watch-time seconds
  std::vector<double> head_engagement;  // per head, summed over items
  double mean_quality = 0.0;            // mix-weighted true quality
  double mean_stale_mult = 0.0;
};

// Engagement of one served request. Cached service multiplies each head
// by its degradation ratio and by exp(-staleness/tau) per item.
Feedback user_feedback(const SyntheticUser& user,
                       const std::vector<Candidate>& shown, CacheState c,
                       const std::vector<double>& staleness_s,
                       const RunConfig& cfg, Rng& rng);

struct TelemetryRow {
  double time = 0.0;
  double qps_target = 0.0;
  long arrivals = 0;
  long queue_len = 0;
  double cached_fraction = 0.0;  // over the trailing window
};

struct BucketStats {
  std::vector<long> requests, cached, realtime;
  std::vector<double> reward_rt, reward_cached;
};

class Simulator {
 public:
  using PolicyFn = std::function<Action(const UserState&)>;
  using RequestSink = std::function<void(const RequestRecord&)>;
  using TelemetrySink = std::function<void(const TelemetryRow&)>;

  struct Counters {
    std::uint64_t requests = 0, realtime = 0, cached = 0, forced = 0;
    std::uint64_t sessions = 0;
    double reward_rt_sum = 0.0, reward_cached_sum = 0.0;
    std::vector<double> head_rt_sum, head_cached_sum;
    // decomposition telemetry
    double qual_rt_sum = 0.0, qual_cached_sum = 0.0;
    double stale_mult_sum = 0.0;  // over cached requests
  };

  Simulator(const RunConfig& cfg, std::uint64_t seed);

  // Simulates `days` simulated days, invoking the sinks as it goes.
  void run(double days, const PolicyFn& policy, const RequestSink& on_request = {},
           const TelemetrySink& on_tick = {});

  struct RequestOutcome {
    RequestRecord record;
    bool session_ended = false;
    std::vector<std::uint64_t> shown_ids;
  };

  // One request for one user at time t with the router's suggestion;
  // exposed for tests, run() drives it internally.
  RequestOutcome process_request(int user_index, double t,
                                 CacheState suggested,
                                 const PolicyFn& policy);

  const Counters& counters() const { return counters_; }
  const BucketStats& bucket_stats() const { return buckets_; }
  Router& router() { return *router_; }
  const QpsProfile& profile() const { return profile_; }
  SyntheticUser& user(int idx) { return users_[idx]; }
  int n_users() const { return static_cast<int>(users_.size()); }
  double bucket_width_s() const { return cfg_.d_bucket_s; }

  // Starts a session for a user (testing hook; run() manages this).
  void start_session(int user_index, double t);

  std::vector<Candidate> draw_candidates(const SyntheticUser& u, int n);

 private:
  RunConfig cfg_;
  Rng rng_;
  QpsProfile profile_;
  std::unique_ptr<Router> router_;
  std::vector<SyntheticUser> users_;
  std::vector<int> idle_users_;
  FusionKind fusion_;
  Counters counters_;
  BucketStats buckets_;
  std::uint64_t next_item_id_ = 1;
  // trailing-window cache share for telemetry
  long window_requests_ = 0, window_cached_ = 0;

  UserState observe(const SyntheticUser& u, double t,
                    const std::vector<Candidate>* pool) const;
  void grow_state_stats(const SyntheticUser& u,
                        const std::vector<Candidate>& pool,
                        std::vector<double>& out) const;
  void end_session(SyntheticUser& u, double t);
};

// Binary-searches the queue limit whose peak-bucket cached fraction under
// the queue router is closest to `target` (the procedure used to pin the
// shipped default).
int calibrate_queue_limit(RunConfig cfg, double target, std::uint64_t seed,
                          double days = 1.0);

}  // namespace carl::env
