#include "carl/env.hpp"

#include <algorithm>
#include <cmath>

namespace carl::env {

namespace {

constexpr double kDay = 86400.0;
constexpr double kTwoPi = 6.283185307179586;

// Deterministic per-item latents from the item id, so cached items can be
// re-evaluated without storing ground truth.
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double hash_uniform(std::uint64_t id, std::uint64_t stream) {
  return static_cast<double>(
             splitmix64(id * 0x100000001b3ULL + stream) >> 11) *
         0x1.0p-53;
}

double hash_normal(std::uint64_t id, std::uint64_t stream) {
  const double u1 = hash_uniform(id, 2 * stream);
  const double u2 = hash_uniform(id, 2 * stream + 1);
  return std::sqrt(-2.0 * std::log(u1 + 1e-300)) * std::cos(kTwoPi * u2);
}

double clip(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

// Linear-interpolated percentile of an already sorted vector.
double percentile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * (sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - lo;
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

double stale_multiplier(double staleness_s, double tau) {
  if (!(tau > 0.0) || std::isinf(tau)) return 1.0;
  return std::exp(-staleness_s / tau);
}

}  // namespace

FusionKind fusion_kind(const std::string& name) {
  if (name == "linear") return FusionKind::linear;
  if (name == "multiplicative") return FusionKind::multiplicative;
  throw EnvError("unknown fusion kind '" + name + "'");
}

double fusion_score(const ItemScores& x, const Action& a, FusionKind kind,
                    double eps) {
  if (x.x.size() != a.fusion.size())
    throw EnvError("fusion_score: dimension mismatch");
  if (kind == FusionKind::linear) {
    double z = 0.0;
    for (std::size_t i = 0; i < x.x.size(); ++i) z += a.fusion[i] * x.x[i];
    return z;
  }
  double logz = 0.0;
  for (std::size_t i = 0; i < x.x.size(); ++i)
    logz += a.fusion[i] * std::log(x.x[i] + eps);
  return std::exp(logz);
}

RankSplit rank_and_split(std::vector<Candidate> candidates, const Action& a,
                         int list_size, int shown_size, FusionKind kind,
                         double eps) {
  if (static_cast<int>(candidates.size()) < list_size)
    throw EnvError("rank_and_split: candidate shortage (" +
                   std::to_string(candidates.size()) + " < L=" +
                   std::to_string(list_size) + ")");
  std::vector<std::pair<double, std::size_t>> order(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    order[i] = {fusion_score(ItemScores{candidates[i].pred}, a, kind, eps),
                i};
  std::sort(order.begin(), order.end(), [&](const auto& l, const auto& r) {
    if (l.first != r.first) return l.first > r.first;
    return candidates[l.second].item_id < candidates[r.second].item_id;
  });
  RankSplit out;
  out.shown.reserve(shown_size);
  out.cached.reserve(list_size - shown_size);
  for (int i = 0; i < shown_size; ++i)
    out.shown.push_back(std::move(candidates[order[i].second]));
  for (int i = shown_size; i < list_size; ++i)
    out.cached.push_back(std::move(candidates[order[i].second]));
  return out;
}

QpsProfile QpsProfile::from_config(const RunConfig& cfg) {
  QpsProfile p;
  p.base = cfg.qps_base;
  p.amplitude = cfg.qps_peak_amplitude;
  p.peak_times = cfg.qps_peak_times;
  p.peak_widths = cfg.qps_peak_width;
  p.noise_std = cfg.qps_noise_std;
  return p;
}

double QpsProfile::at(double time_of_day) const {
  double bump = 0.0;
  for (std::size_t i = 0; i < peak_times.size(); ++i) {
    double d = std::abs(time_of_day - peak_times[i]);
    d = std::min(d, 1.0 - d);  // wrap around midnight
    const double w = peak_widths[i];
    bump += std::exp(-0.5 * (d / w) * (d / w));
  }
  return base * (1.0 + amplitude * bump);
}

double erlang_b(int servers, double offered) {
  double b = 1.0;
  for (int k = 1; k <= servers; ++k) b = offered * b / (k + offered * b);
  return b;
}

QueueRouter::QueueRouter(int queue_limit, double service_rate)
    : queue_limit_(queue_limit), service_time_(1.0 / service_rate) {}

void QueueRouter::advance(double now) {
  while (!in_flight_.empty() && in_flight_.top() <= now) {
    in_flight_.pop();
    ++completed;
  }
}

CacheState QueueRouter::route(double now, Rng&) {
  if (queue_len() < queue_limit_) {
    in_flight_.push(now + service_time_);
    ++emitted_realtime;
    return CacheState::RealTime;
  }
  return CacheState::Cached;
}

void QueueRouter::force_admit(double now) {
  in_flight_.push(now + service_time_);
  ++emitted_realtime;
}

ProbRouter::ProbRouter(int queue_limit, double service_rate,
                       QpsProfile profile)
    : queue_limit_(queue_limit), service_rate_(service_rate),
      profile_(std::move(profile)) {}

void ProbRouter::advance(double) {
  // All admissions complete instantly in the probabilistic abstraction.
  completed = emitted_realtime;
  pseudo_in_flight_ = 0;
}

CacheState ProbRouter::route(double now, Rng& rng) {
  const double offered =
      profile_.at(time_of_day_fraction(now)) / service_rate_;
  const double p_cached = erlang_b(queue_limit_, offered);
  if (rng.uniform() < p_cached) return CacheState::Cached;
  ++emitted_realtime;
  ++completed;
  return CacheState::RealTime;
}

void ProbRouter::force_admit(double) {
  ++emitted_realtime;
  ++completed;
}

std::unique_ptr<Router> make_router(const RunConfig& cfg) {
  if (cfg.router == "queue")
    return std::make_unique<QueueRouter>(cfg.queue_limit, cfg.service_rate);
  return std::make_unique<ProbRouter>(cfg.queue_limit, cfg.service_rate,
                                      QpsProfile::from_config(cfg));
}

Feedback user_feedback(const SyntheticUser& user,
                       const std::vector<Candidate>& shown, CacheState c,
                       const std::vector<double>& staleness_s,
                       const RunConfig& cfg, Rng& rng) {
  const int n = cfg.n_heads;
  Feedback fb;
  fb.head_engagement.assign(n, 0.0);
  const bool cached = c == CacheState::Cached;
  for (std::size_t i = 0; i < shown.size(); ++i) {
    const double taste = rng.uniform(0.8, 1.2);
    const double stale = stale_multiplier(
        i < staleness_s.size() ? staleness_s[i] : 0.0, cfg.tau_stale_s);
    double quality = 0.0;
    for (int h = 0; h < n; ++h)
      quality += user.engagement_mix[h] * shown[i].true_q[h];
    const double watch = cfg.head_scale[0] * quality * taste *
                         (cached ? cfg.cache_ratio[0] : 1.0) * stale;
    fb.head_engagement[0] += watch;
    fb.mean_quality += quality;
    fb.mean_stale_mult += stale;
    for (int h = 1; h < n; ++h)
      fb.head_engagement[h] += cfg.head_scale[h] * shown[i].true_q[h] *
                               taste *
                               (cached ? cfg.cache_ratio[h] : 1.0) * stale;
  }
  fb.reward = fb.head_engagement[0];
  if (!shown.empty()) {
    fb.mean_quality /= static_cast<double>(shown.size());
    fb.mean_stale_mult /= static_cast<double>(shown.size());
  }
  return fb;
}

Simulator::Simulator(const RunConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(seed), profile_(QpsProfile::from_config(cfg)),
      router_(make_router(cfg)), fusion_(fusion_kind(cfg.fusion)) {
  const int n = cfg_.n_heads;
  counters_.head_rt_sum.assign(n, 0.0);
  counters_.head_cached_sum.assign(n, 0.0);
  const int nb =
      static_cast<int>(std::ceil(kDay / cfg_.d_bucket_s));
  buckets_.requests.assign(nb, 0);
  buckets_.cached.assign(nb, 0);
  buckets_.realtime.assign(nb, 0);
  buckets_.reward_rt.assign(nb, 0.0);
  buckets_.reward_cached.assign(nb, 0.0);

  users_.reserve(cfg_.users);
  for (int i = 0; i < cfg_.users; ++i) {
    SyntheticUser u(static_cast<std::size_t>(cfg_.cache_capacity));
    u.id = static_cast<std::uint64_t>(i);
    u.profile.resize(cfg_.profile_dim);
    for (auto& p : u.profile) p = rng_.normal();
    u.affinity.resize(n);
    u.engagement_mix.resize(n);
    double mix_sum = 0.0;
    for (int h = 0; h < n; ++h) {
      u.affinity[h] = cfg_.quality_mean[h] *
                      std::max(0.05, 1.0 + cfg_.user_spread * u.profile[h]);
      u.engagement_mix[h] = std::exp(2.6 * u.profile[h]);
      mix_sum += u.engagement_mix[h];
    }
    for (int h = 0; h < n; ++h) u.engagement_mix[h] /= mix_sum;
    u.ema.assign(n, 0.0);
    users_.push_back(std::move(u));
    idle_users_.push_back(i);
  }
}

std::vector<Candidate> Simulator::draw_candidates(const SyntheticUser& u,
                                                  int n) {
  std::vector<Candidate> out;
  out.reserve(n);
  const int nh = cfg_.n_heads;
  for (int i = 0; i < n; ++i) {
    Candidate c;
    c.item_id = next_item_id_++;
    c.true_q.resize(nh);
    c.pred.resize(nh);
    const double z = hash_normal(c.item_id, 0);
    for (int h = 0; h < nh; ++h) {
      const double idio = hash_normal(c.item_id, 1 + h);
      const double load = cfg_.latent_load[h];
      c.true_q[h] = clip(u.affinity[h] + cfg_.item_noise *
                                             (load * z + (1.0 - load) * idio),
                         0.0, cfg_.x_max);
      c.pred[h] = clip(c.true_q[h] +
                           cfg_.obs_noise[h] * hash_normal(c.item_id, 101 + h),
                       0.0, cfg_.x_max);
    }
    out.push_back(std::move(c));
  }
  return out;
}

void Simulator::grow_state_stats(const SyntheticUser&,
                                 const std::vector<Candidate>& pool,
                                 std::vector<double>& out) const {
  const int nh = cfg_.n_heads;
  std::vector<double> vals;
  vals.reserve(pool.size());
  static constexpr double kQuantiles[] = {0.1, 0.3, 0.5, 0.7, 0.9};
  for (int h = 0; h < nh; ++h) {
    vals.clear();
    double mean = 0.0;
    for (const auto& c : pool) {
      vals.push_back(c.pred[h]);
      mean += c.pred[h];
    }
    if (!vals.empty()) mean /= static_cast<double>(vals.size());
    std::sort(vals.begin(), vals.end());
    out.push_back(mean / cfg_.x_max);
    for (double q : kQuantiles)
      out.push_back(percentile_sorted(vals, q) / cfg_.x_max);
  }
}

UserState Simulator::observe(const SyntheticUser& u, double t,
                             const std::vector<Candidate>* pool) const {
  UserState s;
  s.profile = u.profile;
  const int nh = cfg_.n_heads;
  s.history_summary.reserve(cfg_.history_dim());
  for (int h = 0; h < nh; ++h) {
    const double denom =
        1.0 + cfg_.head_scale[h] * cfg_.shown_size * cfg_.quality_mean[h];
    s.history_summary.push_back(u.ema[h] / denom);
  }
  s.history_summary.push_back(u.fatigue / (10.0 + u.fatigue));
  s.history_summary.push_back(std::min(u.session_requests, 40) / 40.0);
  s.history_summary.push_back(u.last_reward / cfg_.reward_ref);
  const double tod = time_of_day_fraction(t);
  s.context = {tod, std::sin(kTwoPi * tod), std::cos(kTwoPi * tod),
               u.in_session
                   ? std::min((t - u.session_start) / 3600.0, 1.0)
                   : 0.0};
  s.candidate_stats.reserve(cfg_.candidate_stats_dim());
  if (pool) {
    grow_state_stats(u, *pool, s.candidate_stats);
  } else {
    s.candidate_stats.assign(cfg_.candidate_stats_dim(), 0.0);
  }
  return s;
}

void Simulator::start_session(int user_index, double t) {
  SyntheticUser& u = users_[user_index];
  if (u.last_request_time >= 0.0 && cfg_.fatigue_recovery_s > 0.0)
    u.fatigue *= std::exp(-(t - u.last_request_time) /
                          cfg_.fatigue_recovery_s);
  u.in_session = true;
  u.session_start = t;
  u.session_requests = 0;
  ++counters_.sessions;
}

void Simulator::end_session(SyntheticUser& u, double t) {
  u.in_session = false;
  u.eligible_time =
      t + 1.2 * cfg_.session_gap_s + rng_.exponential(1.0 / 1800.0);
}

Simulator::RequestOutcome Simulator::process_request(int user_index,
                                                     double t,
                                                     CacheState suggested,
                                                     const PolicyFn& policy) {
  SyntheticUser& u = users_[user_index];
  const int K = cfg_.shown_size;
  u.cache.evict_older_than(t - cfg_.cache_ttl_s);
  bool cached_req = suggested == CacheState::Cached;
  bool forced = false;
  if (cached_req && u.cache.size() < static_cast<std::size_t>(K)) {
    // Underflow: the environment forces a real-time computation.
    cached_req = false;
    forced = true;
    router_->force_admit(t);
  }
  const CacheState served =
      cached_req ? CacheState::Cached : CacheState::RealTime;

  RequestRecord rec;
  rec.user_id = u.id;
  rec.sim_time = t;
  rec.cache_state = served;
  rec.forced_realtime = forced;

  std::vector<Candidate> shown;
  std::vector<double> staleness;
  if (!cached_req) {
    std::vector<Candidate> pool = draw_candidates(u, cfg_.n_candidates);
    rec.state = observe(u, t, &pool);
    Action a = policy(rec.state).clamped();
    rec.action = a;
    RankSplit split = rank_and_split(std::move(pool), a, cfg_.list_size, K,
                                     fusion_, cfg_.fusion_eps);
    shown = std::move(split.shown);
    for (auto& c : split.cached)
      u.cache.push({c.item_id, std::move(c.pred), t});
    staleness.assign(shown.size(), 0.0);
  } else {
    // Observe the cache content the request would be served from.
    std::vector<Candidate> pool;
    pool.reserve(u.cache.size());
    for (const auto& e : u.cache.entries())
      pool.push_back(Candidate{e.item_id, {}, e.scores});
    rec.state = observe(u, t, &pool);
    auto entries = u.cache.pop(K);
    shown.reserve(entries.size());
    staleness.reserve(entries.size());
    const int nh = cfg_.n_heads;
    for (auto& e : entries) {
      Candidate c;
      c.item_id = e.item_id;
      c.pred = std::move(e.scores);
      c.true_q.resize(nh);
      const double z = hash_normal(c.item_id, 0);
      for (int h = 0; h < nh; ++h) {
        const double idio = hash_normal(c.item_id, 1 + h);
        const double load = cfg_.latent_load[h];
        c.true_q[h] =
            clip(u.affinity[h] +
                     cfg_.item_noise * (load * z + (1.0 - load) * idio),
                 0.0, cfg_.x_max);
      }
      staleness.push_back(t - e.enqueue_time);
      shown.push_back(std::move(c));
    }
  }

  Feedback fb = user_feedback(u, shown, served, staleness, cfg_, rng_);
  rec.reward = fb.reward;

  // user dynamics
  for (int h = 0; h < cfg_.n_heads; ++h)
    u.ema[h] = 0.7 * u.ema[h] + 0.3 * fb.head_engagement[h];
  u.fatigue += cfg_.fatigue_rate;
  u.last_reward = fb.reward;
  u.session_requests += 1;
  u.last_request_time = t;

  // counters
  counters_.requests += 1;
  const int bucket = std::min<int>(
      static_cast<int>(buckets_.requests.size()) - 1,
      static_cast<int>(time_of_day_fraction(t) * kDay / cfg_.d_bucket_s));
  buckets_.requests[bucket] += 1;
  if (served == CacheState::Cached) {
    counters_.cached += 1;
    counters_.reward_cached_sum += fb.reward;
    counters_.qual_cached_sum += fb.mean_quality;
    counters_.stale_mult_sum += fb.mean_stale_mult;
    buckets_.cached[bucket] += 1;
    buckets_.reward_cached[bucket] += fb.reward;
    for (int h = 0; h < cfg_.n_heads; ++h)
      counters_.head_cached_sum[h] += fb.head_engagement[h];
  } else {
    counters_.realtime += 1;
    counters_.reward_rt_sum += fb.reward;
    counters_.qual_rt_sum += fb.mean_quality;
    buckets_.realtime[bucket] += 1;
    buckets_.reward_rt[bucket] += fb.reward;
    for (int h = 0; h < cfg_.n_heads; ++h)
      counters_.head_rt_sum[h] += fb.head_engagement[h];
    if (forced) counters_.forced += 1;
  }

  // session termination hazard: ramps with session length (quadratic) and
  // with accumulated fatigue, shrinks with reward
  const double p_leave =
      clip(cfg_.hazard_base +
               cfg_.hazard_fatigue * u.session_requests * u.session_requests +
               0.002 * u.fatigue -
               cfg_.hazard_reward * (fb.reward / cfg_.reward_ref - 1.0),
           0.01, 0.95);
  RequestOutcome out;
  out.record = std::move(rec);
  out.shown_ids.reserve(shown.size());
  for (const auto& c : shown) out.shown_ids.push_back(c.item_id);
  out.session_ended = rng_.uniform() < p_leave;
  if (out.session_ended) end_session(u, t);
  return out;
}

void Simulator::run(double days, const PolicyFn& policy,
                    const RequestSink& on_request,
                    const TelemetrySink& on_tick) {
  const double total = days * kDay;
  const double dt = 1.0;

  using TimedUser = std::pair<double, int>;
  std::priority_queue<TimedUser, std::vector<TimedUser>, std::greater<>>
      pending;  // scheduled requests
  std::priority_queue<TimedUser, std::vector<TimedUser>, std::greater<>>
      cooling;  // users waiting out the post-session gap

  std::vector<int> ready = idle_users_;
  idle_users_.clear();
  long tick_arrivals = 0;

  for (double tick = 0.0; tick < total; tick += dt) {
    while (!cooling.empty() && cooling.top().first <= tick) {
      ready.push_back(cooling.top().second);
      cooling.pop();
    }

    // new sessions this tick
    double lam = profile_.at(time_of_day_fraction(tick)) /
                 cfg_.req_per_session_est;
    if (profile_.noise_std > 0.0)
      lam *= std::max(0.1, 1.0 + profile_.noise_std * rng_.normal());
    const std::uint64_t starts = rng_.poisson(lam * dt);
    for (std::uint64_t i = 0; i < starts && !ready.empty(); ++i) {
      const std::size_t pick = rng_.uniform_int(ready.size());
      const int ui = ready[pick];
      ready[pick] = ready.back();
      ready.pop_back();
      const double t0 = tick + rng_.uniform() * dt;
      start_session(ui, t0);
      pending.push({t0, ui});
    }

    // serve requests due within this tick, in time order
    while (!pending.empty() && pending.top().first < tick + dt) {
      const auto [t, ui] = pending.top();
      pending.pop();
      router_->advance(t);
      const CacheState c = router_->route(t, rng_);
      ++tick_arrivals;
      RequestOutcome out = process_request(ui, t, c, policy);
      ++window_requests_;
      if (out.record.cache_state == CacheState::Cached) ++window_cached_;
      if (on_request) on_request(out.record);
      if (out.session_ended) {
        cooling.push({users_[ui].eligible_time, ui});
      } else {
        const double delay = cfg_.think_time_s +
                             cfg_.watch_delay_scale * out.record.reward;
        pending.push({t + std::max(1.0, delay), ui});
      }
    }

    router_->advance(tick + dt);
    if (on_tick && std::fmod(tick, 60.0) == 0.0) {
      TelemetryRow row;
      row.time = tick;
      row.qps_target = profile_.at(time_of_day_fraction(tick));
      row.arrivals = tick_arrivals;
      row.queue_len = router_->queue_len();
      row.cached_fraction =
          window_requests_ > 0
              ? static_cast<double>(window_cached_) / window_requests_
              : 0.0;
      on_tick(row);
      tick_arrivals = 0;
      window_requests_ = 0;
      window_cached_ = 0;
    }
  }

  // return users to the idle pool for a possible subsequent run()
  while (!cooling.empty()) {
    idle_users_.push_back(cooling.top().second);
    cooling.pop();
  }
  while (!pending.empty()) {
    const int ui = pending.top().second;
    idle_users_.push_back(ui);
    users_[ui].in_session = false;
    pending.pop();
  }
  idle_users_.insert(idle_users_.end(), ready.begin(), ready.end());
  std::sort(idle_users_.begin(), idle_users_.end());
}

int calibrate_queue_limit(RunConfig cfg, double target, std::uint64_t seed,
                          double days) {
  cfg.router = "queue";
  int lo = 1, hi = 128;
  auto peak_fraction = [&](int limit) {
    RunConfig c = cfg;
    c.queue_limit = limit;
    Simulator sim(c, seed);
    Action fixed(std::vector<double>(c.action_dim(), 1.5));
    sim.run(days, [&](const UserState&) { return fixed; });
    // bucket holding the profile peak
    const auto& b = sim.bucket_stats();
    double best_q = -1.0;
    int peak_bucket = 0;
    for (std::size_t i = 0; i < b.requests.size(); ++i) {
      const double tod = (i + 0.5) * c.d_bucket_s / kDay;
      const double q = sim.profile().at(tod);
      if (q > best_q) {
        best_q = q;
        peak_bucket = static_cast<int>(i);
      }
    }
    if (b.requests[peak_bucket] == 0) return 0.0;
    return static_cast<double>(b.cached[peak_bucket]) /
           b.requests[peak_bucket];
  };
  // cached fraction decreases in the limit; binary search the crossing
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (peak_fraction(mid) > target)
      lo = mid + 1;
    else
      hi = mid;
  }
  // pick the closer of the two neighbours
  const double above = lo > 1 ? peak_fraction(lo - 1) : 1.0;
  const double at = peak_fraction(lo);
  if (lo > 1 && std::abs(above - target) < std::abs(at - target))
    return lo - 1;
  return lo;
}

}  // namespace carl::env
