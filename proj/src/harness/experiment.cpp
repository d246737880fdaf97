#include "carl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "carl/log.hpp"
#include "carl/svg.hpp"

namespace carl::harness {

namespace {

constexpr double kDay = 86400.0;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, const std::string& tag) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  h ^= h >> 29;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 32;
  return h;
}

std::string diagnostics_header() {
  return "step,critic_loss,mean_q0,mean_q1,mean_lambda_a,mean_reward_rt,"
         "mean_reward_cached,cached_fraction";
}

std::string diagnostics_row(const DiagRow& r) {
  std::string out = std::to_string(r.step);
  for (double v : {r.critic_loss, r.mean_q0, r.mean_q1, r.mean_lambda_a,
                   r.mean_reward_rt, r.mean_reward_cached,
                   r.cached_fraction}) {
    out += ',';
    out += num(v);
  }
  return out;
}

void SessionWatchTracker::feed(const RequestRecord& r) {
  PerUser& u = users_[r.user_id];
  if (u.last_time >= 0.0 && r.sim_time - u.last_time > gap_s_) {
    watch_sum_ += u.session_sum;
    ++n_sessions_;
    u.session_sum = 0.0;
  }
  u.session_sum += r.reward;
  u.last_time = r.sim_time;
  u.day_sums[static_cast<long>(r.sim_time / kDay)] += r.reward;
}

void SessionWatchTracker::flush() {
  for (auto& [id, u] : users_) {
    (void)id;
    if (u.last_time >= 0.0) {
      watch_sum_ += u.session_sum;
      ++n_sessions_;
    }
    for (const auto& [day, sum] : u.day_sums) {
      (void)day;
      day_sum_ += sum;
      ++n_user_days_;
    }
  }
  users_.clear();
}

TrainOutput train_method(algos::Method m, const RunConfig& cfg,
                         std::uint64_t seed) {
  TrainOutput out;
  out.method = m;

  if (m == algos::Method::cem) {
    // objective: mean session watch of a constant action on a short run
    double qps_mean = 0.0;
    env::QpsProfile prof = env::QpsProfile::from_config(cfg);
    for (int i = 0; i < 96; ++i) qps_mean += prof.at((i + 0.5) / 96.0);
    qps_mean /= 96.0;
    const double days_obj = std::clamp(
        cfg.cem_eval_sessions * cfg.req_per_session_est /
            (qps_mean * kDay),
        0.01, 0.25);
    auto objective = [&](const Action& a, int gen) {
      env::Simulator sim(cfg, mix_seed(seed, "cem-gen" + std::to_string(gen)));
      SessionWatchTracker tracker(cfg.session_gap_s);
      sim.run(days_obj, [&](const UserState&) { return a; },
              [&](const RequestRecord& r) { tracker.feed(r); });
      tracker.flush();
      return tracker.mean_session_watch();
    };
    algos::CemParams params;
    params.dim = cfg.action_dim();
    params.pop = cfg.cem_pop;
    params.elites = cfg.cem_elites;
    params.generations = cfg.cem_generations;
    params.init_std = cfg.cem_init_std;
    Rng rng(mix_seed(seed, "cem"));
    auto res = algos::cem_search(objective, params, rng);
    out.cem_action = Action(res.mean);
    out.final_train_loss = kNan;
    return out;
  }

  out.learner = algos::make_learner(m, cfg, mix_seed(seed, "learner"));
  algos::Learner& learner = *out.learner;

  env::Simulator sim(cfg, mix_seed(seed, "env"));
  SessionCollector collector(cfg.session_gap_s);
  ReplayBuffer replay(cfg.replay_capacity, cfg.state_dim(),
                      cfg.action_dim());
  Rng explore_rng(mix_seed(seed, "explore"));
  Rng sample_rng(mix_seed(seed, "sample"));

  // checkpoint selection: short greedy rollouts on a held-out seed pick
  // the best policy snapshot seen during training
  const std::uint64_t val_seed = mix_seed(seed, "validation");
  double best_val = -1.0;
  std::vector<double> best_actor;
  auto validate = [&]() {
    env::Simulator val_sim(cfg, val_seed);
    SessionWatchTracker tracker(cfg.session_gap_s);
    val_sim.run(0.12, [&](const UserState& s) { return learner.act(s); },
                [&](const RequestRecord& r) { tracker.feed(r); });
    tracker.flush();
    const double v = tracker.mean_session_watch();
    if (v > best_val) {
      best_val = v;
      best_actor = learner.actor_params();
    }
  };

  long requests = 0;
  long steps = 0;
  double loss_ema = 0.0;
  bool ema_init = false;
  const long every = std::max<long>(1, static_cast<long>(cfg.train_every));
  const long val_every = std::max<long>(400, cfg.train_steps / 12);
  const long lr_decay_1 = cfg.train_steps * 6 / 10;
  const long lr_decay_2 = cfg.train_steps * 85 / 100;
  validate();  // the untrained policy is an eligible checkpoint

  auto on_transition = [&](const Transition& t) {
    replay.push(t);
    learner.observe(t);
  };

  auto policy = [&](const UserState& s) {
    return learner.act_explore(s, explore_rng);
  };

  auto on_request = [&](const RequestRecord& rec) {
    collector.feed(rec, on_transition);
    ++requests;
    if (requests >= cfg.warmup_requests && replay.ready(cfg.batch_size) &&
        steps < cfg.train_steps && requests % every == 0) {
      auto batch = replay.sample(cfg.batch_size, sample_rng);
      const bool log_now = (steps + 1) % 25 == 0;
      algos::DiagValues dv;
      if (log_now) dv = learner.diag_values(batch);
      auto stats = learner.train_step(std::move(batch));
      ++steps;
      if (steps == lr_decay_1 || steps == lr_decay_2)
        learner.scale_lr(0.25);
      if (steps % val_every == 0) validate();
      loss_ema = ema_init ? 0.95 * loss_ema + 0.05 * stats.critic_loss
                          : stats.critic_loss;
      ema_init = true;
      if (log_now) {
        const auto& c = sim.counters();
        DiagRow row;
        row.step = steps;
        row.critic_loss = loss_ema;
        row.mean_q0 = dv.mean_q0;
        row.mean_q1 = dv.mean_q1;
        row.mean_lambda_a = dv.mean_lambda_a;
        row.mean_reward_rt =
            c.realtime ? c.reward_rt_sum / c.realtime : 0.0;
        row.mean_reward_cached =
            c.cached ? c.reward_cached_sum / c.cached : 0.0;
        row.cached_fraction =
            c.requests ? static_cast<double>(c.cached) / c.requests : 0.0;
        out.diagnostics.push_back(row);
      }
    }
  };

  sim.run(cfg.train_days, policy, on_request);
  collector.finish(on_transition);
  validate();
  if (!best_actor.empty()) learner.restore_actor(best_actor);
  out.final_train_loss = loss_ema;
  return out;
}

std::vector<Transition> reference_transitions(const RunConfig& cfg,
                                              std::uint64_t seed,
                                              std::size_t max_n) {
  env::Simulator sim(cfg, mix_seed(seed, "reference"));
  SessionCollector collector(cfg.session_gap_s);
  std::vector<Transition> kept;
  long counter = 0;
  constexpr int kStride = 8;
  Action fixed(std::vector<double>(cfg.action_dim(), 1.5));
  auto on_transition = [&](const Transition& t) {
    if (counter++ % kStride == 0 && kept.size() < max_n) kept.push_back(t);
  };
  sim.run(1.0, [&](const UserState&) { return fixed; },
          [&](const RequestRecord& r) { collector.feed(r, on_transition); });
  collector.finish(on_transition);
  return kept;
}

double critic_loss_on(const algos::Learner& learner,
                      const std::vector<Transition>& ts) {
  if (ts.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double gamma = learner.gamma();
  double loss = 0.0;
  for (const auto& t : ts) {
    const double pred = learner.value_predictor(t);
    const double boot =
        t.done ? 0.0
               : gamma * learner.value_bootstrap(t.next_state,
                                                 t.next_cache_state,
                                                 t.sim_time);
    const double diff = pred - (t.reward + boot);
    loss += diff * diff;
  }
  return loss / ts.size();
}

EvalOutput evaluate_method(const RunConfig& cfg, const TrainOutput& trained,
                           std::uint64_t eval_seed,
                           const std::vector<Transition>* reference) {
  EvalOutput out;
  env::Simulator sim(cfg, mix_seed(eval_seed, "eval-env"));
  SessionWatchTracker tracker(cfg.session_gap_s);
  SessionCollector collector(cfg.session_gap_s);
  std::vector<Transition> kept;
  long counter = 0;
  constexpr int kStride = 8;
  constexpr std::size_t kMaxKept = 30000;

  env::Simulator::PolicyFn policy;
  if (trained.learner) {
    policy = [&](const UserState& s) { return trained.learner->act(s); };
  } else {
    Action fixed = trained.cem_action;
    policy = [fixed](const UserState&) { return fixed; };
  }

  auto on_transition = [&](const Transition& t) {
    if (counter++ % kStride == 0 && kept.size() < kMaxKept)
      kept.push_back(t);
  };
  sim.run(cfg.eval_days, policy, [&](const RequestRecord& r) {
    tracker.feed(r);
    collector.feed(r, on_transition);
  });
  collector.finish(on_transition);
  tracker.flush();

  out.session_watch = tracker.mean_session_watch();
  out.daily_watch = tracker.mean_daily_watch();
  out.sessions = tracker.sessions();

  const auto& c = sim.counters();
  const double rt_mean = c.realtime ? c.reward_rt_sum / c.realtime : 0.0;
  const double ca_mean = c.cached ? c.reward_cached_sum / c.cached : 0.0;
  out.cached_rt_ratio = rt_mean > 0.0 ? ca_mean / rt_mean : 0.0;

  const auto& b = sim.bucket_stats();
  const int nb = static_cast<int>(b.requests.size());
  out.day_qps.resize(nb);
  out.day_cached.resize(nb);
  for (int i = 0; i < nb; ++i) {
    out.day_qps[i] =
        b.requests[i] / (cfg.d_bucket_s * std::max(cfg.eval_days, 1e-9));
    out.day_cached[i] =
        b.requests[i] ? static_cast<double>(b.cached[i]) / b.requests[i]
                      : 0.0;
  }

  out.q0_curve.assign(nb, kNan);
  out.q1_curve.assign(nb, kNan);
  if (trained.learner) {
    const algos::Learner& L = *trained.learner;
    const std::vector<Transition>& probe = reference ? *reference : kept;
    out.critic_loss = critic_loss_on(L, probe);
    std::vector<double> q0_sum(nb, 0.0), q1_sum(nb, 0.0);
    std::vector<long> q_n(nb, 0);
    for (const auto& t : probe) {
      const int bi = std::min(
          nb - 1, static_cast<int>(time_of_day_fraction(t.sim_time) * kDay /
                                   cfg.d_bucket_s));
      const auto q = L.q0_q1(t.state);
      if (std::isfinite(q.first)) q0_sum[bi] += q.first;
      if (std::isfinite(q.second)) q1_sum[bi] += q.second;
      ++q_n[bi];
    }
    for (int i = 0; i < nb; ++i) {
      if (q_n[i] > 0) {
        out.q0_curve[i] = q0_sum[i] / q_n[i];
        out.q1_curve[i] = q1_sum[i] / q_n[i];
      }
    }
  } else {
    out.critic_loss = kNan;
  }
  return out;
}

const MethodSeedResult* ExperimentReport::find(algos::Method m,
                                               std::uint64_t seed) const {
  for (const auto& r : rows)
    if (r.method == m && r.seed == seed) return &r;
  return nullptr;
}

std::pair<double, double> ExperimentReport::aggregate(
    algos::Method m,
    const std::function<double(const MethodSeedResult&)>& f) const {
  double sum = 0.0, sum2 = 0.0;
  long n = 0;
  for (const auto& r : rows) {
    if (r.method != m) continue;
    const double v = f(r);
    if (!std::isfinite(v)) continue;
    sum += v;
    sum2 += v * v;
    ++n;
  }
  if (n == 0) return {kNan, kNan};
  const double mean = sum / n;
  const double var = std::max(0.0, sum2 / n - mean * mean);
  return {mean, std::sqrt(var)};
}

ExperimentReport run_experiment(const RunConfig& cfg,
                                const std::vector<algos::Method>& methods,
                                const std::vector<std::uint64_t>& seeds) {
  ExperimentReport rep;
  rep.methods = methods;
  rep.seeds = seeds;
  // reference transition sets, one per seed, shared by every method
  std::map<std::uint64_t, std::vector<Transition>> refs;
  for (auto seed : seeds) refs[seed] = reference_transitions(cfg, seed);
  for (auto m : methods) {
    for (auto seed : seeds) {
      MethodSeedResult r;
      r.method = m;
      r.seed = seed;
      TrainOutput trained = train_method(m, cfg, seed);
      r.final_train_loss = trained.final_train_loss;
      // common eval seed per seed index: same traffic for every method
      r.eval = evaluate_method(cfg, trained, mix_seed(seed, "shared-eval"),
                               &refs[seed]);
      rep.rows.push_back(std::move(r));
    }
  }

  // directional-ordering flags (reported, never fatal)
  auto has = [&](algos::Method m) {
    return std::find(methods.begin(), methods.end(), m) != methods.end();
  };
  for (auto seed : seeds) {
    auto watch = [&](algos::Method m) {
      const auto* r = rep.find(m, seed);
      return r ? r->eval.session_watch : kNan;
    };
    auto flag = [&](const std::string& msg) {
      rep.flags.push_back("seed " + std::to_string(seed) + ": " + msg);
    };
    using algos::Method;
    if (has(Method::carl_el) && has(Method::carl_dl) &&
        watch(Method::carl_el) < watch(Method::carl_dl))
      flag("carl_el session watch below carl_dl");
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    double blind = kNegInf;
    if (has(Method::td3)) blind = std::max(blind, watch(Method::td3));
    if (has(Method::ddpg)) blind = std::max(blind, watch(Method::ddpg));
    if (has(Method::carl_dl) && blind > kNegInf &&
        watch(Method::carl_dl) < blind)
      flag("carl_dl session watch below cache-blind RL");
    if (has(Method::cem) && blind > kNegInf && blind < watch(Method::cem))
      flag("cache-blind RL session watch below cem");
  }
  return rep;
}

namespace {

double improvement_pct(double value, double base) {
  if (!std::isfinite(value) || !std::isfinite(base) || base == 0.0)
    return kNan;
  return (value - base) / std::abs(base) * 100.0;
}

}  // namespace

void write_report_files(const ExperimentReport& rep, const RunConfig& cfg,
                        const std::string& dir) {
  using algos::Method;
  const bool has_cem =
      std::find(rep.methods.begin(), rep.methods.end(), Method::cem) !=
      rep.methods.end();
  auto session = [](const MethodSeedResult& r) {
    return r.eval.session_watch;
  };
  auto daily = [](const MethodSeedResult& r) { return r.eval.daily_watch; };
  const double cem_session =
      has_cem ? rep.aggregate(Method::cem, session).first : kNan;
  const double cem_daily =
      has_cem ? rep.aggregate(Method::cem, daily).first : kNan;

  std::string report =
      "method,n_seeds,session_watch_mean,session_watch_std,"
      "impr_session_pct,daily_watch_mean,daily_watch_std,impr_daily_pct,"
      "critic_loss_mean,critic_loss_std,cached_rt_ratio_mean,"
      "cached_rt_ratio_std,final_train_loss_mean\n";
  for (auto m : rep.methods) {
    const auto s = rep.aggregate(m, session);
    const auto d = rep.aggregate(m, daily);
    const auto cl = rep.aggregate(m, [](const MethodSeedResult& r) {
      return r.eval.critic_loss;
    });
    const auto ratio = rep.aggregate(m, [](const MethodSeedResult& r) {
      return r.eval.cached_rt_ratio;
    });
    const auto tl = rep.aggregate(m, [](const MethodSeedResult& r) {
      return r.final_train_loss;
    });
    report += algos::method_name(m);
    report += ',' + std::to_string(rep.seeds.size());
    for (double v :
         {s.first, s.second, improvement_pct(s.first, cem_session), d.first,
          d.second, improvement_pct(d.first, cem_daily), cl.first, cl.second,
          ratio.first, ratio.second, tl.first}) {
      report += ',';
      report += num(v);
    }
    report += '\n';
  }
  write_text_file(dir + "/report.csv", report);

  std::string per_seed =
      "method,seed,session_watch,daily_watch,critic_loss,cached_rt_ratio,"
      "final_train_loss,sessions\n";
  for (const auto& r : rep.rows) {
    per_seed += algos::method_name(r.method);
    per_seed += ',' + std::to_string(r.seed);
    for (double v : {r.eval.session_watch, r.eval.daily_watch,
                     r.eval.critic_loss, r.eval.cached_rt_ratio,
                     r.final_train_loss}) {
      per_seed += ',';
      per_seed += num(v);
    }
    per_seed += ',' + std::to_string(r.eval.sessions);
    per_seed += '\n';
  }
  write_text_file(dir + "/report_seeds.csv", per_seed);

  // seed-averaged q curves per bucket
  std::string curves = "method,bucket,tod,q0,q1\n";
  for (auto m : rep.methods) {
    if (m == Method::cem) continue;
    int nb = 0;
    for (const auto& r : rep.rows)
      if (r.method == m)
        nb = std::max(nb, static_cast<int>(r.eval.q0_curve.size()));
    for (int b = 0; b < nb; ++b) {
      double s0 = 0, s1 = 0;
      long n0 = 0, n1 = 0;
      for (const auto& r : rep.rows) {
        if (r.method != m || b >= static_cast<int>(r.eval.q0_curve.size()))
          continue;
        if (std::isfinite(r.eval.q0_curve[b])) {
          s0 += r.eval.q0_curve[b];
          ++n0;
        }
        if (std::isfinite(r.eval.q1_curve[b])) {
          s1 += r.eval.q1_curve[b];
          ++n1;
        }
      }
      curves += algos::method_name(m);
      curves += ',' + std::to_string(b) + ',' +
                num((b + 0.5) * cfg.d_bucket_s / kDay) + ',' +
                num(n0 ? s0 / n0 : kNan) + ',' + num(n1 ? s1 / n1 : kNan) +
                '\n';
    }
  }
  write_text_file(dir + "/curves.csv", curves);

  // day profile from the first row
  std::string day = "bucket,tod,qps,cached_fraction\n";
  if (!rep.rows.empty()) {
    const auto& e = rep.rows.front().eval;
    for (std::size_t b = 0; b < e.day_qps.size(); ++b)
      day += std::to_string(b) + ',' +
             num((b + 0.5) * cfg.d_bucket_s / kDay) + ',' +
             num(e.day_qps[b]) + ',' + num(e.day_cached[b]) + '\n';
  }
  write_text_file(dir + "/day.csv", day);

  std::string flags;
  for (const auto& f : rep.flags) flags += f + '\n';
  write_text_file(dir + "/flags.txt", flags);
}

namespace {

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      auto pos = line.find(',', start);
      if (pos == std::string::npos) {
        cols.push_back(line.substr(start));
        break;
      }
      cols.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    rows.push_back(std::move(cols));
  }
  return rows;
}

double cell(const std::string& s) {
  return s.empty() ? kNan : std::strtod(s.c_str(), nullptr);
}

}  // namespace

void emit_plots(const std::string& report_dir, const std::string& out_dir) {
  // day profile
  {
    auto rows = read_csv(report_dir + "/day.csv");
    Series qps{"qps", "#1f77b4", {}};
    Series frac{"cached_fraction", "#d62728", {}};
    double max_qps = 1.0;
    for (std::size_t i = 1; i < rows.size(); ++i)
      max_qps = std::max(max_qps, cell(rows[i][2]));
    for (std::size_t i = 1; i < rows.size(); ++i) {
      qps.points.push_back({cell(rows[i][1]), cell(rows[i][2])});
      frac.points.push_back({cell(rows[i][1]), cell(rows[i][3]) * max_qps});
    }
    frac.name = "cached_fraction (x max qps)";
    write_text_file(out_dir + "/qps_day.svg",
                    line_chart_svg("Request rate and cached share over a day",
                                   "time of day", "requests/s",
                                   {qps, frac}));
  }
  // q curves: prefer carl_el, fall back to the first method present
  {
    auto rows = read_csv(report_dir + "/curves.csv");
    std::string pick;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i][0] == "carl_el") pick = "carl_el";
    if (pick.empty() && rows.size() > 1) pick = rows[1][0];
    Series q0{"Q0 (real-time)", "#1f77b4", {}};
    Series q1{"Q1 (cached)", "#d62728", {}};
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i][0] != pick) continue;
      const double tod = cell(rows[i][2]);
      const double v0 = cell(rows[i][3]);
      const double v1 = cell(rows[i][4]);
      if (std::isfinite(v0)) q0.points.push_back({tod, v0});
      if (std::isfinite(v1)) q1.points.push_back({tod, v1});
    }
    write_text_file(out_dir + "/q_curves.svg",
                    line_chart_svg("Critic values over time of day (" +
                                       (pick.empty() ? "none" : pick) + ")",
                                   "time of day", "value", {q0, q1}));
  }
  // per-method session watch bars
  {
    auto rows = read_csv(report_dir + "/report.csv");
    std::vector<std::string> labels;
    std::vector<double> values;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      labels.push_back(rows[i][0]);
      values.push_back(cell(rows[i][2]));
    }
    write_text_file(out_dir + "/method_rewards.svg",
                    bar_chart_svg("Mean session watch time per method",
                                  labels, values));
  }
}

}  // namespace carl::harness
