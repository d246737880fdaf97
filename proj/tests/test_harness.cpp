#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "carl/experiment.hpp"
#include "carl/log.hpp"
#include "carl/replay.hpp"
#include "carl/svg.hpp"
#include "carl/learners.hpp"

using namespace carl;
using namespace carl::harness;

namespace {

RequestRecord rec(std::uint64_t user, double t, double reward = 1.0,
                  CacheState c = CacheState::RealTime) {
  RequestRecord r;
  r.user_id = user;
  r.sim_time = t;
  r.reward = reward;
  r.cache_state = c;
  if (c == CacheState::RealTime)
    r.action = Action(std::vector<double>(5, 1.0));
  UserState s;
  s.profile = {double(user)};
  s.context = {time_of_day_fraction(t)};
  r.state = s;
  return r;
}

}  // namespace

TEST_CASE("two requests 901 s apart form two done-marked sessions") {
  auto ts = SessionCollector::collect({rec(1, 0.0), rec(1, 901.0)}, 900.0);
  REQUIRE(ts.size() == 2);
  CHECK(ts[0].done);
  CHECK(ts[1].done);
  CHECK(ts[0].sim_time == 0.0);
}

TEST_CASE("a gap of exactly the threshold stays one session") {
  auto ts = SessionCollector::collect({rec(1, 0.0), rec(1, 900.0)}, 900.0);
  REQUIRE(ts.size() == 1);
  CHECK(ts[0].done);
  CHECK(ts[0].sim_time == 0.0);
  CHECK(ts[0].next_state.profile == std::vector<double>{1.0});
}

TEST_CASE("three requests in one session pair into two transitions") {
  auto ts = SessionCollector::collect(
      {rec(2, 0.0, 1.0), rec(2, 100.0, 2.0), rec(2, 200.0, 3.0)}, 900.0);
  REQUIRE(ts.size() == 2);
  CHECK(!ts[0].done);
  CHECK(ts[1].done);
  // the middle request is both the first pair's next state and the second
  // pair's state
  CHECK(ts[0].next_state == ts[1].state);
  CHECK(ts[0].reward == 1.0);
  CHECK(ts[1].reward == 2.0);
}

TEST_CASE("collector output is invariant to input permutation") {
  std::vector<RequestRecord> log;
  Rng rng(3);
  for (int u = 0; u < 5; ++u) {
    double t = rng.uniform(0.0, 100.0);
    for (int i = 0; i < 20; ++i) {
      log.push_back(rec(u, t, rng.uniform(0.0, 10.0),
                        rng.uniform() < 0.4 ? CacheState::Cached
                                            : CacheState::RealTime));
      t += rng.uniform() < 0.1 ? 1200.0 : rng.uniform(10.0, 200.0);
    }
  }
  auto sorted = SessionCollector::collect(log, 900.0);
  auto shuffled = log;
  rng.shuffle(shuffled);
  auto permuted = SessionCollector::collect(shuffled, 900.0);
  REQUIRE(sorted.size() == permuted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    CHECK(serialize_transition(sorted[i]) ==
          serialize_transition(permuted[i]));
  }
}

TEST_CASE("duplicate (user, time) keys are rejected") {
  CHECK_THROWS(SessionCollector::collect({rec(1, 5.0), rec(1, 5.0)}, 900.0));
}

TEST_CASE("collector emits well-formed transitions") {
  std::vector<RequestRecord> log;
  Rng rng(7);
  for (int u = 0; u < 4; ++u) {
    double t = 0.0;
    for (int i = 0; i < 30; ++i) {
      const bool cached = rng.uniform() < 0.5;
      log.push_back(rec(u, t, rng.uniform(0.0, 5.0),
                        cached ? CacheState::Cached
                               : CacheState::RealTime));
      t += rng.uniform(5.0, 1100.0);
    }
  }
  for (const auto& t : SessionCollector::collect(log, 900.0))
    CHECK(!validate_transition(t));
}

TEST_CASE("replay ring evicts FIFO and samples valid transitions") {
  ReplayBuffer buf(64, 2, 5);
  std::vector<RequestRecord> log;
  for (int i = 0; i < 200; ++i) log.push_back(rec(0, 10.0 * i));
  auto ts = SessionCollector::collect(log, 900.0);
  for (const auto& t : ts) buf.push(t);
  CHECK(buf.size() == 64);
  Rng rng(9);
  auto batch = buf.sample(32, rng);
  CHECK(batch.n == 32);
  for (int i = 0; i < batch.n; ++i) {
    CHECK(batch.has_action[i] == 1);
    CHECK(std::isfinite(batch.rewards[i]));
  }
  ReplayBuffer empty(8, 2, 5);
  CHECK_THROWS(empty.sample(4, rng));
}

TEST_CASE("session watch tracker aggregates sessions and user-days") {
  SessionWatchTracker tr(900.0);
  tr.feed(rec(1, 0.0, 2.0));
  tr.feed(rec(1, 100.0, 3.0));   // same session: 5
  tr.feed(rec(1, 2000.0, 7.0));  // new session: 7
  tr.feed(rec(2, 90000.0, 9.0));  // second day, other user
  tr.flush();
  CHECK(tr.sessions() == 3);
  CHECK(tr.mean_session_watch() == doctest::Approx((5.0 + 7.0 + 9.0) / 3));
  CHECK(tr.mean_daily_watch() == doctest::Approx((12.0 + 9.0) / 2));
}

TEST_CASE("diagnostics csv row shape") {
  DiagRow r;
  r.step = 50;
  r.critic_loss = 0.5;
  const std::string header = diagnostics_header();
  CHECK(header ==
        "step,critic_loss,mean_q0,mean_q1,mean_lambda_a,mean_reward_rt,"
        "mean_reward_cached,cached_fraction");
  const std::string row = diagnostics_row(r);
  CHECK(row.substr(0, 7) == "50,0.5,");
  CHECK(std::count(row.begin(), row.end(), ',') ==
        std::count(header.begin(), header.end(), ','));
}

TEST_CASE("line chart handles empty series and counts polylines") {
  Series a{"alpha", "#1f77b4", {{0, 1}, {1, 2}, {2, 0.5}}};
  Series b{"beta", "#d62728", {{0, 2}, {1, 1}, {2, 1.5}}};
  const std::string two = line_chart_svg("t", "x", "y", {a, b});
  std::size_t count = 0, pos = 0;
  while ((pos = two.find("<polyline", pos)) != std::string::npos) {
    ++count;
    pos += 9;
  }
  CHECK(count == 2);

  const std::string empty = line_chart_svg("t", "x", "y", {});
  CHECK(empty.find("<svg") != std::string::npos);
  CHECK(empty.find("polyline") == std::string::npos);

  // deterministic output
  CHECK(line_chart_svg("t", "x", "y", {a, b}) == two);
}

TEST_CASE("seeded training runs are bit-reproducible") {
  RunConfig cfg;
  cfg.users = 250;
  cfg.train_days = 0.03;
  cfg.train_steps = 120;
  cfg.train_every = 6;
  cfg.warmup_requests = 300;
  cfg.batch_size = 24;
  cfg.replay_capacity = 4000;
  validate_config(cfg);
  auto run_once = [&]() {
    auto out = train_method(algos::Method::carl_el, cfg, 77);
    return out.learner->actor_params();
  };
  const auto a = run_once();
  const auto b = run_once();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("improvement of cem over itself is zero and the report is "
          "deterministic") {
  RunConfig cfg;
  cfg.users = 120;
  cfg.qps_base = 0.35;
  cfg.qps_peak_amplitude = 2.5;
  cfg.queue_limit = 2;
  cfg.cem_pop = 6;
  cfg.cem_elites = 2;
  cfg.cem_generations = 2;
  cfg.cem_eval_sessions = 30;
  cfg.train_days = 0.02;
  cfg.eval_days = 0.05;
  validate_config(cfg);

  namespace fs = std::filesystem;
  const auto dir_a = fs::temp_directory_path() / "carl_rep_a";
  const auto dir_b = fs::temp_directory_path() / "carl_rep_b";
  fs::create_directories(dir_a);
  fs::create_directories(dir_b);

  auto rep = run_experiment(cfg, {algos::Method::cem}, {1, 2});
  write_report_files(rep, cfg, dir_a.string());
  auto rep2 = run_experiment(cfg, {algos::Method::cem}, {1, 2});
  write_report_files(rep2, cfg, dir_b.string());

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string report = slurp(dir_a / "report.csv");
  CHECK(report == slurp(dir_b / "report.csv"));
  CHECK(slurp(dir_a / "report_seeds.csv") ==
        slurp(dir_b / "report_seeds.csv"));

  // cem row improvement over cem is exactly +0
  std::istringstream is(report);
  std::string line;
  std::getline(is, line);  // header
  REQUIRE(std::getline(is, line));
  CHECK(line.substr(0, 4) == "cem,");
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
  CHECK(std::strtod(cols[4].c_str(), nullptr) == doctest::Approx(0.0));
  CHECK(std::strtod(cols[7].c_str(), nullptr) == doctest::Approx(0.0));

  emit_plots(dir_a.string(), dir_a.string());
  CHECK(fs::exists(dir_a / "qps_day.svg"));
  CHECK(fs::exists(dir_a / "q_curves.svg"));
  CHECK(fs::exists(dir_a / "method_rewards.svg"));
}
