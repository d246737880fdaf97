// carl: simulator + training stack for cache-aware recommendation RL.
// Subcommands: simulate, train, verify-oracle, compare, plot.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "carl/config.hpp"
#include "carl/env.hpp"
#include "carl/experiment.hpp"
#include "carl/kernels.hpp"
#include "carl/learners.hpp"
#include "carl/log.hpp"
#include "carl/replay.hpp"
#include "carl/tabular.hpp"

namespace fs = std::filesystem;
using namespace carl;

namespace {

RunConfig load_or_default(const std::string& path) {
  if (path.empty()) {
    RunConfig cfg;
    validate_config(cfg);
    return cfg;
  }
  return load_config(path);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed,
                 double days, const std::string& out_dir,
                 const std::string& actor_path,
                 const std::string& action_csv) {
  RunConfig cfg = load_or_default(config_path);
  kern::set_backend(cfg.kernel_backend);
  fs::create_directories(out_dir);

  env::Simulator sim(cfg, seed);
  env::Simulator::PolicyFn policy;
  if (!actor_path.empty()) {
    auto actor = std::make_shared<nn::Mlp>(nn::Mlp::load_file(actor_path));
    policy = [actor](const UserState& s) {
      return Action(actor->forward1(s.flatten())).clamped();
    };
  } else {
    std::vector<double> a(cfg.action_dim(), 1.5);
    if (!action_csv.empty()) {
      a.clear();
      for (const auto& tok : split_csv(action_csv))
        a.push_back(std::strtod(tok.c_str(), nullptr));
      if (static_cast<int>(a.size()) != cfg.action_dim())
        throw ConfigError("--action needs " +
                          std::to_string(cfg.action_dim()) + " components");
    }
    Action fixed = Action(a).clamped();
    policy = [fixed](const UserState&) { return fixed; };
  }

  std::ofstream log(out_dir + "/transitions.log");
  std::ofstream telemetry(out_dir + "/telemetry.csv");
  log << transition_log_header() << '\n';
  telemetry << "time,qps,queue_len,cached_fraction\n";

  harness::SessionCollector collector(cfg.session_gap_s);
  auto sink = [&](const Transition& t) {
    log << serialize_transition(t) << '\n';
  };
  sim.run(days, policy,
          [&](const RequestRecord& r) { collector.feed(r, sink); },
          [&](const env::TelemetryRow& row) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%.0f,%.6g,%ld,%.6g\n", row.time,
                          row.qps_target, row.queue_len,
                          row.cached_fraction);
            telemetry << buf;
          });
  collector.finish(sink);

  const auto& c = sim.counters();
  std::printf("simulate: %llu requests, %llu sessions, cached %.3f, "
              "forced %llu\n",
              (unsigned long long)c.requests, (unsigned long long)c.sessions,
              c.requests ? double(c.cached) / c.requests : 0.0,
              (unsigned long long)c.forced);
  return 0;
}

int cmd_train(const std::string& config_path, std::uint64_t seed,
              const std::string& method_name, const std::string& out_dir) {
  RunConfig cfg = load_or_default(config_path);
  kern::set_backend(cfg.kernel_backend);
  fs::create_directories(out_dir);
  const algos::Method method = algos::parse_method(method_name);

  harness::TrainOutput trained = harness::train_method(method, cfg, seed);

  std::ofstream diag(out_dir + "/diagnostics.csv");
  diag << harness::diagnostics_header() << '\n';
  for (const auto& row : trained.diagnostics)
    diag << harness::diagnostics_row(row) << '\n';

  if (trained.learner) {
    trained.learner->save_checkpoints(out_dir);
  } else {
    std::ofstream best(out_dir + "/cem_action.txt");
    for (std::size_t i = 0; i < trained.cem_action.fusion.size(); ++i)
      best << (i ? "," : "") << format_double(trained.cem_action.fusion[i]);
    best << '\n';
  }
  std::printf("train %s: final loss %.6g, %zu diagnostic rows\n",
              algos::method_name(method), trained.final_train_loss,
              trained.diagnostics.size());
  return 0;
}

int cmd_verify_oracle(int n, std::uint64_t seed, const std::string& dump) {
  auto rep = oracle::run_identity_suite(n, seed);
  std::printf("oracle identity suite over %d random tabular MDPs\n",
              rep.n_instances);
  auto line = [](const char* name, double value, double tol) {
    std::printf("  %-34s %.3e  (tol %.0e)  %s\n", name, value, tol,
                value < tol ? "pass" : "FAIL");
  };
  line("coupled recursion residual", rep.max_coupled_residual, 1e-10);
  line("decoupled line 1 residual", rep.max_line1_residual, 1e-10);
  line("decoupled line 2 residual", rep.max_line2_residual, 1e-10);
  line("linear recovery error", rep.max_recovery_error, 1e-12);
  if (!dump.empty()) {
    Rng rng(seed);
    oracle::TabularMdp mdp = oracle::random_mdp(rng);
    oracle::TabularPolicy pol = oracle::random_policy(rng, mdp, false);
    auto q = oracle::exact_q(mdp, pol);
    std::ofstream out(dump);
    out << "t,s,a,q0,q1\n";
    for (int t = 0; t < mdp.horizon; ++t)
      for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
          out << t << ',' << s << ',' << a << ','
              << format_double(q.at0(t, s, a)) << ','
              << format_double(q.at1(t, s)) << '\n';
  }
  std::printf(rep.pass ? "verify-oracle: PASS\n" : "verify-oracle: FAIL\n");
  return rep.pass ? 0 : 2;
}

int cmd_compare(const std::string& config_path, const std::string& methods_csv,
                const std::string& seeds_csv, const std::string& out_dir) {
  RunConfig cfg = load_or_default(config_path);
  kern::set_backend(cfg.kernel_backend);
  fs::create_directories(out_dir);
  std::vector<algos::Method> methods;
  for (const auto& name : split_csv(methods_csv))
    methods.push_back(algos::parse_method(name));
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_csv(seeds_csv))
    seeds.push_back(std::strtoull(s.c_str(), nullptr, 10));

  auto rep = harness::run_experiment(cfg, methods, seeds);
  harness::write_report_files(rep, cfg, out_dir);
  std::printf("compare: %zu methods x %zu seeds -> %s\n", methods.size(),
              seeds.size(), out_dir.c_str());
  for (const auto& f : rep.flags) std::printf("  flag: %s\n", f.c_str());
  return 0;
}

int cmd_plot(const std::string& report_dir, const std::string& out_dir) {
  fs::create_directories(out_dir);
  harness::emit_plots(report_dir, out_dir);
  std::printf("plot: wrote qps_day.svg, q_curves.svg, method_rewards.svg\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cache-aware recommendation RL simulator and trainer"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", actor_path, action_csv;
  std::string method = "carl_el", methods_csv = "cem,ddpg,td3,carl_dl,carl_el";
  std::string seeds_csv = "1,2,3,4,5", report_dir = "out", dump;
  std::uint64_t seed = 1;
  double days = 1.0;
  int n_mdps = 100;

  auto* simulate = app.add_subcommand("simulate", "run the simulator");
  simulate->add_option("--config", config_path);
  simulate->add_option("--seed", seed);
  simulate->add_option("--days", days);
  simulate->add_option("--out", out_dir);
  simulate->add_option("--actor", actor_path, "actor checkpoint");
  simulate->add_option("--action", action_csv, "constant action, csv");

  auto* train = app.add_subcommand("train", "train one method");
  train->add_option("--config", config_path);
  train->add_option("--seed", seed);
  train->add_option("--method", method,
                    "cem|ddpg|td3|carl_dl|carl_el");
  train->add_option("--out", out_dir);

  auto* verify = app.add_subcommand("verify-oracle",
                                    "tabular identity suite");
  verify->add_option("--n", n_mdps);
  verify->add_option("--seed", seed);
  verify->add_option("--dump", dump, "dump one exact table as CSV");

  auto* compare = app.add_subcommand("compare", "multi-method experiment");
  compare->add_option("--config", config_path);
  compare->add_option("--methods", methods_csv);
  compare->add_option("--seeds", seeds_csv);
  compare->add_option("--out", out_dir);

  auto* plot = app.add_subcommand("plot", "render SVG charts from a report");
  plot->add_option("--report", report_dir);
  plot->add_option("--out", out_dir);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed())
      return cmd_simulate(config_path, seed, days, out_dir, actor_path,
                          action_csv);
    if (train->parsed()) return cmd_train(config_path, seed, method, out_dir);
    if (verify->parsed()) return cmd_verify_oracle(n_mdps, seed, dump);
    if (compare->parsed())
      return cmd_compare(config_path, methods_csv, seeds_csv, out_dir);
    if (plot->parsed()) return cmd_plot(report_dir, out_dir);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
