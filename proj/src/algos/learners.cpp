#include "carl/learners.hpp"

#include "carl/kernels.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace carl::algos {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<int> net_dims(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> d;
  d.push_back(in);
  d.insert(d.end(), hidden.begin(), hidden.end());
  d.push_back(out);
  return d;
}

// q(s,a) surface of a single critic network
struct MlpCriticSurface : CriticForPolicy {
  const nn::Mlp& net;
  int sd, ad;
  MlpCriticSurface(const nn::Mlp& n, int state_dim, int action_dim)
      : net(n), sd(state_dim), ad(action_dim) {}
  void eval(const std::vector<double>& states, int n,
            const std::vector<double>& actions, std::vector<double>& q,
            std::vector<double>& dq_da) override {
    const auto sa = concat_state_action(states, actions, n, sd, ad);
    nn::Mlp::Cache cache;
    net.forward_batch(sa, n, cache);
    q = cache.acts.back();
    std::vector<double> ones(n, 1.0);
    std::vector<double> dummy(net.n_params(), 0.0);
    std::vector<double> in_grads;
    net.backward(cache, ones, dummy, &in_grads);
    dq_da.assign(static_cast<std::size_t>(n) * ad, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < ad; ++j)
        dq_da[static_cast<std::size_t>(i) * ad + j] =
            in_grads[static_cast<std::size_t>(i) * (sd + ad) + sd + j];
  }
};

// Recovered Q0 surface of the eigenfunction learner:
// q = d1 * (V0(s,a) - V1(s)) + Lambda_b(s,a)
struct RecoveredQ0Surface : CriticForPolicy {
  const nn::Mlp &v0, &v1, &lb;
  const std::vector<double>& d1_rows;
  int sd, ad;
  RecoveredQ0Surface(const nn::Mlp& v0_, const nn::Mlp& v1_,
                     const nn::Mlp& lb_, const std::vector<double>& d1,
                     int state_dim, int action_dim)
      : v0(v0_), v1(v1_), lb(lb_), d1_rows(d1), sd(state_dim),
        ad(action_dim) {}
  void eval(const std::vector<double>& states, int n,
            const std::vector<double>& actions, std::vector<double>& q,
            std::vector<double>& dq_da) override {
    const auto sa = concat_state_action(states, actions, n, sd, ad);
    nn::Mlp::Cache cv0, cv1, clb;
    v0.forward_batch(sa, n, cv0);
    v1.forward_batch(states, n, cv1);
    lb.forward_batch(sa, n, clb);
    std::vector<double> ones(n, 1.0);
    std::vector<double> dummy0(v0.n_params(), 0.0), dummyl(lb.n_params(), 0.0);
    std::vector<double> gin_v0, gin_lb;
    v0.backward(cv0, ones, dummy0, &gin_v0);
    lb.backward(clb, ones, dummyl, &gin_lb);
    q.resize(n);
    dq_da.assign(static_cast<std::size_t>(n) * ad, 0.0);
    for (int i = 0; i < n; ++i) {
      const double d1 = d1_rows[i];
      q[i] = d1 * (cv0.acts.back()[i] - cv1.acts.back()[i]) +
             clb.acts.back()[i];
      for (int j = 0; j < ad; ++j) {
        const std::size_t in_idx =
            static_cast<std::size_t>(i) * (sd + ad) + sd + j;
        dq_da[static_cast<std::size_t>(i) * ad + j] =
            d1 * gin_v0[in_idx] + gin_lb[in_idx];
      }
    }
  }
};

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "cem") return Method::cem;
  if (name == "ddpg") return Method::ddpg;
  if (name == "td3") return Method::td3;
  if (name == "carl_dl" || name == "carl-dl") return Method::carl_dl;
  if (name == "carl_el" || name == "carl-el") return Method::carl_el;
  throw std::runtime_error("unknown method '" + name + "'");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::cem: return "cem";
    case Method::ddpg: return "ddpg";
    case Method::td3: return "td3";
    case Method::carl_dl: return "carl_dl";
    case Method::carl_el: return "carl_el";
  }
  return "?";
}

Learner::Learner(const RunConfig& cfg, std::uint64_t seed)
    : state_dim_(cfg.state_dim()), action_dim_(cfg.action_dim()),
      gamma_(cfg.gamma), tau_(cfg.polyak_tau), grad_clip_(cfg.grad_clip),
      exploration_std_(cfg.exploration_std), critic_lr_(cfg.critic_lr),
      actor_lr_(cfg.actor_lr), target_noise_std_(cfg.target_noise_std),
      target_noise_clip_(cfg.target_noise_clip),
      actor_delay_(cfg.actor_delay),
      actor_warmup_steps_(cfg.actor_warmup_steps), norm_(cfg.reward_norm),
      noise_rng_(seed ^ 0x5bd1e995u) {
  Rng init(seed);
  actor_ = nn::Mlp(net_dims(state_dim_, cfg.actor_hidden, action_dim_),
                   nn::OutputActivation::scaled_sigmoid3, init);
  actor_tgt_ = actor_;
  actor_opt_ = nn::Adam(actor_.n_params(), actor_lr_);
}

std::vector<int> Learner::critic_dims(const RunConfig& cfg,
                                      bool with_action) const {
  return net_dims(state_dim_ + (with_action ? action_dim_ : 0),
                  cfg.critic_hidden, 1);
}

Action Learner::act(const UserState& s) const {
  return Action(greedy_action(s.flatten())).clamped();
}

std::vector<double> Learner::greedy_action(
    const std::vector<double>& flat) const {
  std::vector<double> out =
      fixed_policy_ ? fixed_policy_(flat, 1) : actor_.forward1(flat);
  kern::clamp(out.data(), Action::kLo, Action::kHi, out.size());
  return out;
}

void Learner::scale_lr(double factor) {
  actor_opt_.set_lr(actor_opt_.lr() * factor);
}

void Learner::restore_actor(const std::vector<double>& params) {
  if (params.size() != actor_.n_params())
    throw std::runtime_error("restore_actor: size mismatch");
  actor_.params() = params;
  actor_tgt_.params() = params;
}

Action Learner::act_explore(const UserState& s, Rng& rng) const {
  Action a = act(s);
  for (auto& x : a.fusion) x += exploration_std_ * rng.normal();
  return a.clamped();
}

void Learner::set_fixed_policy(BatchPolicy policy) {
  fixed_policy_ = std::move(policy);
  update_actor_ = false;
}

std::vector<double> Learner::target_policy_actions(
    const std::vector<double>& states, int n) const {
  if (fixed_policy_) return fixed_policy_(states, n);
  nn::Mlp::Cache c;
  actor_tgt_.forward_batch(states, n, c);
  return c.acts.back();
}

std::vector<double> Learner::imputed_actions(const Batch& b) const {
  std::vector<double> out = target_policy_actions(b.states, b.n);
  for (int i = 0; i < b.n; ++i) {
    if (b.has_action[i]) {
      for (int j = 0; j < b.action_dim; ++j)
        out[static_cast<std::size_t>(i) * b.action_dim + j] =
            b.actions[static_cast<std::size_t>(i) * b.action_dim + j];
    }
  }
  return out;
}

void Learner::normalize_rewards(Batch& b) const {
  const double s = norm_.scale();
  if (s == 1.0) return;
  for (auto& r : b.rewards) r /= s;
}

void Learner::save_checkpoints(const std::string& dir) const {
  actor_.save_file(dir + "/actor.ckpt");
}

// ---------------------------------------------------------------- DDPG

DdpgLearner::DdpgLearner(const RunConfig& cfg, std::uint64_t seed)
    : Learner(cfg, seed) {
  Rng init(seed ^ 0xda3e39cb94b95bdbULL);
  critic_ = nn::Mlp(critic_dims(cfg, true),
                    nn::OutputActivation::identity, init);
  critic_tgt_ = critic_;
  critic_opt_ = nn::Adam(critic_.n_params(), critic_lr_);
}

TrainStats DdpgLearner::train_step(Batch b) {
  normalize_rewards(b);
  const auto tgt_a = target_policy_actions(b.next_states, b.n);
  std::vector<double> grads;
  TrainStats st;
  st.critic_loss = ddpg_critic_loss(b, critic_, critic_tgt_, tgt_a, gamma_,
                                    grads);
  nn::clip_global_norm(grads, grad_clip_);
  critic_opt_.step(critic_.params(), grads);

  if (actor_turn()) {
    MlpCriticSurface surface(critic_, state_dim_, action_dim_);
    actor_step(b.states, b.n, actor_, surface, actor_opt_, grad_clip_);
    nn::polyak_update(actor_tgt_, actor_, tau_);
  }
  nn::polyak_update(critic_tgt_, critic_, tau_);
  return st;
}

double DdpgLearner::value_predictor(const Transition& t) const {
  auto s = t.state.flatten();
  std::vector<double> a(action_dim_, 0.0);
  if (t.action) a = t.action->fusion;
  const auto sa = concat_state_action(s, a, 1, state_dim_, action_dim_);
  return critic_.forward1(sa)[0] * reward_scale();
}

double DdpgLearner::value_bootstrap(const UserState& next, CacheState,
                                    double) const {
  auto s = next.flatten();
  const auto a = act(next).fusion;
  const auto sa = concat_state_action(s, a, 1, state_dim_, action_dim_);
  return critic_.forward1(sa)[0] * reward_scale();
}

std::pair<double, double> DdpgLearner::q0_q1_flat(
    const std::vector<double>& flat, double) const {
  const auto a = greedy_action(flat);
  const auto sa = concat_state_action(flat, a, 1, state_dim_, action_dim_);
  return {critic_.forward1(sa)[0] * reward_scale(), kNan};
}

void DdpgLearner::save_checkpoints(const std::string& dir) const {
  Learner::save_checkpoints(dir);
  critic_.save_file(dir + "/critic.ckpt");
}

void DdpgLearner::scale_lr(double factor) {
  Learner::scale_lr(factor);
  critic_opt_.set_lr(critic_opt_.lr() * factor);
}

// ----------------------------------------------------------------- TD3

Td3Learner::Td3Learner(const RunConfig& cfg, std::uint64_t seed)
    : Learner(cfg, seed) {
  Rng init(seed ^ 0xc2b2ae3d27d4eb4fULL);
  c1_ = nn::Mlp(critic_dims(cfg, true), nn::OutputActivation::identity,
                init);
  c2_ = nn::Mlp(critic_dims(cfg, true), nn::OutputActivation::identity,
                init);
  c1_tgt_ = c1_;
  c2_tgt_ = c2_;
  opt1_ = nn::Adam(c1_.n_params(), critic_lr_);
  opt2_ = nn::Adam(c2_.n_params(), critic_lr_);
}

TrainStats Td3Learner::train_step(Batch b) {
  normalize_rewards(b);
  auto tgt_a = target_policy_actions(b.next_states, b.n);
  if (target_noise_std_ > 0.0) {
    for (auto& x : tgt_a) {
      double eps = target_noise_std_ * noise_rng_.normal();
      eps = std::min(std::max(eps, -target_noise_clip_), target_noise_clip_);
      x = std::min(std::max(x + eps, Action::kLo), Action::kHi);
    }
  }
  const auto pred_a = imputed_actions(b);
  std::vector<double> g1, g2;
  TrainStats st;
  st.critic_loss = td3_critic_loss(b, c1_, c2_, c1_tgt_, c2_tgt_, pred_a,
                                   tgt_a, gamma_, g1, g2);
  nn::clip_global_norm(g1, grad_clip_);
  nn::clip_global_norm(g2, grad_clip_);
  opt1_.step(c1_.params(), g1);
  opt2_.step(c2_.params(), g2);

  ++step_count_;
  if (actor_turn() && step_count_ % actor_delay_ == 0) {
    MlpCriticSurface surface(c1_, state_dim_, action_dim_);
    actor_step(b.states, b.n, actor_, surface, actor_opt_, grad_clip_);
    nn::polyak_update(actor_tgt_, actor_, tau_);
    nn::polyak_update(c1_tgt_, c1_, tau_);
    nn::polyak_update(c2_tgt_, c2_, tau_);
  } else if (!update_actor_) {
    nn::polyak_update(c1_tgt_, c1_, tau_);
    nn::polyak_update(c2_tgt_, c2_, tau_);
  }
  return st;
}

double Td3Learner::min_q(const std::vector<double>& sa) const {
  return std::min(c1_.forward1(sa)[0], c2_.forward1(sa)[0]);
}

double Td3Learner::value_predictor(const Transition& t) const {
  auto s = t.state.flatten();
  const auto a = t.action ? t.action->fusion : act(t.state).fusion;
  const auto sa = concat_state_action(s, a, 1, state_dim_, action_dim_);
  return min_q(sa) * reward_scale();
}

double Td3Learner::value_bootstrap(const UserState& next, CacheState,
                                   double) const {
  auto s = next.flatten();
  const auto a = act(next).fusion;
  const auto sa = concat_state_action(s, a, 1, state_dim_, action_dim_);
  return min_q(sa) * reward_scale();
}

std::pair<double, double> Td3Learner::q0_q1_flat(
    const std::vector<double>& flat, double) const {
  const auto a = greedy_action(flat);
  const auto sa = concat_state_action(flat, a, 1, state_dim_, action_dim_);
  return {min_q(sa) * reward_scale(), kNan};
}

void Td3Learner::save_checkpoints(const std::string& dir) const {
  Learner::save_checkpoints(dir);
  c1_.save_file(dir + "/critic1.ckpt");
  c2_.save_file(dir + "/critic2.ckpt");
}

void Td3Learner::scale_lr(double factor) {
  Learner::scale_lr(factor);
  opt1_.set_lr(opt1_.lr() * factor);
  opt2_.set_lr(opt2_.lr() * factor);
}

// ------------------------------------------------------------- CARL-DL

CarlDlLearner::CarlDlLearner(const RunConfig& cfg, std::uint64_t seed)
    : Learner(cfg, seed) {
  Rng init(seed ^ 0x165667b19e3779f9ULL);
  q0_ = nn::Mlp(critic_dims(cfg, true), nn::OutputActivation::identity,
                init);
  q1_ = nn::Mlp(critic_dims(cfg, false), nn::OutputActivation::identity,
                init);
  q0_tgt_ = q0_;
  q1_tgt_ = q1_;
  opt0_ = nn::Adam(q0_.n_params(), critic_lr_);
  opt1_ = nn::Adam(q1_.n_params(), critic_lr_);
}

TrainStats CarlDlLearner::train_step(Batch b) {
  normalize_rewards(b);
  const auto tgt_a = target_policy_actions(b.next_states, b.n);
  std::vector<double> g0, g1;
  TrainStats st;
  st.critic_loss = carl_dl_loss(b, q0_, q1_, q0_tgt_, q1_tgt_, tgt_a, gamma_,
                                g0, g1, &case_counts_);
  nn::clip_global_norm(g0, grad_clip_);
  nn::clip_global_norm(g1, grad_clip_);
  opt0_.step(q0_.params(), g0);
  opt1_.step(q1_.params(), g1);

  if (actor_turn()) {
    MlpCriticSurface surface(q0_, state_dim_, action_dim_);
    actor_step(b.states, b.n, actor_, surface, actor_opt_, grad_clip_);
    nn::polyak_update(actor_tgt_, actor_, tau_);
  }
  nn::polyak_update(q0_tgt_, q0_, tau_);
  nn::polyak_update(q1_tgt_, q1_, tau_);
  return st;
}

double CarlDlLearner::value_predictor(const Transition& t) const {
  auto s = t.state.flatten();
  if (t.cache_state == CacheState::RealTime) {
    const auto sa = concat_state_action(s, t.action->fusion, 1, state_dim_,
                                        action_dim_);
    return q0_.forward1(sa)[0] * reward_scale();
  }
  return q1_.forward1(s)[0] * reward_scale();
}

double CarlDlLearner::value_bootstrap(const UserState& next, CacheState c2,
                                      double) const {
  auto s = next.flatten();
  if (c2 == CacheState::RealTime) {
    const auto a = act(next).fusion;
    const auto sa = concat_state_action(s, a, 1, state_dim_, action_dim_);
    return q0_.forward1(sa)[0] * reward_scale();
  }
  return q1_.forward1(s)[0] * reward_scale();
}

std::pair<double, double> CarlDlLearner::q0_q1_flat(
    const std::vector<double>& flat, double) const {
  const auto a = greedy_action(flat);
  const auto sa = concat_state_action(flat, a, 1, state_dim_, action_dim_);
  return {q0_.forward1(sa)[0] * reward_scale(),
          q1_.forward1(flat)[0] * reward_scale()};
}

void CarlDlLearner::save_checkpoints(const std::string& dir) const {
  Learner::save_checkpoints(dir);
  q0_.save_file(dir + "/critic_q0.ckpt");
  q1_.save_file(dir + "/critic_q1.ckpt");
}

void CarlDlLearner::scale_lr(double factor) {
  Learner::scale_lr(factor);
  opt0_.set_lr(opt0_.lr() * factor);
  opt1_.set_lr(opt1_.lr() * factor);
}

// ------------------------------------------------------------- CARL-EL

CarlElLearner::CarlElLearner(const RunConfig& cfg, std::uint64_t seed)
    : Learner(cfg, seed), d_(cfg.d_bucket_s, cfg.d_alpha) {
  Rng init(seed ^ 0x27d4eb2f165667c5ULL);
  v0_ = nn::Mlp(critic_dims(cfg, true), nn::OutputActivation::identity,
                init);
  v1_ = nn::Mlp(critic_dims(cfg, false), nn::OutputActivation::identity,
                init);
  lambda_b_ = nn::Mlp(critic_dims(cfg, true),
                      nn::OutputActivation::identity, init);
  lambda_b_tgt_ = lambda_b_;
  opt_v0_ = nn::Adam(v0_.n_params(), critic_lr_);
  opt_v1_ = nn::Adam(v1_.n_params(), critic_lr_);
  opt_lb_ = nn::Adam(lambda_b_.n_params(), critic_lr_);
}

void CarlElLearner::observe(const Transition& t) {
  Learner::observe(t);
  d_.observe(t.sim_time, t.cache_state);
}

TrainStats CarlElLearner::train_step(Batch b) {
  normalize_rewards(b);
  TrainStats st;

  // Step 1: immediate heads
  std::vector<double> gv0, gv1;
  immediate_loss(b, v0_, v1_, gv0, gv1);
  nn::clip_global_norm(gv0, grad_clip_);
  nn::clip_global_norm(gv1, grad_clip_);
  opt_v0_.step(v0_.params(), gv0);
  opt_v1_.step(v1_.params(), gv1);

  // Steps 2-3: eigen TD on the load-weighted head
  const auto pred_a = imputed_actions(b);
  const auto tgt_a = target_policy_actions(b.next_states, b.n);
  std::vector<double> d0_rows(b.n), d1_rows(b.n);
  for (int i = 0; i < b.n; ++i) {
    const auto d = d_.query(b.sim_times[i]);
    d0_rows[i] = d.first;
    d1_rows[i] = d.second;
  }
  std::vector<double> g_rho;
  st.critic_loss = eigen_td_loss(b, lambda_b_, lambda_b_tgt_, v0_, v1_,
                                 pred_a, tgt_a, d0_rows, gamma_, g_rho);
  nn::clip_global_norm(g_rho, grad_clip_);
  opt_lb_.step(lambda_b_.params(), g_rho);

  // Steps 4-5: actor ascends the recovered Q0
  if (actor_turn()) {
    RecoveredQ0Surface surface(v0_, v1_, lambda_b_, d1_rows, state_dim_,
                               action_dim_);
    actor_step(b.states, b.n, actor_, surface, actor_opt_, grad_clip_);
    nn::polyak_update(actor_tgt_, actor_, tau_);
  }
  nn::polyak_update(lambda_b_tgt_, lambda_b_, tau_);
  return st;
}

CarlElLearner::RecoveredQ CarlElLearner::recovered_q(
    const std::vector<double>& flat_state, const std::vector<double>& action,
    double sim_time) const {
  const auto sa =
      concat_state_action(flat_state, action, 1, state_dim_, action_dim_);
  const double v0 = v0_.forward1(sa)[0];
  const double v1 = v1_.forward1(flat_state)[0];
  RecoveredQ out;
  out.lambda_a = v0 - v1;
  const double lambda_b = lambda_b_.forward1(sa)[0];
  const double d0 = d_.query(sim_time).first;
  out.q1 = -d0 * out.lambda_a + lambda_b;
  out.q0 = out.q1 + out.lambda_a;
  return out;
}

double CarlElLearner::value_predictor(const Transition& t) const {
  const auto s = t.state.flatten();
  const auto a = t.action ? t.action->fusion : act(t.state).fusion;
  const auto q = recovered_q(s, a, t.sim_time);
  return (t.cache_state == CacheState::RealTime ? q.q0 : q.q1) *
         reward_scale();
}

double CarlElLearner::value_bootstrap(const UserState& next, CacheState c2,
                                      double sim_time) const {
  const auto s = next.flatten();
  const auto a = act(next).fusion;
  const auto q = recovered_q(s, a, sim_time);
  return (c2 == CacheState::RealTime ? q.q0 : q.q1) * reward_scale();
}

std::pair<double, double> CarlElLearner::q0_q1_flat(
    const std::vector<double>& flat, double sim_time) const {
  const auto a = greedy_action(flat);
  const auto q = recovered_q(flat, a, sim_time);
  return {q.q0 * reward_scale(), q.q1 * reward_scale()};
}

void CarlElLearner::save_checkpoints(const std::string& dir) const {
  Learner::save_checkpoints(dir);
  v0_.save_file(dir + "/head_v0.ckpt");
  v1_.save_file(dir + "/head_v1.ckpt");
  lambda_b_.save_file(dir + "/head_lambda_b.ckpt");
}

void CarlElLearner::scale_lr(double factor) {
  Learner::scale_lr(factor);
  opt_v0_.set_lr(opt_v0_.lr() * factor);
  opt_v1_.set_lr(opt_v1_.lr() * factor);
  opt_lb_.set_lr(opt_lb_.lr() * factor);
}

DiagValues Learner::diag_values(const Batch& b) const {
  DiagValues d;
  double m0 = 0.0, m1 = 0.0, mla = 0.0;
  long n1 = 0;
  std::vector<double> flat(b.state_dim);
  for (int i = 0; i < b.n; ++i) {
    flat.assign(b.state(i), b.state(i) + b.state_dim);
    const auto q = q0_q1_flat(flat, b.sim_times[i]);
    m0 += q.first;
    if (std::isfinite(q.second)) {
      m1 += q.second;
      mla += q.first - q.second;
      ++n1;
    }
  }
  d.mean_q0 = b.n ? m0 / b.n : kNan;
  d.mean_q1 = n1 ? m1 / n1 : kNan;
  d.mean_lambda_a = n1 ? mla / n1 : kNan;
  return d;
}

std::unique_ptr<Learner> make_learner(Method m, const RunConfig& cfg,
                                      std::uint64_t seed) {
  switch (m) {
    case Method::ddpg: return std::make_unique<DdpgLearner>(cfg, seed);
    case Method::td3: return std::make_unique<Td3Learner>(cfg, seed);
    case Method::carl_dl: return std::make_unique<CarlDlLearner>(cfg, seed);
    case Method::carl_el: return std::make_unique<CarlElLearner>(cfg, seed);
    case Method::cem: break;
  }
  throw std::runtime_error("make_learner: cem has no gradient learner");
}

}  // namespace carl::algos
