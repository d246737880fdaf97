#include "carl/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace carl::algos {

Batch Batch::from_transitions(std::span<const Transition> ts, int state_dim,
                              int action_dim) {
  Batch b;
  b.n = static_cast<int>(ts.size());
  b.state_dim = state_dim;
  b.action_dim = action_dim;
  b.states.reserve(static_cast<std::size_t>(b.n) * state_dim);
  b.next_states.reserve(static_cast<std::size_t>(b.n) * state_dim);
  b.actions.assign(static_cast<std::size_t>(b.n) * action_dim, 0.0);
  b.has_action.resize(b.n);
  b.rewards.resize(b.n);
  b.cache.resize(b.n);
  b.next_cache.resize(b.n);
  b.done.resize(b.n);
  b.sim_times.resize(b.n);
  for (int i = 0; i < b.n; ++i) {
    const Transition& t = ts[i];
    auto s = t.state.flatten();
    auto s2 = t.next_state.flatten();
    if (static_cast<int>(s.size()) != state_dim ||
        static_cast<int>(s2.size()) != state_dim)
      throw std::runtime_error("Batch: state dimension mismatch");
    b.states.insert(b.states.end(), s.begin(), s.end());
    b.next_states.insert(b.next_states.end(), s2.begin(), s2.end());
    b.has_action[i] = t.action.has_value() ? 1 : 0;
    if (t.action) {
      if (static_cast<int>(t.action->fusion.size()) != action_dim)
        throw std::runtime_error("Batch: action dimension mismatch");
      for (int j = 0; j < action_dim; ++j)
        b.actions[static_cast<std::size_t>(i) * action_dim + j] =
            t.action->fusion[j];
    }
    b.rewards[i] = t.reward;
    b.cache[i] = t.cache_state == CacheState::Cached ? 1 : 0;
    b.next_cache[i] = t.next_cache_state == CacheState::Cached ? 1 : 0;
    b.done[i] = t.done ? 1 : 0;
    b.sim_times[i] = t.sim_time;
  }
  return b;
}

BatchPolicy mlp_policy(const nn::Mlp& net) {
  return [&net](const std::vector<double>& states, int n) {
    nn::Mlp::Cache c;
    net.forward_batch(states, n, c);
    return c.acts.back();
  };
}

std::vector<double> concat_state_action(const std::vector<double>& states,
                                        const std::vector<double>& actions,
                                        int n, int state_dim,
                                        int action_dim) {
  std::vector<double> out(static_cast<std::size_t>(n) *
                          (state_dim + action_dim));
  for (int i = 0; i < n; ++i) {
    double* dst = out.data() + static_cast<std::size_t>(i) *
                                   (state_dim + action_dim);
    const double* s = states.data() + static_cast<std::size_t>(i) * state_dim;
    const double* a =
        actions.data() + static_cast<std::size_t>(i) * action_dim;
    for (int j = 0; j < state_dim; ++j) dst[j] = s[j];
    for (int j = 0; j < action_dim; ++j) dst[state_dim + j] = a[j];
  }
  return out;
}

namespace {

void require_nonempty(const Batch& b, const char* who) {
  if (b.n == 0) throw std::runtime_error(std::string(who) + ": empty batch");
}

}  // namespace

double ddpg_critic_loss(const Batch& b, const nn::Mlp& critic,
                        const nn::Mlp& critic_tgt,
                        const std::vector<double>& target_actions,
                        double gamma, std::vector<double>& grads) {
  require_nonempty(b, "ddpg_critic_loss");
  const auto sa = concat_state_action(b.states, b.actions, b.n, b.state_dim,
                                      b.action_dim);
  nn::Mlp::Cache cache;
  critic.forward_batch(sa, b.n, cache);
  const auto& q = cache.acts.back();

  const auto sa2 = concat_state_action(b.next_states, target_actions, b.n,
                                       b.state_dim, b.action_dim);
  nn::Mlp::Cache tgt_cache;
  critic_tgt.forward_batch(sa2, b.n, tgt_cache);
  const auto& q_next = tgt_cache.acts.back();

  double loss = 0.0;
  std::vector<double> adj(b.n);
  for (int i = 0; i < b.n; ++i) {
    const double boot = b.done[i] ? 0.0 : gamma * q_next[i];
    const double diff = q[i] - (b.rewards[i] + boot);
    loss += diff * diff;
    adj[i] = 2.0 * diff / b.n;
  }
  loss /= b.n;
  grads.assign(critic.n_params(), 0.0);
  critic.backward(cache, adj, grads);
  return loss;
}

double td3_critic_loss(const Batch& b, const nn::Mlp& c1, const nn::Mlp& c2,
                       const nn::Mlp& c1_tgt, const nn::Mlp& c2_tgt,
                       const std::vector<double>& predictor_actions,
                       const std::vector<double>& target_actions,
                       double gamma, std::vector<double>& g1,
                       std::vector<double>& g2) {
  require_nonempty(b, "td3_critic_loss");
  const auto sa = concat_state_action(b.states, predictor_actions, b.n,
                                      b.state_dim, b.action_dim);
  nn::Mlp::Cache k1, k2;
  c1.forward_batch(sa, b.n, k1);
  c2.forward_batch(sa, b.n, k2);
  const auto sa2 = concat_state_action(b.next_states, target_actions, b.n,
                                       b.state_dim, b.action_dim);
  nn::Mlp::Cache t1, t2;
  c1_tgt.forward_batch(sa2, b.n, t1);
  c2_tgt.forward_batch(sa2, b.n, t2);

  const auto& q1 = k1.acts.back();
  const auto& q2 = k2.acts.back();
  double loss = 0.0;
  std::vector<double> adj1(b.n), adj2(b.n);
  for (int i = 0; i < b.n; ++i) {
    const double qmin = std::min(t1.acts.back()[i], t2.acts.back()[i]);
    const double target =
        b.rewards[i] + (b.done[i] ? 0.0 : gamma * qmin);
    const double d1 = q1[i] - target;
    const double d2 = q2[i] - target;
    loss += d1 * d1 + d2 * d2;
    adj1[i] = 2.0 * d1 / b.n;
    adj2[i] = 2.0 * d2 / b.n;
  }
  loss /= b.n;
  g1.assign(c1.n_params(), 0.0);
  g2.assign(c2.n_params(), 0.0);
  c1.backward(k1, adj1, g1);
  c2.backward(k2, adj2, g2);
  return loss;
}

double carl_dl_loss(const Batch& b, const nn::Mlp& q0, const nn::Mlp& q1,
                    const nn::Mlp& q0_tgt, const nn::Mlp& q1_tgt,
                    const std::vector<double>& target_actions, double gamma,
                    std::vector<double>& g_q0, std::vector<double>& g_q1,
                    std::array<long, 4>* case_counts) {
  require_nonempty(b, "carl_dl_loss");
  for (int i = 0; i < b.n; ++i)
    if (b.cache[i] == 0 && !b.has_action[i])
      throw std::runtime_error(
          "carl_dl_loss: real-time transition with missing action");

  const auto sa = concat_state_action(b.states, b.actions, b.n, b.state_dim,
                                      b.action_dim);
  nn::Mlp::Cache k0, k1;
  q0.forward_batch(sa, b.n, k0);
  q1.forward_batch(b.states, b.n, k1);

  const auto sa2 = concat_state_action(b.next_states, target_actions, b.n,
                                       b.state_dim, b.action_dim);
  nn::Mlp::Cache t0, t1;
  q0_tgt.forward_batch(sa2, b.n, t0);
  q1_tgt.forward_batch(b.next_states, b.n, t1);

  double loss = 0.0;
  std::vector<double> adj0(b.n, 0.0), adj1v(b.n, 0.0);
  for (int i = 0; i < b.n; ++i) {
    const double boot_val =
        b.next_cache[i] == 0 ? t0.acts.back()[i] : t1.acts.back()[i];
    const double target =
        b.rewards[i] + (b.done[i] ? 0.0 : gamma * boot_val);
    const double pred =
        b.cache[i] == 0 ? k0.acts.back()[i] : k1.acts.back()[i];
    const double diff = pred - target;
    loss += diff * diff;
    if (b.cache[i] == 0)
      adj0[i] = 2.0 * diff / b.n;
    else
      adj1v[i] = 2.0 * diff / b.n;
    if (case_counts)
      (*case_counts)[(b.cache[i] ? 2 : 0) + (b.next_cache[i] ? 1 : 0)] += 1;
  }
  loss /= b.n;
  g_q0.assign(q0.n_params(), 0.0);
  g_q1.assign(q1.n_params(), 0.0);
  q0.backward(k0, adj0, g_q0);
  q1.backward(k1, adj1v, g_q1);
  return loss;
}

double immediate_loss(const Batch& b, const nn::Mlp& v0, const nn::Mlp& v1,
                      std::vector<double>& g_v0, std::vector<double>& g_v1) {
  require_nonempty(b, "immediate_loss");
  const auto sa = concat_state_action(b.states, b.actions, b.n, b.state_dim,
                                      b.action_dim);
  nn::Mlp::Cache k0, k1;
  v0.forward_batch(sa, b.n, k0);
  v1.forward_batch(b.states, b.n, k1);
  double loss = 0.0;
  std::vector<double> adj0(b.n, 0.0), adj1(b.n, 0.0);
  for (int i = 0; i < b.n; ++i) {
    if (b.cache[i] == 0) {
      const double diff = k0.acts.back()[i] - b.rewards[i];
      loss += diff * diff;
      adj0[i] = 2.0 * diff / b.n;
    } else {
      const double diff = k1.acts.back()[i] - b.rewards[i];
      loss += diff * diff;
      adj1[i] = 2.0 * diff / b.n;
    }
  }
  loss /= b.n;
  g_v0.assign(v0.n_params(), 0.0);
  g_v1.assign(v1.n_params(), 0.0);
  v0.backward(k0, adj0, g_v0);
  v1.backward(k1, adj1, g_v1);
  return loss;
}

double eigen_td_loss(const Batch& b, const nn::Mlp& lambda_b,
                     const nn::Mlp& lambda_b_tgt, const nn::Mlp& v0,
                     const nn::Mlp& v1,
                     const std::vector<double>& predictor_actions,
                     const std::vector<double>& target_actions,
                     const std::vector<double>& d0_per_row, double gamma,
                     std::vector<double>& g_rho) {
  require_nonempty(b, "eigen_td_loss");
  const auto sa = concat_state_action(b.states, predictor_actions, b.n,
                                      b.state_dim, b.action_dim);
  nn::Mlp::Cache kb;
  lambda_b.forward_batch(sa, b.n, kb);

  // immediate heads, read-only (stopped gradients)
  nn::Mlp::Cache kv0, kv1;
  v0.forward_batch(sa, b.n, kv0);
  v1.forward_batch(b.states, b.n, kv1);

  const auto sa2 = concat_state_action(b.next_states, target_actions, b.n,
                                       b.state_dim, b.action_dim);
  nn::Mlp::Cache kt;
  lambda_b_tgt.forward_batch(sa2, b.n, kt);

  double loss = 0.0;
  std::vector<double> adj(b.n);
  for (int i = 0; i < b.n; ++i) {
    const double d0 = d0_per_row[i];
    const double gamma_b =
        eigen_immediate(kv0.acts.back()[i], kv1.acts.back()[i], d0).second;
    const double target =
        gamma_b + (b.done[i] ? 0.0 : gamma * kt.acts.back()[i]);
    const double diff = kb.acts.back()[i] - target;
    loss += diff * diff;
    adj[i] = 2.0 * diff / b.n;
  }
  loss /= b.n;
  g_rho.assign(lambda_b.n_params(), 0.0);
  lambda_b.backward(kb, adj, g_rho);
  return loss;
}

CacheRatioEstimator::CacheRatioEstimator(double bucket_s, double alpha)
    : bucket_s_(bucket_s), alpha_(alpha) {
  const int nb = static_cast<int>(std::ceil(86400.0 / bucket_s_));
  n_realtime_.assign(nb, 0);
  n_cached_.assign(nb, 0);
}

int CacheRatioEstimator::bucket_of(double sim_time) const {
  const double tod = time_of_day_fraction(sim_time) * 86400.0;
  int b = static_cast<int>(tod / bucket_s_);
  if (b >= n_buckets()) b = n_buckets() - 1;
  return b;
}

void CacheRatioEstimator::observe(double sim_time, CacheState c) {
  const int b = bucket_of(sim_time);
  if (c == CacheState::Cached)
    ++n_cached_[b];
  else
    ++n_realtime_[b];
}

std::pair<double, double> CacheRatioEstimator::query(double sim_time) const {
  const int b = bucket_of(sim_time);
  const double denom = n_realtime_[b] + n_cached_[b] + 2.0 * alpha_;
  if (denom == 0.0)
    throw std::runtime_error(
        "CacheRatioEstimator: empty bucket with alpha = 0");
  const double d0 = (n_realtime_[b] + alpha_) / denom;
  return {d0, 1.0 - d0};
}

double actor_step(const std::vector<double>& states, int n, nn::Mlp& actor,
                  CriticForPolicy& critic, nn::Adam& opt, double grad_clip) {
  nn::Mlp::Cache cache;
  actor.forward_batch(states, n, cache);
  const auto& actions = cache.acts.back();
  std::vector<double> q, dq_da;
  critic.eval(states, n, actions, q, dq_da);
  double objective = 0.0;
  for (int i = 0; i < n; ++i) objective += q[i];
  objective /= n;
  // minimize -mean q
  std::vector<double> adj(dq_da.size());
  for (std::size_t i = 0; i < adj.size(); ++i) adj[i] = -dq_da[i] / n;
  std::vector<double> grads(actor.n_params(), 0.0);
  actor.backward(cache, adj, grads);
  nn::clip_global_norm(grads, grad_clip);
  opt.step(actor.params(), grads);
  return objective;
}

}  // namespace carl::algos
