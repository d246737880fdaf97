#pragma once

// Finite-difference verification of every loss's reverse-mode gradient,
// shared between the unit tests and the acceptance suite.

#include <vector>

#include "carl/losses.hpp"
#include "carl/mlp.hpp"
#include "carl/rng.hpp"
#include "gradcheck.hpp"

namespace testutil {

inline carl::algos::Batch random_batch(carl::Rng& rng, int n, int sd,
                                       int ad) {
  carl::algos::Batch b;
  b.n = n;
  b.state_dim = sd;
  b.action_dim = ad;
  b.states.resize(static_cast<std::size_t>(n) * sd);
  b.next_states.resize(static_cast<std::size_t>(n) * sd);
  for (auto& x : b.states) x = rng.uniform(-1.0, 1.0);
  for (auto& x : b.next_states) x = rng.uniform(-1.0, 1.0);
  b.actions.assign(static_cast<std::size_t>(n) * ad, 0.0);
  b.has_action.resize(n);
  b.rewards.resize(n);
  b.cache.resize(n);
  b.next_cache.resize(n);
  b.done.resize(n);
  b.sim_times.resize(n);
  for (int i = 0; i < n; ++i) {
    const bool cached = rng.uniform() < 0.4;
    b.cache[i] = cached ? 1 : 0;
    b.has_action[i] = cached ? 0 : 1;
    if (!cached)
      for (int j = 0; j < ad; ++j)
        b.actions[static_cast<std::size_t>(i) * ad + j] =
            rng.uniform(0.0, 3.0);
    b.rewards[i] = rng.uniform(0.0, 2.0);
    b.next_cache[i] = rng.uniform() < 0.4 ? 1 : 0;
    b.done[i] = rng.uniform() < 0.2 ? 1 : 0;
    b.sim_times[i] = rng.uniform(0.0, 86400.0);
  }
  return b;
}

struct LossGradErrors {
  double ddpg = 0.0;
  double td3 = 0.0;
  double carl_dl_q0 = 0.0, carl_dl_q1 = 0.0;
  double immediate_v0 = 0.0, immediate_v1 = 0.0;
  double eigen_td = 0.0;
  double worst() const {
    double w = ddpg;
    for (double v : {td3, carl_dl_q0, carl_dl_q1, immediate_v0, immediate_v1,
                     eigen_td})
      w = std::max(w, v);
    return w;
  }
};

// Checks n_coords random coordinates of every loss at h = 1e-5.
inline LossGradErrors run_loss_gradchecks(std::uint64_t seed, int n_coords) {
  using namespace carl;
  using namespace carl::algos;
  Rng rng(seed);
  const int sd = 6, ad = 3, n = 16;
  const double gamma = 0.9;
  Batch b = random_batch(rng, n, sd, ad);

  auto make = [&](int in_dim) {
    return nn::Mlp({in_dim, 12, 10, 1}, nn::OutputActivation::identity, rng);
  };
  nn::Mlp qsa = make(sd + ad), qsa_tgt = make(sd + ad);
  nn::Mlp qs = make(sd), qs_tgt = make(sd);
  nn::Mlp v0 = make(sd + ad), v1 = make(sd);
  nn::Mlp lb = make(sd + ad), lb_tgt = make(sd + ad);
  nn::Mlp twin = make(sd + ad), twin_tgt = make(sd + ad);

  std::vector<double> tgt_actions(static_cast<std::size_t>(n) * ad);
  for (auto& x : tgt_actions) x = rng.uniform(0.0, 3.0);
  std::vector<double> pred_actions = b.actions;
  for (int i = 0; i < n; ++i)
    if (!b.has_action[i])
      for (int j = 0; j < ad; ++j)
        pred_actions[static_cast<std::size_t>(i) * ad + j] =
            rng.uniform(0.0, 3.0);
  std::vector<double> d0_rows(n);
  for (auto& d : d0_rows) d = rng.uniform(0.1, 0.9);

  LossGradErrors errs;
  std::vector<double> g, g2;

  // plain critic
  {
    Batch rb = b;  // baseline path: zero action where absent
    ddpg_critic_loss(rb, qsa, qsa_tgt, tgt_actions, gamma, g);
    auto loss = [&]() {
      std::vector<double> tmp;
      return ddpg_critic_loss(rb, qsa, qsa_tgt, tgt_actions, gamma, tmp);
    };
    errs.ddpg =
        gradcheck(qsa.params(), g, loss, n_coords, rng).max_rel_err;
  }
  // twin critic (first twin's gradient)
  {
    td3_critic_loss(b, qsa, twin, qsa_tgt, twin_tgt, pred_actions,
                    tgt_actions, gamma, g, g2);
    auto loss = [&]() {
      std::vector<double> t1, t2;
      return td3_critic_loss(b, qsa, twin, qsa_tgt, twin_tgt, pred_actions,
                             tgt_actions, gamma, t1, t2);
    };
    errs.td3 = gradcheck(qsa.params(), g, loss, n_coords, rng).max_rel_err;
  }
  // conditional critics
  {
    carl_dl_loss(b, qsa, qs, qsa_tgt, qs_tgt, tgt_actions, gamma, g, g2);
    auto loss = [&]() {
      std::vector<double> t1, t2;
      return carl_dl_loss(b, qsa, qs, qsa_tgt, qs_tgt, tgt_actions, gamma,
                          t1, t2);
    };
    errs.carl_dl_q0 =
        gradcheck(qsa.params(), g, loss, n_coords, rng).max_rel_err;
    errs.carl_dl_q1 =
        gradcheck(qs.params(), g2, loss, n_coords, rng).max_rel_err;
  }
  // immediate heads
  {
    immediate_loss(b, v0, v1, g, g2);
    auto loss = [&]() {
      std::vector<double> t1, t2;
      return immediate_loss(b, v0, v1, t1, t2);
    };
    errs.immediate_v0 =
        gradcheck(v0.params(), g, loss, n_coords, rng).max_rel_err;
    errs.immediate_v1 =
        gradcheck(v1.params(), g2, loss, n_coords, rng).max_rel_err;
  }
  // eigen TD
  {
    eigen_td_loss(b, lb, lb_tgt, v0, v1, pred_actions, tgt_actions, d0_rows,
                  gamma, g);
    auto loss = [&]() {
      std::vector<double> t1;
      return eigen_td_loss(b, lb, lb_tgt, v0, v1, pred_actions, tgt_actions,
                           d0_rows, gamma, t1);
    };
    errs.eigen_td =
        gradcheck(lb.params(), g, loss, n_coords, rng).max_rel_err;
  }
  return errs;
}

}  // namespace testutil
