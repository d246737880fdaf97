#include "carl/tabular.hpp"

#include <cmath>
#include <cstdlib>

namespace carl::oracle {

namespace {

double max_abs(double a, double b) { return std::abs(a) > b ? std::abs(a) : b; }

}  // namespace

std::optional<std::string> TabularMdp::check() const {
  constexpr double kTol = 1e-12;
  if (n_states <= 0 || n_actions <= 0 || horizon <= 0)
    return "empty dimensions";
  if (static_cast<int>(d0.size()) != horizon) return "d0 schedule length";
  for (double d : d0)
    if (!(d >= 0.0 && d <= 1.0)) return "d0 outside [0,1]";
  for (int s = 0; s < n_states; ++s) {
    double row = 0.0;
    for (int s2 = 0; s2 < n_states; ++s2) {
      if (p1(s, s2) < 0) return "negative cached kernel entry";
      row += p1(s, s2);
    }
    if (std::abs(row - 1.0) > kTol) return "cached kernel row not stochastic";
    for (int a = 0; a < n_actions; ++a) {
      row = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        if (p0(s, a, s2) < 0) return "negative real-time kernel entry";
        row += p0(s, a, s2);
      }
      if (std::abs(row - 1.0) > kTol)
        return "real-time kernel row not stochastic";
    }
  }
  for (double r : v0)
    if (!std::isfinite(r)) return "non-finite v0";
  for (double r : v1)
    if (!std::isfinite(r)) return "non-finite v1";
  return std::nullopt;
}

TabularPolicy TabularPolicy::deterministic(
    const std::vector<int>& action_of_state, int n_actions) {
  TabularPolicy p;
  p.n_states = static_cast<int>(action_of_state.size());
  p.n_actions = n_actions;
  p.probs.assign(static_cast<std::size_t>(p.n_states) * n_actions, 0.0);
  for (int s = 0; s < p.n_states; ++s)
    p.probs[static_cast<std::size_t>(s) * n_actions + action_of_state[s]] =
        1.0;
  return p;
}

QTables exact_q(const TabularMdp& mdp, const TabularPolicy& policy) {
  const int S = mdp.n_states, A = mdp.n_actions, T = mdp.horizon;
  QTables q;
  q.horizon = T;
  q.n_states = S;
  q.n_actions = A;
  q.q0.assign(static_cast<std::size_t>(T) * S * A, 0.0);
  q.q1.assign(static_cast<std::size_t>(T) * S, 0.0);

  auto q0_at = [&](int t, int s, int a) -> double& {
    return q.q0[(static_cast<std::size_t>(t) * S + s) * A + a];
  };
  auto q1_at = [&](int t, int s) -> double& {
    return q.q1[static_cast<std::size_t>(t) * S + s];
  };

  for (int t = T - 1; t >= 0; --t) {
    // continuation value of landing in s' at step t+1, weighted by the
    // cache probability of step t+1
    std::vector<double> cont(S, 0.0);
    if (t + 1 < T) {
      for (int s2 = 0; s2 < S; ++s2) {
        double q0_pi = 0.0;
        for (int a2 = 0; a2 < A; ++a2)
          q0_pi += policy.prob(s2, a2) * q0_at(t + 1, s2, a2);
        cont[s2] = mdp.d0[t + 1] * q0_pi + mdp.d1(t + 1) * q1_at(t + 1, s2);
      }
    }
    for (int s = 0; s < S; ++s) {
      double acc1 = mdp.reward1(s);
      if (t + 1 < T) {
        double e = 0.0;
        for (int s2 = 0; s2 < S; ++s2) e += mdp.p1(s, s2) * cont[s2];
        acc1 += mdp.gamma * e;
      }
      q1_at(t, s) = acc1;
      for (int a = 0; a < A; ++a) {
        double acc0 = mdp.reward0(s, a);
        if (t + 1 < T) {
          double e = 0.0;
          for (int s2 = 0; s2 < S; ++s2) e += mdp.p0(s, a, s2) * cont[s2];
          acc0 += mdp.gamma * e;
        }
        q0_at(t, s, a) = acc0;
      }
    }
  }
  return q;
}

EigenTables exact_eigen(const TabularMdp& mdp, const QTables& q) {
  const int S = mdp.n_states, A = mdp.n_actions, T = mdp.horizon;
  EigenTables e;
  e.horizon = T;
  e.n_states = S;
  e.n_actions = A;
  e.lambda_a.assign(static_cast<std::size_t>(T) * S * A, 0.0);
  e.lambda_b.assign(static_cast<std::size_t>(T) * S * A, 0.0);
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const std::size_t idx = (static_cast<std::size_t>(t) * S + s) * A + a;
        e.lambda_a[idx] = q.at0(t, s, a) - q.at1(t, s);
        e.lambda_b[idx] =
            mdp.d0[t] * q.at0(t, s, a) + mdp.d1(t) * q.at1(t, s);
      }
    }
  }
  return e;
}

double coupled_recursion_residual(const TabularMdp& mdp,
                                  const TabularPolicy& policy,
                                  const QTables& q) {
  const int S = mdp.n_states, A = mdp.n_actions, T = mdp.horizon;
  double worst = 0.0;
  for (int t = 0; t < T; ++t) {
    std::vector<double> cont(S, 0.0);
    if (t + 1 < T) {
      for (int s2 = 0; s2 < S; ++s2) {
        double q0_pi = 0.0;
        for (int a2 = 0; a2 < A; ++a2)
          q0_pi += policy.prob(s2, a2) * q.at0(t + 1, s2, a2);
        cont[s2] = mdp.d0[t + 1] * q0_pi + mdp.d1(t + 1) * q.at1(t + 1, s2);
      }
    }
    for (int s = 0; s < S; ++s) {
      double e1 = 0.0;
      if (t + 1 < T)
        for (int s2 = 0; s2 < S; ++s2) e1 += mdp.p1(s, s2) * cont[s2];
      worst = max_abs(q.at1(t, s) - (mdp.reward1(s) + mdp.gamma * e1), worst);
      for (int a = 0; a < A; ++a) {
        double e0 = 0.0;
        if (t + 1 < T)
          for (int s2 = 0; s2 < S; ++s2) e0 += mdp.p0(s, a, s2) * cont[s2];
        worst = max_abs(
            q.at0(t, s, a) - (mdp.reward0(s, a) + mdp.gamma * e0), worst);
      }
    }
  }
  return worst;
}

double eigen_line1_residual(const TabularMdp& mdp, const EigenTables& e) {
  double worst = 0.0;
  for (int t = 0; t < mdp.horizon; ++t)
    for (int s = 0; s < mdp.n_states; ++s)
      for (int a = 0; a < mdp.n_actions; ++a)
        worst = max_abs(
            e.a_at(t, s, a) - (mdp.reward0(s, a) - mdp.reward1(s)), worst);
  return worst;
}

double eigen_line2_residual(const TabularMdp& mdp,
                            const TabularPolicy& policy,
                            const EigenTables& e) {
  const int S = mdp.n_states, A = mdp.n_actions, T = mdp.horizon;
  double worst = 0.0;
  for (int t = 0; t < T; ++t) {
    // E_pi Lambda_b(t+1, s', a')
    std::vector<double> lb_pi(S, 0.0);
    if (t + 1 < T) {
      for (int s2 = 0; s2 < S; ++s2)
        for (int a2 = 0; a2 < A; ++a2)
          lb_pi[s2] += policy.prob(s2, a2) * e.b_at(t + 1, s2, a2);
    }
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const double gamma_b = mdp.d0[t] * mdp.reward0(s, a) +
                               mdp.d1(t) * mdp.reward1(s);
        double boot = 0.0;
        if (t + 1 < T) {
          // step-t mixture of the two service kernels
          for (int s2 = 0; s2 < S; ++s2) {
            const double pmix = mdp.d0[t] * mdp.p0(s, a, s2) +
                                mdp.d1(t) * mdp.p1(s, s2);
            boot += pmix * lb_pi[s2];
          }
        }
        worst = max_abs(e.b_at(t, s, a) - (gamma_b + mdp.gamma * boot),
                        worst);
      }
    }
  }
  return worst;
}

double verify_recovery(const TabularMdp& mdp, const QTables& q,
                       const EigenTables& e) {
  double worst = 0.0;
  for (int t = 0; t < mdp.horizon; ++t) {
    const double d0 = mdp.d0[t];
    for (int s = 0; s < mdp.n_states; ++s) {
      for (int a = 0; a < mdp.n_actions; ++a) {
        const double la = e.a_at(t, s, a);
        const double lb = e.b_at(t, s, a);
        const double rec_q0 = (1.0 - d0) * la + lb;
        const double rec_q1 = -d0 * la + lb;
        worst = max_abs(rec_q0 - q.at0(t, s, a), worst);
        worst = max_abs(rec_q1 - q.at1(t, s), worst);
      }
    }
  }
  return worst;
}

TabularMdp random_mdp(Rng& rng, int max_states, int max_actions,
                      int max_horizon) {
  TabularMdp m;
  m.n_states = 3 + static_cast<int>(rng.uniform_int(max_states - 2));
  m.n_actions = 1 + static_cast<int>(rng.uniform_int(max_actions));
  m.horizon = 2 + static_cast<int>(rng.uniform_int(max_horizon - 1));
  m.gamma = rng.uniform(0.5, 0.99);
  const int S = m.n_states, A = m.n_actions;

  // Dirichlet(1) rows via normalized exponentials; the same next-state
  // row serves every action and both service paths.
  m.p_cached.assign(static_cast<std::size_t>(S) * S, 0.0);
  for (int s = 0; s < S; ++s) {
    double sum = 0.0;
    for (int s2 = 0; s2 < S; ++s2) {
      const double g = rng.exponential(1.0);
      m.p_cached[static_cast<std::size_t>(s) * S + s2] = g;
      sum += g;
    }
    for (int s2 = 0; s2 < S; ++s2)
      m.p_cached[static_cast<std::size_t>(s) * S + s2] /= sum;
  }
  m.p_rt.assign(static_cast<std::size_t>(S) * A * S, 0.0);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      for (int s2 = 0; s2 < S; ++s2)
        m.p_rt[(static_cast<std::size_t>(s) * A + a) * S + s2] =
            m.p_cached[static_cast<std::size_t>(s) * S + s2];

  m.v0.resize(static_cast<std::size_t>(S) * A);
  for (auto& r : m.v0) r = rng.uniform();
  m.v1.resize(S);
  for (auto& r : m.v1) r = rng.uniform();
  m.d0.resize(m.horizon);
  for (auto& d : m.d0) d = rng.uniform(0.05, 0.95);
  return m;
}

TabularPolicy random_policy(Rng& rng, const TabularMdp& mdp,
                            bool stochastic) {
  if (!stochastic) {
    std::vector<int> acts(mdp.n_states);
    for (auto& a : acts)
      a = static_cast<int>(rng.uniform_int(mdp.n_actions));
    return TabularPolicy::deterministic(acts, mdp.n_actions);
  }
  TabularPolicy p;
  p.n_states = mdp.n_states;
  p.n_actions = mdp.n_actions;
  p.probs.resize(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double g = rng.exponential(1.0);
      p.probs[static_cast<std::size_t>(s) * mdp.n_actions + a] = g;
      sum += g;
    }
    for (int a = 0; a < mdp.n_actions; ++a)
      p.probs[static_cast<std::size_t>(s) * mdp.n_actions + a] /= sum;
  }
  return p;
}

IdentityReport run_identity_suite(int n, std::uint64_t seed,
                                  double recursion_tol, double recovery_tol) {
  Rng rng(seed);
  IdentityReport rep;
  rep.n_instances = n;
  for (int i = 0; i < n; ++i) {
    TabularMdp mdp = random_mdp(rng);
    if (auto bad = mdp.check()) continue;  // generator never produces these
    TabularPolicy pol = random_policy(rng, mdp, (i % 2) == 1);
    QTables q = exact_q(mdp, pol);
    EigenTables e = exact_eigen(mdp, q);
    rep.max_coupled_residual =
        max_abs(coupled_recursion_residual(mdp, pol, q),
                rep.max_coupled_residual);
    rep.max_line1_residual =
        max_abs(eigen_line1_residual(mdp, e), rep.max_line1_residual);
    rep.max_line2_residual =
        max_abs(eigen_line2_residual(mdp, pol, e), rep.max_line2_residual);
    rep.max_recovery_error =
        max_abs(verify_recovery(mdp, q, e), rep.max_recovery_error);
  }
  rep.pass = rep.max_coupled_residual < recursion_tol &&
             rep.max_line1_residual < recursion_tol &&
             rep.max_line2_residual < recursion_tol &&
             rep.max_recovery_error < recovery_tol;
  return rep;
}

}  // namespace carl::oracle
