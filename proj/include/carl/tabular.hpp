#pragma once

// Finite-horizon tabular MDP with a stochastic cache state. Backward
// induction gives exact conditional values Q0/Q1, the eigen transforms of
// those tables, and residual checks for the decoupled recursions and the
// linear recovery.
//
// The real-time kernel is indexed by (s, a) and the cached kernel by s
// alone. The random generator ties them (the next-state law does not
// depend on the action or on how the request was served); the decoupling
// identities hold exactly only in that regime, matching the shared
// continuation term of the coupled recursion they are derived from.

#include <optional>
#include <string>
#include <vector>

#include "carl/rng.hpp"

namespace carl::oracle {

struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  int horizon = 0;  // steps t = 0..horizon-1
  double gamma = 0.9;
  std::vector<double> p_rt;      // [s][a][s'], row-stochastic
  std::vector<double> p_cached;  // [s][s'], row-stochastic
  std::vector<double> v0;        // [s][a] expected immediate reward, C=0
  std::vector<double> v1;        // [s] expected immediate reward, C=1
  std::vector<double> d0;        // [t] probability that C_t = 0

  double p0(int s, int a, int s2) const {
    return p_rt[(static_cast<std::size_t>(s) * n_actions + a) * n_states +
                s2];
  }
  double p1(int s, int s2) const {
    return p_cached[static_cast<std::size_t>(s) * n_states + s2];
  }
  double reward0(int s, int a) const {
    return v0[static_cast<std::size_t>(s) * n_actions + a];
  }
  double reward1(int s) const { return v1[s]; }
  double d1(int t) const { return 1.0 - d0[t]; }

  std::optional<std::string> check() const;  // invariant violations
};

// Tabular policy; a deterministic policy has one-hot rows.
struct TabularPolicy {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> probs;  // [s][a]

  double prob(int s, int a) const {
    return probs[static_cast<std::size_t>(s) * n_actions + a];
  }
  static TabularPolicy deterministic(const std::vector<int>& action_of_state,
                                     int n_actions);
};

struct QTables {
  int horizon = 0, n_states = 0, n_actions = 0;
  std::vector<double> q0;  // [t][s][a]
  std::vector<double> q1;  // [t][s]

  double at0(int t, int s, int a) const {
    return q0[(static_cast<std::size_t>(t) * n_states + s) * n_actions + a];
  }
  double at1(int t, int s) const {
    return q1[static_cast<std::size_t>(t) * n_states + s];
  }
};

struct EigenTables {
  int horizon = 0, n_states = 0, n_actions = 0;
  std::vector<double> lambda_a;  // [t][s][a]
  std::vector<double> lambda_b;  // [t][s][a]

  double a_at(int t, int s, int a) const {
    return lambda_a[(static_cast<std::size_t>(t) * n_states + s) * n_actions +
                    a];
  }
  double b_at(int t, int s, int a) const {
    return lambda_b[(static_cast<std::size_t>(t) * n_states + s) * n_actions +
                    a];
  }
};

// Backward induction of the coupled conditional values.
QTables exact_q(const TabularMdp& mdp, const TabularPolicy& policy);

// Difference / load-weighted transforms of the exact tables.
EigenTables exact_eigen(const TabularMdp& mdp, const QTables& q);

// Max-abs residual of the coupled recursion when the exact tables are
// substituted back.
double coupled_recursion_residual(const TabularMdp& mdp,
                                  const TabularPolicy& policy,
                                  const QTables& q);

// Max-abs residual of the two decoupled identities.
double eigen_line1_residual(const TabularMdp& mdp, const EigenTables& e);
double eigen_line2_residual(const TabularMdp& mdp,
                            const TabularPolicy& policy,
                            const EigenTables& e);

// Max-abs error of the linear recovery applied to the exact eigen tables.
double verify_recovery(const TabularMdp& mdp, const QTables& q,
                       const EigenTables& e);

TabularMdp random_mdp(Rng& rng, int max_states = 20, int max_actions = 5,
                      int max_horizon = 10);
TabularPolicy random_policy(Rng& rng, const TabularMdp& mdp,
                            bool stochastic);

struct IdentityReport {
  int n_instances = 0;
  double max_coupled_residual = 0.0;
  double max_line1_residual = 0.0;
  double max_line2_residual = 0.0;
  double max_recovery_error = 0.0;
  bool pass = false;
};

// Runs the full identity suite over `n` random instances.
IdentityReport run_identity_suite(int n, std::uint64_t seed,
                                  double recursion_tol = 1e-10,
                                  double recovery_tol = 1e-12);

}  // namespace carl::oracle
