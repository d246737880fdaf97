#pragma once

// Session collection (the 15-minute rule) and the uniform replay ring.
// The collector pairs a user's consecutive requests within a session into
// Transitions; the final pair of a session carries done = true, and a
// single-request session becomes one terminal transition.

#include <functional>
#include <map>

#include "carl/batch.hpp"
#include "carl/rng.hpp"
#include "carl/types.hpp"

namespace carl::harness {

class SessionCollector {
 public:
  using Sink = std::function<void(const Transition&)>;

  explicit SessionCollector(double gap_s) : gap_s_(gap_s) {}

  // Records of one user must arrive in time order; duplicate
  // (user, sim_time) keys are an error.
  void feed(const RequestRecord& r, const Sink& sink);
  // Flushes pending pairs/singletons as session-terminal transitions.
  void finish(const Sink& sink);

  // Batch form: orders by (user, sim_time) first, so any permutation of
  // the same log yields the same transitions.
  static std::vector<Transition> collect(std::vector<RequestRecord> log,
                                         double gap_s);

 private:
  struct PerUser {
    bool has_last = false;
    RequestRecord last;
    bool has_pending = false;
    Transition pending;  // done flag still unknown
  };

  double gap_s_;
  std::map<std::uint64_t, PerUser> users_;

  static Transition pair_up(const RequestRecord& a, const RequestRecord& b);
  static Transition terminal(const RequestRecord& a);
};

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int state_dim, int action_dim);

  void push(const Transition& t);
  std::size_t size() const { return store_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool ready(int batch) const {
    return size() >= static_cast<std::size_t>(batch);
  }

  algos::Batch sample(int batch, Rng& rng) const;
  const Transition& at(std::size_t i) const { return store_[i]; }

 private:
  std::size_t capacity_;
  int state_dim_, action_dim_;
  std::vector<Transition> store_;
  std::size_t next_ = 0;  // ring position once full
};

}  // namespace carl::harness
