#include "carl/replay.hpp"

#include <algorithm>
#include <stdexcept>

namespace carl::harness {

Transition SessionCollector::pair_up(const RequestRecord& a,
                                     const RequestRecord& b) {
  Transition t;
  t.state = a.state;
  t.action = a.action;
  t.reward = a.reward;
  t.cache_state = a.cache_state;
  t.next_state = b.state;
  t.next_cache_state = b.cache_state;
  t.done = false;  // decided when the session boundary is known
  t.sim_time = a.sim_time;
  return t;
}

Transition SessionCollector::terminal(const RequestRecord& a) {
  Transition t;
  t.state = a.state;
  t.action = a.action;
  t.reward = a.reward;
  t.cache_state = a.cache_state;
  t.next_state = a.state;  // echoed; ignored under done
  t.next_cache_state = a.cache_state;
  t.done = true;
  t.sim_time = a.sim_time;
  return t;
}

void SessionCollector::feed(const RequestRecord& r, const Sink& sink) {
  PerUser& u = users_[r.user_id];
  if (u.has_last) {
    if (r.sim_time == u.last.sim_time)
      throw std::runtime_error("SessionCollector: duplicate (user, time) key");
    if (r.sim_time < u.last.sim_time)
      throw std::runtime_error("SessionCollector: out-of-order feed");
    const bool same_session = r.sim_time - u.last.sim_time <= gap_s_;
    if (same_session) {
      if (u.has_pending) {
        u.pending.done = false;
        sink(u.pending);
      }
      u.pending = pair_up(u.last, r);
      u.has_pending = true;
    } else {
      // session closed at u.last
      if (u.has_pending) {
        u.pending.done = true;
        sink(u.pending);
        u.has_pending = false;
      } else {
        sink(terminal(u.last));
      }
    }
  }
  u.last = r;
  u.has_last = true;
}

void SessionCollector::finish(const Sink& sink) {
  for (auto& [id, u] : users_) {
    (void)id;
    if (u.has_pending) {
      u.pending.done = true;
      sink(u.pending);
    } else if (u.has_last) {
      sink(terminal(u.last));
    }
  }
  users_.clear();
}

std::vector<Transition> SessionCollector::collect(
    std::vector<RequestRecord> log, double gap_s) {
  std::stable_sort(log.begin(), log.end(),
                   [](const RequestRecord& a, const RequestRecord& b) {
                     if (a.user_id != b.user_id) return a.user_id < b.user_id;
                     return a.sim_time < b.sim_time;
                   });
  SessionCollector c(gap_s);
  std::vector<Transition> out;
  auto sink = [&out](const Transition& t) { out.push_back(t); };
  for (const auto& r : log) c.feed(r, sink);
  c.finish(sink);
  return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, int state_dim,
                           int action_dim)
    : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
  store_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(const Transition& t) {
  if (store_.size() < capacity_) {
    store_.push_back(t);
  } else {
    store_[next_] = t;
    next_ = (next_ + 1) % capacity_;
  }
}

algos::Batch ReplayBuffer::sample(int batch, Rng& rng) const {
  if (!ready(batch))
    throw std::runtime_error("ReplayBuffer: not enough transitions");
  std::vector<Transition> picked;
  picked.reserve(batch);
  for (int i = 0; i < batch; ++i)
    picked.push_back(store_[rng.uniform_int(store_.size())]);
  return algos::Batch::from_transitions(picked, state_dim_, action_dim_);
}

}  // namespace carl::harness
