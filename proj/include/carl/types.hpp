#pragma once

// Domain types shared by the simulator, the learners and the tabular
// oracle. A request is served either by a real-time computation (which
// carries a fusion action) or from the per-user result cache (which does
// not); the cache state records which path was taken.

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

namespace carl {

enum class CacheState : std::uint8_t { RealTime = 0, Cached = 1 };

// Fusion parameters weighting the n prediction heads; every component
// lives in [0, 3].
struct Action {
  std::vector<double> fusion;

  static constexpr double kLo = 0.0;
  static constexpr double kHi = 3.0;

  Action() = default;
  explicit Action(std::vector<double> f) : fusion(std::move(f)) {}

  Action clamped() const;
  std::size_t dim() const { return fusion.size(); }
};

// Per-request observation. The flattened layout is
// [profile | history_summary | context | candidate_stats]; context[0] is
// the time of day as a fraction of the simulated day in [0, 1).
struct UserState {
  std::vector<double> profile;
  std::vector<double> history_summary;
  std::vector<double> context;
  std::vector<double> candidate_stats;

  std::size_t dim() const {
    return profile.size() + history_summary.size() + context.size() +
           candidate_stats.size();
  }
  std::vector<double> flatten() const;
  double time_of_day() const { return context.empty() ? 0.0 : context[0]; }

  bool operator==(const UserState&) const = default;
};

// One RL sample. The action is absent exactly when the request was served
// from the cache.
struct Transition {
  UserState state;
  std::optional<Action> action;
  double reward = 0.0;
  CacheState cache_state = CacheState::RealTime;
  UserState next_state;
  CacheState next_cache_state = CacheState::RealTime;
  bool done = false;
  double sim_time = 0.0;
};

// Returns std::nullopt when all Transition invariants hold, otherwise a
// description of the violated invariant.
std::optional<std::string> validate_transition(const Transition& t);

// Per-user FIFO of pre-scored items awaiting cached serving.
class CacheBuffer {
 public:
  struct Entry {
    std::uint64_t item_id = 0;
    std::vector<double> scores;
    double enqueue_time = 0.0;
  };

  explicit CacheBuffer(std::size_t capacity) : capacity_(capacity) {}

  // Appends one entry; evicts the oldest when full.
  void push(Entry e);

  // Removes and returns the k oldest entries; requires size() >= k.
  std::vector<Entry> pop(std::size_t k);

  // Drops entries enqueued strictly before `cutoff`; returns the count.
  std::size_t evict_older_than(double cutoff);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const std::deque<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::deque<Entry> entries_;
  std::size_t capacity_;
};

// Raw per-request log entry emitted by the simulator; the session
// collector pairs these into Transitions.
struct RequestRecord {
  std::uint64_t user_id = 0;
  double sim_time = 0.0;
  UserState state;
  std::optional<Action> action;
  double reward = 0.0;
  CacheState cache_state = CacheState::RealTime;
  // Set when a cache decision had to be overridden because the buffer
  // held fewer than K entries.
  bool forced_realtime = false;
};

inline double time_of_day_fraction(double sim_time) {
  constexpr double kDay = 86400.0;
  double f = sim_time / kDay;
  f -= static_cast<long long>(f);
  return f < 0 ? f + 1.0 : f;
}

}  // namespace carl
