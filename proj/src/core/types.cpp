#include "carl/types.hpp"

#include <cmath>

#include "carl/kernels.hpp"

namespace carl {

Action Action::clamped() const {
  Action a = *this;
  if (!a.fusion.empty())
    kern::clamp(a.fusion.data(), kLo, kHi, a.fusion.size());
  return a;
}

std::vector<double> UserState::flatten() const {
  std::vector<double> out;
  out.reserve(dim());
  out.insert(out.end(), profile.begin(), profile.end());
  out.insert(out.end(), history_summary.begin(), history_summary.end());
  out.insert(out.end(), context.begin(), context.end());
  out.insert(out.end(), candidate_stats.begin(), candidate_stats.end());
  return out;
}

namespace {

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool state_finite(const UserState& s) {
  return all_finite(s.profile) && all_finite(s.history_summary) &&
         all_finite(s.context) && all_finite(s.candidate_stats);
}

}  // namespace

std::optional<std::string> validate_transition(const Transition& t) {
  if (t.cache_state == CacheState::Cached && t.action.has_value())
    return "action present under Cached";
  if (t.cache_state == CacheState::RealTime && !t.action.has_value())
    return "action missing under RealTime";
  if (!std::isfinite(t.reward)) return "non-finite reward";
  if (!state_finite(t.state)) return "non-finite state component";
  if (!state_finite(t.next_state)) return "non-finite next_state component";
  if (t.state.dim() != t.next_state.dim())
    return "state/next_state dimension mismatch";
  if (!t.state.context.empty()) {
    const double tod = t.state.time_of_day();
    if (!(tod >= 0.0 && tod < 1.0)) return "time_of_day outside [0,1)";
  }
  if (t.action) {
    for (double a : t.action->fusion) {
      if (!std::isfinite(a)) return "non-finite action component";
      if (a < Action::kLo || a > Action::kHi)
        return "action component outside [0,3]";
    }
  }
  if (!std::isfinite(t.sim_time) || t.sim_time < 0.0)
    return "invalid sim_time";
  return std::nullopt;
}

void CacheBuffer::push(Entry e) {
  if (capacity_ == 0) return;
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(std::move(e));
}

std::vector<CacheBuffer::Entry> CacheBuffer::pop(std::size_t k) {
  std::vector<Entry> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k && !entries_.empty(); ++i) {
    out.push_back(std::move(entries_.front()));
    entries_.pop_front();
  }
  return out;
}

std::size_t CacheBuffer::evict_older_than(double cutoff) {
  std::size_t dropped = 0;
  while (!entries_.empty() && entries_.front().enqueue_time < cutoff) {
    entries_.pop_front();
    ++dropped;
  }
  return dropped;
}

}  // namespace carl
