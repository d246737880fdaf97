#include "carl/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace carl {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace {

void append_values(std::string& out, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
}

void append_state(std::string& out, const UserState& s) {
  append_values(out, s.profile);
  out += '|';
  append_values(out, s.history_summary);
  out += '|';
  append_values(out, s.context);
  out += '|';
  append_values(out, s.candidate_stats);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(s.substr(start));
      break;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

double parse_d(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw std::runtime_error("bad number '" + s + "'");
  return v;
}

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  if (s.empty()) return out;
  for (const auto& tok : split(s, ',')) out.push_back(parse_d(tok));
  return out;
}

UserState parse_state(const std::string& s) {
  auto sections = split(s, '|');
  if (sections.size() != 4)
    throw std::runtime_error("state column needs 4 '|' sections");
  UserState u;
  u.profile = parse_values(sections[0]);
  u.history_summary = parse_values(sections[1]);
  u.context = parse_values(sections[2]);
  u.candidate_stats = parse_values(sections[3]);
  return u;
}

}  // namespace

std::string transition_log_header() {
  return "state\taction\treward\tcache_state\tnext_state\tnext_cache_state\t"
         "done\tsim_time";
}

std::string serialize_transition(const Transition& t) {
  std::string out;
  append_state(out, t.state);
  out += '\t';
  if (t.action)
    append_values(out, t.action->fusion);
  else
    out += "null";
  out += '\t';
  out += format_double(t.reward);
  out += '\t';
  out += t.cache_state == CacheState::Cached ? '1' : '0';
  out += '\t';
  append_state(out, t.next_state);
  out += '\t';
  out += t.next_cache_state == CacheState::Cached ? '1' : '0';
  out += '\t';
  out += t.done ? '1' : '0';
  out += '\t';
  out += format_double(t.sim_time);
  return out;
}

Transition parse_transition(const std::string& line) {
  auto cols = split(line, '\t');
  if (cols.size() != 8)
    throw std::runtime_error("transition record needs 8 columns, got " +
                             std::to_string(cols.size()));
  Transition t;
  t.state = parse_state(cols[0]);
  if (cols[1] != "null") t.action = Action(parse_values(cols[1]));
  t.reward = parse_d(cols[2]);
  t.cache_state = cols[3] == "1" ? CacheState::Cached : CacheState::RealTime;
  t.next_state = parse_state(cols[4]);
  t.next_cache_state =
      cols[5] == "1" ? CacheState::Cached : CacheState::RealTime;
  t.done = cols[6] == "1";
  t.sim_time = parse_d(cols[7]);
  return t;
}

void write_transition_log(std::ostream& os,
                          const std::vector<Transition>& ts) {
  os << transition_log_header() << '\n';
  for (const auto& t : ts) os << serialize_transition(t) << '\n';
}

std::vector<Transition> read_transition_log(std::istream& is) {
  std::vector<Transition> out;
  std::string line;
  if (!std::getline(is, line)) return out;  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(parse_transition(line));
  }
  return out;
}

}  // namespace carl
