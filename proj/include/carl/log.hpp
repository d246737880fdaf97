#pragma once

// Transition log format: a documented header line, then one record per
// line with tab-separated fields
//   state  action  reward  cache_state  next_state  next_cache_state  done  sim_time
// UserState columns pack the four sections with '|', values with ','.
// A missing action is the token "null". Doubles are printed with 17
// significant digits so a parse round-trip is bit-exact.

#include <iosfwd>
#include <string>
#include <vector>

#include "carl/types.hpp"

namespace carl {

std::string format_double(double x);

std::string transition_log_header();
std::string serialize_transition(const Transition& t);
Transition parse_transition(const std::string& line);  // throws on bad input

void write_transition_log(std::ostream& os, const std::vector<Transition>& ts);
std::vector<Transition> read_transition_log(std::istream& is);

}  // namespace carl
