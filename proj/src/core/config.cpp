#include "carl/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "carl/log.hpp"

namespace carl {

namespace {

enum class Kind { D, I, B, S, VD, VI };

struct Field {
  const char* key;
  Kind kind;
  std::size_t offset;
};

#define F(kind, name) {#name, Kind::kind, offsetof(RunConfig, name)}

const Field kFields[] = {
    F(D, gamma),
    F(I, list_size),
    F(I, shown_size),
    F(I, n_heads),
    F(D, session_gap_s),
    F(I, cache_capacity),
    F(S, fusion),
    F(D, fusion_eps),
    F(I, profile_dim),
    F(VD, head_scale),
    F(VD, cache_ratio),
    F(D, tau_stale_s),
    F(D, x_max),
    F(VD, quality_mean),
    F(VD, latent_load),
    F(VD, obs_noise),
    F(D, item_noise),
    F(D, user_spread),
    F(I, n_candidates),
    F(D, cache_ttl_s),
    F(D, fatigue_rate),
    F(D, fatigue_recovery_s),
    F(D, hazard_base),
    F(D, hazard_fatigue),
    F(D, hazard_reward),
    F(D, think_time_s),
    F(D, watch_delay_scale),
    F(D, reward_ref),
    F(D, qps_base),
    F(D, qps_peak_amplitude),
    F(VD, qps_peak_times),
    F(VD, qps_peak_width),
    F(D, qps_noise_std),
    F(S, router),
    F(D, service_rate),
    F(I, queue_limit),
    F(D, req_per_session_est),
    F(I, users),
    F(I, batch_size),
    F(I, replay_capacity),
    F(I, warmup_requests),
    F(D, critic_lr),
    F(D, actor_lr),
    F(D, polyak_tau),
    F(D, grad_clip),
    F(I, actor_warmup_steps),
    F(D, exploration_std),
    F(D, target_noise_std),
    F(D, target_noise_clip),
    F(I, actor_delay),
    F(B, reward_norm),
    F(D, train_every),
    F(I, train_steps),
    F(VI, actor_hidden),
    F(VI, critic_hidden),
    F(D, d_bucket_s),
    F(D, d_alpha),
    F(I, cem_pop),
    F(I, cem_elites),
    F(I, cem_generations),
    F(I, cem_eval_sessions),
    F(D, cem_init_std),
    F(D, train_days),
    F(D, eval_days),
    F(S, kernel_backend),
};

#undef F

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_d(const std::string& key, const std::string& v) {
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("key '" + key + "': bad number '" + v + "'");
  return x;
}

int to_i(const std::string& key, const std::string& v) {
  char* end = nullptr;
  long x = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("key '" + key + "': bad integer '" + v + "'");
  return static_cast<int>(x);
}

bool to_b(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("key '" + key + "': bad boolean '" + v + "'");
}

std::vector<std::string> split_csv(const std::string& v) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = v.find(',', start);
    if (pos == std::string::npos) {
      parts.push_back(trim(v.substr(start)));
      break;
    }
    parts.push_back(trim(v.substr(start, pos - start)));
    start = pos + 1;
  }
  return parts;
}

void set_field(RunConfig& cfg, const Field& f, const std::string& value) {
  char* base = reinterpret_cast<char*>(&cfg);
  switch (f.kind) {
    case Kind::D:
      *reinterpret_cast<double*>(base + f.offset) = to_d(f.key, value);
      break;
    case Kind::I:
      *reinterpret_cast<int*>(base + f.offset) = to_i(f.key, value);
      break;
    case Kind::B:
      *reinterpret_cast<bool*>(base + f.offset) = to_b(f.key, value);
      break;
    case Kind::S:
      *reinterpret_cast<std::string*>(base + f.offset) = value;
      break;
    case Kind::VD: {
      std::vector<double> out;
      for (const auto& p : split_csv(value)) out.push_back(to_d(f.key, p));
      *reinterpret_cast<std::vector<double>*>(base + f.offset) =
          std::move(out);
      break;
    }
    case Kind::VI: {
      std::vector<int> out;
      for (const auto& p : split_csv(value)) out.push_back(to_i(f.key, p));
      *reinterpret_cast<std::vector<int>*>(base + f.offset) = std::move(out);
      break;
    }
  }
}

std::string field_text(const RunConfig& cfg, const Field& f) {
  const char* base = reinterpret_cast<const char*>(&cfg);
  switch (f.kind) {
    case Kind::D:
      return format_double(*reinterpret_cast<const double*>(base + f.offset));
    case Kind::I:
      return std::to_string(*reinterpret_cast<const int*>(base + f.offset));
    case Kind::B:
      return *reinterpret_cast<const bool*>(base + f.offset) ? "true"
                                                             : "false";
    case Kind::S:
      return *reinterpret_cast<const std::string*>(base + f.offset);
    case Kind::VD: {
      const auto& v =
          *reinterpret_cast<const std::vector<double>*>(base + f.offset);
      std::string out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += format_double(v[i]);
      }
      return out;
    }
    case Kind::VI: {
      const auto& v =
          *reinterpret_cast<const std::vector<int>*>(base + f.offset);
      std::string out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
      }
      return out;
    }
  }
  return "";
}

}  // namespace

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    bool found = false;
    for (const auto& f : kFields) {
      if (key == f.key) {
        set_field(cfg, f, value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str());
  validate_config(cfg);
  return cfg;
}

void validate_config(const RunConfig& cfg) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) fail("gamma must be in [0,1)");
  if (cfg.shown_size <= 0 || cfg.list_size <= cfg.shown_size)
    fail("need 0 < shown_size < list_size");
  if (cfg.session_gap_s <= 0) fail("session_gap_s must be > 0");
  if (cfg.n_heads <= 0) fail("n_heads must be > 0");
  if (cfg.fusion != "linear" && cfg.fusion != "multiplicative")
    fail("fusion must be 'linear' or 'multiplicative'");
  if (cfg.router != "queue" && cfg.router != "prob")
    fail("router must be 'queue' or 'prob'");
  const std::size_t n = static_cast<std::size_t>(cfg.n_heads);
  for (const auto* v : {&cfg.head_scale, &cfg.cache_ratio, &cfg.quality_mean,
                        &cfg.latent_load, &cfg.obs_noise}) {
    if (v->size() != n) fail("per-head vectors must have n_heads entries");
  }
  if (cfg.n_candidates < cfg.list_size)
    fail("n_candidates must be >= list_size");
  if (cfg.qps_base <= 0) fail("qps_base must be > 0");
  if (cfg.qps_peak_times.size() != cfg.qps_peak_width.size())
    fail("qps_peak_times and qps_peak_width must have equal length");
  if (cfg.service_rate <= 0) fail("service_rate must be > 0");
  if (cfg.queue_limit < 0) fail("queue_limit must be >= 0");
  if (cfg.users <= 0) fail("users must be > 0");
  if (cfg.batch_size <= 0) fail("batch_size must be > 0");
  if (cfg.cache_capacity < cfg.list_size - cfg.shown_size)
    fail("cache_capacity must hold one refill (list_size - shown_size)");
  if (cfg.d_bucket_s <= 0) fail("d_bucket_s must be > 0");
  if (cfg.cache_ttl_s <= 0) fail("cache_ttl_s must be > 0");
  if (cfg.cem_elites <= 0 || cfg.cem_elites > cfg.cem_pop)
    fail("need 0 < cem_elites <= cem_pop");
  if (cfg.kernel_backend != "auto" && cfg.kernel_backend != "scalar" &&
      cfg.kernel_backend != "avx2")
    fail("kernel_backend must be auto, scalar or avx2");
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : kFields) {
    out += f.key;
    out += " = ";
    out += field_text(cfg, f);
    out += '\n';
  }
  return out;
}

}  // namespace carl
