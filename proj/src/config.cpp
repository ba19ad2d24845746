#include "trackrl/config.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace trackrl {
namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an unsigned integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Setter = std::function<void(SynergyConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"method", [](auto& c, auto&, auto& v) { c.method = parse_method(v); }},
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = to_u64(k, v); }},
      {"total_steps", [](auto& c, auto& k, auto& v) { c.total_steps = static_cast<long>(to_int(k, v)); }},
      {"t_reward", [](auto& c, auto& k, auto& v) { c.t_reward = to_double(k, v); }},
      {"eval_every", [](auto& c, auto& k, auto& v) { c.eval_every = static_cast<long>(to_int(k, v)); }},
      {"eval_episodes", [](auto& c, auto& k, auto& v) { c.eval_episodes = static_cast<int>(to_int(k, v)); }},
      {"time_limit", [](auto& c, auto& k, auto& v) { c.time_limit = static_cast<int>(to_int(k, v)); }},
      {"hidden",
       [](auto& c, auto& k, auto& v) {
         c.hidden.clear();
         std::stringstream ss(v);
         for (std::string part; std::getline(ss, part, ',');) c.hidden.push_back(static_cast<int>(to_int(k, trim(part))));
       }},
      {"gamma", [](auto& c, auto& k, auto& v) { c.ppo.gamma = to_double(k, v); }},
      {"gae_lambda", [](auto& c, auto& k, auto& v) { c.ppo.gae_lambda = to_double(k, v); }},
      {"clip", [](auto& c, auto& k, auto& v) { c.ppo.clip = to_double(k, v); }},
      {"epochs", [](auto& c, auto& k, auto& v) { c.ppo.epochs = static_cast<int>(to_int(k, v)); }},
      {"minibatch", [](auto& c, auto& k, auto& v) { c.ppo.minibatch = static_cast<int>(to_int(k, v)); }},
      {"entropy_coef", [](auto& c, auto& k, auto& v) { c.ppo.entropy_coef = to_double(k, v); }},
      {"w1", [](auto& c, auto& k, auto& v) { c.ppo.w1 = to_double(k, v); }},
      {"w2", [](auto& c, auto& k, auto& v) { c.ppo.w2 = to_double(k, v); }},
      {"lr", [](auto& c, auto& k, auto& v) { c.ppo.lr = to_double(k, v); }},
      {"horizon", [](auto& c, auto& k, auto& v) { c.ppo.horizon = static_cast<int>(to_int(k, v)); }},
      {"max_grad_norm", [](auto& c, auto& k, auto& v) { c.ppo.max_grad_norm = to_double(k, v); }},
      {"expert_target",
       [](auto& c, auto& k, auto& v) {
         if (v == "distribution") c.ppo.expert_target = ExpertTarget::kDistribution;
         else if (v == "sampled_action") c.ppo.expert_target = ExpertTarget::kSampledAction;
         else throw ConfigError(k + ": expected distribution or sampled_action");
       }},
      {"bc_epochs", [](auto& c, auto& k, auto& v) { c.pretrain.epochs = static_cast<int>(to_int(k, v)); }},
      {"bc_batch", [](auto& c, auto& k, auto& v) { c.pretrain.batch_size = static_cast<int>(to_int(k, v)); }},
      {"bc_lr", [](auto& c, auto& k, auto& v) { c.pretrain.lr = to_double(k, v); }},
      {"retrain_epochs", [](auto& c, auto& k, auto& v) { c.retrain.epochs = static_cast<int>(to_int(k, v)); }},
      {"retrain_batch", [](auto& c, auto& k, auto& v) { c.retrain.batch_size = static_cast<int>(to_int(k, v)); }},
      {"retrain_lr", [](auto& c, auto& k, auto& v) { c.retrain.lr = to_double(k, v); }},
      {"window", [](auto& c, auto& k, auto& v) { c.window = static_cast<std::size_t>(to_int(k, v)); }},
      {"cold_retrain", [](auto& c, auto& k, auto& v) { c.cold_retrain = to_bool(k, v); }},
      {"dedup",
       [](auto& c, auto& k, auto& v) {
         if (v == "first") c.dedup = SynergyConfig::Dedup::kFirst;
         else if (v == "last") c.dedup = SynergyConfig::Dedup::kLast;
         else if (v == "off") c.dedup = SynergyConfig::Dedup::kOff;
         else if (v == "harvested") c.dedup = SynergyConfig::Dedup::kHarvested;
         else throw ConfigError(k + ": expected first, last, harvested or off");
       }},
      {"w3_initial", [](auto& c, auto& k, auto& v) { c.w3_initial = to_double(k, v); }},
      {"w3_latched", [](auto& c, auto& k, auto& v) { c.w3_latched = to_double(k, v); }},
      {"w3_force",
       [](auto& c, auto& k, auto& v) {
         if (v == "none") c.force_w3.reset();
         else c.force_w3 = to_double(k, v);
       }},
      {"harvest", [](auto& c, auto& k, auto& v) { c.harvest = to_bool(k, v); }},
      {"demos", [](auto& c, auto&, auto& v) { c.demos = v; }},
      {"river_map", [](auto& c, auto&, auto& v) { c.river_map = v; }},
  };
  return table;
}

const char* dedup_name(SynergyConfig::Dedup d) {
  switch (d) {
    case SynergyConfig::Dedup::kFirst: return "first";
    case SynergyConfig::Dedup::kLast: return "last";
    case SynergyConfig::Dedup::kOff: return "off";
    case SynergyConfig::Dedup::kHarvested: return "harvested";
  }
  return "?";
}

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

}  // namespace

SynergyConfig parse_run_config(std::istream& in, const std::string& base_dir) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string env = "cliff";
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "env") {
      env = value;
      continue;
    }
    if (!setters().contains(key)) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    entries.emplace_back(key, value);
  }
  SynergyConfig config;
  try {
    config = default_synergy_config(env);
    for (const auto& [key, value] : entries) setters().at(key)(config, key, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  config.demos = resolve(config.demos, base_dir);
  config.river_map = resolve(config.river_map, base_dir);
  if (config.env == "river" && !config.river_map.empty()) {
    try {
      config.river = river::load_river_config(config.river_map);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("river_map: ") + e.what());
    }
  }
  try {
    config.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return config;
}

SynergyConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  const fs::path dir = fs::absolute(fs::path(path)).parent_path();
  return parse_run_config(in, dir.string());
}

void write_run_config(std::ostream& out, const SynergyConfig& c) {
  std::string hidden;
  for (std::size_t i = 0; i < c.hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(c.hidden[i]);
  out << "env = " << c.env << "\n"
      << "method = " << method_name(c.method) << "\n"
      << "seed = " << c.seed << "\n"
      << "total_steps = " << c.total_steps << "\n"
      << "t_reward = " << fmt(c.t_reward) << "\n"
      << "eval_every = " << c.eval_every << "\n"
      << "eval_episodes = " << c.eval_episodes << "\n"
      << "time_limit = " << c.time_limit << "\n"
      << "hidden = " << hidden << "\n"
      << "gamma = " << fmt(c.ppo.gamma) << "\n"
      << "gae_lambda = " << fmt(c.ppo.gae_lambda) << "\n"
      << "clip = " << fmt(c.ppo.clip) << "\n"
      << "epochs = " << c.ppo.epochs << "\n"
      << "minibatch = " << c.ppo.minibatch << "\n"
      << "entropy_coef = " << fmt(c.ppo.entropy_coef) << "\n"
      << "w1 = " << fmt(c.ppo.w1) << "\n"
      << "w2 = " << fmt(c.ppo.w2) << "\n"
      << "lr = " << fmt(c.ppo.lr) << "\n"
      << "horizon = " << c.ppo.horizon << "\n"
      << "max_grad_norm = " << fmt(c.ppo.max_grad_norm) << "\n"
      << "expert_target = "
      << (c.ppo.expert_target == ExpertTarget::kDistribution ? "distribution" : "sampled_action") << "\n"
      << "bc_epochs = " << c.pretrain.epochs << "\n"
      << "bc_batch = " << c.pretrain.batch_size << "\n"
      << "bc_lr = " << fmt(c.pretrain.lr) << "\n"
      << "retrain_epochs = " << c.retrain.epochs << "\n"
      << "retrain_batch = " << c.retrain.batch_size << "\n"
      << "retrain_lr = " << fmt(c.retrain.lr) << "\n"
      << "window = " << c.window << "\n"
      << "cold_retrain = " << (c.cold_retrain ? "true" : "false") << "\n"
      << "dedup = "
      << dedup_name(c.dedup)
      << "\n"
      << "w3_initial = " << fmt(c.w3_initial) << "\n"
      << "w3_latched = " << fmt(c.w3_latched) << "\n"
      << "w3_force = " << (c.force_w3 ? fmt(*c.force_w3) : "none") << "\n"
      << "harvest = " << (c.harvest ? "true" : "false") << "\n";
  if (!c.demos.empty()) out << "demos = " << c.demos << "\n";
  if (!c.river_map.empty()) out << "river_map = " << c.river_map << "\n";
}

}  // namespace trackrl
