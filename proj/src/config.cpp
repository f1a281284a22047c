#include "newsbandit/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "newsbandit/error.hpp"
#include "newsbandit/policy.hpp"

namespace nb {

using nlohmann::json;

std::string_view to_string(Mode m) { return m == Mode::one_stage ? "one-stage" : "two-stage"; }
std::string_view to_string(Reconstruction r) { return r == Reconstruction::dynamic ? "dynamic" : "top_only"; }

namespace {

template <typename T>
T as(const json& v, std::string_view key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (v.is_boolean()) return v.get<bool>();
      if (v.is_number_integer()) return v.get<int>() != 0;
      throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)) return v.get<T>();
      throw ConfigError("");
    } else {
      if (!v.is_number()) throw ConfigError("");
      return v.get<T>();
    }
  } catch (const std::exception&) {
    throw ConfigError("invalid value for '" + std::string(key) + "': " + v.dump());
  }
}

using Setter = std::function<void(ExperimentConfig&, const json&, std::string_view)>;

template <typename T, typename Owner>
Setter field(T Owner::*member) {
  return [member](ExperimentConfig& c, const json& v, std::string_view key) {
    if constexpr (std::is_same_v<Owner, ExperimentConfig>)
      c.*member = as<T>(v, key);
    else
      c.world_options.*member = as<T>(v, key);
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"trials", field(&ExperimentConfig::trials)},
      {"iterations", field(&ExperimentConfig::iterations)},
      {"rec_size", field(&ExperimentConfig::rec_size)},
      {"n_users", field(&ExperimentConfig::n_users)},
      {"budget", field(&ExperimentConfig::budget)},
      {"beta", field(&ExperimentConfig::beta)},
      {"gamma", field(&ExperimentConfig::gamma)},
      {"min_topic_size", field(&ExperimentConfig::min_topic_size)},
      {"lr_glm", field(&ExperimentConfig::lr_glm)},
      {"lr_bilinear", field(&ExperimentConfig::lr_bilinear)},
      {"lr_encoder", field(&ExperimentConfig::lr_encoder)},
      {"cadence_item", field(&ExperimentConfig::cadence_item)},
      {"cadence_topic", field(&ExperimentConfig::cadence_topic)},
      {"mc_samples", field(&ExperimentConfig::mc_samples)},
      {"dropout_rate", field(&ExperimentConfig::dropout_rate)},
      {"flip_prob", field(&ExperimentConfig::flip_prob)},
      {"mode",
       [](ExperimentConfig& c, const json& v, std::string_view k) {
         const auto s = as<std::string>(v, k);
         if (s == "one-stage" || s == "one_stage")
           c.mode = Mode::one_stage;
         else if (s == "two-stage" || s == "two_stage")
           c.mode = Mode::two_stage;
         else
           throw ConfigError("mode must be one-stage or two-stage, got '" + s + "'");
       }},
      {"policy", field(&ExperimentConfig::policy)},
      {"topic_policy", field(&ExperimentConfig::topic_policy)},
      {"reconstruction",
       [](ExperimentConfig& c, const json& v, std::string_view k) {
         const auto s = as<std::string>(v, k);
         if (s == "dynamic")
           c.reconstruction = Reconstruction::dynamic;
         else if (s == "top_only")
           c.reconstruction = Reconstruction::top_only;
         else
           throw ConfigError("reconstruction must be dynamic or top_only, got '" + s + "'");
       }},
      {"seed", field(&ExperimentConfig::seed)},
      {"identical_trials", field(&ExperimentConfig::identical_trials)},
      {"world", field(&ExperimentConfig::world)},
      {"pretrain_fraction", field(&ExperimentConfig::pretrain_fraction)},
      {"pretrain_epochs", field(&ExperimentConfig::pretrain_epochs)},
      {"history_cap", field(&ExperimentConfig::history_cap)},
      {"parallel_scoring", field(&ExperimentConfig::parallel_scoring)},
      {"world_seed", field(&SyntheticWorldOptions::seed)},
      {"world_n_topics", field(&SyntheticWorldOptions::n_topics)},
      {"world_items_per_topic", field(&SyntheticWorldOptions::items_per_topic)},
      {"world_n_users", field(&SyntheticWorldOptions::n_users)},
      {"world_d_sim", field(&SyntheticWorldOptions::d_sim)},
      {"world_cluster_sharpness", field(&SyntheticWorldOptions::cluster_sharpness)},
      {"world_size_skew", field(&SyntheticWorldOptions::size_skew)},
      {"world_popularity_skew", field(&SyntheticWorldOptions::popularity_skew)},
      {"world_size_popularity_coupling", field(&SyntheticWorldOptions::size_popularity_coupling)},
      {"world_item_noise", field(&SyntheticWorldOptions::item_noise)},
      {"world_quality_mean", field(&SyntheticWorldOptions::quality_mean)},
      {"world_quality_sd", field(&SyntheticWorldOptions::quality_sd)},
      {"world_topic_quality_sd", field(&SyntheticWorldOptions::topic_quality_sd)},
      {"world_feature_noise", field(&SyntheticWorldOptions::feature_noise)},
      {"world_max_preferred_topics", field(&SyntheticWorldOptions::max_preferred_topics)},
      {"world_impressions_per_user", field(&SyntheticWorldOptions::impressions_per_user)},
      {"world_impression_size", field(&SyntheticWorldOptions::impression_size)},
      {"world_exposure_bias", field(&SyntheticWorldOptions::exposure_bias)},
      {"world_item_dim", field(&SyntheticWorldOptions::item_dim)},
  };
  return table;
}

json parse_scalar(std::string_view text) {
  std::string s(text);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
    return s.substr(1, s.size() - 2);
  if (s == "true") return true;
  if (s == "false") return false;
  // Numbers go through the JSON parser so "1e-3" and "42" keep their type.
  json parsed = json::parse(s, nullptr, false);
  if (!parsed.is_discarded() && parsed.is_number()) return parsed;
  return s;
}

}  // namespace

void apply_setting(ExperimentConfig& cfg, std::string_view key, const json& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  it->second(cfg, value, key);
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("override must look like key=value, got '" + std::string(assignment) + "'");
  std::string key(assignment.substr(0, eq));
  while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
  apply_setting(cfg, key, parse_scalar(assignment.substr(eq + 1)));
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text[first] == '{') {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    for (const auto& [k, v] : doc.items()) apply_setting(cfg, k, v);
    return cfg;
  }
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // '#' starts a comment unless it sits inside a quoted value
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
      if (line[k] == '"') quoted = !quoted;
      if (line[k] == '#' && !quoted) {
        line.resize(k);
        break;
      }
    }
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      apply_override(cfg, line);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (rec_size < 1) throw ConfigError("rec_size must be at least 1");
  if (budget < rec_size) throw ConfigError("budget must be at least rec_size");
  if (n_users < 1) throw ConfigError("n_users must be at least 1");
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (min_topic_size < 1) throw ConfigError("min_topic_size must be at least 1");
  if (!(lr_glm > 0.0) || !(lr_bilinear > 0.0) || !(lr_encoder > 0.0))
    throw ConfigError("learning rates must be positive");
  if (cadence_item < 1 || cadence_topic < 1) throw ConfigError("cadences must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0, 1]");
  if (!(pretrain_fraction >= 0.0 && pretrain_fraction <= 1.0))
    throw ConfigError("pretrain_fraction must lie in [0, 1]");
  if (history_cap < 1) throw ConfigError("history_cap must be at least 1");
  for (const auto& name : {policy, effective_topic_policy()}) {
    if (std::find(std::begin(kPolicyNames), std::end(kPolicyNames), name) == std::end(kPolicyNames))
      throw ConfigError("unknown policy '" + name + "'");
    if (name == "dropout_ucb" && mc_samples < 2) throw ConfigError("dropout_ucb needs mc_samples >= 2");
  }
}

void ExperimentConfig::validate_for(const World& w) const {
  validate();
  if (n_users > w.n_users())
    throw ConfigError("n_users (" + std::to_string(n_users) + ") exceeds the world's " +
                      std::to_string(w.n_users()) + " users");
  if (w.n_items() < rec_size) throw ConfigError("world has fewer items than rec_size");
  if (mode == Mode::two_stage) {
    if (budget <= w.n_topics())
      throw ConfigError("two-stage mode needs budget > number of topics (" + std::to_string(w.n_topics()) + ")");
    if (w.n_topics() < rec_size) throw ConfigError("two-stage mode needs at least rec_size topics");
  }
}

json ExperimentConfig::to_json() const {
  json j = {{"trials", trials},
            {"iterations", iterations},
            {"rec_size", rec_size},
            {"n_users", n_users},
            {"budget", budget},
            {"beta", beta},
            {"gamma", gamma},
            {"min_topic_size", min_topic_size},
            {"lr_glm", lr_glm},
            {"lr_bilinear", lr_bilinear},
            {"lr_encoder", lr_encoder},
            {"cadence_item", cadence_item},
            {"cadence_topic", cadence_topic},
            {"mc_samples", mc_samples},
            {"dropout_rate", dropout_rate},
            {"flip_prob", flip_prob},
            {"mode", std::string(to_string(mode))},
            {"policy", policy},
            {"topic_policy", effective_topic_policy()},
            {"reconstruction", std::string(to_string(reconstruction))},
            {"seed", seed},
            {"identical_trials", identical_trials},
            {"world", world},
            {"pretrain_fraction", pretrain_fraction},
            {"pretrain_epochs", pretrain_epochs},
            {"history_cap", history_cap},
            {"parallel_scoring", parallel_scoring}};
  const json world_json = world_options.to_json();
  for (const auto& [k, v] : world_json.items())
    if (k != "flip_prob") j["world_" + k] = v;
  return j;
}

}  // namespace nb
