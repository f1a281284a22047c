#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "newsbandit/world.hpp"

namespace nb {

enum class Mode { one_stage, two_stage };

/// Every experiment knob. Field names double as configuration keys; world
/// generator options use the "world_" prefix (world_n_topics, world_seed, ...).
/// Defaults form the desk profile: published values where they carry over
/// (beta, gamma, learning rates, cadences, dropout, flip) with budget, minimum
/// topic size and world size scaled down.
struct ExperimentConfig {
  std::size_t trials = 5;
  std::size_t iterations = 2000;
  std::size_t rec_size = 5;
  std::size_t n_users = 100;
  std::size_t budget = 500;
  double beta = 0.1;
  double gamma = 0.5;
  std::size_t min_topic_size = 25;
  double lr_glm = 0.01;
  double lr_bilinear = 0.001;
  double lr_encoder = 0.01;
  std::size_t cadence_item = 100;
  std::size_t cadence_topic = 50;
  std::size_t mc_samples = 5;
  double dropout_rate = 0.2;
  double flip_prob = 0.1;
  Mode mode = Mode::one_stage;
  std::string policy = "s_galm_ucb";
  std::string topic_policy;  // empty: same as policy
  Reconstruction reconstruction = Reconstruction::dynamic;
  std::uint64_t seed = 1;
  bool identical_trials = false;  // every trial reuses the base seed
  std::string world = "synthetic";  // or a world directory
  double pretrain_fraction = 0.1;
  std::size_t pretrain_epochs = 10;
  std::size_t history_cap = 50;
  bool parallel_scoring = true;
  SyntheticWorldOptions world_options;

  const std::string& effective_topic_policy() const { return topic_policy.empty() ? policy : topic_policy; }

  /// Checks the contract m >= 1, b >= m, N >= 1, T >= 1 and the value ranges.
  void validate() const;
  /// Checks constraints that depend on the world (two-stage needs b > q).
  void validate_for(const World& world) const;

  nlohmann::json to_json() const;
};

std::string_view to_string(Mode m);
std::string_view to_string(Reconstruction r);

/// Applies one key=value assignment; unknown keys and malformed values throw ConfigError.
void apply_setting(ExperimentConfig& cfg, std::string_view key, const nlohmann::json& value);
void apply_override(ExperimentConfig& cfg, std::string_view assignment);

/// JSON object or TOML-style "key = value" lines (# comments).
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

}  // namespace nb
