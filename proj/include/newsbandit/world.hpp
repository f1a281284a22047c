#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "newsbandit/encoder.hpp"
#include "newsbandit/simulator.hpp"
#include "newsbandit/two_stage.hpp"

namespace nb {

/// Everything an experiment runs against: the catalogue, the item table the
/// encoder starts from, the ground-truth simulator and a logged dataset for
/// pretraining.
struct World {
  std::vector<std::string> user_names;
  std::vector<std::string> item_names;
  std::vector<std::string> topic_names;
  TopicCatalog catalog;
  RowMatrix item_base;  // n_items x (d1 - 1)
  GroundTruthModel truth;
  std::vector<LoggedInteraction> logs;
  std::optional<RowMatrix> topic_init;
  std::vector<std::vector<TopicId>> preferred_topics;  // synthetic worlds only

  std::size_t n_users() const noexcept { return user_names.size(); }
  std::size_t n_items() const noexcept { return item_names.size(); }
  std::size_t n_topics() const noexcept { return topic_names.size(); }
  std::size_t item_dim() const noexcept { return static_cast<std::size_t>(item_base.cols()) + 1; }
};

struct SyntheticWorldOptions {
  std::uint64_t seed = 7;
  std::size_t n_topics = 8;
  std::size_t items_per_topic = 200;  // mean topic size when size_skew > 0
  std::size_t n_users = 1200;
  std::size_t d_sim = 8;  // last coordinate carries item quality
  double cluster_sharpness = 4.0;
  double size_skew = 0.0;        // log-normal spread of topic sizes
  double popularity_skew = 0.5;  // log-normal spread of topic popularity
  double size_popularity_coupling = 0.0;
  double item_noise = 0.35;     // spread of items around their topic centroid
  double quality_mean = -0.5;
  double quality_sd = 0.3;
  double topic_quality_sd = 0.0;  // item quality shift per standardised log topic popularity
  double feature_noise = 0.1;   // noise between truth and the encoder's item table
  std::size_t max_preferred_topics = 2;
  std::size_t impressions_per_user = 6;
  std::size_t impression_size = 10;
  double exposure_bias = 1.0;  // logger exposes topics proportional to popularity^bias
  double flip_prob = kDefaultFlipProb;
  std::size_t item_dim = 9;  // d1, bias included

  nlohmann::json to_json() const;
  static SyntheticWorldOptions from_json(const nlohmann::json& j);
};

/// Topic centroids on the unit sphere, items scattered around their centroid,
/// users mixing a few popularity-weighted preferred topics scaled by the
/// sharpness. The threshold is chosen by F-score on the generated log.
World gen_synthetic_world(const SyntheticWorldOptions& opts);

/// Directory layout: embeddings.jsonl, topics.jsonl, simulator.json and
/// optionally logs.jsonl and topic_vectors.jsonl.
World load_world(const std::filesystem::path& dir);
void save_world(const World& world, const std::filesystem::path& dir);

/// Fraction of (user, item) pairs whose threshold reward is 1, over `users`.
double base_click_rate(const World& world, std::span<const UserId> users);

}  // namespace nb
