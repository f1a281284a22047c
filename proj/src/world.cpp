#include "newsbandit/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "newsbandit/error.hpp"
#include "newsbandit/io.hpp"

namespace nb {

using nlohmann::json;

json SyntheticWorldOptions::to_json() const {
  return json{{"seed", seed},
              {"n_topics", n_topics},
              {"items_per_topic", items_per_topic},
              {"n_users", n_users},
              {"d_sim", d_sim},
              {"cluster_sharpness", cluster_sharpness},
              {"size_skew", size_skew},
              {"popularity_skew", popularity_skew},
              {"size_popularity_coupling", size_popularity_coupling},
              {"item_noise", item_noise},
              {"quality_mean", quality_mean},
              {"quality_sd", quality_sd},
              {"topic_quality_sd", topic_quality_sd},
              {"feature_noise", feature_noise},
              {"max_preferred_topics", max_preferred_topics},
              {"impressions_per_user", impressions_per_user},
              {"impression_size", impression_size},
              {"exposure_bias", exposure_bias},
              {"flip_prob", flip_prob},
              {"item_dim", item_dim}};
}

SyntheticWorldOptions SyntheticWorldOptions::from_json(const json& j) {
  SyntheticWorldOptions o;
  auto get = [&](const char* k, auto& v) {
    if (j.contains(k)) v = j.at(k).get<std::decay_t<decltype(v)>>();
  };
  get("seed", o.seed);
  get("n_topics", o.n_topics);
  get("items_per_topic", o.items_per_topic);
  get("n_users", o.n_users);
  get("d_sim", o.d_sim);
  get("cluster_sharpness", o.cluster_sharpness);
  get("size_skew", o.size_skew);
  get("popularity_skew", o.popularity_skew);
  get("size_popularity_coupling", o.size_popularity_coupling);
  get("item_noise", o.item_noise);
  get("quality_mean", o.quality_mean);
  get("quality_sd", o.quality_sd);
  get("topic_quality_sd", o.topic_quality_sd);
  get("feature_noise", o.feature_noise);
  get("max_preferred_topics", o.max_preferred_topics);
  get("impressions_per_user", o.impressions_per_user);
  get("impression_size", o.impression_size);
  get("exposure_bias", o.exposure_bias);
  get("flip_prob", o.flip_prob);
  get("item_dim", o.item_dim);
  return o;
}

namespace {

std::vector<std::size_t> topic_sizes(const SyntheticWorldOptions& o, Rng& rng) {
  std::vector<std::size_t> sizes(o.n_topics, o.items_per_topic);
  if (o.size_skew <= 0.0) return sizes;
  std::normal_distribution<double> normal(0.0, o.size_skew);
  std::vector<double> w(o.n_topics);
  for (auto& v : w) v = std::exp(normal(rng));
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  const double mass = static_cast<double>(o.items_per_topic * o.n_topics);
  for (std::size_t k = 0; k < o.n_topics; ++k)
    sizes[k] = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(mass * w[k] / total)));
  return sizes;
}

std::string numbered(const char* prefix, std::size_t k) { return prefix + std::to_string(k); }

}  // namespace

World gen_synthetic_world(const SyntheticWorldOptions& o) {
  if (o.n_topics == 0 || o.items_per_topic == 0 || o.n_users == 0)
    throw ConfigError("genworld: topic, item and user counts must be at least 1");
  if (o.d_sim < 2) throw ConfigError("genworld: d_sim must be at least 2");
  if (o.item_dim < 2) throw ConfigError("genworld: item_dim must be at least 2");
  if (o.cluster_sharpness < 0.0) throw ConfigError("genworld: cluster_sharpness must be non-negative");
  if (o.impression_size == 0 || o.impressions_per_user == 0)
    throw ConfigError("genworld: impressions must be non-empty");

  Rng rng(o.seed);
  std::normal_distribution<double> stdnorm(0.0, 1.0);
  const std::size_t feat = o.d_sim - 1;

  World w;
  const auto sizes = topic_sizes(o, rng);

  RowMatrix centroids(static_cast<Eigen::Index>(o.n_topics), static_cast<Eigen::Index>(feat));
  for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
    for (Eigen::Index c = 0; c < centroids.cols(); ++c) centroids(k, c) = stdnorm(rng);
    centroids.row(k).normalize();
  }

  std::vector<double> popularity(o.n_topics);
  {
    std::normal_distribution<double> lognoise(0.0, o.popularity_skew);
    for (std::size_t k = 0; k < o.n_topics; ++k)
      popularity[k] = std::pow(static_cast<double>(sizes[k]), o.size_popularity_coupling) *
                      std::exp(o.popularity_skew > 0.0 ? lognoise(rng) : 0.0);
  }

  // Popular topics carry better items on average.
  std::vector<double> topic_quality(o.n_topics, 0.0);
  if (o.topic_quality_sd > 0.0 && o.n_topics > 1) {
    double mean = 0.0, sq = 0.0;
    for (double p : popularity) mean += std::log(p);
    mean /= static_cast<double>(o.n_topics);
    for (double p : popularity) sq += (std::log(p) - mean) * (std::log(p) - mean);
    const double sd = std::sqrt(sq / static_cast<double>(o.n_topics));
    if (sd > 0.0)
      for (std::size_t k = 0; k < o.n_topics; ++k)
        topic_quality[k] = o.topic_quality_sd * (std::log(popularity[k]) - mean) / sd;
  }

  const std::size_t n_items = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  std::vector<std::vector<ItemId>> items_by_topic(o.n_topics);
  std::vector<TopicId> topic_of(n_items);
  w.truth.item_vecs.resize(static_cast<Eigen::Index>(n_items), static_cast<Eigen::Index>(o.d_sim));
  const double noise_scale = o.item_noise / std::sqrt(static_cast<double>(feat));
  ItemId next = 0;
  for (TopicId k = 0; k < o.n_topics; ++k) {
    for (std::size_t s = 0; s < sizes[k]; ++s, ++next) {
      items_by_topic[k].push_back(next);
      topic_of[next] = k;
      for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(feat); ++c)
        w.truth.item_vecs(next, c) = centroids(k, c) + noise_scale * stdnorm(rng);
      w.truth.item_vecs(next, static_cast<Eigen::Index>(feat)) =
          o.quality_mean + topic_quality[k] + o.quality_sd * stdnorm(rng);
    }
  }

  w.truth.user_vecs.resize(static_cast<Eigen::Index>(o.n_users), static_cast<Eigen::Index>(o.d_sim));
  w.preferred_topics.resize(o.n_users);
  std::uniform_int_distribution<std::size_t> n_pref_dist(1, std::max<std::size_t>(1, std::min(o.max_preferred_topics, o.n_topics)));
  for (UserId u = 0; u < o.n_users; ++u) {
    std::vector<double> weights = popularity;
    Vector mix = Vector::Zero(static_cast<Eigen::Index>(feat));
    const std::size_t n_pref = n_pref_dist(rng);
    for (std::size_t p = 0; p < n_pref; ++p) {
      std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
      const auto k = static_cast<TopicId>(pick(rng));
      weights[k] = 0.0;
      w.preferred_topics[u].push_back(k);
      mix += centroids.row(k).transpose();
    }
    mix.normalize();
    w.truth.user_vecs.row(u).head(static_cast<Eigen::Index>(feat)) = o.cluster_sharpness * mix.transpose();
    w.truth.user_vecs(u, static_cast<Eigen::Index>(feat)) = o.cluster_sharpness;
  }
  w.truth.flip_prob = o.flip_prob;
  w.truth.seed = o.seed;

  const std::size_t base_dim = o.item_dim - 1;
  w.item_base = RowMatrix::Zero(static_cast<Eigen::Index>(n_items), static_cast<Eigen::Index>(base_dim));
  for (ItemId i = 0; i < n_items; ++i)
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(std::min(base_dim, o.d_sim)); ++c)
      w.item_base(i, c) = w.truth.item_vecs(i, c) + o.feature_noise * stdnorm(rng);

  // Biased logger: exposure follows topic popularity.
  std::vector<double> exposure(n_items);
  for (ItemId i = 0; i < n_items; ++i) exposure[i] = std::pow(popularity[topic_of[i]], o.exposure_bias);
  const std::size_t imp_size = std::min(o.impression_size, n_items);
  std::uint32_t impression = 0;
  for (UserId u = 0; u < o.n_users; ++u) {
    for (std::size_t r = 0; r < o.impressions_per_user; ++r, ++impression) {
      std::vector<double> wts = exposure;
      for (std::size_t s = 0; s < imp_size; ++s) {
        std::discrete_distribution<std::size_t> pick(wts.begin(), wts.end());
        const auto i = static_cast<ItemId>(pick(rng));
        wts[i] = 0.0;
        const int label = uniform01(rng) < click_prob(w.truth, u, i) ? 1 : 0;
        w.logs.push_back({impression, u, i, label});
      }
    }
  }

  w.truth.threshold = select_threshold(w.truth, w.logs);

  w.catalog = TopicCatalog(std::move(items_by_topic), n_items);
  for (UserId u = 0; u < o.n_users; ++u) w.user_names.push_back(numbered("U", u));
  for (ItemId i = 0; i < n_items; ++i) w.item_names.push_back(numbered("N", i));
  for (TopicId k = 0; k < o.n_topics; ++k) w.topic_names.push_back(numbered("T", k));
  return w;
}

World load_world(const std::filesystem::path& dir) {
  World w;
  const auto emb = io::read_embeddings(dir / "embeddings.jsonl");
  if (emb.empty()) throw ConfigError("world: embeddings.jsonl is empty");
  std::unordered_map<std::string, ItemId> item_index;
  w.item_base.resize(static_cast<Eigen::Index>(emb.size()), static_cast<Eigen::Index>(emb.front().vec.size()));
  for (const auto& r : emb) {
    const auto id = static_cast<ItemId>(w.item_names.size());
    if (!item_index.emplace(r.id, id).second) throw ConfigError("world: duplicate item id " + r.id);
    w.item_names.push_back(r.id);
    for (std::size_t c = 0; c < r.vec.size(); ++c) w.item_base(id, static_cast<Eigen::Index>(c)) = r.vec[c];
  }

  std::vector<std::vector<ItemId>> items_by_topic;
  for (const auto& t : io::read_topics(dir / "topics.jsonl")) {
    std::vector<ItemId> members;
    for (const auto& name : t.items) {
      auto it = item_index.find(name);
      if (it == item_index.end()) throw LookupError("world: topic " + t.topic + " lists item without embedding " + name);
      members.push_back(it->second);
    }
    w.topic_names.push_back(t.topic);
    items_by_topic.push_back(std::move(members));
  }
  w.catalog = TopicCatalog(std::move(items_by_topic), w.item_names.size());

  auto sim = io::simulator_from_json(io::read_json(dir / "simulator.json"));
  std::unordered_map<std::string, Eigen::Index> sim_items;
  for (std::size_t k = 0; k < sim.item_names.size(); ++k) sim_items.emplace(sim.item_names[k], static_cast<Eigen::Index>(k));
  w.truth = sim.model;
  w.truth.item_vecs.resize(static_cast<Eigen::Index>(w.item_names.size()), sim.model.item_vecs.cols());
  for (ItemId i = 0; i < w.item_names.size(); ++i) {
    auto it = sim_items.find(w.item_names[i]);
    if (it == sim_items.end()) throw LookupError("world: simulator lacks item " + w.item_names[i]);
    w.truth.item_vecs.row(i) = sim.model.item_vecs.row(it->second);
  }
  w.user_names = sim.user_names;

  if (std::filesystem::exists(dir / "logs.jsonl")) {
    std::unordered_map<std::string, UserId> user_index;
    for (UserId u = 0; u < w.user_names.size(); ++u) user_index.emplace(w.user_names[u], u);
    std::unordered_map<std::string, std::uint32_t> imp_index;
    for (const auto& r : io::read_logs(dir / "logs.jsonl")) {
      auto u = user_index.find(r.user);
      auto i = item_index.find(r.item);
      if (u == user_index.end() || i == item_index.end()) continue;  // unknown to the simulator
      auto imp = imp_index.emplace(r.impression, static_cast<std::uint32_t>(imp_index.size())).first->second;
      w.logs.push_back({imp, u->second, i->second, r.label});
    }
  }

  if (std::filesystem::exists(dir / "topic_vectors.jsonl")) {
    const auto tv = io::read_embeddings(dir / "topic_vectors.jsonl");
    std::unordered_map<std::string, const io::EmbeddingRecord*> by_name;
    for (const auto& r : tv) by_name.emplace(r.id, &r);
    RowMatrix init(static_cast<Eigen::Index>(w.topic_names.size()), w.item_base.cols());
    for (TopicId k = 0; k < w.topic_names.size(); ++k) {
      auto it = by_name.find(w.topic_names[k]);
      if (it == by_name.end()) throw LookupError("world: topic_vectors.jsonl lacks topic " + w.topic_names[k]);
      require_dim(static_cast<long>(it->second->vec.size()), init.cols(), "topic vector");
      for (Eigen::Index c = 0; c < init.cols(); ++c) init(k, c) = it->second->vec[static_cast<std::size_t>(c)];
    }
    w.topic_init = std::move(init);
  }
  return w;
}

void save_world(const World& w, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<io::EmbeddingRecord> emb;
  for (ItemId i = 0; i < w.n_items(); ++i) {
    const auto row = w.item_base.row(i);
    emb.push_back({w.item_names[i], std::vector<double>(row.data(), row.data() + row.size())});
  }
  io::write_embeddings(dir / "embeddings.jsonl", emb);

  std::vector<io::TopicRecord> topics;
  for (TopicId k = 0; k < w.n_topics(); ++k) {
    io::TopicRecord r{w.topic_names[k], {}};
    for (ItemId i : w.catalog.items(k)) r.items.push_back(w.item_names[i]);
    topics.push_back(std::move(r));
  }
  io::write_topics(dir / "topics.jsonl", topics);

  std::vector<io::LogRecord> logs;
  logs.reserve(w.logs.size());
  for (const auto& r : w.logs)
    logs.push_back({"I" + std::to_string(r.impression), w.user_names[r.user], w.item_names[r.item], r.label});
  io::write_logs(dir / "logs.jsonl", logs);

  io::write_text(dir / "simulator.json", io::simulator_to_json(w.truth, w.user_names, w.item_names).dump(1) + "\n");

  if (w.topic_init) {
    std::vector<io::EmbeddingRecord> tv;
    for (TopicId k = 0; k < w.n_topics(); ++k) {
      const auto row = w.topic_init->row(k);
      tv.push_back({w.topic_names[k], std::vector<double>(row.data(), row.data() + row.size())});
    }
    io::write_embeddings(dir / "topic_vectors.jsonl", tv);
  }
}

double base_click_rate(const World& w, std::span<const UserId> users) {
  if (users.empty()) throw PreconditionError("base_click_rate: no users");
  std::size_t hits = 0;
  for (UserId u : users)
    for (ItemId i = 0; i < w.n_items(); ++i) hits += static_cast<std::size_t>(threshold_reward(w.truth, u, i));
  return static_cast<double>(hits) / static_cast<double>(users.size() * w.n_items());
}

}  // namespace nb
