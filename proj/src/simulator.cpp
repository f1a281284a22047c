#include "newsbandit/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "newsbandit/error.hpp"
#include "newsbandit/glm.hpp"

namespace nb {

namespace {

void check_ids(const GroundTruthModel& model, UserId user, ItemId item) {
  if (user >= model.n_users()) throw LookupError("simulator: unknown user id " + std::to_string(user));
  if (item >= model.n_items()) throw LookupError("simulator: unknown item id " + std::to_string(item));
}

double f_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

double click_prob(const GroundTruthModel& model, UserId user, ItemId item) {
  check_ids(model, user, item);
  return sigmoid(model.user_vecs.row(user).dot(model.item_vecs.row(item)));
}

int threshold_reward(const GroundTruthModel& model, UserId user, ItemId item) {
  return click_prob(model, user, item) >= model.threshold ? 1 : 0;
}

std::vector<int> oracle(const GroundTruthModel& model, UserId user, std::span<const ItemId> recommended, Rng& rng) {
  if (recommended.empty()) throw PreconditionError("oracle: empty recommendation set");
  std::vector<int> y;
  y.reserve(recommended.size());
  for (ItemId i : recommended) {
    const int base = threshold_reward(model, user, i);
    y.push_back(uniform01(rng) < model.flip_prob ? 1 - base : base);
  }
  return y;
}

std::optional<double> PropensityTable::get(UserId user, ItemId item) const {
  auto it = table_.find(key(user, item));
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

void PropensityTable::set(UserId user, ItemId item, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw NumericError("propensity must lie in (0, 1]");
  table_[key(user, item)] = p;
}

PropensityTable estimate_propensity(std::span<const LoggedInteraction> logs) {
  if (logs.empty()) throw PreconditionError("estimate_propensity: empty log");
  std::unordered_map<UserId, std::set<std::uint32_t>> user_impressions;
  std::unordered_map<std::uint64_t, std::set<std::uint32_t>> pair_impressions;
  for (const auto& r : logs) {
    user_impressions[r.user].insert(r.impression);
    pair_impressions[PropensityTable::key(r.user, r.item)].insert(r.impression);
  }
  PropensityTable table;
  for (const auto& [k, imps] : pair_impressions) {
    const auto user = static_cast<UserId>(k >> 32);
    const auto item = static_cast<ItemId>(k & 0xffffffffULL);
    table.set(user, item,
              static_cast<double>(imps.size()) / static_cast<double>(user_impressions.at(user).size()));
  }
  return table;
}

double hajek_loss(std::span<const double> bce_values, std::span<const double> propensities) {
  require_dim(static_cast<long>(propensities.size()), static_cast<long>(bce_values.size()), "hajek_loss");
  if (bce_values.empty()) throw PreconditionError("hajek_loss: empty group");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < bce_values.size(); ++j) {
    if (!(propensities[j] > 0.0)) throw NumericError("hajek_loss: non-positive propensity");
    num += bce_values[j] / propensities[j];
    den += 1.0 / propensities[j];
  }
  return num / den;
}

namespace {

struct Member {
  ItemId item;
  double label;
  double propensity;
};

struct Group {
  UserId user;
  std::vector<Member> members;
};

}  // namespace

SimTrainResult train_simulator_debiased(std::span<const LoggedInteraction> logs, const PropensityTable& propensities,
                                        std::size_t n_users, std::size_t n_items, const SimTrainOptions& opts) {
  if (logs.empty()) throw PreconditionError("train_simulator: empty log");
  if (opts.negatives == 0) throw ConfigError("train_simulator: K must be at least 1");
  if (opts.dim == 0) throw ConfigError("train_simulator: dim must be positive");

  std::map<std::uint32_t, std::vector<const LoggedInteraction*>> by_impression;
  std::vector<ItemId> global_negatives;
  for (const auto& r : logs) {
    if (r.user >= n_users || r.item >= n_items) throw LookupError("train_simulator: log id out of range");
    by_impression[r.impression].push_back(&r);
    if (r.label == 0) global_negatives.push_back(r.item);
  }

  Rng rng(opts.seed);
  std::normal_distribution<double> init(0.0, opts.init_scale);
  SimTrainResult res;
  res.model.user_vecs.resize(static_cast<Eigen::Index>(n_users), static_cast<Eigen::Index>(opts.dim));
  res.model.item_vecs.resize(static_cast<Eigen::Index>(n_items), static_cast<Eigen::Index>(opts.dim));
  for (Eigen::Index r = 0; r < res.model.user_vecs.rows(); ++r)
    for (Eigen::Index c = 0; c < res.model.user_vecs.cols(); ++c) res.model.user_vecs(r, c) = init(rng);
  for (Eigen::Index r = 0; r < res.model.item_vecs.rows(); ++r)
    for (Eigen::Index c = 0; c < res.model.item_vecs.cols(); ++c) res.model.item_vecs(r, c) = init(rng);
  res.model.seed = opts.seed;

  auto weight_of = [&](UserId u, ItemId i) {
    if (!opts.debiased) return 1.0;
    const auto p = propensities.get(u, i);
    if (!p) throw LookupError("train_simulator: missing propensity for a logged pair");
    return *p;
  };

  auto build_groups = [&] {
    std::vector<Group> groups;
    std::size_t fallbacks = 0;
    for (const auto& [imp, rows] : by_impression) {
      std::vector<ItemId> negs;
      for (const auto* r : rows)
        if (r->label == 0) negs.push_back(r->item);
      for (const auto* r : rows) {
        if (r->label != 1) continue;
        Group g{r->user, {{r->item, 1.0, weight_of(r->user, r->item)}}};
        if (negs.empty()) {
          if (global_negatives.empty()) continue;
          std::uniform_int_distribution<std::size_t> pick(0, global_negatives.size() - 1);
          g.members.front().propensity = 1.0;
          g.members.push_back({global_negatives[pick(rng)], 0.0, 1.0});
          ++fallbacks;
        } else if (negs.size() >= opts.negatives) {
          std::vector<ItemId> chosen;
          std::sample(negs.begin(), negs.end(), std::back_inserter(chosen), opts.negatives, rng);
          for (ItemId i : chosen) g.members.push_back({i, 0.0, weight_of(r->user, i)});
        } else {
          std::uniform_int_distribution<std::size_t> pick(0, negs.size() - 1);
          for (std::size_t k = 0; k < opts.negatives; ++k) {
            const ItemId i = negs[pick(rng)];
            g.members.push_back({i, 0.0, weight_of(r->user, i)});
          }
        }
        groups.push_back(std::move(g));
      }
    }
    return std::pair{std::move(groups), fallbacks};
  };

  auto& users = res.model.user_vecs;
  auto& items = res.model.item_vecs;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    auto [groups, fallbacks] = build_groups();
    std::shuffle(groups.begin(), groups.end(), rng);
    res.groups = groups.size();
    res.fallback_groups = fallbacks;
    double total = 0.0;
    for (const auto& g : groups) {
      double wsum = 0.0;
      for (const auto& mbr : g.members) wsum += 1.0 / mbr.propensity;
      const Vector u = users.row(g.user).transpose();
      Vector du = Vector::Zero(u.size());
      double num = 0.0;
      for (const auto& mbr : g.members) {
        const double w = 1.0 / mbr.propensity / wsum;
        const double p = sigmoid(u.dot(items.row(mbr.item).transpose()));
        num += w * bce(p, mbr.label);
        const double ds = w * (p - mbr.label);
        du += ds * items.row(mbr.item).transpose();
        items.row(mbr.item) -= opts.learning_rate * ds * u.transpose();
      }
      users.row(g.user) -= opts.learning_rate * du.transpose();
      total += num;
    }
    if (!std::isfinite(total) || !users.allFinite() || !items.allFinite())
      throw NumericError("train_simulator: non-finite loss");
    res.final_loss = total;
  }
  return res;
}

double uniform_exposure_bce(const GroundTruthModel& model, const GroundTruthModel& truth) {
  require_dim(static_cast<long>(model.n_users()), static_cast<long>(truth.n_users()), "uniform_exposure_bce users");
  require_dim(static_cast<long>(model.n_items()), static_cast<long>(truth.n_items()), "uniform_exposure_bce items");
  double total = 0.0;
  for (UserId u = 0; u < truth.n_users(); ++u)
    for (ItemId i = 0; i < truth.n_items(); ++i) total += bce(click_prob(model, u, i), click_prob(truth, u, i));
  return total / static_cast<double>(truth.n_users() * truth.n_items());
}

ClassificationStats classify(std::span<const double> probs, std::span<const int> labels, double threshold) {
  require_dim(static_cast<long>(labels.size()), static_cast<long>(probs.size()), "classify");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const bool pred = probs[k] >= threshold;
    if (pred && labels[k] == 1) ++tp;
    if (pred && labels[k] == 0) ++fp;
    if (!pred && labels[k] == 1) ++fn;
  }
  const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return {precision, recall, f_score(tp, fp, fn)};
}

double select_threshold(std::span<const double> probs, std::span<const int> labels) {
  require_dim(static_cast<long>(labels.size()), static_cast<long>(probs.size()), "select_threshold");
  std::size_t positives = 0;
  for (int y : labels) positives += y == 1 ? 1 : 0;
  if (positives == 0 || positives == labels.size())
    throw PreconditionError("select_threshold: validation set needs both classes");

  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });

  // Sweep thresholds from high to low; '>=' keeps the smaller one on ties.
  std::size_t tp = 0, fp = 0;
  double best_f = -1.0;
  double best_t = probs[order.front()];
  for (std::size_t k = 0; k < order.size();) {
    const double t = probs[order[k]];
    while (k < order.size() && probs[order[k]] == t) {
      (labels[order[k]] == 1 ? tp : fp) += 1;
      ++k;
    }
    const double f = f_score(tp, fp, positives - tp);
    if (f >= best_f) {
      best_f = f;
      best_t = t;
    }
  }
  return best_t;
}

double select_threshold(const GroundTruthModel& model, std::span<const LoggedInteraction> validation) {
  if (validation.empty()) throw PreconditionError("select_threshold: empty validation set");
  std::vector<double> probs;
  std::vector<int> labels;
  probs.reserve(validation.size());
  labels.reserve(validation.size());
  for (const auto& r : validation) {
    probs.push_back(click_prob(model, r.user, r.item));
    labels.push_back(r.label);
  }
  return select_threshold(probs, labels);
}

}  // namespace nb
