#include "newsbandit/two_stage.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_set>

#include "newsbandit/error.hpp"

namespace nb {

TopicCatalog::TopicCatalog(std::vector<std::vector<ItemId>> items_by_topic, std::size_t n_items)
    : items_by_topic_(std::move(items_by_topic)), topics_of_item_(n_items) {
  for (TopicId t = 0; t < items_by_topic_.size(); ++t) {
    if (items_by_topic_[t].empty()) throw ConfigError("topic " + std::to_string(t) + " has no items");
    for (ItemId i : items_by_topic_[t]) {
      if (i >= n_items) throw LookupError("topic " + std::to_string(t) + " lists unknown item " + std::to_string(i));
      topics_of_item_[i].push_back(t);
    }
  }
  for (ItemId i = 0; i < n_items; ++i)
    if (topics_of_item_[i].empty()) throw ConfigError("item " + std::to_string(i) + " belongs to no topic");
}

std::span<const ItemId> TopicCatalog::items(TopicId topic) const {
  if (topic >= items_by_topic_.size()) throw LookupError("unknown topic id " + std::to_string(topic));
  return items_by_topic_[topic];
}

std::span<const TopicId> TopicCatalog::topics_of(ItemId item) const {
  if (item >= topics_of_item_.size()) throw LookupError("unknown item id " + std::to_string(item));
  return topics_of_item_[item];
}

std::size_t slot_item_count(std::span<const TopicId> set, const TopicCatalog& catalog) {
  std::size_t n = 0;
  for (TopicId t : set) n += catalog.topic_size(t);
  return n;
}

void dynamic_reconstruct(std::deque<TopicId>& remaining, SlotSets& sets, const TopicCatalog& catalog,
                         std::size_t min_size) {
  sets.min_size = min_size;
  auto short_slot_exists = [&] {
    return std::any_of(sets.sets.begin(), sets.sets.end(),
                       [&](const auto& s) { return slot_item_count(s, catalog) < min_size; });
  };
  while (!remaining.empty() && short_slot_exists()) {
    for (auto& slot : sets.sets) {
      if (remaining.empty()) break;
      if (slot_item_count(slot, catalog) < min_size) {
        slot.push_back(remaining.front());
        remaining.pop_front();
      }
    }
  }
}

StageOneResult stage_one(const ScoreRequest& topic_request, const TopicCatalog& catalog, std::size_t m,
                         std::size_t min_size, BudgetLedger& ledger, Reconstruction mode, bool parallel) {
  const std::size_t q = catalog.n_topics();
  if (m == 0) throw ConfigError("stage one: rec_size must be positive");
  if (q < m) throw ConfigError("stage one: fewer topics (" + std::to_string(q) + ") than slots (" +
                               std::to_string(m) + ")");
  if (min_size == 0) throw ConfigError("stage one: min_topic_size must be positive");

  std::vector<ArmId> topics(q);
  std::iota(topics.begin(), topics.end(), 0);
  StageOneResult res;
  res.topic_scores = score_candidates(topic_request, topics, ledger, parallel);

  res.order = topics;
  std::stable_sort(res.order.begin(), res.order.end(), [&](TopicId a, TopicId b) {
    if (res.topic_scores[a] != res.topic_scores[b]) return res.topic_scores[a] > res.topic_scores[b];
    return a < b;
  });

  res.sets.min_size = min_size;
  res.sets.sets.resize(m);
  for (std::size_t j = 0; j < m; ++j) res.sets.sets[j] = {res.order[j]};
  if (mode == Reconstruction::dynamic) {
    std::deque<TopicId> remaining(res.order.begin() + static_cast<std::ptrdiff_t>(m), res.order.end());
    dynamic_reconstruct(remaining, res.sets, catalog, min_size);
  }
  return res;
}

namespace {

TopicId credited_topic(ItemId item, std::span<const TopicId> slot, const TopicCatalog& catalog) {
  const auto of = catalog.topics_of(item);
  for (TopicId t : slot)
    if (std::find(of.begin(), of.end(), t) != of.end()) return t;
  return of.front();
}

}  // namespace

std::vector<Pick> stage_two(const ScoreRequest& item_request, const SlotSets& sets, const TopicCatalog& catalog,
                            BudgetLedger& ledger, Rng& rng, bool pad_to_share, bool parallel) {
  const std::size_t m = sets.sets.size();
  if (m == 0) throw ConfigError("stage two: no slots");
  const std::size_t share = ledger.remaining() / m;
  if (share == 0)
    throw ConfigError("stage two: budget left after topic scoring (" + std::to_string(ledger.remaining()) +
                      ") cannot cover " + std::to_string(m) + " slots");

  std::vector<Pick> picks;
  std::unordered_set<ItemId> taken;
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<ArmId> pool;
    std::unordered_set<ItemId> seen;
    for (TopicId t : sets.sets[j])
      for (ItemId i : catalog.items(t))
        if (!taken.contains(i) && seen.insert(i).second) pool.push_back(i);

    std::vector<ArmId> cands;
    if (pool.size() > share) {
      std::sample(pool.begin(), pool.end(), std::back_inserter(cands), share, rng);
    } else {
      cands = std::move(pool);
      if (pad_to_share && cands.size() < share) {
        std::vector<ArmId> rest;
        for (ItemId i = 0; i < catalog.n_items(); ++i)
          if (!taken.contains(i) && !seen.contains(i)) rest.push_back(i);
        std::sample(rest.begin(), rest.end(), std::back_inserter(cands), share - cands.size(), rng);
      }
    }
    if (cands.empty())
      throw ConfigError("stage two: slot " + std::to_string(j) + " has no candidate items left");

    const auto scores = score_candidates(item_request, cands, ledger, parallel);
    const std::size_t best = argmax_lowest_id(cands, scores);
    const ItemId item = cands[best];
    taken.insert(item);
    picks.push_back({item, j, credited_topic(item, sets.sets[j], catalog), scores[best]});
  }
  return picks;
}

std::vector<Pick> recommend_one_stage(const ScoreRequest& item_request, const TopicCatalog& catalog, std::size_t m,
                                      BudgetLedger& ledger, Rng& rng, bool parallel) {
  const std::size_t n = catalog.n_items();
  if (m == 0) throw ConfigError("one stage: rec_size must be positive");
  if (n < m) throw ConfigError("one stage: fewer items than recommendation slots");
  const std::size_t k = std::min(ledger.remaining(), n);
  if (k < m) throw ConfigError("one stage: budget smaller than rec_size");

  std::vector<ArmId> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<ArmId> cands;
  if (k == n)
    cands = std::move(all);
  else
    std::sample(all.begin(), all.end(), std::back_inserter(cands), k, rng);

  const auto scores = score_candidates(item_request, cands, ledger, parallel);
  std::vector<Pick> picks;
  for (std::size_t idx : top_k_lowest_id(cands, scores, m)) {
    const ItemId item = cands[idx];
    picks.push_back({item, picks.size(), catalog.topics_of(item).front(), scores[idx]});
  }
  return picks;
}

}  // namespace nb
