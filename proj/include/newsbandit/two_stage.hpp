#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "newsbandit/rng.hpp"
#include "newsbandit/scoring.hpp"
#include "newsbandit/types.hpp"

namespace nb {

class TopicCatalog {
 public:
  TopicCatalog() = default;
  /// Validates that every topic is non-empty and every item in [0, n_items)
  /// belongs to at least one topic.
  TopicCatalog(std::vector<std::vector<ItemId>> items_by_topic, std::size_t n_items);

  std::size_t n_topics() const noexcept { return items_by_topic_.size(); }
  std::size_t n_items() const noexcept { return topics_of_item_.size(); }
  std::span<const ItemId> items(TopicId topic) const;
  std::span<const TopicId> topics_of(ItemId item) const;
  std::size_t topic_size(TopicId topic) const { return items(topic).size(); }

 private:
  std::vector<std::vector<ItemId>> items_by_topic_;
  std::vector<std::vector<TopicId>> topics_of_item_;
};

struct SlotSets {
  std::vector<std::vector<TopicId>> sets;
  std::size_t min_size = 1;
};

/// Candidate item mass of one slot: sum of |S_v| over its topics.
std::size_t slot_item_count(std::span<const TopicId> set, const TopicCatalog& catalog);

/// Round-robin enrichment: while some slot holds fewer than `min_size` candidate
/// items and topics remain, visit slots in order and hand each short slot the
/// highest-scored remaining topic.
void dynamic_reconstruct(std::deque<TopicId>& remaining, SlotSets& sets, const TopicCatalog& catalog,
                         std::size_t min_size);

enum class Reconstruction {
  dynamic,   // enrich slot sets up to the minimum candidate mass
  top_only,  // keep one topic per slot; stage two pads with random items
};

struct StageOneResult {
  SlotSets sets;
  std::vector<TopicId> order;        // all topics, best first
  std::vector<double> topic_scores;  // indexed by topic id
};

/// Scores every topic (spending q budget), sorts best first with ties by lowest
/// id, seeds slot j with the j-th topic and reconstructs.
StageOneResult stage_one(const ScoreRequest& topic_request, const TopicCatalog& catalog, std::size_t m,
                         std::size_t min_size, BudgetLedger& ledger, Reconstruction mode = Reconstruction::dynamic,
                         bool parallel = true);

struct Pick {
  ItemId item;
  std::size_t slot;
  TopicId topic;  // topic credited with this item's reward
  double score;
};

/// One pick per slot from the union of its topics, excluding earlier picks.
/// Each slot may score floor(remaining / m) candidates; larger pools are
/// subsampled uniformly. With `pad_to_share`, smaller pools are topped up with
/// uniformly drawn items from the whole catalogue.
std::vector<Pick> stage_two(const ScoreRequest& item_request, const SlotSets& sets, const TopicCatalog& catalog,
                            BudgetLedger& ledger, Rng& rng, bool pad_to_share = false, bool parallel = true);

/// Uniformly samples min(remaining budget, n_items) candidates and returns the
/// top m by score.
std::vector<Pick> recommend_one_stage(const ScoreRequest& item_request, const TopicCatalog& catalog, std::size_t m,
                                      BudgetLedger& ledger, Rng& rng, bool parallel = true);

}  // namespace nb
