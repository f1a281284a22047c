#include <algorithm>
#include <deque>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include <doctest.h>

#include "helpers.hpp"
#include "newsbandit/error.hpp"
#include "newsbandit/two_stage.hpp"

using namespace nb;

namespace {

// Items 0.. laid out topic after topic with the given sizes.
TopicCatalog sized_catalog(const std::vector<std::size_t>& sizes) {
  std::vector<std::vector<ItemId>> by_topic;
  ItemId next = 0;
  for (std::size_t s : sizes) {
    std::vector<ItemId> items(s);
    std::iota(items.begin(), items.end(), next);
    next += static_cast<ItemId>(s);
    by_topic.push_back(std::move(items));
  }
  return TopicCatalog(std::move(by_topic), next);
}

// Scores read from a fixed table indexed by arm id.
class FixedScores final : public Policy {
 public:
  explicit FixedScores(std::vector<double> s) : s_(std::move(s)) {}
  std::string_view name() const override { return "fixed"; }
  double score(const ArmTower&, const UserQuery&, ArmId a, std::uint64_t) const override { return s_.at(a); }
  double exploit(const ArmTower& t, const UserQuery& q, ArmId a, std::uint64_t s) const override {
    return score(t, q, a, s);
  }
  void update(std::span<const Feedback>) override {}
  void reset() override {}
  std::unique_ptr<Policy> clone() const override { return std::make_unique<FixedScores>(*this); }

 private:
  std::vector<double> s_;
};

testing::TableTower dummy_tower(long n) {
  RowMatrix a = RowMatrix::Ones(n, 2);
  RowMatrix u = RowMatrix::Ones(1, 2);
  return {a, u};
}

std::set<std::set<TopicId>> as_sets(const SlotSets& s) {
  std::set<std::set<TopicId>> out;
  for (const auto& v : s.sets) out.insert(std::set<TopicId>(v.begin(), v.end()));
  return out;
}

}  // namespace

TEST_SUITE("two_stage") {

TEST_CASE("catalog validation") {
  CHECK_THROWS_AS(TopicCatalog({{0}, {}}, 1), ConfigError);
  CHECK_THROWS_AS(TopicCatalog({{0, 3}}, 2), LookupError);
  CHECK_THROWS_AS(TopicCatalog({{0}}, 2), ConfigError);
  TopicCatalog c({{0, 1}, {1, 2}}, 3);
  CHECK(c.topics_of(1).size() == 2);
  CHECK(c.topic_size(1) == 2);
}

TEST_CASE("budget ledger") {
  BudgetLedger l(10);
  l.charge(4);
  CHECK(l.spent() == 4);
  CHECK(l.remaining() == 6);
  CHECK_THROWS_AS(l.charge(7), BudgetError);
  CHECK(l.spent() == 4);
  l.charge(6);
  CHECK(l.remaining() == 0);
  l.reset();
  CHECK(l.spent() == 0);
  CHECK_THROWS_AS(BudgetLedger(0), ConfigError);
}

TEST_CASE("five topic hand trace") {
  const auto catalog = sized_catalog({1, 1, 1, 1, 10});
  FixedScores pol({0.9, 0.8, 0.7, 0.6, 0.5});
  auto tower = dummy_tower(5);
  UserQuery q{0, Vector::Ones(2), 0.1};
  BudgetLedger ledger(100);
  const auto res = stage_one({pol, tower, q, 1}, catalog, 2, 3, ledger);
  REQUIRE(res.sets.sets.size() == 2);
  CHECK(res.sets.sets[0] == std::vector<TopicId>{0, 2, 4});
  CHECK(res.sets.sets[1] == std::vector<TopicId>{1, 3});
  CHECK(ledger.spent() == 5);

  std::deque<TopicId> rest{2, 3, 4};
  SlotSets s{{{0}, {1}}, 3};
  dynamic_reconstruct(rest, s, catalog, 3);
  CHECK(s.sets[0] == std::vector<TopicId>{0, 2, 4});
  CHECK(s.sets[1] == std::vector<TopicId>{1, 3});
  CHECK(rest.empty());
}

TEST_CASE("reconstruction edge cases") {
  const auto catalog = sized_catalog({4, 2, 3, 5, 1, 6});
  FixedScores pol({0.1, 0.6, 0.3, 0.9, 0.2, 0.5});
  auto tower = dummy_tower(6);
  UserQuery q{0, Vector::Ones(2), 0.1};

  SUBCASE("q equals m") {
    const auto small = sized_catalog({1, 1, 1});
    FixedScores p3({0.2, 0.9, 0.5});
    BudgetLedger ledger(10);
    const auto res = stage_one({p3, tower, q, 1}, small, 3, 100, ledger);
    CHECK(res.sets.sets == std::vector<std::vector<TopicId>>{{1}, {2}, {0}});
  }

  SUBCASE("p of one needs no expansion") {
    BudgetLedger ledger(10);
    const auto res = stage_one({pol, tower, q, 1}, catalog, 3, 1, ledger);
    CHECK(res.sets.sets == std::vector<std::vector<TopicId>>{{3}, {1}, {5}});
  }

  SUBCASE("already full slots are untouched") {
    std::deque<TopicId> rest{0, 1};
    SlotSets s{{{3}, {5}}, 4};
    dynamic_reconstruct(rest, s, catalog, 4);
    CHECK(s.sets == std::vector<std::vector<TopicId>>{{3}, {5}});
    CHECK(rest.size() == 2);
  }

  SUBCASE("one slot with an unreachable minimum takes everything in order") {
    BudgetLedger ledger(10);
    const auto res = stage_one({pol, tower, q, 1}, catalog, 1, 1000, ledger);
    CHECK(res.sets.sets[0] == std::vector<TopicId>{3, 1, 5, 2, 4, 0});
  }

  SUBCASE("top only keeps singletons") {
    BudgetLedger ledger(10);
    const auto res = stage_one({pol, tower, q, 1}, catalog, 2, 1000, ledger, Reconstruction::top_only);
    CHECK(res.sets.sets == std::vector<std::vector<TopicId>>{{3}, {1}});
  }

  SUBCASE("fewer topics than slots") {
    BudgetLedger ledger(10);
    CHECK_THROWS_AS(stage_one({pol, tower, q, 1}, catalog, 7, 3, ledger), ConfigError);
  }

  SUBCASE("topic scoring beyond the budget") {
    BudgetLedger ledger(5);
    CHECK_THROWS_AS(stage_one({pol, tower, q, 1}, catalog, 2, 3, ledger), BudgetError);
  }
}

TEST_CASE("ties go to the lower topic id") {
  const auto catalog = sized_catalog({1, 1, 1, 1});
  FixedScores pol({0.5, 0.7, 0.5, 0.7});
  auto tower = dummy_tower(4);
  UserQuery q{0, Vector::Ones(2), 0.1};
  BudgetLedger ledger(10);
  const auto res = stage_one({pol, tower, q, 1}, catalog, 4, 1, ledger);
  CHECK(res.order == std::vector<TopicId>{1, 3, 0, 2});
}

TEST_CASE("slot set properties over random instances") {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<std::size_t> topic_count(3, 15), topic_size(1, 12), pmin(1, 40);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t q = topic_count(gen);
    std::vector<std::size_t> sizes(q);
    for (auto& s : sizes) s = topic_size(gen);
    const auto catalog = sized_catalog(sizes);
    std::vector<double> scores(q);
    for (auto& s : scores) s = std::round(u01(gen) * 8.0) / 8.0;  // coarse, so ties happen
    FixedScores pol(scores);
    auto tower = dummy_tower(static_cast<long>(q));
    UserQuery uq{0, Vector::Ones(2), 0.1};
    const std::size_t m = 1 + gen() % q;
    const std::size_t p = pmin(gen);
    BudgetLedger ledger(q);
    const auto res = stage_one({pol, tower, uq, 1}, catalog, m, p, ledger);

    std::vector<TopicId> sorted(q);
    std::iota(sorted.begin(), sorted.end(), 0);
    std::stable_sort(sorted.begin(), sorted.end(), [&](TopicId a, TopicId b) { return scores[a] > scores[b]; });
    CHECK(res.order == sorted);

    std::set<TopicId> used;
    std::size_t n_used = 0;
    for (std::size_t j = 0; j < m; ++j) {
      CHECK(res.sets.sets[j].front() == sorted[j]);
      for (TopicId t : res.sets.sets[j]) used.insert(t);
      n_used += res.sets.sets[j].size();
    }
    CHECK(used.size() == n_used);  // disjoint
    const bool exhausted = n_used == q;
    for (const auto& s : res.sets.sets)
      if (!exhausted) CHECK(slot_item_count(s, catalog) >= p);

    // Round-robin pass index never goes backwards along the score order.
    std::vector<std::size_t> pass(q, 0);
    for (const auto& s : res.sets.sets)
      for (std::size_t k = 0; k < s.size(); ++k) pass[s[k]] = k;
    std::size_t last = 0;
    for (TopicId t : sorted) {
      if (!used.contains(t)) continue;
      CHECK(pass[t] >= last);
      last = pass[t];
    }
    // Used topics are a prefix of the score order.
    for (std::size_t k = 0; k < n_used; ++k) CHECK(used.contains(sorted[k]));
  }
}

TEST_CASE("stage two") {
  auto tower = dummy_tower(30);
  UserQuery q{0, Vector::Ones(2), 0.1};
  std::vector<double> item_scores(30);
  for (ItemId i = 0; i < 30; ++i) item_scores[i] = static_cast<double>((i * 7) % 30);
  FixedScores items(item_scores);

  SUBCASE("single candidate slots") {
    const auto catalog = sized_catalog({1, 1, 1, 27});
    BudgetLedger ledger(50);
    SlotSets s{{{0}, {1}, {2}}, 1};
    Rng rng(1);
    const auto picks = stage_two({items, tower, q, 1}, s, catalog, ledger, rng);
    REQUIRE(picks.size() == 3);
    CHECK(picks[0].item == 0);
    CHECK(picks[1].item == 1);
    CHECK(picks[2].item == 2);
    CHECK(ledger.spent() == 3);
  }

  SUBCASE("greedy per slot with id tie-break") {
    const auto catalog = sized_catalog({10, 10, 10});
    FixedScores flat(std::vector<double>(30, 0.25));
    BudgetLedger ledger(300);
    SlotSets s{{{0}, {1}, {2}}, 1};
    Rng rng(2);
    const auto tied = stage_two({flat, tower, q, 1}, s, catalog, ledger, rng);
    CHECK(tied[0].item == 0);
    CHECK(tied[1].item == 10);
    CHECK(tied[2].item == 20);
    ledger.reset();
    const auto best = stage_two({items, tower, q, 1}, s, catalog, ledger, rng);
    for (const auto& p : best) {
      double top = -1;
      for (ItemId i : catalog.items(static_cast<TopicId>(p.slot))) top = std::max(top, item_scores[i]);
      CHECK(item_scores[p.item] == top);
      CHECK(p.topic == p.slot);
    }
  }

  SUBCASE("share caps each slot") {
    const auto catalog = sized_catalog({25, 5});
    BudgetLedger ledger(20);
    SlotSets s{{{0}, {0, 1}}, 1};
    Rng rng(3);
    const auto picks = stage_two({items, tower, q, 1}, s, catalog, ledger, rng);
    CHECK(ledger.spent() == 20);
    CHECK(picks[0].item != picks[1].item);
  }

  SUBCASE("padding fills the share from the catalogue") {
    const auto catalog = sized_catalog({2, 2, 26});
    BudgetLedger ledger(20);
    SlotSets s{{{0}, {1}}, 1};
    Rng rng(4);
    const auto picks = stage_two({items, tower, q, 1}, s, catalog, ledger, rng, true);
    CHECK(ledger.spent() == 20);
    for (const auto& p : picks) {
      const auto of = catalog.topics_of(p.item);
      CHECK(std::find(of.begin(), of.end(), p.topic) != of.end());
    }
    BudgetLedger unpadded(20);
    stage_two({items, tower, q, 1}, s, catalog, unpadded, rng, false);
    CHECK(unpadded.spent() == 4);
  }

  SUBCASE("duplicate items are suppressed across slots") {
    TopicCatalog overlap({{0, 1}, {0, 1}, {2}}, 3);
    FixedScores s3({1.0, 0.5, 0.1});
    BudgetLedger ledger(30);
    SlotSets s{{{0}, {1}}, 1};
    Rng rng(5);
    const auto picks = stage_two({s3, tower, q, 1}, s, overlap, ledger, rng);
    CHECK(picks[0].item == 0);
    CHECK(picks[1].item == 1);
    SlotSets dry{{{0}, {1}, {1}}, 1};
    BudgetLedger l2(30);
    CHECK_THROWS_AS(stage_two({s3, tower, q, 1}, dry, overlap, l2, rng), ConfigError);
  }

  SUBCASE("no budget left for the slots") {
    const auto catalog = sized_catalog({10, 10, 10});
    BudgetLedger ledger(5);
    ledger.charge(3);
    SlotSets s{{{0}, {1}, {2}}, 1};
    Rng rng(6);
    CHECK_THROWS_AS(stage_two({items, tower, q, 1}, s, catalog, ledger, rng), ConfigError);
  }
}

TEST_CASE("one stage") {
  auto tower = dummy_tower(30);
  UserQuery q{0, Vector::Ones(2), 0.1};
  std::vector<double> sc(30);
  for (ItemId i = 0; i < 30; ++i) sc[i] = static_cast<double>((i * 11) % 30);
  FixedScores pol(sc);
  const auto catalog = sized_catalog({10, 20});

  SUBCASE("small catalogue is scored whole") {
    BudgetLedger ledger(100);
    Rng rng(1);
    const auto picks = recommend_one_stage({pol, tower, q, 1}, catalog, 3, ledger, rng);
    CHECK(ledger.spent() == 30);
    std::vector<ItemId> got;
    for (const auto& p : picks) got.push_back(p.item);
    std::vector<ItemId> want(30);
    std::iota(want.begin(), want.end(), 0);
    std::sort(want.begin(), want.end(), [&](ItemId a, ItemId b) { return sc[a] > sc[b]; });
    want.resize(3);
    CHECK(got == want);
  }

  SUBCASE("budget caps the sample") {
    BudgetLedger ledger(12);
    Rng rng(2);
    const auto picks = recommend_one_stage({pol, tower, q, 1}, catalog, 5, ledger, rng);
    CHECK(ledger.spent() == 12);
    std::set<ItemId> distinct;
    for (const auto& p : picks) distinct.insert(p.item);
    CHECK(distinct.size() == 5);
  }

  SUBCASE("m equal to the candidate count returns them all") {
    BudgetLedger ledger(4);
    Rng rng(3);
    const auto picks = recommend_one_stage({pol, tower, q, 1}, catalog, 4, ledger, rng);
    CHECK(picks.size() == 4);
  }

  SUBCASE("errors") {
    BudgetLedger ledger(100);
    Rng rng(4);
    CHECK_THROWS_AS(recommend_one_stage({pol, tower, q, 1}, catalog, 31, ledger, rng), ConfigError);
    BudgetLedger tight(3);
    CHECK_THROWS_AS(recommend_one_stage({pol, tower, q, 1}, catalog, 4, tight, rng), ConfigError);
  }

  SUBCASE("fixed seed gives identical picks") {
    BudgetLedger a(12), b(12);
    Rng r1(9), r2(9);
    const auto p1 = recommend_one_stage({pol, tower, q, 1}, catalog, 5, a, r1);
    const auto p2 = recommend_one_stage({pol, tower, q, 1}, catalog, 5, b, r2);
    for (std::size_t k = 0; k < 5; ++k) CHECK(p1[k].item == p2[k].item);
  }
}

TEST_CASE("top k ordering") {
  const std::vector<ArmId> arms{7, 2, 9, 4};
  const std::vector<double> s{0.5, 0.9, 0.5, 0.9};
  CHECK(top_k_lowest_id(arms, s, 4) == std::vector<std::size_t>{1, 3, 0, 2});
  CHECK(argmax_lowest_id(arms, s) == 1);
  CHECK_THROWS_AS(argmax_lowest_id({}, {}), PreconditionError);
}

}
