#include "newsbandit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include <omp.h>

#include "newsbandit/error.hpp"
#include "newsbandit/scoring.hpp"
#include "newsbandit/two_stage.hpp"

namespace nb {

namespace {

// Rethrows `e` as the same error kind with the trial index prepended.
[[noreturn]] void rethrow_in_trial(std::size_t trial, const std::exception& e) {
  const std::string prefix = "trial " + std::to_string(trial) + ": ";
  if (const auto* err = dynamic_cast<const Error*>(&e)) throw Error(err->kind(), prefix + err->what());
  throw Error("internal", prefix + e.what());
}

std::vector<UserId> sample_cohort(std::size_t pool, std::size_t n, Rng& rng) {
  std::vector<UserId> all(pool);
  std::iota(all.begin(), all.end(), UserId{0});
  std::vector<UserId> cohort;
  cohort.reserve(n);
  std::sample(all.begin(), all.end(), std::back_inserter(cohort), n, rng);
  return cohort;
}

// The known-sample split: a random fraction of the logged records, with every
// record of a cohort user removed.
std::vector<LoggedInteraction> known_samples(const World& world, const std::vector<UserId>& cohort, double fraction,
                                             Rng& rng) {
  std::vector<char> in_cohort(world.n_users(), 0);
  for (UserId u : cohort) in_cohort[u] = 1;
  std::vector<LoggedInteraction> out;
  for (const auto& rec : world.logs) {
    if (uniform01(rng) >= fraction) continue;
    if (in_cohort[rec.user]) continue;
    out.push_back(rec);
  }
  return out;
}

struct TrialState {
  EncoderModel encoder;
  std::optional<TopicModel> topics;
  std::unique_ptr<Policy> item_policy;
  std::unique_ptr<Policy> topic_policy;
};

TrialState make_state(const ExperimentConfig& cfg, const World& world, std::uint64_t seed) {
  EncoderOptions eopts;
  eopts.dropout_rate = cfg.dropout_rate;
  eopts.mc_samples = cfg.mc_samples;
  eopts.history_cap = cfg.history_cap;
  eopts.learning_rate = cfg.lr_encoder;
  TrialState s{EncoderModel(world.item_base, world.n_users(), eopts), std::nullopt, nullptr, nullptr};

  PolicyParams params;
  params.gamma = cfg.gamma;
  params.lr_glm = cfg.lr_glm;
  params.lr_bilinear = cfg.lr_bilinear;
  const std::size_t d = s.encoder.dim();
  s.item_policy = make_policy(cfg.policy, d, d, cfg.mc_samples, params);
  if (cfg.mode == Mode::two_stage) {
    if (world.topic_init)
      s.topics.emplace(*world.topic_init, cfg.lr_encoder, cfg.dropout_rate);
    else
      s.topics.emplace(world.n_topics(), d, mix_seed(seed, 0x7091c), cfg.lr_encoder, cfg.dropout_rate);
    if (s.topics->dim() != d) throw DimensionError("topic vectors do not match the item embedding dimension");
    s.topic_policy = make_policy(cfg.effective_topic_policy(), d, d, cfg.mc_samples, params);
  }
  return s;
}

void pretrain(const ExperimentConfig& cfg, const World& world, TrialState& s,
              const std::vector<LoggedInteraction>& known, Rng& rng) {
  if (known.empty()) return;
  std::vector<Interaction> items;
  std::vector<Interaction> topics;
  items.reserve(known.size());
  for (const auto& rec : known) {
    items.push_back({rec.user, rec.item, static_cast<double>(rec.label)});
    if (rec.label == 1) {
      s.encoder.add_click(rec.user, rec.item);
      for (TopicId t : world.catalog.topics_of(rec.item)) topics.push_back({rec.user, t, 1.0});
    }
  }
  for (std::size_t e = 0; e < cfg.pretrain_epochs; ++e) {
    std::shuffle(items.begin(), items.end(), rng);
    s.encoder.train(items);
  }
  if (s.topics && !topics.empty()) {
    for (std::size_t e = 0; e < cfg.pretrain_epochs; ++e) s.topics->train(s.encoder, topics, rng);
  }
}

}  // namespace

std::uint64_t trial_seed(const ExperimentConfig& cfg, std::size_t trial) {
  return cfg.identical_trials ? cfg.seed : mix_seed(cfg.seed, trial);
}

World make_world(const ExperimentConfig& cfg) {
  World w;
  if (cfg.world == "synthetic") {
    auto opts = cfg.world_options;
    opts.flip_prob = cfg.flip_prob;
    w = gen_synthetic_world(opts);
  } else {
    w = load_world(cfg.world);
  }
  w.truth.flip_prob = cfg.flip_prob;
  return w;
}

TrialResult run_trial(const ExperimentConfig& cfg, const World& world, std::size_t trial, TrialOptions opts) {
  try {
    cfg.validate_for(world);
    TrialResult out;
    out.trial = trial;
    out.seed = trial_seed(cfg, trial);
    Rng rng(out.seed);
    Rng oracle_rng(mix_seed(out.seed, 0x0c1e));

    out.cohort = sample_cohort(world.n_users(), cfg.n_users, rng);
    TrialState s = make_state(cfg, world, out.seed);
    pretrain(cfg, world, s, known_samples(world, out.cohort, cfg.pretrain_fraction, rng), rng);

    const ItemTower item_tower(s.encoder);
    std::optional<TopicTower> topic_tower;
    if (s.topics) topic_tower.emplace(*s.topics, s.encoder);

    BudgetLedger ledger(cfg.budget);
    std::vector<Interaction> item_slice;
    std::vector<Interaction> topic_slice;
    const std::size_t m = cfg.rec_size;
    double cum_reward = 0.0;
    double cum_ctr = 0.0;
    out.records.reserve(cfg.iterations);

    for (std::size_t t = 0; t < cfg.iterations; ++t) {
      ledger.reset();
      const UserId user = out.cohort[std::uniform_int_distribution<std::size_t>(0, out.cohort.size() - 1)(rng)];
      UserQuery query{user, s.encoder.encode_user(user), cfg.beta};
      const std::uint64_t iter_seed = rng();

      std::vector<Pick> picks;
      if (cfg.mode == Mode::one_stage) {
        picks = recommend_one_stage({*s.item_policy, item_tower, query, mix_seed(iter_seed, 2)}, world.catalog, m,
                                    ledger, rng, cfg.parallel_scoring);
      } else {
        const auto first = stage_one({*s.topic_policy, *topic_tower, query, mix_seed(iter_seed, 1)}, world.catalog, m,
                                     cfg.min_topic_size, ledger, cfg.reconstruction, cfg.parallel_scoring);
        picks = stage_two({*s.item_policy, item_tower, query, mix_seed(iter_seed, 2)}, first.sets, world.catalog,
                          ledger, rng, cfg.reconstruction == Reconstruction::top_only, cfg.parallel_scoring);
      }
      if (ledger.spent() > cfg.budget) ++out.budget_violations;
      out.max_spent = std::max(out.max_spent, ledger.spent());

      std::vector<ItemId> items;
      items.reserve(picks.size());
      for (const auto& p : picks) items.push_back(p.item);
      const std::vector<int> rewards = oracle(world.truth, user, items, oracle_rng);

      // Read phase over: contexts are captured before any model changes.
      std::vector<Feedback> item_fb;
      std::vector<Feedback> topic_fb;
      std::size_t clicks = 0;
      for (std::size_t k = 0; k < picks.size(); ++k) {
        const double y = rewards[k];
        clicks += static_cast<std::size_t>(rewards[k]);
        item_fb.push_back(make_feedback(item_tower, user, picks[k].item, query.z, y));
        if (topic_tower) topic_fb.push_back(make_feedback(*topic_tower, user, picks[k].topic, query.z, y));
        out.recommendations.push_back({t, picks[k].slot, picks[k].item, picks[k].topic, rewards[k], picks[k].score});
        item_slice.push_back({user, picks[k].item, y});
        if (topic_tower) topic_slice.push_back({user, picks[k].topic, y});
      }

      s.item_policy->update(item_fb);
      if (s.topic_policy) s.topic_policy->update(topic_fb);
      if (opts.keep_feedback) {
        out.item_batches.push_back(std::move(item_fb));
        if (s.topic_policy) out.topic_batches.push_back(std::move(topic_fb));
      }
      for (std::size_t k = 0; k < picks.size(); ++k)
        if (rewards[k] == 1) s.encoder.add_click(user, picks[k].item);

      if ((t + 1) % cfg.cadence_item == 0 && !item_slice.empty()) {
        s.encoder.train(item_slice);
        item_slice.clear();
      }
      if (s.topics && (t + 1) % cfg.cadence_topic == 0 && !topic_slice.empty()) {
        s.topics->train(s.encoder, topic_slice, rng);
        topic_slice.clear();
      }

      cum_reward += static_cast<double>(clicks);
      const double ctr = static_cast<double>(clicks) / static_cast<double>(m);
      cum_ctr = cum_reward / static_cast<double>(m);
      out.records.push_back({trial, t, user, clicks, ctr, cum_reward, cum_ctr, ledger.spent()});
    }
    if (opts.keep_policies) {
      out.item_policy = std::move(s.item_policy);
      out.topic_policy = std::move(s.topic_policy);
    }
    return out;
  } catch (const std::exception& e) {
    rethrow_in_trial(trial, e);
  }
}

Summary summarize(const ExperimentConfig& cfg, const std::vector<double>& cumulative_ctr) {
  Summary s;
  s.policy = cfg.policy;
  s.topic_policy = cfg.mode == Mode::two_stage ? cfg.effective_topic_policy() : "";
  s.mode = std::string(to_string(cfg.mode));
  s.n_users = cfg.n_users;
  s.m = cfg.rec_size;
  s.trials = cumulative_ctr.size();
  s.per_trial = cumulative_ctr;
  const auto n = static_cast<double>(cumulative_ctr.size());
  if (cumulative_ctr.empty()) return s;
  s.mean = std::accumulate(cumulative_ctr.begin(), cumulative_ctr.end(), 0.0) / n;
  if (cumulative_ctr.size() > 1) {
    double ss = 0.0;
    for (double v : cumulative_ctr) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  const double m = static_cast<double>(cfg.rec_size);
  s.mean_reward = s.mean * m;
  s.std_reward = s.std * m;
  return s;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const World& world) {
  cfg.validate_for(world);
  ExperimentResult res;
  std::vector<std::optional<TrialResult>> slots(cfg.trials);
  std::vector<std::string> errors(cfg.trials);
  const int n = static_cast<int>(cfg.trials);
  // Trials own disjoint slots; scoring inside a trial runs serially here
  // because nested parallel regions are inactive.
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < n; ++k) {
    try {
      slots[k].emplace(run_trial(cfg, world, static_cast<std::size_t>(k)));
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  std::vector<double> finals;
  for (std::size_t k = 0; k < cfg.trials; ++k) {
    if (slots[k]) {
      finals.push_back(slots[k]->cumulative_ctr());
      res.trials.push_back(std::move(*slots[k]));
    } else {
      res.complete = false;
      res.failed_trials.push_back(k);
      if (res.error.empty()) res.error = errors[k];
    }
  }
  res.summary = summarize(cfg, finals);
  return res;
}

}  // namespace nb
