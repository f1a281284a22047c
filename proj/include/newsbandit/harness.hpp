#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "newsbandit/config.hpp"
#include "newsbandit/policy.hpp"
#include "newsbandit/world.hpp"

namespace nb {

/// One iteration of one trial. ctr = reward / m; the cumulative fields sum
/// over iterations 0..iteration.
struct MetricsRecord {
  std::size_t trial = 0;
  std::size_t iteration = 0;
  UserId user = 0;
  std::size_t reward = 0;
  double ctr = 0.0;
  double cumulative_reward = 0.0;
  double cumulative_ctr = 0.0;
  std::size_t spent = 0;  // ledger at the end of the iteration
};

struct Recommendation {
  std::size_t iteration;
  std::size_t slot;
  ItemId item;
  TopicId topic;
  int reward;
  double score;
};

struct TrialOptions {
  bool keep_feedback = false;  // record every policy update batch for replay
  bool keep_policies = false;  // hand back the final policy objects
};

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::vector<UserId> cohort;
  std::vector<MetricsRecord> records;
  std::vector<Recommendation> recommendations;
  std::size_t budget_violations = 0;
  std::size_t max_spent = 0;

  std::vector<std::vector<Feedback>> item_batches;
  std::vector<std::vector<Feedback>> topic_batches;
  std::unique_ptr<Policy> item_policy;
  std::unique_ptr<Policy> topic_policy;

  double cumulative_ctr() const { return records.empty() ? 0.0 : records.back().cumulative_ctr; }
  double cumulative_reward() const { return records.empty() ? 0.0 : records.back().cumulative_reward; }
};

/// Seed a trial runs with: the base seed when trials are forced identical,
/// otherwise a hash of (seed, trial).
std::uint64_t trial_seed(const ExperimentConfig& cfg, std::size_t trial);

/// Builds (or loads) the world named by cfg.world, applying cfg.flip_prob.
World make_world(const ExperimentConfig& cfg);

/// Runs one trial from fresh policy and encoder state. Errors are rethrown as
/// the same kind with "trial k:" prepended.
TrialResult run_trial(const ExperimentConfig& cfg, const World& world, std::size_t trial, TrialOptions opts = {});

struct Summary {
  std::string policy;
  std::string topic_policy;
  std::string mode;
  std::size_t n_users = 0;
  std::size_t m = 0;
  std::size_t trials = 0;
  double mean = 0.0;  // cumulative CTR
  double std = 0.0;   // sample standard deviation, 0 for a single trial
  double mean_reward = 0.0;
  double std_reward = 0.0;
  std::vector<double> per_trial;  // final cumulative CTR of each trial
};

Summary summarize(const ExperimentConfig& cfg, const std::vector<double>& cumulative_ctr);

struct ExperimentResult {
  Summary summary;
  std::vector<TrialResult> trials;  // ordered by trial index
  bool complete = true;
  std::string error;  // first failure when incomplete
  std::vector<std::size_t> failed_trials;
};

/// Runs cfg.trials trials in parallel. A failing trial marks the result
/// incomplete; the summary then covers only the trials that finished.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const World& world);

/// Writes summary.csv, curves/trial_<k>.csv, recommendations.csv and config.json.
void emit_report(const ExperimentConfig& cfg, const Summary& summary, const std::vector<TrialResult>& trials,
                 const std::filesystem::path& dir);

std::string summary_csv(const Summary& summary);
std::string curve_csv(const std::vector<MetricsRecord>& records);

struct SummaryRow {
  std::string policy;
  std::string mode;
  std::size_t n_users;
  std::size_t m;
  double mean;
  double std;
};
std::vector<SummaryRow> parse_summary_csv(const std::string& text);
std::vector<MetricsRecord> parse_curve_csv(const std::string& text);

/// Recomputes summary.csv from config.json and the per-trial curves in `dir`.
Summary rebuild_report(const std::filesystem::path& dir);

}  // namespace nb
