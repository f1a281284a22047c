#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "newsbandit/policy.hpp"

namespace nb {

/// Caps acquisition-score evaluations per iteration. Charging past the cap throws.
class BudgetLedger {
 public:
  explicit BudgetLedger(std::size_t budget);
  std::size_t budget() const noexcept { return budget_; }
  std::size_t spent() const noexcept { return spent_; }
  std::size_t remaining() const noexcept { return budget_ - spent_; }
  void charge(std::size_t evaluations);
  void reset() noexcept { spent_ = 0; }

 private:
  std::size_t budget_;
  std::size_t spent_ = 0;
};

/// Everything needed to score a batch of arms for one user in one stage.
struct ScoreRequest {
  const Policy& policy;
  const ArmTower& tower;
  const UserQuery& query;
  std::uint64_t stream_seed;  // per-candidate streams derive from (seed, arm)
};

std::uint64_t candidate_stream(std::uint64_t stream_seed, ArmId arm) noexcept;

/// Reference loop, one candidate after another.
void score_candidates_serial(const ScoreRequest& req, std::span<const ArmId> arms, std::span<double> out);

/// OpenMP kernel; bit-identical to the serial loop because each candidate
/// draws from its own stream.
void score_candidates_parallel(const ScoreRequest& req, std::span<const ArmId> arms, std::span<double> out);

/// Charges `ledger` once for the whole batch, then scores.
std::vector<double> score_candidates(const ScoreRequest& req, std::span<const ArmId> arms, BudgetLedger& ledger,
                                     bool parallel = true);

/// Index of the maximal score; ties go to the lowest arm id.
std::size_t argmax_lowest_id(std::span<const ArmId> arms, std::span<const double> scores);

/// Indices of the k best scores ordered best first, ties by lowest arm id.
std::vector<std::size_t> top_k_lowest_id(std::span<const ArmId> arms, std::span<const double> scores,
                                         std::size_t k);

}  // namespace nb
