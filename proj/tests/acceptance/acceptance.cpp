// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <initializer_list>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../oracles.hpp"
#include "newsbandit/config.hpp"
#include "newsbandit/glm.hpp"
#include "newsbandit/harness.hpp"
#include "newsbandit/policy.hpp"
#include "newsbandit/scoring.hpp"
#include "newsbandit/simulator.hpp"
#include "newsbandit/two_stage.hpp"

using namespace nb;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Every trial any criterion runs is recorded here for the budget check.
struct BudgetAudit {
  std::size_t trials = 0;
  std::size_t iterations = 0;
  std::size_t violations = 0;
  double peak_fraction = 0.0;  // max spent / b

  void add(const ExperimentConfig& cfg, const TrialResult& r) {
    ++trials;
    iterations += r.records.size();
    violations += r.budget_violations;
    for (const auto& rec : r.records) violations += rec.spent > cfg.budget;
    peak_fraction = std::max(peak_fraction, static_cast<double>(r.max_spent) / static_cast<double>(cfg.budget));
  }
} audit;

std::vector<double> run_finals(const ExperimentConfig& cfg, const World& world) {
  const auto res = run_experiment(cfg, world);
  if (!res.complete) throw std::runtime_error("experiment incomplete: " + res.error);
  for (const auto& t : res.trials) audit.add(cfg, t);
  return res.summary.per_trial;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt("%.0f", x);
  return s;
}

// ---------------------------------------------------------------------------

Outcome la_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(20240611);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  std::size_t updates = 0;
  for (std::size_t dim : {2, 8, 16}) {
    DesignState st(dim);
    for (int k = 0; k < 1000; ++k) {
      Vector c(dim);
      for (auto& v : c) v = nd(gen);
      st.absorb(c);
      ++updates;
      worst = std::max(worst, reference::max_abs_diff(st.inverse(), reference::direct_inverse(st.matrix())));
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-8 && secs < 5.0,
          fmt("%zu updates at dim 2/8/16, max |cached - direct| = %.2e, %.2f s", updates, worst, secs)};
}

Outcome bilinear_identity() {
  std::mt19937_64 gen(77);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    Vector x(9), z(9);
    Matrix theta(9, 9);
    for (auto& v : x) v = nd(gen);
    for (auto& v : z) v = nd(gen);
    for (long i = 0; i < theta.size(); ++i) theta.data()[i] = nd(gen);
    worst = std::max(worst, std::abs(x.dot(theta * z) - outer_vec(x, z).dot(reference::vec(theta))));
  }
  return {worst < 1e-10, fmt("1000 triples at 9x9, max gap %.2e", worst)};
}

Outcome greedy_reduction(const World& world) {
  // Policies trained by a short real run, then probed on random candidate sets.
  ExperimentConfig base;
  base.iterations = 200;
  base.n_users = 20;
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<ArmId> item(0, static_cast<ArmId>(world.n_items() - 1));
  std::uniform_int_distribution<std::size_t> set_size(2, 50);
  std::string detail;
  bool ok = true;
  for (const char* name : {"glm_ucb", "n_glm_ucb", "dropout_ucb", "s_galm_ucb", "s_gblm_ucb"}) {
    ExperimentConfig cfg = base;
    cfg.policy = name;
    auto run = run_trial(cfg, world, 0, {false, true});
    audit.add(cfg, run);
    EncoderModel enc(world.item_base, world.n_users());
    for (UserId u : run.cohort)
      for (int k = 0; k < 5; ++k) enc.add_click(u, item(gen));
    ItemTower tower(enc);
    int agree = 0;
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<ArmId> arms(set_size(gen));
      for (auto& a : arms) a = item(gen);
      std::sort(arms.begin(), arms.end());
      arms.erase(std::unique(arms.begin(), arms.end()), arms.end());
      const UserId u = run.cohort[rep % run.cohort.size()];
      UserQuery q{u, tower.user_context(u), 0.0};
      std::vector<double> full(arms.size()), exploit(arms.size());
      for (std::size_t k = 0; k < arms.size(); ++k) {
        const auto s = candidate_stream(rep, arms[k]);
        full[k] = run.item_policy->score(tower, q, arms[k], s);
        exploit[k] = run.item_policy->exploit(tower, q, arms[k], s);
      }
      agree += argmax_lowest_id(arms, full) == argmax_lowest_id(arms, exploit);
    }
    ok &= agree == 100;
    detail += fmt("%s%s %d/100", detail.empty() ? "" : ", ", name, agree);
  }
  return {ok, detail};
}

double replay_gap(const Policy& live, const std::vector<std::vector<Feedback>>& batches, double gamma) {
  if (const auto* p = dynamic_cast<const DisjointGlmPolicy*>(&live)) {
    double gap = 0.0;
    for (const auto& [u, st] : p->users()) {
      const auto dim = static_cast<long>(st.coef.dim());
      const auto ref = reference::rebuild_glm(batches, u, p->neural(), dim, st.coef.learning_rate());
      gap = std::max({gap, (st.coef.theta() - ref.theta).cwiseAbs().maxCoeff(),
                      reference::max_abs_diff(st.design.matrix(), ref.design),
                      reference::max_abs_diff(st.design.inverse(), reference::direct_inverse(ref.design))});
    }
    return gap;
  }
  if (const auto* p = dynamic_cast<const AdditiveSharedPolicy*>(&live)) {
    const auto ref = reference::rebuild_additive(batches, static_cast<long>(p->theta_x().dim()),
                                                 static_cast<long>(p->theta_z().dim()), gamma,
                                                 p->theta_x().learning_rate());
    double gap = std::max((p->theta_x().theta() - ref.theta_x).cwiseAbs().maxCoeff(),
                          (p->theta_z().theta() - ref.theta_z).cwiseAbs().maxCoeff());
    if (ref.a_x.size() != p->item_designs().size() || ref.a_z.size() != p->user_designs().size()) return 1e9;
    for (const auto& [u, m] : ref.a_x) gap = std::max(gap, reference::max_abs_diff(p->item_designs().at(u).matrix(), m));
    for (const auto& [i, m] : ref.a_z) gap = std::max(gap, reference::max_abs_diff(p->user_designs().at(i).matrix(), m));
    return gap;
  }
  if (const auto* p = dynamic_cast<const BilinearSharedPolicy*>(&live)) {
    const auto ref = reference::rebuild_bilinear(batches, p->theta().rows(), p->theta().cols(), p->learning_rate());
    return std::max({reference::max_abs_diff(p->theta(), ref.theta),
                     reference::max_abs_diff(p->design().matrix(), ref.design),
                     reference::max_abs_diff(p->design().inverse(), reference::direct_inverse(ref.design))});
  }
  return 0.0;  // stateless policies
}

Outcome replay_determinism(const World& world) {
  ExperimentConfig base;
  base.iterations = 40;  // 40 x m = 200 impressions
  base.n_users = 20;
  double worst = 0.0;
  int runs = 0;
  for (Mode mode : {Mode::one_stage, Mode::two_stage}) {
    for (const char* name : {"glm_ucb", "n_glm_ucb", "s_galm_ucb", "s_gblm_ucb"}) {
      ExperimentConfig cfg = base;
      cfg.mode = mode;
      cfg.policy = name;
      const auto r = run_trial(cfg, world, 3, {true, true});
      audit.add(cfg, r);
      std::size_t impressions = 0;
      for (const auto& b : r.item_batches) impressions += b.size();
      if (impressions != 200) return {false, fmt("run logged %zu impressions", impressions)};
      worst = std::max(worst, replay_gap(*r.item_policy, r.item_batches, cfg.gamma));
      if (r.topic_policy) worst = std::max(worst, replay_gap(*r.topic_policy, r.topic_batches, cfg.gamma));
      ++runs;
    }
  }
  return {worst < 1e-8, fmt("%d runs of 200 impressions (item and topic policies), max state gap %.2e", runs, worst)};
}

Outcome oracle_statistics(const World& world) {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.policy = "random";
  // Expected CTR of a trial: its cohort's flipped base rate; the spread adds
  // the user draw to the per-impression Bernoulli noise.
  const double p = cfg.flip_prob;
  double expected = 0.0, variance = 0.0, observed = 0.0;
  for (std::size_t k = 0; k < cfg.trials; ++k) {
    const auto r = run_trial(cfg, world, k);
    audit.add(cfg, r);
    std::vector<double> q;
    for (UserId u : r.cohort) {
      const std::vector<UserId> one{u};
      const double rate = base_click_rate(world, one);
      q.push_back((1 - p) * rate + p * (1 - rate));
    }
    const double qm = mean(q);
    double between = 0.0, within = 0.0;
    for (double v : q) {
      between += (v - qm) * (v - qm) / q.size();
      within += v * (1 - v) / cfg.rec_size / q.size();
    }
    const double n = static_cast<double>(cfg.iterations);
    expected += qm / cfg.trials;
    variance += (between + within) / n / (cfg.trials * cfg.trials);
    observed += r.cumulative_ctr() / n / cfg.trials;
  }
  const double sigma = std::sqrt(variance);
  const double secs = seconds_since(t0);
  const double rstar = base_click_rate(world, [&] {
    std::vector<UserId> all(world.n_users());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }());
  return {std::abs(observed - expected) <= 3 * sigma && secs < 60.0,
          fmt("mean CTR %.4f vs expected %.4f (3 sigma = %.4f, world r* = %.4f), %.1f s", observed, expected,
              3 * sigma, rstar, secs)};
}

Outcome shared_policies_beat_random(const World& world) {
  ExperimentConfig cfg;  // desk defaults: 8x200 world, 100 users, N 2000, m 5, T 5, b 500
  std::map<std::string, std::vector<double>> finals;
  std::map<std::string, double> secs;
  for (const char* name : {"random", "s_galm_ucb", "s_gblm_ucb"}) {
    const auto t0 = Clock::now();
    cfg.policy = name;
    finals[name] = run_finals(cfg, world);
    secs[name] = seconds_since(t0);
  }
  bool ok = true;
  std::string detail = "random [" + join(finals["random"]) + "]";
  for (const char* name : {"s_galm_ucb", "s_gblm_ucb"}) {
    int wins = 0;
    for (std::size_t k = 0; k < cfg.trials; ++k) wins += finals[name][k] >= 1.2 * finals["random"][k];
    ok &= wins >= 4 && secs[name] < 300.0;
    detail += fmt("; %s [%s] %d/5 at >= 1.2x, ratio %.2f, %.0f s", name, join(finals[name]).c_str(), wins,
                  mean(finals[name]) / mean(finals["random"]), secs[name]);
  }
  return {ok, detail};
}

Outcome user_scaling(const World& world) {
  ExperimentConfig cfg;
  std::map<std::string, double> ratio;
  std::string detail;
  for (const char* name : {"glm_ucb", "s_galm_ucb"}) {
    cfg.policy = name;
    cfg.n_users = 10;
    const double few = mean(run_finals(cfg, world));
    cfg.n_users = 1000;
    const double many = mean(run_finals(cfg, world));
    ratio[name] = many / few;
    detail += fmt("%s%s %.0f -> %.0f (ratio %.3f)", detail.empty() ? "" : "; ", name, few, many, ratio[name]);
  }
  const bool ok = ratio["glm_ucb"] < 0.9 && ratio["s_galm_ucb"] >= 0.85 && ratio["s_galm_ucb"] <= 1.15;
  return {ok, detail};
}

ExperimentConfig with_overrides(std::initializer_list<const char*> overrides) {
  ExperimentConfig cfg;
  for (const char* o : overrides) apply_override(cfg, o);
  return cfg;
}

// Many small topics and a budget whose per-slot share equals the minimum
// topic size. Large topics are popular here, so picking topics uniformly
// hurts the random policy.
ExperimentConfig stage_config() {
  return with_overrides({"world_n_topics=60", "world_items_per_topic=30", "world_size_skew=1.0",
                         "world_size_popularity_coupling=1", "world_max_preferred_topics=2",
                         "world_cluster_sharpness=10", "world_d_sim=4", "world_quality_mean=-1.1",
                         "world_topic_quality_sd=0.2", "world_feature_noise=0.6", "world_item_noise=0.2",
                         "budget=185"});
}

// Same sizes and budget, but small topics are the popular ones, so top
// topics often run short of candidates and padding has to fill in.
ExperimentConfig reconstruction_config() {
  return with_overrides({"world_n_topics=60", "world_items_per_topic=30", "world_size_skew=1.0",
                         "world_size_popularity_coupling=-1", "world_max_preferred_topics=2",
                         "world_cluster_sharpness=10", "world_d_sim=4", "world_quality_mean=-1.0",
                         "world_topic_quality_sd=0.15", "budget=185"});
}

Outcome two_stage_gain(const World& world) {
  ExperimentConfig cfg = stage_config();
  std::map<std::string, std::vector<double>> f;
  for (const char* name : {"random", "s_galm_ucb"})
    for (Mode mode : {Mode::one_stage, Mode::two_stage}) {
      cfg.policy = name;
      cfg.mode = mode;
      f[std::string(name) + (mode == Mode::one_stage ? "/1" : "/2")] = run_finals(cfg, world);
    }
  int wins = 0;
  for (std::size_t k = 0; k < cfg.trials; ++k) wins += f["s_galm_ucb/2"][k] >= f["s_galm_ucb/1"][k];
  const double r1 = mean(f["random/1"]), r2 = mean(f["random/2"]);
  return {wins >= 4 && r2 < r1,
          fmt("S-N-GALM two-stage [%s] vs one-stage [%s]: %d/5; random two-stage %.0f vs one-stage %.0f",
              join(f["s_galm_ucb/2"]).c_str(), join(f["s_galm_ucb/1"]).c_str(), wins, r2, r1)};
}

// The UCB policies that appear in the two-stage comparison table.
Outcome reconstruction_gain(const World& world) {
  ExperimentConfig cfg = reconstruction_config();
  cfg.mode = Mode::two_stage;
  bool ok = true;
  std::string detail;
  for (const char* name : {"dropout_ucb", "s_galm_ucb", "s_gblm_ucb"}) {
    cfg.policy = name;
    cfg.reconstruction = Reconstruction::dynamic;
    const auto dyn = run_finals(cfg, world);
    cfg.reconstruction = Reconstruction::top_only;
    const auto top = run_finals(cfg, world);
    int wins = 0;
    for (std::size_t k = 0; k < cfg.trials; ++k) wins += dyn[k] > top[k];
    ok &= wins >= 4;
    detail += fmt("%s%s %.0f vs %.0f (%d/5)", detail.empty() ? "" : "; ", name, mean(dyn), mean(top), wins);
  }
  return {ok, detail + fmt(" [p = %zu, share = %zu]", cfg.min_topic_size,
                           (cfg.budget - world.n_topics()) / cfg.rec_size)};
}

Outcome budget_soundness() {
  return {audit.trials > 0 && audit.violations == 0,
          fmt("%zu trials, %zu iterations, %zu violations, peak spend %.0f%% of b", audit.trials, audit.iterations,
              audit.violations, 100.0 * audit.peak_fraction)};
}

Outcome reconstruction_fixture() {
  std::vector<std::vector<ItemId>> by_topic{{0}, {1}, {2}, {3}, {4, 5, 6, 7, 8, 9, 10, 11, 12, 13}};
  TopicCatalog catalog(by_topic, 14);
  SlotSets sets{{{0}, {1}}, 3};
  std::deque<TopicId> rest{2, 3, 4};
  dynamic_reconstruct(rest, sets, catalog, 3);
  const bool ok = sets.sets[0] == std::vector<TopicId>{0, 2, 4} && sets.sets[1] == std::vector<TopicId>{1, 3};
  auto show = [](const std::vector<TopicId>& s) {
    std::string o;
    for (TopicId t : s) o += (o.empty() ? "t" : ",t") + std::to_string(t + 1);
    return "{" + o + "}";
  };
  return {ok, "S1=" + show(sets.sets[0]) + " S2=" + show(sets.sets[1])};
}

Outcome simulator_training() {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> bce(5), prop(5), scaled(5);
    const double c = 0.01 + 10.0 * u(gen);
    for (int k = 0; k < 5; ++k) {
      bce[k] = 3.0 * u(gen);
      prop[k] = 0.01 + u(gen);
      scaled[k] = c * prop[k];
    }
    worst = std::max(worst, std::abs(hajek_loss(bce, prop) - hajek_loss(bce, scaled)));
  }
  int same = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> p(100);
    std::vector<int> y(100);
    for (int k = 0; k < 100; ++k) {
      p[k] = rep % 2 ? u(gen) : std::round(u(gen) * 25) / 25;
      y[k] = u(gen) < p[k];
    }
    y[0] = 1;
    y[1] = 0;
    same += select_threshold(p, y) == reference::exhaustive_threshold(p, y);
  }
  return {worst < 1e-12 && same == 100,
          fmt("Hajek scale gap %.2e over 100 groups; threshold scan matches exhaustive search %d/100", worst, same)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::vector<std::string> only;
  app.add_option("--only", only, "Run just these criteria");
  CLI11_PARSE(app, argc, argv);

  const ExperimentConfig desk;
  const World desk_world = make_world(desk);
  const World stage_world = make_world(stage_config());
  const World reconstruction_world = make_world(reconstruction_config());

  // Budget soundness audits every run above it, so it stays last.
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"linear_algebra_oracle", la_oracle},
      {"bilinear_identity", bilinear_identity},
      {"greedy_reduction", [&] { return greedy_reduction(desk_world); }},
      {"replay_determinism", [&] { return replay_determinism(desk_world); }},
      {"oracle_statistics", [&] { return oracle_statistics(desk_world); }},
      {"shared_policies_beat_random", [&] { return shared_policies_beat_random(desk_world); }},
      {"user_scaling", [&] { return user_scaling(desk_world); }},
      {"two_stage_vs_one_stage", [&] { return two_stage_gain(stage_world); }},
      {"dynamic_vs_top_only", [&] { return reconstruction_gain(reconstruction_world); }},
      {"reconstruction_fixture", reconstruction_fixture},
      {"simulator_training", simulator_training},
      {"budget_soundness", budget_soundness},
  };

  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
