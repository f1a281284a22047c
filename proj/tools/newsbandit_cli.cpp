// newsbandit: run experiments, re-emit reports, train simulators, generate worlds.

#include <iostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "newsbandit/config.hpp"
#include "newsbandit/error.hpp"
#include "newsbandit/harness.hpp"
#include "newsbandit/io.hpp"
#include "newsbandit/simulator.hpp"
#include "newsbandit/world.hpp"

namespace {

// Machine-readable failure line: error kind=<kind> message="<text>"
int fail(const std::string& kind, const std::string& message) {
  std::cerr << "error kind=" << kind << " message=" << nlohmann::json(message).dump() << "\n";
  return 2;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out) {
  nb::ExperimentConfig cfg = nb::load_config(config_path);
  for (const auto& o : overrides) nb::apply_override(cfg, o);
  cfg.validate();
  const nb::World world = nb::make_world(cfg);
  const auto res = nb::run_experiment(cfg, world);
  nb::emit_report(cfg, res.summary, res.trials, out);
  std::cout << nb::summary_csv(res.summary);
  if (!res.complete) {
    std::string failed;
    for (auto k : res.failed_trials) failed += (failed.empty() ? "" : " ") + std::to_string(k);
    return fail("trial", "partial results (failed trials: " + failed + "): " + res.error);
  }
  return 0;
}

int cmd_report(const std::string& in) {
  const auto s = nb::rebuild_report(in);
  std::cout << nb::summary_csv(s);
  return 0;
}

int cmd_simtrain(const std::string& logs_path, const std::string& out, double valid_fraction,
                 const nb::SimTrainOptions& opts) {
  const auto raw = nb::io::read_logs(logs_path);
  if (raw.empty()) throw nb::PreconditionError("simtrain: no logged interactions in " + logs_path);
  std::vector<std::string> users, items;
  std::unordered_map<std::string, std::uint32_t> uidx, iidx, impidx;
  auto intern = [](auto& index, auto& names, const std::string& key) {
    auto [it, fresh] = index.emplace(key, static_cast<std::uint32_t>(index.size()));
    if (fresh) names.push_back(key);
    return it->second;
  };
  std::vector<std::string> imps;
  std::vector<nb::LoggedInteraction> logs;
  logs.reserve(raw.size());
  for (const auto& r : raw)
    logs.push_back({intern(impidx, imps, r.impression), intern(uidx, users, r.user), intern(iidx, items, r.item),
                    r.label});

  // Whole impressions go to validation so the threshold is chosen on unseen exposures.
  std::vector<nb::LoggedInteraction> train, valid;
  for (const auto& r : logs) {
    const double u = static_cast<double>(nb::mix_seed(opts.seed, r.impression) >> 11) * 0x1.0p-53;
    (u < valid_fraction ? valid : train).push_back(r);
  }
  if (train.empty()) throw nb::PreconditionError("simtrain: validation split left no training data");
  if (valid.empty()) valid = train;

  const auto props = nb::estimate_propensity(train);
  auto res = nb::train_simulator_debiased(train, props, users.size(), items.size(), opts);
  res.model.threshold = nb::select_threshold(res.model, valid);
  nb::io::write_text(out, nb::io::simulator_to_json(res.model, users, items).dump(1) + "\n");
  std::cout << "groups=" << res.groups << " fallback_groups=" << res.fallback_groups
            << " final_loss=" << nb::io::format_double(res.final_loss)
            << " threshold=" << nb::io::format_double(res.model.threshold) << "\n";
  return 0;
}

int cmd_genworld(nb::SyntheticWorldOptions opts, const std::string& out) {
  const auto world = nb::gen_synthetic_world(opts);
  nb::save_world(world, out);
  std::cout << "users=" << world.n_users() << " items=" << world.n_items() << " topics=" << world.n_topics()
            << " logs=" << world.logs.size() << " threshold=" << nb::io::format_double(world.truth.threshold)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical contextual bandits for news recommendation"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::string> overrides;
  auto* run = app.add_subcommand("run", "Run an experiment and write its report");
  run->add_option("--config", config_path, "JSON or key = value config file")->required();
  run->add_option("--override", overrides, "key=value applied after the file")->take_all();
  run->add_option("--out", out_dir, "Report directory")->required();

  std::string in_dir;
  auto* report = app.add_subcommand("report", "Recompute summary.csv from a report directory");
  report->add_option("--in", in_dir, "Report directory")->required();

  std::string logs_path, model_out;
  double valid_fraction = 0.2;
  nb::SimTrainOptions sim_opts;
  auto* simtrain = app.add_subcommand("simtrain", "Fit a debiased click simulator on logged impressions");
  simtrain->add_option("--logs", logs_path, "JSON-lines interaction log")->required();
  simtrain->add_option("--out", model_out, "Simulator JSON to write")->required();
  simtrain->add_option("--dim", sim_opts.dim, "Latent dimension");
  simtrain->add_option("--negatives", sim_opts.negatives, "Negatives per positive");
  simtrain->add_option("--epochs", sim_opts.epochs);
  simtrain->add_option("--lr", sim_opts.learning_rate);
  simtrain->add_option("--seed", sim_opts.seed);
  simtrain->add_option("--valid-fraction", valid_fraction, "Share of impressions held out for the threshold")
      ->check(CLI::Range(0.0, 1.0));
  bool biased = false;
  simtrain->add_flag("--no-debias", biased, "Treat every propensity as 1");

  nb::SyntheticWorldOptions world_opts;
  std::string world_out;
  auto* genworld = app.add_subcommand("genworld", "Write a synthetic world directory");
  genworld->add_option("--seed", world_opts.seed);
  genworld->add_option("--topics", world_opts.n_topics);
  genworld->add_option("--items-per-topic", world_opts.items_per_topic);
  genworld->add_option("--users", world_opts.n_users);
  genworld->add_option("--item-dim", world_opts.item_dim);
  genworld->add_option("--flip", world_opts.flip_prob);
  std::vector<std::string> world_sets;
  genworld->add_option("--set", world_sets, "Generator option key=value (n_topics=40, size_skew=1, ...)")->take_all();
  genworld->add_option("--out", world_out, "World directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", e.what());
  }

  try {
    if (*run) return cmd_run(config_path, overrides, out_dir);
    if (*report) return cmd_report(in_dir);
    if (*simtrain) {
      sim_opts.debiased = !biased;
      return cmd_simtrain(logs_path, model_out, valid_fraction, sim_opts);
    }
    if (*genworld) {
      nb::ExperimentConfig holder;
      holder.world_options = world_opts;
      for (const auto& kv : world_sets) nb::apply_override(holder, "world_" + kv);
      return cmd_genworld(holder.world_options, world_out);
    }
  } catch (const nb::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
