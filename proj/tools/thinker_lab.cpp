#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "thinker/core/errors.hpp"
#include "thinker/harness/checkpoint.hpp"
#include "thinker/harness/config.hpp"
#include "thinker/harness/metrics.hpp"
#include "thinker/harness/plots.hpp"
#include "thinker/harness/runner.hpp"

namespace fs = std::filesystem;
using namespace thinker;
using namespace thinker::harness;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string agent;
  std::string out;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig config = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  if (!c.seeds.empty()) config.seeds = c.seeds;
  if (!c.agent.empty()) config.trainer.augment = agent_kind(c.agent);
  if (!c.out.empty()) ::setenv("THINKERLAB_RUNS", c.out.c_str(), 1);
  config.validate();
  return config;
}

void print_progress(const RunProgress& p) {
  if (p.record) {
    std::printf("seed %llu step %lld train %.3f test mean %.3f median %.3f (%.0fs)\n",
                static_cast<unsigned long long>(p.seed), static_cast<long long>(p.record->step),
                p.record->train_reward_mean, p.record->test_mean, p.record->test_median, p.record->wall_clock);
  } else {
    std::printf("seed %llu %s\n", static_cast<unsigned long long>(p.seed), p.phase.c_str());
  }
  std::fflush(stdout);
}

void add_common(CLI::App* cmd, Common& c, bool agent) {
  cmd->add_option("--config", c.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seeds, "Seed(s) to run instead of the config list");
  if (agent) cmd->add_option("--agent", c.agent, "ppo | thinker | cutout | crop");
  cmd->add_option("--out", c.out, "Runs root (overrides THINKERLAB_RUNS and output_dir)");
}

int cmd_eval(const std::string& run, int episodes, std::uint64_t eval_seed) {
  const ExperimentConfig config = load_config((fs::path(run) / "config.json").string());
  ppo::PolicyModel<float> model;
  if (fs::exists(fs::path(run) / "policy.json")) {
    model = load_policy(run, "policy");
  } else {
    pipeline::Trainer trainer(config.trainer, config.seeds.front());
    load_trainer((fs::path(run) / "checkpoint").string(), trainer);
    model = trainer.model();
  }
  Rng rng(eval_seed);
  const RewardStats s = evaluate_zero_shot(model, config.trainer.env, episodes, rng);
  const nlohmann::json j = {{"run", run},   {"episodes", s.returns.size()}, {"mean", s.mean},
                            {"median", s.median}, {"q25", s.q25}, {"q75", s.q75}, {"eval_seed", eval_seed}};
  std::ofstream(fs::path(run) / "eval.json") << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Style-translation bootstrapping for zero-shot RL generalization"};
  app.require_subcommand(1);

  Common train_opts;
  auto* train = app.add_subcommand("train", "Run every seed of an experiment (resumable)");
  add_common(train, train_opts, true);

  std::string eval_run;
  int eval_episodes = 128;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "Zero-shot evaluation of a finished or checkpointed run");
  eval->add_option("--run", eval_run, "Run directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--episodes", eval_episodes, "Episodes on random full-distribution levels");
  eval->add_option("--seed", eval_seed, "Evaluation seed");

  Common ablate_opts;
  std::vector<int> counts{3, 5, 10};
  std::string report;
  auto* ablate = app.add_subcommand("ablate", "Thinker runs over several cluster counts");
  add_common(ablate, ablate_opts, false);
  ablate->add_option("--counts", counts, "Cluster counts")->delimiter(',');
  ablate->add_option("--report", report, "Report directory (default <runs>/ablation)");

  std::vector<std::string> plot_runs;
  std::string plot_root, plot_out;
  auto* plot = app.add_subcommand("plot", "Boxplots, training curves and previews from run directories");
  plot->add_option("runs", plot_runs, "Run directories");
  plot->add_option("--root", plot_root, "Plot every run under this directory");
  plot->add_option("--out", plot_out, "Output directory")->required();

  std::string preview_run, preview_out;
  int preview_rows = 6;
  std::uint64_t preview_seed = 0;
  auto* preview = app.add_subcommand("translate-preview", "Grid of observations translated to every cluster");
  preview->add_option("--run", preview_run, "Run directory with bootstrap artifacts")->required();
  preview->add_option("--out", preview_out, "PNG path (default <run>/preview.png)");
  preview->add_option("--rows", preview_rows, "Sampled levels");
  preview->add_option("--seed", preview_seed, "Level sampling seed");

  Common boot_opts;
  auto* boot = app.add_subcommand("bootstrap", "Initial data collection, clustering and translator training only");
  add_common(boot, boot_opts, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const ExperimentConfig config = resolve(train_opts);
      for (const auto& dir : run_experiment(config, print_progress)) std::cout << dir << '\n';
    } else if (*eval) {
      return cmd_eval(eval_run, eval_episodes, eval_seed);
    } else if (*ablate) {
      const ExperimentConfig config = resolve(ablate_opts);
      const std::string dir = report.empty() ? (fs::path(runs_root(config)) / "ablation").string() : report;
      const auto rows = ablate_clusters(config, counts, dir, print_progress);
      for (const auto& r : rows) {
        std::printf("n=%d (effective %d) seed %llu final test mean %.3f\n", r.requested_clusters, r.effective_clusters,
                    static_cast<unsigned long long>(r.seed), r.final_test_mean);
      }
      std::cout << dir << '\n';
    } else if (*plot) {
      if (!plot_root.empty()) {
        const auto found = find_runs(plot_root);
        plot_runs.insert(plot_runs.end(), found.begin(), found.end());
      }
      for (const auto& b : emit_plots(plot_runs, plot_out)) {
        std::printf("%s %-22s n=%zu median %.3f q25 %.3f q75 %.3f\n", b.env_key.c_str(), b.group.c_str(), b.count,
                    b.median, b.q25, b.q75);
      }
    } else if (*preview) {
      const ExperimentConfig config = load_config((fs::path(preview_run) / "config.json").string());
      const auto [artifacts, initial] = load_artifacts((fs::path(preview_run) / "bootstrap").string());
      const std::string out = preview_out.empty() ? (fs::path(preview_run) / "preview.png").string() : preview_out;
      write_translation_preview(out, artifacts, config.trainer.env, preview_rows, preview_seed);
      std::cout << out << '\n';
    } else if (*boot) {
      ExperimentConfig config = resolve(boot_opts);
      config.trainer.augment = augment::Kind::Thinker;
      config.trainer.pipeline.translate = true;
      for (std::uint64_t seed : config.seeds) std::cout << run_bootstrap(config, seed, print_progress) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "thinker-lab: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
