#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "thinker/harness/config.hpp"
#include "thinker/harness/metrics.hpp"

namespace thinker::harness {

// Hex digest of the canonical single-seed config; names the run directory.
std::string run_hash(const ExperimentConfig& config, std::uint64_t seed);
std::string run_directory(const ExperimentConfig& config, std::uint64_t seed);

struct RunProgress {
  std::uint64_t seed = 0;
  const MetricsRecord* record = nullptr;  // set after each evaluation
  std::string phase;                      // "bootstrap", "train", "done", "skipped"
};
using ProgressFn = std::function<void(const RunProgress&)>;

// Trains one seed to total_steps, logging, evaluating and checkpointing every eval_every steps.
// Resumes from the last checkpoint; a completed run is left untouched.
std::string run_seed(const ExperimentConfig& config, std::uint64_t seed, const ProgressFn& progress = {});
std::vector<std::string> run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

// Runs (or reuses) bootstrap artifacts for one seed and writes a translation preview grid.
std::string run_bootstrap(const ExperimentConfig& config, std::uint64_t seed, const ProgressFn& progress = {});
void write_translation_preview(const std::string& path, const pipeline::BootstrapArtifacts& artifacts,
                               const env::EnvConfig& env_config, int rows, std::uint64_t seed);

struct AblationRow {
  int requested_clusters = 0;
  int effective_clusters = 0;
  std::uint64_t seed = 0;
  double final_test_mean = 0.0;
  std::string run_dir;
};

// Thinker runs for every cluster count and seed; writes ablation.csv, ablation_summary.csv and plots.
std::vector<AblationRow> ablate_clusters(const ExperimentConfig& config, const std::vector<int>& counts,
                                         const std::string& report_dir, const ProgressFn& progress = {});

// Exclusive ownership of a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const std::string& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::string path_;
};

}  // namespace thinker::harness
