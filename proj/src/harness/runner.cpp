#include "thinker/harness/runner.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "thinker/core/errors.hpp"
#include "thinker/harness/checkpoint.hpp"
#include "thinker/harness/plots.hpp"

namespace thinker::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kEvalStream = 8;
constexpr std::uint64_t kPreviewStream = 9;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig single_seed(const ExperimentConfig& config, std::uint64_t seed) {
  ExperimentConfig c = config;
  c.seeds = {seed};
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << text;
    if (!out) throw StateError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IntegrityError(path.string() + ": " + e.what());
  }
}

// checkpoint/ is replaced by directory rename so a crash never leaves a half-written checkpoint.
void save_checkpoint(const fs::path& run, pipeline::Trainer& trainer) {
  const fs::path tmp = run / "checkpoint.tmp", cur = run / "checkpoint", old = run / "checkpoint.old";
  fs::remove_all(tmp);
  save_trainer(tmp.string(), trainer);
  fs::remove_all(old);
  if (fs::exists(cur)) fs::rename(cur, old);
  fs::rename(tmp, cur);
  fs::remove_all(old);
}

bool restore_checkpoint(const fs::path& run, pipeline::Trainer& trainer) {
  const fs::path cur = run / "checkpoint", old = run / "checkpoint.old";
  if (!fs::exists(cur) && fs::exists(old)) fs::rename(old, cur);
  if (!fs::exists(cur)) return false;
  load_trainer(cur.string(), trainer);
  return true;
}

void notify(const ProgressFn& progress, std::uint64_t seed, const std::string& phase,
            const MetricsRecord* record = nullptr) {
  if (progress) progress({seed, record, phase});
}

}  // namespace

RunLock::RunLock(const std::string& dir) : path_((fs::path(dir) / "run.lock").string()) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid());
      const auto written = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      if (written != static_cast<ssize_t>(pid.size())) throw StateError("cannot write lock file " + path_);
      return;
    }
    std::ifstream in(path_);
    long owner = 0;
    in >> owner;
    if (owner > 0 && ::kill(static_cast<pid_t>(owner), 0) == 0) {
      throw StateError("run directory " + dir + " is locked by process " + std::to_string(owner));
    }
    fs::remove(path_);  // stale lock of a dead process
  }
  throw StateError("cannot acquire lock " + path_);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::string run_hash(const ExperimentConfig& config, std::uint64_t seed) {
  ExperimentConfig c = single_seed(config, seed);
  c.output_dir = "-";
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << fnv1a(dump_config(c));
  return out.str();
}

std::string run_directory(const ExperimentConfig& config, std::uint64_t seed) {
  const std::string name =
      agent_name(config.trainer.augment) + "-seed" + std::to_string(seed) + "-" + run_hash(config, seed).substr(0, 12);
  return (fs::path(runs_root(config)) / name).string();
}

void write_translation_preview(const std::string& path, const pipeline::BootstrapArtifacts& artifacts,
                               const env::EnvConfig& env_config, int rows, std::uint64_t seed) {
  const int n = artifacts.translator.config.n_clusters;
  const int size = env_config.obs_size;
  const int scale = std::max(1, 64 / size);
  const int cell = size * scale, gap = 4;
  Canvas canvas((n + 1) * (cell + gap) + gap, rows * (cell + gap) + gap, {40, 40, 40});
  Rng rng(seed);
  env::ColorMaze maze(env_config);
  for (int r = 0; r < rows; ++r) {
    const Observation original = maze.reset(rng.next_u64());
    std::vector<Observation> batch(static_cast<std::size_t>(n), original);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) labels[static_cast<std::size_t>(k)] = k;
    const auto out = styleforge::generate(artifacts.translator, to_tensor<float>(batch, PixelConvention::Signed), labels);
    std::vector<Observation> row{original};
    for (auto& o : from_tensor(out, PixelConvention::Signed, PixelConvention::Bytes)) row.push_back(std::move(o));
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::vector<std::uint8_t> rgb = to_rgb_bytes(row[c]);
      std::vector<std::uint8_t> scaled(static_cast<std::size_t>(cell * cell * 3));
      for (int y = 0; y < cell; ++y) {
        for (int x = 0; x < cell; ++x) {
          for (int ch = 0; ch < 3; ++ch) {
            scaled[static_cast<std::size_t>((y * cell + x) * 3 + ch)] =
                rgb[static_cast<std::size_t>(((y / scale) * size + x / scale) * 3 + ch)];
          }
        }
      }
      canvas.blit(gap + static_cast<int>(c) * (cell + gap), gap + r * (cell + gap), cell, cell, scaled);
    }
  }
  canvas.write_png(path);
}

std::string run_bootstrap(const ExperimentConfig& config, std::uint64_t seed, const ProgressFn& progress) {
  config.validate();
  const fs::path run = run_directory(config, seed);
  fs::create_directories(run);
  RunLock lock(run.string());
  write_text(run / "config.json", dump_config(single_seed(config, seed)));
  pipeline::Trainer trainer(config.trainer, seed);
  const fs::path dir = run / "bootstrap";
  if (!has_artifacts(dir.string())) {
    notify(progress, seed, "bootstrap");
    auto& artifacts = trainer.bootstrap();
    save_artifacts(dir.string(), artifacts, trainer.initial_steps());
    write_translation_preview((run / "preview.png").string(), artifacts, config.trainer.env, 6,
                              Rng(seed).fork(kPreviewStream).next_u64());
  }
  return run.string();
}

std::string run_seed(const ExperimentConfig& config, std::uint64_t seed, const ProgressFn& progress) {
  config.validate();
  const fs::path run = run_directory(config, seed);
  const std::string hash = run_hash(config, seed);
  fs::create_directories(run);
  if (fs::exists(run / "complete.json") && read_json(run / "complete.json").value("hash", "") == hash) {
    notify(progress, seed, "skipped");
    return run.string();
  }
  RunLock lock(run.string());
  write_text(run / "config.json", dump_config(single_seed(config, seed)));
  write_text(run / "run.json", json{{"agent", agent_name(config.trainer.augment)},
                                    {"seed", seed},
                                    {"hash", hash},
                                    {"n_clusters", config.trainer.pipeline.n_clusters}}
                                   .dump(2));

  pipeline::Trainer trainer(config.trainer, seed);
  if (trainer.uses_translation()) {
    const fs::path dir = run / "bootstrap";
    if (has_artifacts(dir.string())) {
      auto [artifacts, initial_steps] = load_artifacts(dir.string());
      trainer.set_artifacts(std::move(artifacts), initial_steps);
    } else {
      notify(progress, seed, "bootstrap");
      auto& artifacts = trainer.bootstrap();
      save_artifacts(dir.string(), artifacts, trainer.initial_steps());
      write_translation_preview((run / "preview.png").string(), artifacts, config.trainer.env, 6,
                                Rng(seed).fork(kPreviewStream).next_u64());
    }
  }

  MetricsLog log((run / "metrics.csv").string());
  restore_checkpoint(run, trainer);
  log.truncate_after(trainer.ppo_steps());
  const double clock_offset = log.records().empty() ? 0.0 : log.records().back().wall_clock;
  const auto start = std::chrono::steady_clock::now();

  while (trainer.ppo_steps() < config.total_steps) {
    const std::int64_t before = trainer.ppo_steps();
    const pipeline::IterationStats stats = trainer.iterate();
    const bool due = stats.ppo_steps / config.eval_every > before / config.eval_every;
    if (!due && stats.ppo_steps < config.total_steps) continue;

    Rng eval_rng = Rng(seed).fork(kEvalStream).fork(static_cast<std::uint64_t>(stats.ppo_steps));
    const RewardStats test = evaluate_zero_shot(trainer.model(), config.trainer.env, config.eval_episodes, eval_rng);
    MetricsRecord r;
    r.step = stats.ppo_steps;
    r.initial_steps = trainer.initial_steps();
    r.iteration = trainer.iterations();
    r.train_reward_mean = stats.train_reward_mean;
    r.test_mean = test.mean;
    r.test_median = test.median;
    r.test_q25 = test.q25;
    r.test_q75 = test.q75;
    r.policy_loss = stats.update.policy_loss;
    r.value_loss = stats.update.value_loss;
    r.entropy = stats.update.entropy;
    r.approx_kl = stats.update.approx_kl;
    r.clip_fraction = stats.update.clip_fraction;
    r.wall_clock = clock_offset + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.append(r);
    save_checkpoint(run, trainer);
    notify(progress, seed, "train", &log.records().back());
  }
  save_policy(run.string(), "policy", trainer.model());
  write_text(run / "complete.json", json{{"hash", hash}, {"ppo_steps", trainer.ppo_steps()},
                                         {"initial_steps", trainer.initial_steps()}}
                                        .dump(2));
  notify(progress, seed, "done");
  return run.string();
}

std::vector<std::string> run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  std::vector<std::string> dirs;
  for (std::uint64_t seed : config.seeds) dirs.push_back(run_seed(config, seed, progress));
  return dirs;
}

std::vector<AblationRow> ablate_clusters(const ExperimentConfig& config, const std::vector<int>& counts,
                                         const std::string& report_dir, const ProgressFn& progress) {
  if (counts.empty()) throw ConfigurationError("ablate_clusters: no cluster counts given");
  std::vector<AblationRow> rows;
  std::vector<std::string> all_dirs;
  for (int n : counts) {
    ExperimentConfig c = config;
    c.trainer.augment = augment::Kind::Thinker;
    c.trainer.pipeline.translate = true;
    c.trainer.pipeline.n_clusters = n;
    const auto dirs = run_experiment(c, progress);
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      AblationRow row;
      row.requested_clusters = n;
      row.seed = c.seeds[i];
      row.run_dir = dirs[i];
      row.effective_clusters = read_json(fs::path(dirs[i]) / "bootstrap" / "artifacts.json").at("n_clusters");
      const auto records = MetricsLog::read((fs::path(dirs[i]) / "metrics.csv").string());
      if (records.empty()) throw DataError("ablate_clusters: run " + dirs[i] + " logged no metrics");
      row.final_test_mean = records.back().test_mean;
      rows.push_back(row);
      all_dirs.push_back(dirs[i]);
    }
  }
  fs::create_directories(report_dir);
  std::ostringstream csv, summary;
  csv.precision(17);
  summary.precision(17);
  csv << "requested_clusters,effective_clusters,seed,final_test_mean,run_dir\n";
  for (const auto& r : rows) {
    csv << r.requested_clusters << ',' << r.effective_clusters << ',' << r.seed << ',' << r.final_test_mean << ','
        << r.run_dir << '\n';
  }
  summary << "requested_clusters,runs,median,q25,q75\n";
  for (int n : counts) {
    std::vector<double> finals;
    for (const auto& r : rows) {
      if (r.requested_clusters == n) finals.push_back(r.final_test_mean);
    }
    summary << n << ',' << finals.size() << ',' << quantile(finals, 0.5) << ',' << quantile(finals, 0.25) << ','
            << quantile(finals, 0.75) << '\n';
  }
  write_text(fs::path(report_dir) / "ablation.csv", csv.str());
  write_text(fs::path(report_dir) / "ablation_summary.csv", summary.str());
  emit_plots(all_dirs, report_dir);
  return rows;
}

}  // namespace thinker::harness
