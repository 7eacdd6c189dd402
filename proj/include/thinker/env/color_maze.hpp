#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "thinker/core/image.hpp"

namespace thinker::env {

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

struct EnvConfig {
  int obs_size = 64;
  int grid_size = 9;
  int style_families = 6;
  int n_train_levels = 200;
  int max_steps = 256;
  bool holdout_styles = false;

  // Throws ConfigurationError naming the first invalid field.
  void validate() const;
};

struct StyleParams {
  int family = 0;
  double background_hue = 0.0;
  double wall_hue = 0.0;
  double texture_phase = 0.0;
};

using WallGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct LevelSpec {
  std::uint64_t seed = 0;
  WallGrid walls;  // true = wall, indexed (row, col)
  Cell agent_start;
  Cell goal;
  StyleParams style;

  bool is_free(Cell c) const;
};

int style_family(std::uint64_t seed, int families);
// Hue band [lo, hi) reserved for a family.
std::pair<double, double> hue_band(int family, int families);

StyleParams make_style(std::uint64_t seed, const EnvConfig& config);
LevelSpec make_level(std::uint64_t seed, const EnvConfig& config);

// Bytes-convention cell-block rendering.
Observation render(const LevelSpec& level, Cell agent, int obs_size);

// Per-pixel structural mask: HSV value below 0.5. Row-major H x W.
Eigen::Array<bool, Eigen::Dynamic, 1> structural_mask(const Observation& obs);

std::vector<std::uint64_t> train_level_seeds(const EnvConfig& config);

enum Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kNoop = 4 };
inline constexpr int kNumActions = 5;

struct StepInfo {
  std::uint64_t seed = 0;
  int step = 0;
};

struct StepResult {
  Observation obs;
  float reward = 0.0f;
  bool done = false;
  StepInfo info;
};

// Adapter for any episodic image environment driven by level seeds.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual Observation reset(std::uint64_t seed) = 0;
  virtual StepResult step(int action) = 0;
  virtual int num_actions() const = 0;
  virtual int obs_height() const = 0;
  virtual int obs_width() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
  // Serialized episode state, enough to resume mid-episode.
  virtual std::string save_state() const = 0;
  virtual void load_state(const std::string& state) = 0;
  // Observation of the current state; requires an active episode.
  virtual Observation observe() const = 0;
};

class ColorMaze final : public Environment {
 public:
  explicit ColorMaze(EnvConfig config);

  Observation reset(std::uint64_t seed) override;
  // Starts an episode on an explicit level, e.g. a restyled one.
  Observation reset_level(LevelSpec level);
  StepResult step(int action) override;
  int num_actions() const override { return kNumActions; }
  int obs_height() const override { return config_.obs_size; }
  int obs_width() const override { return config_.obs_size; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<ColorMaze>(*this); }
  std::string save_state() const override;
  void load_state(const std::string& state) override;
  Observation observe() const override;

  const EnvConfig& config() const { return config_; }
  const LevelSpec& level() const;
  Cell agent() const { return agent_; }
  int step_count() const { return steps_; }
  bool done() const { return done_; }

 private:
  EnvConfig config_;
  std::optional<LevelSpec> level_;
  Cell agent_;
  int steps_ = 0;
  bool done_ = true;
};

}  // namespace thinker::env
