#include "thinker/env/color_maze.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "thinker/core/errors.hpp"
#include "thinker/core/rng.hpp"

namespace thinker::env {

namespace {

constexpr std::uint64_t kLayoutStream = 0x6c61796f7574ULL;
constexpr std::uint64_t kStyleStream = 0x7374796c65ULL;

constexpr Rgb kAgentColor{1.0f, 1.0f, 1.0f};
constexpr Rgb kGoalColor{1.0f, 0.9f, 0.0f};
constexpr Rgb kGoalBorder{0.0f, 0.0f, 0.0f};

Cell random_room(Rng& rng, int rooms_per_side) {
  return {1 + 2 * static_cast<int>(rng.uniform_int(rooms_per_side)), 1 + 2 * static_cast<int>(rng.uniform_int(rooms_per_side))};
}

WallGrid carve_maze(Rng& rng, int g) {
  WallGrid walls = WallGrid::Constant(g, g, true);
  const int rooms = (g - 1) / 2;
  std::vector<Cell> stack{random_room(rng, rooms)};
  walls(stack.back().row, stack.back().col) = false;
  constexpr std::array<Cell, 4> kDirs{{{-2, 0}, {2, 0}, {0, -2}, {0, 2}}};
  while (!stack.empty()) {
    const Cell cur = stack.back();
    std::vector<Cell> options;
    for (const Cell& d : kDirs) {
      const Cell next{cur.row + d.row, cur.col + d.col};
      if (next.row > 0 && next.row < g - 1 && next.col > 0 && next.col < g - 1 && walls(next.row, next.col)) {
        options.push_back(next);
      }
    }
    if (options.empty()) {
      stack.pop_back();
      continue;
    }
    const Cell next = options[rng.uniform_int(options.size())];
    walls((cur.row + next.row) / 2, (cur.col + next.col) / 2) = false;
    walls(next.row, next.col) = false;
    stack.push_back(next);
  }
  return walls;
}

void fill(Observation& obs, int y0, int y1, int x0, int x1, Rgb color) {
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      obs.at(y, x, 0) = std::round(color.r * 255.0f);
      obs.at(y, x, 1) = std::round(color.g * 255.0f);
      obs.at(y, x, 2) = std::round(color.b * 255.0f);
    }
  }
}

}  // namespace

void EnvConfig::validate() const {
  if (grid_size < 5 || grid_size % 2 == 0) throw ConfigurationError("grid_size must be odd and >= 5");
  if (style_families < 2) throw ConfigurationError("style_families must be >= 2");
  if (obs_size < grid_size) throw ConfigurationError("obs_size must be >= grid_size");
  if (n_train_levels < 1) throw ConfigurationError("n_train_levels must be >= 1");
  if (max_steps < 1) throw ConfigurationError("max_steps must be >= 1");
}

bool LevelSpec::is_free(Cell c) const {
  return c.row >= 0 && c.col >= 0 && c.row < walls.rows() && c.col < walls.cols() && !walls(c.row, c.col);
}

int style_family(std::uint64_t seed, int families) {
  return static_cast<int>(splitmix64(seed) % static_cast<std::uint64_t>(families));
}

std::pair<double, double> hue_band(int family, int families) {
  const double width = 1.0 / families;
  return {family * width, (family + 1) * width};
}

StyleParams make_style(std::uint64_t seed, const EnvConfig& config) {
  config.validate();
  Rng rng(seed ^ kStyleStream);
  StyleParams style;
  style.family = style_family(seed, config.style_families);
  const auto [lo, hi] = hue_band(style.family, config.style_families);
  const double margin = 0.15 * (hi - lo);
  style.background_hue = rng.uniform(lo + margin, hi - margin);
  style.wall_hue = rng.uniform(lo + margin, hi - margin);
  style.texture_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return style;
}

LevelSpec make_level(std::uint64_t seed, const EnvConfig& config) {
  config.validate();
  Rng rng(seed ^ kLayoutStream);
  LevelSpec level;
  level.seed = seed;
  level.walls = carve_maze(rng, config.grid_size);
  const int rooms = (config.grid_size - 1) / 2;
  level.agent_start = random_room(rng, rooms);
  do {
    level.goal = random_room(rng, rooms);
  } while (level.goal == level.agent_start);
  level.style = make_style(seed, config);
  return level;
}

Observation render(const LevelSpec& level, Cell agent, int obs_size) {
  if (!level.is_free(agent)) throw ArgumentError("render: agent cell is not free");
  const int g = static_cast<int>(level.walls.rows());
  if (obs_size < g) throw ArgumentError("render: obs_size smaller than grid");
  Observation obs(obs_size, obs_size, PixelConvention::Bytes);
  const StyleParams& s = level.style;
  const Rgb background = hsv_to_rgb(s.background_hue, 0.55, 0.85);
  auto edge = [&](int i) { return i * obs_size / g; };
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      const int y0 = edge(r), y1 = edge(r + 1), x0 = edge(c), x1 = edge(c + 1);
      if (!level.walls(r, c)) {
        fill(obs, y0, y1, x0, x1, background);
        continue;
      }
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const double v = 0.30 + 0.08 * std::sin(2.0 * std::numbers::pi * (x + y) / 6.0 + s.texture_phase);
          fill(obs, y, y + 1, x, x + 1, hsv_to_rgb(s.wall_hue, 0.65, v));
        }
      }
    }
  }
  {
    const int y0 = edge(level.goal.row), y1 = edge(level.goal.row + 1);
    const int x0 = edge(level.goal.col), x1 = edge(level.goal.col + 1);
    fill(obs, y0, y1, x0, x1, kGoalBorder);
    fill(obs, y0 + 1, y1 - 1, x0 + 1, x1 - 1, kGoalColor);
  }
  {
    const int y0 = edge(agent.row), y1 = edge(agent.row + 1);
    const int x0 = edge(agent.col), x1 = edge(agent.col + 1);
    const int inset = (y1 - y0) / 6;
    fill(obs, y0 + inset, y1 - inset, x0 + inset, x1 - inset, kAgentColor);
  }
  return obs;
}

Eigen::Array<bool, Eigen::Dynamic, 1> structural_mask(const Observation& obs) {
  const float scale = obs.convention == PixelConvention::Bytes ? 255.0f : 1.0f;
  const float offset = obs.convention == PixelConvention::Signed ? 1.0f : 0.0f;
  const float divisor = obs.convention == PixelConvention::Signed ? 2.0f : scale;
  Eigen::Array<bool, Eigen::Dynamic, 1> mask(obs.height * obs.width);
  for (int p = 0; p < obs.height * obs.width; ++p) {
    const float v = std::max({obs.pixels[p * 3], obs.pixels[p * 3 + 1], obs.pixels[p * 3 + 2]});
    mask[p] = (v + offset) / divisor < 0.5f;
  }
  return mask;
}

std::vector<std::uint64_t> train_level_seeds(const EnvConfig& config) {
  config.validate();
  std::vector<std::uint64_t> seeds;
  seeds.reserve(static_cast<std::size_t>(config.n_train_levels));
  const int allowed = config.holdout_styles ? config.style_families / 2 : config.style_families;
  for (std::uint64_t seed = 0; static_cast<int>(seeds.size()) < config.n_train_levels; ++seed) {
    if (style_family(seed, config.style_families) < allowed) seeds.push_back(seed);
  }
  return seeds;
}

ColorMaze::ColorMaze(EnvConfig config) : config_(config) { config_.validate(); }

const LevelSpec& ColorMaze::level() const {
  if (!level_) throw StateError("ColorMaze: reset has not been called");
  return *level_;
}

Observation ColorMaze::reset(std::uint64_t seed) { return reset_level(make_level(seed, config_)); }

Observation ColorMaze::reset_level(LevelSpec level) {
  if (level.walls.rows() != config_.grid_size || !level.is_free(level.agent_start) || !level.is_free(level.goal)) {
    throw ArgumentError("ColorMaze::reset_level: level does not match config");
  }
  level_ = std::move(level);
  agent_ = level_->agent_start;
  steps_ = 0;
  done_ = false;
  return render(*level_, agent_, config_.obs_size);
}

std::string ColorMaze::save_state() const {
  if (!level_) return "none";
  std::ostringstream out;
  out << level_->seed << ' ' << agent_.row << ' ' << agent_.col << ' ' << steps_ << ' ' << (done_ ? 1 : 0);
  return out.str();
}

void ColorMaze::load_state(const std::string& state) {
  if (state == "none") {
    level_.reset();
    done_ = true;
    return;
  }
  std::istringstream in(state);
  std::uint64_t seed = 0;
  Cell agent;
  int steps = 0, done = 0;
  if (!(in >> seed >> agent.row >> agent.col >> steps >> done)) throw DataError("ColorMaze::load_state: malformed state '" + state + "'");
  LevelSpec level = make_level(seed, config_);
  if (!level.is_free(agent) || steps < 0 || steps > config_.max_steps) throw DataError("ColorMaze::load_state: inconsistent state");
  level_ = std::move(level);
  agent_ = agent;
  steps_ = steps;
  done_ = done != 0;
}

Observation ColorMaze::observe() const { return render(level(), agent_, config_.obs_size); }

StepResult ColorMaze::step(int action) {
  if (action < 0 || action >= kNumActions) throw ArgumentError("ColorMaze::step: action " + std::to_string(action) + " out of range");
  if (!level_) throw StateError("ColorMaze::step: reset has not been called");
  if (done_) throw StateError("ColorMaze::step: episode is done; call reset");
  constexpr std::array<Cell, kNumActions> kMoves{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}, {0, 0}}};
  const Cell next{agent_.row + kMoves[action].row, agent_.col + kMoves[action].col};
  if (level_->is_free(next)) agent_ = next;
  ++steps_;
  StepResult result;
  const bool reached = agent_ == level_->goal;
  result.reward = reached ? 1.0f : 0.0f;
  done_ = reached || steps_ >= config_.max_steps;
  result.done = done_;
  result.info = {level_->seed, steps_};
  result.obs = render(*level_, agent_, config_.obs_size);
  return result;
}

}  // namespace thinker::env
