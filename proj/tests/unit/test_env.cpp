#include <gtest/gtest.h>

#include <cmath>
#include <queue>
#include <set>

#include "thinker/core/errors.hpp"
#include "thinker/core/rng.hpp"
#include "thinker/env/color_maze.hpp"
#include "support/maze_oracle.hpp"

using namespace thinker;
using namespace thinker::env;
using thinker::testing::bfs_distance;

namespace {

double dominant_hue(const Observation& obs) {
  constexpr int kBins = 120;
  std::vector<int> histogram(kBins, 0);
  for (int y = 0; y < obs.height; ++y) {
    for (int x = 0; x < obs.width; ++x) {
      const auto hsv = rgb_to_hsv(obs.at(y, x, 0) / 255.0, obs.at(y, x, 1) / 255.0, obs.at(y, x, 2) / 255.0);
      if (hsv[1] > 0.3 && hsv[2] > 0.6) ++histogram[std::min(kBins - 1, static_cast<int>(hsv[0] * kBins))];
    }
  }
  const int best = static_cast<int>(std::max_element(histogram.begin(), histogram.end()) - histogram.begin());
  return (best + 0.5) / kBins;
}

// Dark pixels expected from the grid alone: wall cells plus the goal's outline.
std::vector<bool> expected_structure(const LevelSpec& level, int obs_size) {
  const int g = static_cast<int>(level.walls.rows());
  std::vector<bool> mask(obs_size * obs_size, false);
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      const int y0 = r * obs_size / g, y1 = (r + 1) * obs_size / g;
      const int x0 = c * obs_size / g, x1 = (c + 1) * obs_size / g;
      const bool goal = Cell{r, c} == level.goal;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const bool outline = y == y0 || y == y1 - 1 || x == x0 || x == x1 - 1;
          mask[y * obs_size + x] = goal ? outline : bool(level.walls(r, c));
        }
      }
    }
  }
  return mask;
}

EnvConfig small_config() {
  EnvConfig config;
  config.obs_size = 32;
  return config;
}

}  // namespace

TEST(EnvConfig, RejectsInvalidFieldsByName) {
  EnvConfig config;
  config.grid_size = 8;
  try {
    config.validate();
    FAIL();
  } catch (const ConfigurationError& e) {
    EXPECT_NE(std::string(e.what()).find("grid_size"), std::string::npos);
  }
  config = {};
  config.style_families = 1;
  EXPECT_THROW(make_level(0, config), ConfigurationError);
}

TEST(MakeLevel, DeterministicPerSeed) {
  const EnvConfig config;
  const LevelSpec a = make_level(7, config), b = make_level(7, config);
  EXPECT_TRUE((a.walls == b.walls).all());
  EXPECT_EQ(a.agent_start, b.agent_start);
  EXPECT_EQ(a.goal, b.goal);
  EXPECT_EQ(a.style.background_hue, b.style.background_hue);
  EXPECT_EQ(make_level(7, config).style.family, static_cast<int>(splitmix64(7) % 6));
  EXPECT_EQ(make_level(8, config).style.family, static_cast<int>(splitmix64(8) % 6));
}

TEST(MakeLevel, EveryMazeIsSolvable) {
  const EnvConfig config;
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t seed = rng.uniform_int(std::uint64_t{1} << 31);
    const LevelSpec level = make_level(seed, config);
    ASSERT_TRUE(level.is_free(level.agent_start));
    ASSERT_TRUE(level.is_free(level.goal));
    ASSERT_FALSE(level.agent_start == level.goal);
    ASSERT_GT(bfs_distance(level.walls, level.agent_start, level.goal), 0) << "seed " << seed;
  }
}

TEST(MakeLevel, HuesStayInFamilyBand) {
  const EnvConfig config;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const StyleParams s = make_style(seed, config);
    const auto [lo, hi] = hue_band(s.family, config.style_families);
    ASSERT_GE(s.background_hue, lo);
    ASSERT_LT(s.background_hue, hi);
    ASSERT_GE(s.wall_hue, lo);
    ASSERT_LT(s.wall_hue, hi);
  }
}

TEST(ColorMaze, ResetRendersByteImage) {
  ColorMaze env(EnvConfig{});
  const Observation a = env.reset(3);
  EXPECT_EQ(a.height, 64);
  EXPECT_EQ(a.width, 64);
  EXPECT_EQ(a.convention, PixelConvention::Bytes);
  EXPECT_GE(a.pixels.minCoeff(), 0.0f);
  EXPECT_LE(a.pixels.maxCoeff(), 255.0f);
  EXPECT_TRUE((a.pixels == a.pixels.round()).all());
  EXPECT_EQ(env.step_count(), 0);
  const Observation b = env.reset(3);
  EXPECT_TRUE((a.pixels == b.pixels).all());
}

TEST(ColorMaze, BackgroundHueMatchesFamily) {
  for (std::uint64_t seed : {3ull, 4ull, 5ull, 17ull, 99ull, 1234ull}) {
    ColorMaze env(EnvConfig{});
    const Observation obs = env.reset(seed);
    const int family = static_cast<int>(splitmix64(seed) % 6);
    const auto [lo, hi] = hue_band(family, 6);
    const double hue = dominant_hue(obs);
    EXPECT_GE(hue, lo - 1.0 / 120) << seed;
    EXPECT_LE(hue, hi + 1.0 / 120) << seed;
  }
}

TEST(ColorMaze, StepDynamics) {
  ColorMaze env(small_config());
  env.reset(5);
  const LevelSpec& level = env.level();
  // Move to a cell adjacent to the goal by walking the BFS path.
  const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
  StepResult last;
  while (!env.done()) {
    const Cell here = env.agent();
    const int d = bfs_distance(level.walls, here, level.goal);
    int chosen = kNoop;
    for (int a = 0; a < 4; ++a) {
      const Cell next{here.row + dr[a], here.col + dc[a]};
      if (level.is_free(next) && bfs_distance(level.walls, next, level.goal) == d - 1) chosen = a;
    }
    last = env.step(chosen);
    if (!last.done) {
      EXPECT_EQ(last.reward, 0.0f);
    }
  }
  EXPECT_EQ(last.reward, 1.0f);
  EXPECT_EQ(last.info.seed, 5u);
  EXPECT_EQ(last.info.step, env.step_count());
  EXPECT_THROW(env.step(kNoop), StateError);
}

TEST(ColorMaze, WallsBlockMovement) {
  ColorMaze env(small_config());
  env.reset(9);
  const Cell start = env.agent();
  const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
  bool found = false;
  for (int a = 0; a < 4; ++a) {
    if (env.level().walls(start.row + dr[a], start.col + dc[a])) {
      const StepResult r = env.step(a);
      EXPECT_EQ(env.agent(), start);
      EXPECT_EQ(r.reward, 0.0f);
      found = true;
      break;
    }
  }
  EXPECT_TRUE(found);
  EXPECT_THROW(env.step(5), ArgumentError);
  EXPECT_THROW(env.step(-1), ArgumentError);
}

TEST(ColorMaze, TimeoutEndsEpisode) {
  EnvConfig config = small_config();
  config.max_steps = 20;
  ColorMaze env(config);
  env.reset(2);
  float total = 0.0f;
  StepResult r;
  for (int t = 0; t < 20; ++t) {
    ASSERT_FALSE(env.done());
    r = env.step(kNoop);
    total += r.reward;
  }
  EXPECT_TRUE(r.done);
  EXPECT_EQ(total, 0.0f);
  EXPECT_EQ(r.info.step, 20);
}

TEST(ColorMaze, DynamicsIgnoreStyle) {
  const EnvConfig config = small_config();
  const LevelSpec base = make_level(21, config);
  Rng actions(4);
  std::vector<int> sequence(200);
  for (int& a : sequence) a = static_cast<int>(actions.uniform_int(kNumActions));
  std::vector<std::pair<float, bool>> reference;
  for (std::uint64_t style_seed = 0; style_seed < 12; ++style_seed) {
    LevelSpec level = base;
    level.style = make_style(style_seed, config);
    std::vector<std::pair<float, bool>> trace;
    ColorMaze env(config);
    env.reset_level(level);
    for (int a : sequence) {
      if (env.done()) break;
      const StepResult r = env.step(a);
      trace.emplace_back(r.reward, r.done);
    }
    if (reference.empty()) reference = trace;
    EXPECT_EQ(trace, reference);
  }
}

TEST(Render, MarkersFixedAcrossStyles) {
  const EnvConfig config;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const LevelSpec level = make_level(seed, config);
    const Observation obs = render(level, level.agent_start, config.obs_size);
    const int y = (2 * level.agent_start.row + 1) * config.obs_size / (2 * config.grid_size);
    const int x = (2 * level.agent_start.col + 1) * config.obs_size / (2 * config.grid_size);
    for (int c = 0; c < 3; ++c) EXPECT_EQ(obs.at(y, x, c), 255.0f);
  }
  const LevelSpec level = make_level(0, config);
  Cell wall{0, 0};
  EXPECT_THROW(render(level, wall, config.obs_size), ArgumentError);
}

TEST(Render, WallMaskIgnoresStyle) {
  for (int obs_size : {32, 64}) {
    EnvConfig config;
    config.obs_size = obs_size;
    const LevelSpec base = make_level(42, config);
    std::set<int> families;
    for (std::uint64_t style_seed = 0; style_seed < 24; ++style_seed) {
      LevelSpec level = base;
      level.style = make_style(style_seed, config);
      families.insert(level.style.family);
      const Observation obs = render(level, level.agent_start, obs_size);
      const auto mask = structural_mask(obs);
      const auto expected = expected_structure(level, obs_size);
      for (int p = 0; p < obs_size * obs_size; ++p) ASSERT_EQ(mask[p], expected[p]) << "pixel " << p;
    }
    EXPECT_EQ(families.size(), 6u);
  }
}

TEST(TrainSeeds, HoldoutFiltersFamilies) {
  EnvConfig config;
  config.n_train_levels = 50;
  const auto plain = train_level_seeds(config);
  ASSERT_EQ(plain.size(), 50u);
  for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_EQ(plain[i], i);
  config.holdout_styles = true;
  const auto held = train_level_seeds(config);
  ASSERT_EQ(held.size(), 50u);
  for (auto seed : held) EXPECT_LT(style_family(seed, 6), 3);
}
