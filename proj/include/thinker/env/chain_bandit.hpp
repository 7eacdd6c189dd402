#pragma once

#include "thinker/env/color_maze.hpp"

namespace thinker::env {

// Five-state chain with a 1 x 5 one-hot "image". Action 1 moves right, action 0
// moves left; reaching the last state pays 1.0, and moving left from the first
// state ends the episode with a consolation payout of 0.2. The optimal return is 1.0.
class ChainBandit final : public Environment {
 public:
  static constexpr int kStates = 5;
  static constexpr double kOptimalReturn = 1.0;

  explicit ChainBandit(int max_steps = 12) : max_steps_(max_steps) {}

  Observation reset(std::uint64_t seed) override;
  StepResult step(int action) override;
  int num_actions() const override { return 2; }
  int obs_height() const override { return 1; }
  int obs_width() const override { return kStates; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<ChainBandit>(*this); }
  std::string save_state() const override;
  void load_state(const std::string& state) override;
  Observation observe() const override;

 private:
  int max_steps_;
  std::uint64_t seed_ = 0;
  int state_ = 0;
  int steps_ = 0;
  bool done_ = true;
};

}  // namespace thinker::env
