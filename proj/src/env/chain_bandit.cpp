#include "thinker/env/chain_bandit.hpp"

#include <sstream>

#include "thinker/core/errors.hpp"

namespace thinker::env {

Observation ChainBandit::observe() const {
  Observation obs(1, kStates, PixelConvention::Bytes);
  for (int c = 0; c < 3; ++c) obs.at(0, state_, c) = 255.0f;
  return obs;
}

Observation ChainBandit::reset(std::uint64_t seed) {
  seed_ = seed;
  state_ = 0;
  steps_ = 0;
  done_ = false;
  return observe();
}

StepResult ChainBandit::step(int action) {
  if (action < 0 || action > 1) throw ArgumentError("ChainBandit::step: action out of range");
  if (done_) throw StateError("ChainBandit::step: episode is done; call reset");
  StepResult r;
  ++steps_;
  if (action == 0 && state_ == 0) {
    r.reward = 0.2f;
    done_ = true;
  } else {
    state_ += action == 1 ? 1 : -1;
    if (state_ == kStates - 1) {
      r.reward = 1.0f;
      done_ = true;
    }
  }
  done_ = done_ || steps_ >= max_steps_;
  r.done = done_;
  r.info = {seed_, steps_};
  r.obs = observe();
  return r;
}

std::string ChainBandit::save_state() const {
  std::ostringstream out;
  out << seed_ << ' ' << state_ << ' ' << steps_ << ' ' << (done_ ? 1 : 0);
  return out.str();
}

void ChainBandit::load_state(const std::string& state) {
  std::istringstream in(state);
  int done = 0;
  if (!(in >> seed_ >> state_ >> steps_ >> done) || state_ < 0 || state_ >= kStates) {
    throw DataError("ChainBandit::load_state: malformed state");
  }
  done_ = done != 0;
}

}  // namespace thinker::env
