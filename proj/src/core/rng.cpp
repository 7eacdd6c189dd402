#include "thinker/core/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "thinker/core/errors.hpp"

namespace thinker {

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw ArgumentError("Rng::uniform_int: n must be positive");
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

double Rng::normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_normal_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::categorical(const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw ArgumentError("Rng::categorical: weights must have a positive sum");
  const double target = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (target < acc) return i;
  }
  // Rounding can leave target == total; return the last positive weight.
  for (std::size_t i = weights.size(); i > 0; --i) {
    if (weights[i - 1] > 0.0) return i - 1;
  }
  return weights.size() - 1;
}

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_ << ' ' << (has_spare_normal_ ? 1 : 0) << ' ';
  out.precision(17);
  out << std::hexfloat << spare_normal_;
  return out.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream in(state);
  int spare = 0;
  std::string spare_text;
  in >> engine_ >> spare >> spare_text;
  if (!in) throw ArgumentError("Rng::set_state: malformed state string");
  has_spare_normal_ = spare != 0;
  spare_normal_ = std::strtod(spare_text.c_str(), nullptr);
}

std::uint64_t Rng::seed_material() const {
  // Copy so forking does not advance this stream.
  std::mt19937_64 copy = engine_;
  return copy();
}

}  // namespace thinker
