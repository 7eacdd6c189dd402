#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace thinker {

// SplitMix64 finalizer. Used as the seed hash throughout (level styles,
// stream derivation), so its output is part of the reproducibility contract.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic random stream. Distributions are implemented here rather than
// through <random> distribution objects, whose output is library-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)) {}

  // Independent child stream keyed by `tag`.
  Rng fork(std::uint64_t tag) const { return Rng(splitmix64(seed_material() ^ splitmix64(tag))); }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  double normal();

  // Index drawn proportionally to non-negative `weights`.
  std::size_t categorical(const std::vector<double>& weights);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform_int(i)]);
    }
  }

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::uint64_t seed_material() const;

  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace thinker
