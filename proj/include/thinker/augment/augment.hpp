#pragma once

#include <array>
#include <string>

#include "thinker/core/image.hpp"
#include "thinker/core/rng.hpp"

namespace thinker::augment {

enum class Kind { None, CutoutColor, Crop, Thinker };
Kind parse_kind(const std::string& name);
std::string to_string(Kind kind);

struct Cutout {
  int y0 = 0, x0 = 0, height = 0, width = 0;
  std::array<int, 3> color{};  // bytes
};

// Side lengths uniform in [0, max_frac * size], position uniform among valid placements.
Cutout sample_cutout(int height, int width, Rng& rng, double max_frac = 0.5);
Observation apply_cutout(const Observation& obs, const Cutout& cutout);
Observation random_cutout_color(const Observation& obs, Rng& rng, double max_frac = 0.5);

// Zero-pads by `pad` and crops the H x W window whose top-left corner is (dy, dx) in padded coordinates.
Observation crop_at(const Observation& obs, int dy, int dx, int pad);
Observation random_crop(const Observation& obs, Rng& rng, int pad = 4);

}  // namespace thinker::augment
