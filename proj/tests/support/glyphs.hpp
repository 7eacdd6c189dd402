#pragma once

#include <vector>

#include "thinker/core/image.hpp"
#include "thinker/core/rng.hpp"

namespace thinker::testing {

// Style k: solid background with hue in band [k/styles, (k+1)/styles), black
// rectangles ("glyphs") whose placement depends only on the sample index.
inline Observation glyph_image(int style, int styles, int index, int size, Rng& hue_rng) {
  Observation obs(size, size, PixelConvention::Bytes);
  const double band = 1.0 / styles;
  const Rgb bg = hsv_to_rgb(style * band + band * hue_rng.uniform(0.2, 0.8), 0.6, 0.85);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      obs.at(y, x, 0) = std::round(bg.r * 255.0f);
      obs.at(y, x, 1) = std::round(bg.g * 255.0f);
      obs.at(y, x, 2) = std::round(bg.b * 255.0f);
    }
  }
  Rng layout(static_cast<std::uint64_t>(index) * 7919u + 13u);
  const int glyphs = 2 + static_cast<int>(layout.uniform_int(3));
  for (int g = 0; g < glyphs; ++g) {
    const int h = size / 8 + static_cast<int>(layout.uniform_int(size / 4));
    const int w = size / 8 + static_cast<int>(layout.uniform_int(size / 4));
    const int y0 = static_cast<int>(layout.uniform_int(size - h)), x0 = static_cast<int>(layout.uniform_int(size - w));
    for (int y = y0; y < y0 + h; ++y) {
      for (int x = x0; x < x0 + w; ++x) {
        for (int c = 0; c < 3; ++c) obs.at(y, x, c) = 0.0f;
      }
    }
  }
  return obs;
}

inline std::vector<std::vector<Observation>> glyph_dataset(int styles, int per_style, int size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<Observation>> out(styles);
  for (int k = 0; k < styles; ++k) {
    for (int i = 0; i < per_style; ++i) out[k].push_back(glyph_image(k, styles, k * per_style + i, size, rng));
  }
  return out;
}

}  // namespace thinker::testing
