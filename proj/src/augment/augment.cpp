#include "thinker/augment/augment.hpp"

#include <algorithm>
#include <cmath>

#include "thinker/core/errors.hpp"

namespace thinker::augment {

Kind parse_kind(const std::string& name) {
  if (name == "none") return Kind::None;
  if (name == "cutout_color") return Kind::CutoutColor;
  if (name == "crop") return Kind::Crop;
  if (name == "thinker") return Kind::Thinker;
  throw ConfigurationError("augment: unknown kind '" + name + "' (none | cutout_color | crop | thinker)");
}

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::None: return "none";
    case Kind::CutoutColor: return "cutout_color";
    case Kind::Crop: return "crop";
    case Kind::Thinker: return "thinker";
  }
  return "none";
}

Cutout sample_cutout(int height, int width, Rng& rng, double max_frac) {
  if (max_frac < 0.0 || max_frac > 1.0) throw ArgumentError("sample_cutout: max_frac must lie in [0, 1]");
  Cutout c;
  c.height = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(std::floor(max_frac * height)) + 1));
  c.width = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(std::floor(max_frac * width)) + 1));
  c.y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(height - c.height + 1)));
  c.x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(width - c.width + 1)));
  for (int& v : c.color) v = static_cast<int>(rng.uniform_int(256));
  return c;
}

Observation apply_cutout(const Observation& obs, const Cutout& cutout) {
  if (obs.convention == PixelConvention::Signed) throw ArgumentError("cutout: expected bytes or unit pixels");
  const float scale = obs.convention == PixelConvention::Bytes ? 1.0f : 1.0f / 255.0f;
  Observation out = obs;
  const int y1 = std::min(obs.height, cutout.y0 + cutout.height), x1 = std::min(obs.width, cutout.x0 + cutout.width);
  for (int y = std::max(0, cutout.y0); y < y1; ++y) {
    for (int x = std::max(0, cutout.x0); x < x1; ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = static_cast<float>(cutout.color[c]) * scale;
    }
  }
  return out;
}

Observation random_cutout_color(const Observation& obs, Rng& rng, double max_frac) {
  return apply_cutout(obs, sample_cutout(obs.height, obs.width, rng, max_frac));
}

Observation crop_at(const Observation& obs, int dy, int dx, int pad) {
  if (pad < 0 || dy < 0 || dx < 0 || dy > 2 * pad || dx > 2 * pad) throw ArgumentError("crop_at: offset outside padded image");
  const float zero = obs.convention == PixelConvention::Signed ? -1.0f : 0.0f;
  Observation out(obs.height, obs.width, obs.convention);
  for (int y = 0; y < obs.height; ++y) {
    const int sy = y + dy - pad;
    for (int x = 0; x < obs.width; ++x) {
      const int sx = x + dx - pad;
      const bool inside = sy >= 0 && sy < obs.height && sx >= 0 && sx < obs.width;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = inside ? obs.at(sy, sx, c) : zero;
    }
  }
  return out;
}

Observation random_crop(const Observation& obs, Rng& rng, int pad) {
  const int dy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(2 * pad + 1)));
  const int dx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(2 * pad + 1)));
  return crop_at(obs, dy, dx, pad);
}

}  // namespace thinker::augment
