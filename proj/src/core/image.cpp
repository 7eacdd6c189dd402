#include "thinker/core/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "thinker/core/errors.hpp"

namespace thinker {

std::string to_string(PixelConvention convention) {
  switch (convention) {
    case PixelConvention::Bytes: return "bytes";
    case PixelConvention::Unit: return "unit";
    case PixelConvention::Signed: return "signed";
  }
  return "unknown";
}

namespace {

Eigen::ArrayXf to_unit(const Eigen::ArrayXf& v, PixelConvention from) {
  switch (from) {
    case PixelConvention::Bytes: return v / 255.0f;
    case PixelConvention::Unit: return v;
    case PixelConvention::Signed: return (v + 1.0f) * 0.5f;
  }
  return v;
}

Eigen::ArrayXf from_unit(const Eigen::ArrayXf& v, PixelConvention to) {
  switch (to) {
    case PixelConvention::Bytes: return (v.max(0.0f).min(1.0f) * 255.0f).round();
    case PixelConvention::Unit: return v;
    case PixelConvention::Signed: return v * 2.0f - 1.0f;
  }
  return v;
}

}  // namespace

Observation convert(const Observation& obs, PixelConvention target) {
  if (obs.convention == target) return obs;
  Observation out = obs;
  out.convention = target;
  out.pixels = from_unit(to_unit(obs.pixels, obs.convention), target);
  return out;
}

template <typename S>
nn::Tensor<S> to_tensor(std::span<const Observation> batch, PixelConvention target) {
  if (batch.empty()) throw ArgumentError("to_tensor: empty batch");
  const int h = batch[0].height, w = batch[0].width;
  const nn::Index plane = static_cast<nn::Index>(h) * w;
  nn::Tensor<S> out({static_cast<nn::Index>(batch.size()), 3, h, w});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch[i].same_shape(batch[0])) throw ArgumentError("to_tensor: observations differ in shape");
    const Eigen::ArrayXf values = from_unit(to_unit(batch[i].pixels, batch[i].convention), target);
    S* dst = out.data() + static_cast<nn::Index>(i) * 3 * plane;
    for (nn::Index p = 0; p < plane; ++p) {
      for (int c = 0; c < 3; ++c) dst[c * plane + p] = static_cast<S>(values[p * 3 + c]);
    }
  }
  return out;
}

template <typename S>
std::vector<Observation> from_tensor(const nn::Tensor<S>& batch, PixelConvention source, PixelConvention target) {
  if (batch.rank() != 4 || batch.shape()[1] != 3) {
    throw ArgumentError("from_tensor: expected [N,3,H,W], got " + nn::to_string(batch.shape()));
  }
  const int n = static_cast<int>(batch.shape()[0]);
  const int h = static_cast<int>(batch.shape()[2]), w = static_cast<int>(batch.shape()[3]);
  const nn::Index plane = static_cast<nn::Index>(h) * w;
  std::vector<Observation> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Eigen::ArrayXf values(plane * 3);
    const S* src = batch.data() + static_cast<nn::Index>(i) * 3 * plane;
    for (nn::Index p = 0; p < plane; ++p) {
      for (int c = 0; c < 3; ++c) values[p * 3 + c] = static_cast<float>(src[c * plane + p]);
    }
    Observation obs(h, w, target);
    obs.pixels = from_unit(to_unit(values, source), target);
    out.push_back(std::move(obs));
  }
  return out;
}

void FrameStore::push(const Observation& obs) {
  if (obs.height != height_ || obs.width != width_) throw ArgumentError("FrameStore::push: frame shape mismatch");
  const std::size_t offset = bytes_.size();
  bytes_.resize(offset + frame_size());
  set(offset / frame_size(), obs);
}

void FrameStore::set(std::size_t index, const Observation& obs) {
  if (obs.height != height_ || obs.width != width_) throw ArgumentError("FrameStore::set: frame shape mismatch");
  const Eigen::ArrayXf bytes = obs.convention == PixelConvention::Bytes ? obs.pixels : convert(obs, PixelConvention::Bytes).pixels;
  std::uint8_t* dst = bytes_.data() + index * frame_size();
  for (Eigen::Index i = 0; i < bytes.size(); ++i) {
    dst[i] = static_cast<std::uint8_t>(std::clamp(bytes[i], 0.0f, 255.0f));
  }
}

Observation FrameStore::get(std::size_t index) const {
  if (index >= size()) throw ArgumentError("FrameStore::get: index out of range");
  Observation obs(height_, width_, PixelConvention::Bytes);
  const std::uint8_t* src = bytes_.data() + index * frame_size();
  for (Eigen::Index i = 0; i < obs.pixels.size(); ++i) obs.pixels[i] = src[i];
  return obs;
}

template <typename S>
nn::Tensor<S> FrameStore::unit_tensor(std::span<const std::size_t> indices) const {
  const nn::Index plane = static_cast<nn::Index>(height_) * width_;
  nn::Tensor<S> out({static_cast<nn::Index>(indices.size()), 3, height_, width_});
  const S inv = S(1) / S(255);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ArgumentError("FrameStore::unit_tensor: index out of range");
    const std::uint8_t* src = bytes_.data() + indices[i] * frame_size();
    S* dst = out.data() + static_cast<nn::Index>(i) * 3 * plane;
    for (nn::Index p = 0; p < plane; ++p) {
      dst[p] = src[p * 3] * inv;
      dst[plane + p] = src[p * 3 + 1] * inv;
      dst[2 * plane + p] = src[p * 3 + 2] * inv;
    }
  }
  return out;
}

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double scaled = h * 6.0;
  const int sector = static_cast<int>(scaled) % 6;
  const double f = scaled - std::floor(scaled);
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  double r = v, g = t, b = p;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

Eigen::Array3d rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double delta = mx - mn;
  double h = 0.0;
  if (delta > 0.0) {
    if (mx == r) {
      h = std::fmod((g - b) / delta, 6.0);
    } else if (mx == g) {
      h = (b - r) / delta + 2.0;
    } else {
      h = (r - g) / delta + 4.0;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  const double s = mx > 0.0 ? delta / mx : 0.0;
  return {h, s, mx};
}

std::vector<std::uint8_t> to_rgb_bytes(const Observation& obs) {
  const Observation bytes = convert(obs, PixelConvention::Bytes);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(bytes.pixels.size()));
  for (Eigen::Index i = 0; i < bytes.pixels.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(bytes.pixels[i]);
  return out;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png(const std::string& path, int width, int height, std::span<const std::uint8_t> rgb) {
  if (width <= 0 || height <= 0 || rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw ArgumentError("write_png: pixel buffer does not match " + std::to_string(width) + "x" + std::to_string(height));
  }
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (width * 3 + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    const auto row = rgb.subspan(static_cast<std::size_t>(y) * width * 3, static_cast<std::size_t>(width) * 3);
    raw.insert(raw.end(), row.begin(), row.end());
  }
  uLongf compressed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(compressed_size);
  if (compress2(compressed.data(), &compressed_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw std::runtime_error("write_png: compression failed");
  }
  compressed.resize(compressed_size);

  std::vector<std::uint8_t> png{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::vector<std::uint8_t> header;
  put_u32(header, static_cast<std::uint32_t>(width));
  put_u32(header, static_cast<std::uint32_t>(height));
  header.insert(header.end(), {8, 2, 0, 0, 0});  // 8-bit RGB
  put_chunk(png, "IHDR", header);
  put_chunk(png, "IDAT", compressed);
  put_chunk(png, "IEND", {});

  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("write_png: cannot open " + path);
  file.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
}

template nn::Tensor<float> to_tensor<float>(std::span<const Observation>, PixelConvention);
template nn::Tensor<double> to_tensor<double>(std::span<const Observation>, PixelConvention);
template std::vector<Observation> from_tensor<float>(const nn::Tensor<float>&, PixelConvention, PixelConvention);
template std::vector<Observation> from_tensor<double>(const nn::Tensor<double>&, PixelConvention, PixelConvention);
template nn::Tensor<float> FrameStore::unit_tensor<float>(std::span<const std::size_t>) const;
template nn::Tensor<double> FrameStore::unit_tensor<double>(std::span<const std::size_t>) const;

}  // namespace thinker
