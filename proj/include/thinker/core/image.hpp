#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "thinker/nn/tensor.hpp"

namespace thinker {

// Numeric range of observation pixels.
enum class PixelConvention {
  Bytes,   // [0, 255]
  Unit,    // [0, 1]
  Signed,  // [-1, 1]
};

std::string to_string(PixelConvention convention);

// H x W x 3 image, pixels stored HWC.
struct Observation {
  int height = 0;
  int width = 0;
  PixelConvention convention = PixelConvention::Bytes;
  Eigen::ArrayXf pixels;

  Observation() = default;
  Observation(int h, int w, PixelConvention c) : height(h), width(w), convention(c), pixels(Eigen::ArrayXf::Zero(h * w * 3)) {}

  float& at(int y, int x, int c) { return pixels[(y * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return pixels[(y * width + x) * 3 + c]; }
  bool same_shape(const Observation& other) const { return height == other.height && width == other.width; }
};

// Bytes -> Unit -> Bytes is exact; conversions into Bytes round to the
// nearest integer after clamping.
Observation convert(const Observation& obs, PixelConvention target);

// Stacks observations into an NCHW tensor in the target convention.
template <typename S>
nn::Tensor<S> to_tensor(std::span<const Observation> batch, PixelConvention target);

// Inverse of to_tensor; `source` is the convention of the tensor values.
template <typename S>
std::vector<Observation> from_tensor(const nn::Tensor<S>& batch, PixelConvention source, PixelConvention target);

// Compact byte storage for many equally sized frames (HWC per frame).
class FrameStore {
 public:
  FrameStore() = default;
  FrameStore(int height, int width) : height_(height), width_(width) {}

  void push(const Observation& obs);
  void set(std::size_t index, const Observation& obs);
  Observation get(std::size_t index) const;  // Bytes convention
  std::size_t size() const { return height_ * width_ == 0 ? 0 : bytes_.size() / frame_size(); }
  int height() const { return height_; }
  int width() const { return width_; }
  void reserve(std::size_t frames) { bytes_.reserve(frames * frame_size()); }

  // NCHW tensor of the selected frames in Unit convention.
  template <typename S>
  nn::Tensor<S> unit_tensor(std::span<const std::size_t> indices) const;

 private:
  std::size_t frame_size() const { return static_cast<std::size_t>(height_) * width_ * 3; }
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bytes_;
};

struct Rgb {
  float r, g, b;
};
// h, s, v in [0, 1].
Rgb hsv_to_rgb(double h, double s, double v);
// Returns {h, s, v}; hue of a gray pixel is 0.
Eigen::Array3d rgb_to_hsv(double r, double g, double b);

// Writes an 8-bit RGB PNG. `rgb` holds height*width*3 bytes.
void write_png(const std::string& path, int width, int height, std::span<const std::uint8_t> rgb);
std::vector<std::uint8_t> to_rgb_bytes(const Observation& obs);

}  // namespace thinker
