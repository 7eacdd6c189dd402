#include <gtest/gtest.h>

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <iterator>

#include "thinker/core/errors.hpp"
#include "thinker/core/image.hpp"
#include "thinker/core/rng.hpp"

using namespace thinker;

namespace {

Observation random_bytes(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Observation obs(h, w, PixelConvention::Bytes);
  for (Eigen::Index i = 0; i < obs.pixels.size(); ++i) obs.pixels[i] = static_cast<float>(rng.uniform_int(256));
  return obs;
}

}  // namespace

TEST(Convention, BytesUnitRoundTripIsExact) {
  const Observation bytes = random_bytes(7, 5, 1);
  const Observation back = convert(convert(bytes, PixelConvention::Unit), PixelConvention::Bytes);
  EXPECT_TRUE((back.pixels == bytes.pixels).all());
  const Observation via_signed = convert(convert(bytes, PixelConvention::Signed), PixelConvention::Bytes);
  EXPECT_TRUE((via_signed.pixels == bytes.pixels).all());
}

TEST(Convention, UnitSignedRoundTrip) {
  Rng rng(2);
  Observation unit(4, 4, PixelConvention::Unit);
  for (Eigen::Index i = 0; i < unit.pixels.size(); ++i) unit.pixels[i] = static_cast<float>(rng.uniform());
  const Observation signed_obs = convert(unit, PixelConvention::Signed);
  EXPECT_GE(signed_obs.pixels.minCoeff(), -1.0f);
  EXPECT_LE(signed_obs.pixels.maxCoeff(), 1.0f);
  const Observation back = convert(signed_obs, PixelConvention::Unit);
  EXPECT_LT((back.pixels - unit.pixels).abs().maxCoeff(), 1e-6f);
}

TEST(Convention, TensorLayoutIsChannelFirst) {
  const std::vector<Observation> batch{random_bytes(3, 4, 3), random_bytes(3, 4, 4)};
  const auto t = to_tensor<double>(batch, PixelConvention::Unit);
  ASSERT_EQ(t.shape(), (nn::Shape{2, 3, 3, 4}));
  EXPECT_NEAR(t[((1 * 3 + 2) * 3 + 1) * 4 + 3], batch[1].at(1, 3, 2) / 255.0, 1e-6);
  const auto back = from_tensor(t, PixelConvention::Unit, PixelConvention::Bytes);
  EXPECT_TRUE((back[1].pixels == batch[1].pixels).all());

  FrameStore store(3, 4);
  for (const auto& obs : batch) store.push(obs);
  const std::vector<std::size_t> order{1, 0};
  const auto from_store = store.unit_tensor<double>(order);
  for (nn::Index i = 0; i < from_store.size() / 2; ++i) EXPECT_NEAR(from_store[i], t[t.size() / 2 + i], 1e-6);
  EXPECT_TRUE((store.get(0).pixels == batch[0].pixels).all());
}

TEST(Hsv, RoundTripsPrimaries) {
  for (double h : {0.0, 1.0 / 6, 0.25, 0.5, 0.7, 0.9}) {
    const Rgb c = hsv_to_rgb(h, 0.6, 0.8);
    const auto hsv = rgb_to_hsv(c.r, c.g, c.b);
    EXPECT_NEAR(hsv[0], h, 1e-5);
    EXPECT_NEAR(hsv[1], 0.6, 1e-5);
    EXPECT_NEAR(hsv[2], 0.8, 1e-5);
  }
}

TEST(Png, WritesDecodableFile) {
  const Observation obs = random_bytes(6, 9, 5);
  const auto rgb = to_rgb_bytes(obs);
  const std::string path = ::testing::TempDir() + "/thinker_png_test.png";
  write_png(path, 9, 6, rgb);
  std::ifstream file(path, std::ios::binary);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  ASSERT_GT(bytes.size(), 33u);
  EXPECT_EQ(bytes[1], 'P');
  // Locate IDAT and inflate it back to the filtered scanlines.
  std::size_t pos = 8;
  std::vector<unsigned char> idat;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = (bytes[pos] << 24) | (bytes[pos + 1] << 16) | (bytes[pos + 2] << 8) | bytes[pos + 3];
    const std::string type(bytes.begin() + pos + 4, bytes.begin() + pos + 8);
    const uLong crc = crc32(0L, bytes.data() + pos + 4, len + 4);
    const std::uint32_t stored = (bytes[pos + 8 + len] << 24) | (bytes[pos + 9 + len] << 16) | (bytes[pos + 10 + len] << 8) | bytes[pos + 11 + len];
    EXPECT_EQ(crc, stored) << type;
    if (type == "IDAT") idat.assign(bytes.begin() + pos + 8, bytes.begin() + pos + 8 + len);
    pos += 12 + len;
  }
  std::vector<unsigned char> raw(6 * (9 * 3 + 1));
  uLongf raw_size = raw.size();
  ASSERT_EQ(uncompress(raw.data(), &raw_size, idat.data(), idat.size()), Z_OK);
  for (int y = 0; y < 6; ++y) {
    EXPECT_EQ(raw[y * 28], 0);
    for (int i = 0; i < 27; ++i) EXPECT_EQ(raw[y * 28 + 1 + i], rgb[y * 27 + i]);
  }
  std::remove(path.c_str());
  EXPECT_THROW(write_png(path, 10, 6, rgb), ArgumentError);
}
