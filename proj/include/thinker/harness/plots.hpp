#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace thinker::harness {

// RGB raster with top-left origin.
class Canvas {
 public:
  Canvas(int width, int height, std::array<std::uint8_t, 3> background = {255, 255, 255});

  int width() const { return width_; }
  int height() const { return height_; }
  void set(int x, int y, std::array<std::uint8_t, 3> color);
  void fill_rect(int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> color);
  void rect_outline(int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> color);
  void line(int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> color);
  void blit(int x, int y, int w, int h, const std::vector<std::uint8_t>& rgb);
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }
  void write_png(const std::string& path) const;

 private:
  int width_, height_;
  std::vector<std::uint8_t> pixels_;
};

std::array<std::uint8_t, 3> palette(std::size_t index);

struct BoxSummary {
  std::string env_key;
  std::string group;
  std::size_t count = 0;
  double median = 0.0, q25 = 0.0, q75 = 0.0, min = 0.0, max = 0.0;
};

// Boxes over the seed-final test means of each (environment config, agent group).
// Writes boxes.csv, boxplot_<env>.png, curves_<env>.png and copies translation previews.
std::vector<BoxSummary> emit_plots(const std::vector<std::string>& run_dirs, const std::string& out_dir);

// Run directories (those holding config.json) directly under root.
std::vector<std::string> find_runs(const std::string& root);

}  // namespace thinker::harness
