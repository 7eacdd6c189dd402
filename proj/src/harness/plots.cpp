#include "thinker/harness/plots.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "thinker/core/errors.hpp"
#include "thinker/core/image.hpp"
#include "thinker/harness/config.hpp"
#include "thinker/harness/metrics.hpp"

namespace thinker::harness {

namespace fs = std::filesystem;
using Color = std::array<std::uint8_t, 3>;

Canvas::Canvas(int width, int height, Color background)
    : width_(width), height_(height), pixels_(static_cast<std::size_t>(width * height * 3)) {
  if (width < 1 || height < 1) throw ArgumentError("Canvas: size must be positive");
  fill_rect(0, 0, width - 1, height - 1, background);
}

void Canvas::set(int x, int y, Color color) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const auto i = static_cast<std::size_t>((y * width_ + x) * 3);
  std::copy(color.begin(), color.end(), pixels_.begin() + static_cast<std::ptrdiff_t>(i));
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Color color) {
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) set(x, y, color);
  }
}

void Canvas::rect_outline(int x0, int y0, int x1, int y1, Color color) {
  line(x0, y0, x1, y0, color);
  line(x1, y0, x1, y1, color);
  line(x1, y1, x0, y1, color);
  line(x0, y1, x0, y0, color);
}

void Canvas::line(int x0, int y0, int x1, int y1, Color color) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    set(x0, y0, color);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void Canvas::blit(int x, int y, int w, int h, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(w * h * 3)) throw ArgumentError("Canvas::blit: buffer size mismatch");
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const auto k = static_cast<std::size_t>((j * w + i) * 3);
      set(x + i, y + j, {rgb[k], rgb[k + 1], rgb[k + 2]});
    }
  }
}

void Canvas::write_png(const std::string& path) const { thinker::write_png(path, width_, height_, pixels_); }

Color palette(std::size_t index) {
  static const Color colors[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
                                 {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127}};
  return colors[index % std::size(colors)];
}

namespace {

constexpr Color kBlack{0, 0, 0};
constexpr Color kGrid{220, 220, 220};

struct RunInfo {
  std::string dir;
  std::string env_key;
  std::string group;
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;
};

std::string env_key(const env::EnvConfig& e) {
  std::ostringstream out;
  out << "maze-g" << e.grid_size << "-o" << e.obs_size << "-s" << e.style_families << (e.holdout_styles ? "-holdout" : "");
  return out.str();
}

std::string group_of(const ExperimentConfig& c) {
  const std::string agent = agent_name(c.trainer.augment);
  if (c.trainer.augment != augment::Kind::Thinker) return agent;
  if (!c.trainer.pipeline.translate) return agent + "-untranslated";
  return agent + "-n" + std::to_string(c.trainer.pipeline.n_clusters);
}

struct Frame {
  int left = 50, right, top = 20, bottom;
  double y_lo = 0.0, y_hi = 1.0;
  int y(double v) const { return bottom - static_cast<int>(std::lround((v - y_lo) / (y_hi - y_lo) * (bottom - top))); }
};

void draw_axes(Canvas& c, const Frame& f) {
  for (int t = 0; t <= 4; ++t) {
    const int y = f.y(f.y_lo + (f.y_hi - f.y_lo) * t / 4.0);
    c.line(f.left, y, f.right, y, kGrid);
    c.line(f.left - 5, y, f.left, y, kBlack);
  }
  c.line(f.left, f.top, f.left, f.bottom, kBlack);
  c.line(f.left, f.bottom, f.right, f.bottom, kBlack);
}

void draw_boxplot(const std::string& path, const std::vector<BoxSummary>& boxes,
                  const std::map<std::string, std::vector<double>>& values, const std::map<std::string, std::size_t>& color) {
  const int slot = 90;
  Canvas canvas(80 + slot * static_cast<int>(boxes.size()), 300);
  Frame f;
  f.right = canvas.width() - 20;
  f.bottom = canvas.height() - 30;
  for (const auto& b : boxes) {
    f.y_lo = std::min(f.y_lo, b.min);
    f.y_hi = std::max(f.y_hi, b.max);
  }
  draw_axes(canvas, f);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    const int cx = f.left + slot / 2 + 10 + static_cast<int>(i) * slot, half = slot / 3;
    const Color col = palette(color.at(b.group));
    canvas.line(cx, f.y(b.min), cx, f.y(b.max), kBlack);
    canvas.line(cx - half / 2, f.y(b.min), cx + half / 2, f.y(b.min), kBlack);
    canvas.line(cx - half / 2, f.y(b.max), cx + half / 2, f.y(b.max), kBlack);
    canvas.fill_rect(cx - half, f.y(b.q75), cx + half, f.y(b.q25), col);
    canvas.rect_outline(cx - half, f.y(b.q75), cx + half, f.y(b.q25), kBlack);
    canvas.fill_rect(cx - half, f.y(b.median) - 1, cx + half, f.y(b.median) + 1, kBlack);
    for (double v : values.at(b.group)) canvas.fill_rect(cx + half + 4, f.y(v) - 1, cx + half + 6, f.y(v) + 1, kBlack);
    canvas.fill_rect(cx - half, f.bottom + 8, cx + half, f.bottom + 16, col);
  }
  canvas.write_png(path);
}

void draw_curves(const std::string& path, const std::vector<const RunInfo*>& runs,
                 const std::map<std::string, std::size_t>& color) {
  std::int64_t max_step = 1;
  for (const auto* r : runs) {
    for (const auto& m : r->records) max_step = std::max(max_step, m.step);
  }
  const int panel = 360;
  Canvas canvas(2 * panel + 40, 280);
  for (int p = 0; p < 2; ++p) {
    Frame f;
    f.left = 50 + p * (panel + 20);
    f.right = f.left + panel - 60;
    f.bottom = canvas.height() - 30;
    draw_axes(canvas, f);
    auto x = [&](std::int64_t step) {
      return f.left + static_cast<int>(std::lround(static_cast<double>(step) / static_cast<double>(max_step) * (f.right - f.left)));
    };
    for (const auto* r : runs) {
      const Color col = palette(color.at(r->group));
      for (std::size_t i = 0; i < r->records.size(); ++i) {
        const auto& m = r->records[i];
        const double v = std::clamp(p == 0 ? m.train_reward_mean : m.test_mean, f.y_lo, f.y_hi);
        const int cx = x(m.step), cy = f.y(v);
        if (i > 0) {
          const auto& prev = r->records[i - 1];
          const double pv = std::clamp(p == 0 ? prev.train_reward_mean : prev.test_mean, f.y_lo, f.y_hi);
          canvas.line(x(prev.step), f.y(pv), cx, cy, col);
        }
        canvas.fill_rect(cx - 1, cy - 1, cx + 1, cy + 1, col);
      }
    }
  }
  canvas.write_png(path);
}

}  // namespace

std::vector<std::string> find_runs(const std::string& root) {
  std::vector<std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "config.json")) out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<BoxSummary> emit_plots(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  if (run_dirs.empty()) throw DataError("emit_plots: no runs given");
  std::vector<RunInfo> runs;
  std::vector<std::string> missing;
  for (const auto& dir : run_dirs) {
    const fs::path metrics = fs::path(dir) / "metrics.csv";
    std::vector<MetricsRecord> records;
    if (fs::exists(metrics)) records = MetricsLog::read(metrics.string());
    if (records.empty() || !fs::exists(fs::path(dir) / "config.json")) {
      missing.push_back(dir);
      continue;
    }
    const ExperimentConfig c = load_config((fs::path(dir) / "config.json").string());
    runs.push_back({dir, env_key(c.trainer.env), group_of(c), c.seeds.front(), std::move(records)});
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw DataError("emit_plots: runs without metrics:" + list);
  }

  fs::create_directories(out_dir);
  std::map<std::string, std::size_t> color;
  for (const auto& r : runs) color.emplace(r.group, 0);
  std::size_t next = 0;
  for (auto& [group, index] : color) index = next++;

  std::map<std::string, std::map<std::string, std::vector<const RunInfo*>>> by_env;
  for (const auto& r : runs) by_env[r.env_key][r.group].push_back(&r);

  std::vector<BoxSummary> all;
  std::ostringstream boxes_csv, finals_csv;
  boxes_csv.precision(17);
  finals_csv.precision(17);
  boxes_csv << "env,group,color_index,count,median,q25,q75,min,max\n";
  finals_csv << "env,group,seed,final_test_mean,run_dir\n";
  for (const auto& [key, groups] : by_env) {
    std::vector<BoxSummary> boxes;
    std::map<std::string, std::vector<double>> values;
    std::vector<const RunInfo*> env_runs;
    for (const auto& [group, members] : groups) {
      std::vector<double> finals;
      for (const auto* r : members) {
        finals.push_back(r->records.back().test_mean);
        finals_csv << key << ',' << group << ',' << r->seed << ',' << finals.back() << ',' << r->dir << '\n';
        env_runs.push_back(r);
      }
      BoxSummary b;
      b.env_key = key;
      b.group = group;
      b.count = finals.size();
      b.median = quantile(finals, 0.5);
      b.q25 = quantile(finals, 0.25);
      b.q75 = quantile(finals, 0.75);
      b.min = *std::min_element(finals.begin(), finals.end());
      b.max = *std::max_element(finals.begin(), finals.end());
      boxes_csv << key << ',' << group << ',' << color.at(group) << ',' << b.count << ',' << b.median << ',' << b.q25
                << ',' << b.q75 << ',' << b.min << ',' << b.max << '\n';
      values[group] = finals;
      boxes.push_back(b);
    }
    draw_boxplot((fs::path(out_dir) / ("boxplot_" + key + ".png")).string(), boxes, values, color);
    draw_curves((fs::path(out_dir) / ("curves_" + key + ".png")).string(), env_runs, color);
    all.insert(all.end(), boxes.begin(), boxes.end());
  }
  std::ofstream(fs::path(out_dir) / "boxes.csv") << boxes_csv.str();
  std::ofstream(fs::path(out_dir) / "finals.csv") << finals_csv.str();
  for (const auto& r : runs) {
    const fs::path preview = fs::path(r.dir) / "preview.png";
    if (fs::exists(preview)) {
      fs::copy_file(preview, fs::path(out_dir) / ("preview_" + fs::path(r.dir).filename().string() + ".png"),
                    fs::copy_options::overwrite_existing);
    }
  }
  return all;
}

}  // namespace thinker::harness
