#include "thinker/percept/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "thinker/core/errors.hpp"
#include "thinker/core/rng.hpp"

namespace thinker::percept {

FeatureExtractor downsample_extractor(int grid) {
  if (grid < 1) throw ArgumentError("downsample_extractor: grid must be positive");
  FeatureExtractor extractor;
  extractor.id = "downsample" + std::to_string(grid);
  extractor.dim = grid * grid * 3;
  extractor.fn = [grid](const Observation& obs) {
    if (obs.convention == PixelConvention::Signed) throw ArgumentError("extract_features: expected bytes or unit pixels");
    if (obs.height % grid != 0 || obs.width % grid != 0 || obs.pixels.size() != obs.height * obs.width * 3) {
      throw ArgumentError("extract_features: " + std::to_string(obs.height) + "x" + std::to_string(obs.width) +
                          " is not divisible into " + std::to_string(grid) + "x" + std::to_string(grid) + " blocks");
    }
    const double scale = obs.convention == PixelConvention::Bytes ? 1.0 / 255.0 : 1.0;
    const int bh = obs.height / grid, bw = obs.width / grid;
    FeatureVector out = FeatureVector::Zero(grid * grid * 3);
    for (int y = 0; y < obs.height; ++y) {
      for (int x = 0; x < obs.width; ++x) {
        const int cell = (y / bh) * grid + x / bw;
        for (int c = 0; c < 3; ++c) out[cell * 3 + c] += obs.at(y, x, c);
      }
    }
    return FeatureVector(out * (scale / (bh * bw)));
  };
  return extractor;
}

FeatureVector extract_features(const Observation& obs, const FeatureExtractor& extractor) {
  FeatureVector f = extractor(obs);
  if (f.size() != extractor.dim) throw StateError("extract_features: extractor '" + extractor.id + "' returned wrong dimension");
  return f;
}

FeatureMatrix extract_features(std::span<const Observation> batch, const FeatureExtractor& extractor) {
  FeatureMatrix out(static_cast<Eigen::Index>(batch.size()), extractor.dim);
  for (std::size_t i = 0; i < batch.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = extract_features(batch[i], extractor).transpose();
  return out;
}

Eigen::VectorXd ClusterModel::joint_log_density(const FeatureVector& x) const {
  if (x.size() != means.cols()) throw StateError("ClusterModel: feature dimension mismatch");
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  Eigen::VectorXd out(n);
  for (int k = 0; k < n; ++k) {
    const Eigen::ArrayXd diff = x.array() - means.row(k).transpose().array();
    const Eigen::ArrayXd var = variances.row(k).transpose().array();
    out[k] = std::log(weights[k]) - 0.5 * ((diff.square() / var) + var.log() + log_2pi).sum();
  }
  return out;
}

namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// Weighted M-step from an N x n responsibility matrix.
void maximize(ClusterModel& model, const FeatureMatrix& x, const Eigen::MatrixXd& resp, double floor) {
  const Eigen::VectorXd nk = resp.colwise().sum().transpose();
  for (int k = 0; k < model.n; ++k) {
    if (nk[k] <= std::numeric_limits<double>::min()) continue;  // keep an emptied component where it was
    const Eigen::RowVectorXd mean = (resp.col(k).transpose() * x) / nk[k];
    const Eigen::MatrixXd centered = x.rowwise() - mean;
    const Eigen::RowVectorXd var = (resp.col(k).transpose() * centered.array().square().matrix()) / nk[k];
    model.means.row(k) = mean;
    model.variances.row(k) = var.array().max(floor).matrix();
  }
  model.weights = nk.array().max(1e-300) / nk.array().max(1e-300).sum();
}

std::vector<Eigen::Index> kmeans_plus_plus(const FeatureMatrix& x, int n, Rng& rng) {
  const Eigen::Index count = x.rows();
  std::vector<Eigen::Index> centers{static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(count)))};
  Eigen::VectorXd d2 = (x.rowwise() - x.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < n) {
    Eigen::Index next;
    const double total = d2.sum();
    if (total <= 0.0) {
      next = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(count)));
    } else {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      next = count - 1;
      for (Eigen::Index i = 0; i < count; ++i) {
        acc += d2[i];
        if (acc > target) {
          next = i;
          break;
        }
      }
    }
    centers.push_back(next);
    d2 = d2.cwiseMin((x.rowwise() - x.row(next)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace

ClusterModel fit_clusters(const FeatureMatrix& features, int n, std::uint64_t seed, const std::string& extractor_id,
                          const FitOptions& options) {
  if (n < 2) throw ConfigurationError("fit_clusters: n must be >= 2, got " + std::to_string(n));
  const Eigen::Index count = features.rows(), d = features.cols();
  if (count < 10 * n) {
    throw ArgumentError("fit_clusters: need at least " + std::to_string(10 * n) + " samples, got " + std::to_string(count));
  }
  if (!features.allFinite()) throw ArgumentError("fit_clusters: non-finite features");

  ClusterModel model;
  model.n = n;
  model.feature_extractor_id = extractor_id;
  model.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
  model.means = Eigen::MatrixXd::Zero(n, d);
  model.variances = Eigen::MatrixXd::Constant(n, d, options.variance_floor);

  Rng rng(seed);
  const auto centers = kmeans_plus_plus(features, n, rng);
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(count, n);
  for (Eigen::Index i = 0; i < count; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
      const double dist = (features.row(i) - features.row(centers[k])).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = k;
      }
    }
    resp(i, best) = 1.0;
  }
  for (int k = 0; k < n; ++k) model.means.row(k) = features.row(centers[k]);
  maximize(model, features, resp, options.variance_floor);

  for (int iteration = 0; iteration < options.max_iterations; ++iteration) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < count; ++i) {
      const Eigen::VectorXd joint = model.joint_log_density(features.row(i).transpose());
      const double lse = log_sum_exp(joint);
      total += lse;
      resp.row(i) = (joint.array() - lse).exp().matrix().transpose();
    }
    const double ll = total / static_cast<double>(count);
    const bool converged = !model.log_likelihood_history.empty() &&
                           (ll - model.log_likelihood_history.back()) <
                               options.tolerance * std::max(std::abs(model.log_likelihood_history.back()), 1e-12);
    model.log_likelihood_history.push_back(ll);
    if (converged) break;
    maximize(model, features, resp, options.variance_floor);
  }
  return model;
}

Assignment assign_features(const ClusterModel& model, const FeatureVector& features) {
  Assignment out;
  out.posterior = model.posterior(features);
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < out.posterior.size(); ++k) {
    if (out.posterior[k] > out.posterior[best]) best = k;
  }
  out.cluster = static_cast<int>(best);
  return out;
}

Eigen::VectorXd ClusterModel::posterior(const FeatureVector& x) const {
  const Eigen::VectorXd joint = joint_log_density(x);
  const double lse = log_sum_exp(joint);
  Eigen::VectorXd p = (joint.array() - lse).exp();
  return p / p.sum();
}

Assignment assign_cluster(const ClusterModel& model, const Observation& obs, const FeatureExtractor& extractor) {
  if (extractor.id != model.feature_extractor_id || extractor.dim != model.dim()) {
    throw StateError("assign_cluster: model was fitted with '" + model.feature_extractor_id + "', got '" + extractor.id + "'");
  }
  return assign_features(model, extract_features(obs, extractor));
}

std::vector<int> assign_clusters(const ClusterModel& model, std::span<const Observation> batch, const FeatureExtractor& extractor) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (const auto& obs : batch) out.push_back(assign_cluster(model, obs, extractor).cluster);
  return out;
}

void write_cluster_summary(const std::string& path, int n, std::span<const Observation> observations, std::span<const int> labels,
                           int samples) {
  if (observations.size() != labels.size() || observations.empty()) throw ArgumentError("write_cluster_summary: size mismatch");
  const int h = observations[0].height, w = observations[0].width, pad = 2;
  const int cols = samples + 1;
  const int width = cols * (w + pad) + pad, height = n * (h + pad) + pad;
  std::vector<std::uint8_t> canvas(static_cast<std::size_t>(width) * height * 3, 40);
  auto blit = [&](const Eigen::ArrayXf& bytes, int row, int col) {
    const int oy = pad + row * (h + pad), ox = pad + col * (w + pad);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          canvas[((oy + y) * width + ox + x) * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::round(bytes[(y * w + x) * 3 + c]), 0.0f, 255.0f));
        }
      }
    }
  };
  for (int k = 0; k < n; ++k) {
    Eigen::ArrayXf sum = Eigen::ArrayXf::Zero(h * w * 3);
    int members = 0, shown = 0;
    for (std::size_t i = 0; i < observations.size(); ++i) {
      if (labels[i] != k) continue;
      const Eigen::ArrayXf bytes = convert(observations[i], PixelConvention::Bytes).pixels;
      sum += bytes;
      ++members;
      if (shown < samples) blit(bytes, k, 1 + shown++);
    }
    if (members > 0) blit(sum / static_cast<float>(members), k, 0);
  }
  write_png(path, width, height, canvas);
}

}  // namespace thinker::percept
