#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "thinker/core/image.hpp"

namespace thinker::percept {

using FeatureVector = Eigen::VectorXd;
// One feature vector per row.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FeatureExtractor {
  std::string id;
  int dim = 0;
  std::function<FeatureVector(const Observation&)> fn;

  FeatureVector operator()(const Observation& obs) const { return fn(obs); }
};

// Area-average downsample to grid x grid RGB in unit convention, flattened HWC.
FeatureExtractor downsample_extractor(int grid = 8);

FeatureVector extract_features(const Observation& obs, const FeatureExtractor& extractor = downsample_extractor());
FeatureMatrix extract_features(std::span<const Observation> batch, const FeatureExtractor& extractor = downsample_extractor());

struct FitOptions {
  int max_iterations = 100;
  double tolerance = 1e-3;
  double variance_floor = 1e-6;
};

// Diagonal-covariance Gaussian mixture.
struct ClusterModel {
  int n = 0;
  Eigen::VectorXd weights;
  Eigen::MatrixXd means;      // n x d
  Eigen::MatrixXd variances;  // n x d
  std::string feature_extractor_id;
  std::vector<double> log_likelihood_history;  // mean per-sample log-likelihood per EM iteration

  int dim() const { return static_cast<int>(means.cols()); }
  // log(w_k) + log N(x | mu_k, diag var_k) for each component.
  Eigen::VectorXd joint_log_density(const FeatureVector& x) const;
  Eigen::VectorXd posterior(const FeatureVector& x) const;
};

ClusterModel fit_clusters(const FeatureMatrix& features, int n, std::uint64_t seed, const std::string& extractor_id,
                          const FitOptions& options = {});

struct Assignment {
  int cluster = 0;
  Eigen::VectorXd posterior;
};

Assignment assign_features(const ClusterModel& model, const FeatureVector& features);
Assignment assign_cluster(const ClusterModel& model, const Observation& obs,
                          const FeatureExtractor& extractor = downsample_extractor());
std::vector<int> assign_clusters(const ClusterModel& model, std::span<const Observation> batch,
                                 const FeatureExtractor& extractor = downsample_extractor());

// One row per cluster: the pixel-mean image followed by up to `samples` members.
void write_cluster_summary(const std::string& path, int n, std::span<const Observation> observations,
                           std::span<const int> labels, int samples = 8);

}  // namespace thinker::percept
