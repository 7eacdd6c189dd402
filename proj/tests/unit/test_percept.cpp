#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "thinker/core/errors.hpp"
#include "thinker/core/rng.hpp"
#include "thinker/percept/gmm.hpp"

using namespace thinker;
using namespace thinker::percept;

namespace {

// Two isotropic clouds whose means are 10 sigma apart along every axis.
FeatureMatrix two_clouds(int per_cloud, int d, std::uint64_t seed, std::vector<int>& truth) {
  Rng rng(seed);
  FeatureMatrix x(2 * per_cloud, d);
  truth.assign(2 * per_cloud, 0);
  for (int i = 0; i < 2 * per_cloud; ++i) {
    truth[i] = i % 2;
    for (int j = 0; j < d; ++j) x(i, j) = (truth[i] == 1 ? 10.0 : 0.0) + rng.normal();
  }
  return x;
}

double purity(const std::vector<int>& predicted, const std::vector<int>& truth, int n) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    int hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += perm[predicted[i]] == truth[i];
    best = std::max(best, static_cast<double>(hits) / truth.size());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

ClusterModel permute(const ClusterModel& model, const std::vector<int>& perm) {
  ClusterModel out = model;
  for (int k = 0; k < model.n; ++k) {
    out.weights[perm[k]] = model.weights[k];
    out.means.row(perm[k]) = model.means.row(k);
    out.variances.row(perm[k]) = model.variances.row(k);
  }
  return out;
}

}  // namespace

TEST(Features, ConstantGrayGivesHalf) {
  Observation obs(64, 64, PixelConvention::Unit);
  obs.pixels.setConstant(0.5f);
  const FeatureVector f = extract_features(obs);
  ASSERT_EQ(f.size(), 192);
  EXPECT_TRUE((f.array() == 0.5).all());
  EXPECT_TRUE(f == extract_features(obs));
}

TEST(Features, BlockImageRecoversBlockValues) {
  Rng rng(3);
  for (int size : {32, 64}) {
    Observation obs(size, size, PixelConvention::Bytes);
    std::vector<double> blocks(192);
    for (double& b : blocks) b = static_cast<double>(rng.uniform_int(256));
    const int bs = size / 8;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        for (int c = 0; c < 3; ++c) obs.at(y, x, c) = static_cast<float>(blocks[((y / bs) * 8 + x / bs) * 3 + c]);
      }
    }
    const FeatureVector f = extract_features(obs);
    for (int i = 0; i < 192; ++i) EXPECT_NEAR(f[i], blocks[i] / 255.0, 1e-12);
  }
}

TEST(Features, RejectsBadShapes) {
  Observation odd(30, 30, PixelConvention::Bytes);
  EXPECT_THROW(extract_features(odd), ArgumentError);
  Observation signed_obs(32, 32, PixelConvention::Signed);
  EXPECT_THROW(extract_features(signed_obs), ArgumentError);
}

TEST(Gmm, SeparatedCloudsArePure) {
  std::vector<int> truth;
  const FeatureMatrix x = two_clouds(200, 6, 1, truth);
  const ClusterModel model = fit_clusters(x, 2, 5, "synthetic");
  std::vector<int> predicted;
  for (Eigen::Index i = 0; i < x.rows(); ++i) predicted.push_back(assign_features(model, x.row(i).transpose()).cluster);
  EXPECT_EQ(purity(predicted, truth, 2), 1.0);

  std::vector<int> fresh_truth;
  const FeatureMatrix fresh = two_clouds(500, 6, 99, fresh_truth);
  std::vector<int> fresh_pred;
  for (Eigen::Index i = 0; i < fresh.rows(); ++i) fresh_pred.push_back(assign_features(model, fresh.row(i).transpose()).cluster);
  EXPECT_GE(purity(fresh_pred, fresh_truth, 2), 0.99);
}

TEST(Gmm, LogLikelihoodNeverDecreases) {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    FeatureMatrix x(300, 4);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double shift = static_cast<double>(rng.uniform_int(3));
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = shift * 1.5 + rng.normal() * (0.5 + 0.3 * j);
    }
    FitOptions options;
    options.tolerance = 1e-12;
    const ClusterModel model = fit_clusters(x, 3, trial, "synthetic", options);
    ASSERT_GE(model.log_likelihood_history.size(), 2u);
    for (std::size_t t = 1; t < model.log_likelihood_history.size(); ++t) {
      EXPECT_GE(model.log_likelihood_history[t], model.log_likelihood_history[t - 1] - 1e-8) << "iteration " << t;
    }
    EXPECT_NEAR(model.weights.sum(), 1.0, 1e-9);
    EXPECT_GE(model.variances.minCoeff(), 1e-6);
  }
}

TEST(Gmm, FitIsBitDeterministic) {
  std::vector<int> truth;
  const FeatureMatrix x = two_clouds(100, 5, 4, truth);
  const ClusterModel a = fit_clusters(x, 3, 17, "synthetic");
  const ClusterModel b = fit_clusters(x, 3, 17, "synthetic");
  EXPECT_TRUE(a.means == b.means);
  EXPECT_TRUE(a.variances == b.variances);
  EXPECT_TRUE(a.weights == b.weights);
}

TEST(Gmm, DegenerateDataFloorsVariances) {
  const FeatureMatrix x = FeatureMatrix::Constant(40, 3, 0.25);
  const ClusterModel model = fit_clusters(x, 2, 0, "synthetic");
  EXPECT_TRUE((model.variances.array() == 1e-6).all());
  EXPECT_NEAR(model.weights.sum(), 1.0, 1e-9);
  EXPECT_NEAR(model.posterior(x.row(0).transpose()).sum(), 1.0, 1e-9);
}

TEST(Gmm, RejectsBadArguments) {
  const FeatureMatrix x = FeatureMatrix::Random(50, 3);
  EXPECT_THROW(fit_clusters(x, 1, 0, "synthetic"), ConfigurationError);
  EXPECT_THROW(fit_clusters(x.topRows(29), 3, 0, "synthetic"), ArgumentError);
}

TEST(Assign, MeanOfComponentMapsToIt) {
  ClusterModel model;
  model.n = 3;
  model.weights = Eigen::VectorXd::Constant(3, 1.0 / 3);
  model.means = Eigen::MatrixXd(3, 2);
  model.means << 0, 0, 1, 1, 2, 0;
  model.variances = Eigen::MatrixXd::Constant(3, 2, 0.3);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(assign_features(model, model.means.row(k).transpose()).cluster, k);
  // Equidistant from components 0 and 2: tie goes to the lower index.
  model.means.row(1) << 5, 5;
  EXPECT_EQ(assign_features(model, Eigen::Vector2d(1, 0)).cluster, 0);
}

TEST(Assign, PosteriorNormalizedAndPermutationEquivariant) {
  std::vector<int> truth;
  const FeatureMatrix x = two_clouds(60, 4, 12, truth);
  const ClusterModel model = fit_clusters(x, 3, 2, "synthetic");
  const std::vector<int> perm{2, 0, 1};
  const ClusterModel permuted = permute(model, perm);
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    FeatureVector f(4);
    for (int j = 0; j < 4; ++j) f[j] = rng.uniform(-3.0, 13.0);
    const Eigen::VectorXd p = model.posterior(f), q = permuted.posterior(f);
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(q[perm[k]], p[k], 1e-12);
    EXPECT_EQ(assign_features(permuted, f).cluster, perm[assign_features(model, f).cluster]);
  }
}

TEST(Assign, ExtractorMismatchIsStateError) {
  std::vector<int> truth;
  const FeatureMatrix x = two_clouds(60, 4, 12, truth);
  const ClusterModel model = fit_clusters(x, 2, 2, "synthetic");
  Observation obs(32, 32, PixelConvention::Bytes);
  EXPECT_THROW(assign_cluster(model, obs), StateError);
}
