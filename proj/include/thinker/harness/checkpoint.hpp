#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "thinker/pipeline/pipeline.hpp"

namespace thinker::harness {

enum class DType { Float32, Float64 };

struct NamedArray {
  std::string name;
  DType dtype = DType::Float32;
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> bytes;  // little-endian
};

// Manifest `<stem>.json` (component, version, array table, crc32) plus raw blob `<stem>.bin`.
struct Bundle {
  std::string component;
  int component_version = 1;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
};

void save_bundle(const std::string& dir, const std::string& stem, const Bundle& bundle);
// Verifies the manifest against the blob (sizes, offsets, crc32) before returning.
Bundle load_bundle(const std::string& dir, const std::string& stem);

template <typename S>
NamedArray pack(const std::string& name, const nn::Tensor<S>& tensor);
NamedArray pack(const std::string& name, const Eigen::VectorXd& v);
NamedArray pack(const std::string& name, const Eigen::MatrixXd& m);

// Policy checkpoints carry the policy config in the manifest.
void save_policy(const std::string& dir, const std::string& stem, ppo::PolicyModel<float>& model);
ppo::PolicyModel<float> load_policy(const std::string& dir, const std::string& stem);
// Overwrites parameter values in place; shapes are all checked before any write.
void load_policy_into(const Bundle& bundle, ppo::PolicyModel<float>& model);

void save_cluster_model(const std::string& dir, const std::string& stem, const percept::ClusterModel& model);
percept::ClusterModel load_cluster_model(const std::string& dir, const std::string& stem);

void save_translator(const std::string& dir, const std::string& stem, styleforge::TranslatorModel<float>& model);
styleforge::TranslatorModel<float> load_translator(const std::string& dir, const std::string& stem);

// Cluster model, translator, cluster counts and initial-dataset step count.
void save_artifacts(const std::string& dir, pipeline::BootstrapArtifacts& artifacts, std::int64_t initial_steps);
std::pair<pipeline::BootstrapArtifacts, std::int64_t> load_artifacts(const std::string& dir);
bool has_artifacts(const std::string& dir);

// Policy, optimizer moments and stream state; restoring continues the run bit-exactly.
void save_trainer(const std::string& dir, pipeline::Trainer& trainer);
void load_trainer(const std::string& dir, pipeline::Trainer& trainer);

}  // namespace thinker::harness
