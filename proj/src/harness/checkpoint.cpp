#include "thinker/harness/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "thinker/core/errors.hpp"

namespace thinker::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "thinker-checkpoint";
constexpr int kFormatVersion = 1;

std::size_t dtype_size(DType d) { return d == DType::Float32 ? 4 : 8; }
std::string dtype_name(DType d) { return d == DType::Float32 ? "float32" : "float64"; }
DType parse_dtype(const std::string& s) {
  if (s == "float32") return DType::Float32;
  if (s == "float64") return DType::Float64;
  throw IntegrityError("checkpoint: unknown dtype " + s);
}

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

template <typename T>
T read_le(const std::uint8_t* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<U>(p[b]) << (8 * b);
  return std::bit_cast<T>(bits);
}

template <typename T>
std::vector<T> unpack(const NamedArray& a) {
  const std::size_t n = a.bytes.size() / sizeof(T);
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = read_le<T>(a.bytes.data() + i * sizeof(T));
  return out;
}

void write_file(const fs::path& path, const void* data, std::size_t size) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StateError("checkpoint: cannot write " + tmp.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw StateError("checkpoint: short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("checkpoint: missing file " + path.string());
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::int64_t> shape_of(const nn::Shape& shape) { return {shape.begin(), shape.end()}; }

template <typename S>
void check_slots(const Bundle& bundle, const nn::ParameterSlots<S>& slots, const std::string& prefix) {
  for (const auto& slot : slots) {
    const NamedArray& a = bundle.array(prefix + slot.name);
    if (a.dtype != DType::Float32 || a.shape != shape_of(slot.var->value().shape())) {
      throw IntegrityError("checkpoint: array " + a.name + " does not match the model parameter shape");
    }
  }
}

template <typename S>
void fill_slots(const Bundle& bundle, nn::ParameterSlots<S>& slots, const std::string& prefix) {
  for (auto& slot : slots) {
    const auto values = unpack<float>(bundle.array(prefix + slot.name));
    auto& t = slot.var->mutable_value();
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = values[static_cast<std::size_t>(i)];
  }
}

json policy_config_json(const ppo::PolicyConfig& c) {
  return {{"torso", c.torso == ppo::PolicyConfig::Torso::Impala ? "impala" : "mlp"},
          {"obs_height", c.obs_height},
          {"obs_width", c.obs_width},
          {"num_actions", c.num_actions},
          {"channels", c.channels},
          {"hidden", c.hidden},
          {"mlp_layers", c.mlp_layers}};
}

ppo::PolicyConfig policy_config_from(const json& j) {
  ppo::PolicyConfig c;
  c.torso = j.at("torso").get<std::string>() == "impala" ? ppo::PolicyConfig::Torso::Impala : ppo::PolicyConfig::Torso::Mlp;
  c.obs_height = j.at("obs_height");
  c.obs_width = j.at("obs_width");
  c.num_actions = j.at("num_actions");
  c.channels = j.at("channels").get<std::vector<int>>();
  c.hidden = j.at("hidden");
  c.mlp_layers = j.at("mlp_layers").get<std::vector<int>>();
  return c;
}

json translator_config_json(const styleforge::TranslatorConfig& c) {
  return {{"n_clusters", c.n_clusters},   {"image_size", c.image_size},
          {"g_base", c.g_base},           {"g_residual_blocks", c.g_residual_blocks},
          {"g_instance_norm", c.g_instance_norm}, {"g_skip", c.g_skip},
          {"d_base", c.d_base},           {"d_layers", c.d_layers},
          {"output_init_scale", c.output_init_scale}, {"lambda_cls", c.lambda_cls},
          {"lambda_rec", c.lambda_rec},   {"lambda_gp", c.lambda_gp}};
}

styleforge::TranslatorConfig translator_config_from(const json& j) {
  styleforge::TranslatorConfig c;
  c.n_clusters = j.at("n_clusters");
  c.image_size = j.at("image_size");
  c.g_base = j.at("g_base");
  c.g_residual_blocks = j.at("g_residual_blocks");
  c.g_instance_norm = j.at("g_instance_norm");
  c.g_skip = j.at("g_skip");
  c.d_base = j.at("d_base");
  c.d_layers = j.at("d_layers");
  c.output_init_scale = j.at("output_init_scale");
  c.lambda_cls = j.at("lambda_cls");
  c.lambda_rec = j.at("lambda_rec");
  c.lambda_gp = j.at("lambda_gp");
  return c;
}

void expect_component(const Bundle& b, const std::string& component) {
  if (b.component != component) {
    throw IntegrityError("checkpoint: expected component " + component + ", found " + b.component);
  }
}

template <typename F>
auto integrity_guard(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw IntegrityError("checkpoint " + what + ": malformed manifest (" + e.what() + ")");
  }
}

}  // namespace

const NamedArray& Bundle::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw IntegrityError("checkpoint: array " + name + " missing from " + component);
}

template <typename S>
NamedArray pack(const std::string& name, const nn::Tensor<S>& tensor) {
  NamedArray a;
  a.name = name;
  a.dtype = sizeof(S) == 4 ? DType::Float32 : DType::Float64;
  a.shape = shape_of(tensor.shape());
  a.bytes.reserve(static_cast<std::size_t>(tensor.size()) * sizeof(S));
  for (Eigen::Index i = 0; i < tensor.size(); ++i) append_le(a.bytes, tensor[i]);
  return a;
}

NamedArray pack(const std::string& name, const Eigen::VectorXd& v) {
  NamedArray a;
  a.name = name;
  a.dtype = DType::Float64;
  a.shape = {v.size()};
  for (Eigen::Index i = 0; i < v.size(); ++i) append_le(a.bytes, v[i]);
  return a;
}

NamedArray pack(const std::string& name, const Eigen::MatrixXd& m) {
  NamedArray a;
  a.name = name;
  a.dtype = DType::Float64;
  a.shape = {m.rows(), m.cols()};
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) append_le(a.bytes, m(r, c));
  }
  return a;
}

template NamedArray pack(const std::string&, const nn::Tensor<float>&);
template NamedArray pack(const std::string&, const nn::Tensor<double>&);

void save_bundle(const std::string& dir, const std::string& stem, const Bundle& bundle) {
  fs::create_directories(dir);
  std::vector<std::uint8_t> blob;
  json table = json::array();
  for (const auto& a : bundle.arrays) {
    if (static_cast<std::int64_t>(a.bytes.size()) != element_count(a.shape) * static_cast<std::int64_t>(dtype_size(a.dtype))) {
      throw ArgumentError("save_bundle: array " + a.name + " byte size does not match its shape");
    }
    table.push_back({{"name", a.name}, {"dtype", dtype_name(a.dtype)}, {"shape", a.shape}, {"offset", blob.size()},
                     {"bytes", a.bytes.size()}});
    blob.insert(blob.end(), a.bytes.begin(), a.bytes.end());
  }
  const auto crc = crc32(0L, blob.data(), static_cast<uInt>(blob.size()));
  const json manifest = {{"format", kFormat},
                         {"format_version", kFormatVersion},
                         {"byte_order", "little"},
                         {"component", bundle.component},
                         {"component_version", bundle.component_version},
                         {"blob", stem + ".bin"},
                         {"blob_bytes", blob.size()},
                         {"crc32", crc},
                         {"arrays", table},
                         {"meta", bundle.meta}};
  write_file(fs::path(dir) / (stem + ".bin"), blob.data(), blob.size());
  const std::string text = manifest.dump(2);
  write_file(fs::path(dir) / (stem + ".json"), text.data(), text.size());
}

Bundle load_bundle(const std::string& dir, const std::string& stem) {
  return integrity_guard(stem, [&] {
    const json manifest = json::parse(read_file(fs::path(dir) / (stem + ".json")), nullptr, true);
    if (manifest.at("format") != kFormat || manifest.at("format_version") != kFormatVersion) {
      throw IntegrityError("checkpoint " + stem + ": unsupported format");
    }
    if (manifest.at("byte_order") != "little") throw IntegrityError("checkpoint " + stem + ": unsupported byte order");
    const std::string blob_text = read_file(fs::path(dir) / manifest.at("blob").get<std::string>());
    const auto* blob = reinterpret_cast<const std::uint8_t*>(blob_text.data());
    if (blob_text.size() != manifest.at("blob_bytes").get<std::size_t>()) {
      throw IntegrityError("checkpoint " + stem + ": blob size differs from manifest");
    }
    if (crc32(0L, blob, static_cast<uInt>(blob_text.size())) != manifest.at("crc32").get<std::uint64_t>()) {
      throw IntegrityError("checkpoint " + stem + ": crc32 mismatch");
    }
    Bundle b;
    b.component = manifest.at("component");
    b.component_version = manifest.at("component_version");
    b.meta = manifest.at("meta");
    std::size_t expected_offset = 0;
    for (const auto& entry : manifest.at("arrays")) {
      NamedArray a;
      a.name = entry.at("name");
      a.dtype = parse_dtype(entry.at("dtype"));
      a.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto bytes = entry.at("bytes").get<std::size_t>();
      for (auto d : a.shape) {
        if (d < 0) throw IntegrityError("checkpoint " + stem + ": negative dimension in " + a.name);
      }
      if (static_cast<std::int64_t>(bytes) != element_count(a.shape) * static_cast<std::int64_t>(dtype_size(a.dtype)) ||
          offset != expected_offset || offset + bytes > blob_text.size()) {
        throw IntegrityError("checkpoint " + stem + ": array " + a.name + " disagrees with its shape or the blob layout");
      }
      a.bytes.assign(blob + offset, blob + offset + bytes);
      expected_offset += bytes;
      b.arrays.push_back(std::move(a));
    }
    if (expected_offset != blob_text.size()) throw IntegrityError("checkpoint " + stem + ": unclaimed bytes in blob");
    return b;
  });
}

void save_policy(const std::string& dir, const std::string& stem, ppo::PolicyModel<float>& model) {
  Bundle b;
  b.component = "policy";
  b.meta = {{"config", policy_config_json(model.config())}};
  for (const auto& slot : model.slots()) b.arrays.push_back(pack(slot.name, slot.var->value()));
  save_bundle(dir, stem, b);
}

void load_policy_into(const Bundle& bundle, ppo::PolicyModel<float>& model) {
  expect_component(bundle, "policy");
  auto slots = model.slots();
  check_slots(bundle, slots, "");
  if (bundle.arrays.size() != slots.size()) throw IntegrityError("checkpoint: policy array count differs from model");
  fill_slots(bundle, slots, "");
}

ppo::PolicyModel<float> load_policy(const std::string& dir, const std::string& stem) {
  const Bundle b = load_bundle(dir, stem);
  expect_component(b, "policy");
  ppo::PolicyModel<float> model(integrity_guard(stem, [&] { return policy_config_from(b.meta.at("config")); }), 0);
  load_policy_into(b, model);
  return model;
}

void save_cluster_model(const std::string& dir, const std::string& stem, const percept::ClusterModel& model) {
  Bundle b;
  b.component = "cluster_model";
  b.meta = {{"n", model.n}, {"feature_extractor_id", model.feature_extractor_id},
            {"log_likelihood_history", model.log_likelihood_history}};
  b.arrays.push_back(pack("weights", model.weights));
  b.arrays.push_back(pack("means", model.means));
  b.arrays.push_back(pack("variances", model.variances));
  save_bundle(dir, stem, b);
}

percept::ClusterModel load_cluster_model(const std::string& dir, const std::string& stem) {
  const Bundle b = load_bundle(dir, stem);
  expect_component(b, "cluster_model");
  return integrity_guard(stem, [&] {
    percept::ClusterModel m;
    m.n = b.meta.at("n");
    m.feature_extractor_id = b.meta.at("feature_extractor_id");
    m.log_likelihood_history = b.meta.at("log_likelihood_history").get<std::vector<double>>();
    const NamedArray& w = b.array("weights");
    const NamedArray& mu = b.array("means");
    const NamedArray& var = b.array("variances");
    const bool ok = w.dtype == DType::Float64 && mu.dtype == DType::Float64 && var.dtype == DType::Float64 &&
                    w.shape == std::vector<std::int64_t>{m.n} && mu.shape.size() == 2 && mu.shape[0] == m.n &&
                    var.shape == mu.shape;
    if (!ok) throw IntegrityError("checkpoint " + stem + ": cluster model arrays disagree with n");
    const auto wv = unpack<double>(w), mv = unpack<double>(mu), vv = unpack<double>(var);
    m.weights = Eigen::Map<const Eigen::VectorXd>(wv.data(), m.n);
    const auto d = mu.shape[1];
    m.means.resize(m.n, d);
    m.variances.resize(m.n, d);
    for (Eigen::Index r = 0; r < m.n; ++r) {
      for (Eigen::Index c = 0; c < d; ++c) {
        m.means(r, c) = mv[static_cast<std::size_t>(r * d + c)];
        m.variances(r, c) = vv[static_cast<std::size_t>(r * d + c)];
      }
    }
    return m;
  });
}

void save_translator(const std::string& dir, const std::string& stem, styleforge::TranslatorModel<float>& model) {
  Bundle b;
  b.component = "translator";
  b.meta = {{"config", translator_config_json(model.config)}};
  for (const auto& slot : model.generator_slots()) b.arrays.push_back(pack("generator." + slot.name, slot.var->value()));
  for (const auto& slot : model.discriminator_slots()) {
    b.arrays.push_back(pack("discriminator." + slot.name, slot.var->value()));
  }
  save_bundle(dir, stem, b);
}

styleforge::TranslatorModel<float> load_translator(const std::string& dir, const std::string& stem) {
  const Bundle b = load_bundle(dir, stem);
  expect_component(b, "translator");
  styleforge::TranslatorModel<float> model(
      integrity_guard(stem, [&] { return translator_config_from(b.meta.at("config")); }), 0);
  auto g = model.generator_slots();
  auto d = model.discriminator_slots();
  check_slots(b, g, "generator.");
  check_slots(b, d, "discriminator.");
  if (b.arrays.size() != g.size() + d.size()) throw IntegrityError("checkpoint: translator array count differs");
  fill_slots(b, g, "generator.");
  fill_slots(b, d, "discriminator.");
  return model;
}

void save_artifacts(const std::string& dir, pipeline::BootstrapArtifacts& artifacts, std::int64_t initial_steps) {
  fs::create_directories(dir);
  save_cluster_model(dir, "clusters", artifacts.clusters);
  save_translator(dir, "translator", artifacts.translator);
  const json summary = {{"n_clusters", artifacts.clusters.n},
                        {"requested_clusters", artifacts.requested_clusters},
                        {"cluster_counts", artifacts.cluster_counts},
                        {"initial_steps", initial_steps},
                        {"gan_iterations", artifacts.gan_history.size()}};
  const std::string text = summary.dump(2);
  write_file(fs::path(dir) / "artifacts.json", text.data(), text.size());
  std::ofstream csv(fs::path(dir) / "gan_losses.csv");
  csv.precision(17);
  csv << "iteration,d_adv,gp,d_cls,d_total,g_adv,g_cls,g_rec,g_total\n";
  for (std::size_t i = 0; i < artifacts.gan_history.size(); ++i) {
    const auto& s = artifacts.gan_history[i];
    csv << i + 1 << ',' << s.d_adv << ',' << s.gp << ',' << s.d_cls << ',' << s.d_total << ',' << s.g_adv << ','
        << s.g_cls << ',' << s.g_rec << ',' << s.g_total << '\n';
  }
}

bool has_artifacts(const std::string& dir) { return fs::exists(fs::path(dir) / "artifacts.json"); }

std::pair<pipeline::BootstrapArtifacts, std::int64_t> load_artifacts(const std::string& dir) {
  pipeline::BootstrapArtifacts a;
  a.clusters = load_cluster_model(dir, "clusters");
  a.translator = load_translator(dir, "translator");
  return integrity_guard("artifacts", [&] {
    const json summary = json::parse(read_file(fs::path(dir) / "artifacts.json"));
    a.requested_clusters = summary.at("requested_clusters");
    a.cluster_counts = summary.at("cluster_counts").get<std::vector<int>>();
    if (summary.at("n_clusters") != a.clusters.n || a.translator.config.n_clusters != a.clusters.n) {
      throw IntegrityError("bootstrap artifacts disagree on the cluster count");
    }
    return std::make_pair(std::move(a), summary.at("initial_steps").get<std::int64_t>());
  });
}

void save_trainer(const std::string& dir, pipeline::Trainer& trainer) {
  Bundle b;
  b.component = "trainer";
  b.meta = {{"state", trainer.save_state()}, {"policy_config", policy_config_json(trainer.model().config())}};
  for (const auto& slot : trainer.model().slots()) b.arrays.push_back(pack("policy." + slot.name, slot.var->value()));
  auto& opt = trainer.optimizer();
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    b.arrays.push_back(pack("adam.m." + std::to_string(i), opt.first_moments()[i]));
    b.arrays.push_back(pack("adam.v." + std::to_string(i), opt.second_moments()[i]));
  }
  save_bundle(dir, "trainer", b);
}

void load_trainer(const std::string& dir, pipeline::Trainer& trainer) {
  const Bundle b = load_bundle(dir, "trainer");
  expect_component(b, "trainer");
  auto slots = trainer.model().slots();
  check_slots(b, slots, "policy.");
  auto& opt = trainer.optimizer();
  const std::size_t moments = opt.first_moments().size();
  if (b.arrays.size() != slots.size() + 2 * moments) throw IntegrityError("checkpoint: trainer array count differs");
  for (std::size_t i = 0; i < moments; ++i) {
    for (const auto* prefix : {"adam.m.", "adam.v."}) {
      const NamedArray& a = b.array(prefix + std::to_string(i));
      if (a.dtype != DType::Float32 || a.shape != shape_of(opt.first_moments()[i].shape())) {
        throw IntegrityError("checkpoint: optimizer moment " + a.name + " has the wrong shape");
      }
    }
  }
  const std::string state = integrity_guard("trainer", [&] { return b.meta.at("state").get<std::string>(); });
  fill_slots(b, slots, "policy.");
  for (std::size_t i = 0; i < moments; ++i) {
    const auto m = unpack<float>(b.array("adam.m." + std::to_string(i)));
    const auto v = unpack<float>(b.array("adam.v." + std::to_string(i)));
    auto& mt = opt.first_moments()[i];
    auto& vt = opt.second_moments()[i];
    for (Eigen::Index k = 0; k < mt.size(); ++k) {
      mt[k] = m[static_cast<std::size_t>(k)];
      vt[k] = v[static_cast<std::size_t>(k)];
    }
  }
  trainer.load_state(state);
}

}  // namespace thinker::harness
