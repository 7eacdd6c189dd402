#include "thinker/harness/config.hpp"

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "thinker/core/errors.hpp"

namespace thinker::harness {

using nlohmann::json;

namespace {

// Reads fields from a JSON object, rejecting keys that no field claims.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigurationError(path_ + ": expected an object");
  }

  template <typename T>
  void operator()(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigurationError(path_ + "." + key + ": wrong type (found " + j_.at(key).dump() + ")");
    }
  }

  template <typename F>
  void object(const char* key, F&& visit_child) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    Reader child(j_.at(key), path_ + "." + key);
    visit_child(child);
    child.finish();
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigurationError("unknown config key " + path_ + "." + item.key());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  explicit Writer(json& j) : j_(j) { j_ = json::object(); }

  template <typename T>
  void operator()(const char* key, T& value) {
    j_[key] = value;
  }

  template <typename F>
  void object(const char* key, F&& visit_child) {
    Writer child(j_[key]);
    visit_child(child);
  }

 private:
  json& j_;
};

template <typename V>
void visit(V& v, env::EnvConfig& c) {
  v("obs_size", c.obs_size);
  v("grid_size", c.grid_size);
  v("style_families", c.style_families);
  v("n_train_levels", c.n_train_levels);
  v("max_steps", c.max_steps);
  v("holdout_styles", c.holdout_styles);
}

template <typename V>
void visit(V& v, ppo::PpoHyper& c) {
  v("gamma", c.gamma);
  v("gae_lambda", c.gae_lambda);
  v("lr", c.lr);
  v("epochs", c.epochs);
  v("minibatch", c.minibatch);
  v("train_batch", c.train_batch);
  v("rollout_fragment", c.rollout_fragment);
  v("clip", c.clip);
  v("vf_clip", c.vf_clip);
  v("vf_coeff", c.vf_coeff);
  v("ent_coeff", c.ent_coeff);
  v("kl_coeff", c.kl_coeff);
  v("target_kl", c.target_kl);
  v("grad_clip", c.grad_clip);
}

template <typename V>
void visit(V& v, ppo::PolicyConfig& c) {
  std::string torso = c.torso == ppo::PolicyConfig::Torso::Impala ? "impala" : "mlp";
  v("torso", torso);
  if (torso == "impala") {
    c.torso = ppo::PolicyConfig::Torso::Impala;
  } else if (torso == "mlp") {
    c.torso = ppo::PolicyConfig::Torso::Mlp;
  } else {
    throw ConfigurationError("policy.torso must be impala or mlp");
  }
  v("channels", c.channels);
  v("hidden", c.hidden);
  v("mlp_layers", c.mlp_layers);
}

template <typename V>
void visit(V& v, styleforge::TranslatorConfig& c) {
  v("g_base", c.g_base);
  v("g_residual_blocks", c.g_residual_blocks);
  v("g_instance_norm", c.g_instance_norm);
  v("g_skip", c.g_skip);
  v("g_input_residual", c.g_input_residual);
  v("d_base", c.d_base);
  v("d_layers", c.d_layers);
  v("output_init_scale", c.output_init_scale);
  v("lambda_cls", c.lambda_cls);
  v("lambda_rec", c.lambda_rec);
  v("lambda_gp", c.lambda_gp);
}

template <typename V>
void visit(V& v, styleforge::GanTrainConfig& c) {
  v("iterations", c.iterations);
  v("batch_size", c.batch_size);
  v("n_critic", c.n_critic);
  v("lr", c.lr);
  v("beta1", c.beta1);
  v("beta2", c.beta2);
  v("fresh_critic_batches", c.fresh_critic_batches);
}

template <typename V>
void visit(V& v, pipeline::PipelineOptions& c) {
  v("n_clusters", c.n_clusters);
  v("initial_observations", c.initial_observations);
  v("collection_envs", c.collection_envs);
  v("translate_prob", c.translate_prob);
  v("translate", c.translate);
  v.object("translator", [&](auto& sub) { visit(sub, c.translator); });
  v.object("gan", [&](auto& sub) { visit(sub, c.gan); });
}

template <typename V>
void visit(V& v, ExperimentConfig& c) {
  v.object("env", [&](auto& sub) { visit(sub, c.trainer.env); });
  v.object("ppo", [&](auto& sub) { visit(sub, c.trainer.ppo); });
  v.object("policy", [&](auto& sub) { visit(sub, c.trainer.policy); });
  v.object("pipeline", [&](auto& sub) { visit(sub, c.trainer.pipeline); });
  std::string augment = augment::to_string(c.trainer.augment);
  v("augment", augment);
  c.trainer.augment = augment::parse_kind(augment);
  v("seeds", c.seeds);
  v("total_steps", c.total_steps);
  v("eval_every", c.eval_every);
  v("eval_episodes", c.eval_episodes);
  v("output_dir", c.output_dir);
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  trainer.env.n_train_levels = 50;
  trainer.env.obs_size = 32;
  trainer.policy.channels = {8, 16, 16};
}

void ExperimentConfig::validate() const {
  trainer.validate();
  if (seeds.empty()) throw ConfigurationError("seeds must list at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigurationError("seeds must be distinct");
  }
  if (total_steps < 1) throw ConfigurationError("total_steps must be positive");
  if (eval_every < 1) throw ConfigurationError("eval_every must be positive");
  if (eval_episodes < 1) throw ConfigurationError("eval_episodes must be positive");
  if (output_dir.empty()) throw ConfigurationError("output_dir must not be empty");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigurationError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig config;
  Reader reader(j, "config");
  visit(reader, config);
  reader.finish();
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot read config file " + path);
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string dump_config(const ExperimentConfig& config) {
  json j;
  Writer writer(j);
  ExperimentConfig copy = config;
  visit(writer, copy);
  return j.dump(2);
}

augment::Kind agent_kind(const std::string& agent) {
  if (agent == "ppo") return augment::Kind::None;
  if (agent == "thinker") return augment::Kind::Thinker;
  if (agent == "cutout") return augment::Kind::CutoutColor;
  if (agent == "crop") return augment::Kind::Crop;
  throw ConfigurationError("unknown agent '" + agent + "' (ppo | thinker | cutout | crop)");
}

std::string agent_name(augment::Kind kind) {
  switch (kind) {
    case augment::Kind::None: return "ppo";
    case augment::Kind::Thinker: return "thinker";
    case augment::Kind::CutoutColor: return "cutout";
    case augment::Kind::Crop: return "crop";
  }
  return "ppo";
}

std::string runs_root(const ExperimentConfig& config) {
  if (const char* env = std::getenv("THINKERLAB_RUNS"); env && *env) return env;
  return config.output_dir;
}

}  // namespace thinker::harness
