#include "thinker/pipeline/pipeline.hpp"

#include <json.hpp>
#include <numeric>
#include <set>

#include "thinker/core/errors.hpp"

namespace thinker::pipeline {

namespace {

// Stream tags under the run seed.
constexpr std::uint64_t kModelStream = 1;
constexpr std::uint64_t kEnvStream = 2;
constexpr std::uint64_t kActionStream = 3;
constexpr std::uint64_t kMinibatchStream = 4;
constexpr std::uint64_t kTranslateStream = 5;
constexpr std::uint64_t kAugmentStream = 6;
constexpr std::uint64_t kBootstrapStream = 7;

constexpr std::size_t kTranslateChunk = 256;

void rewrite_frames(FrameStore& store, const std::vector<std::size_t>& indices, const std::vector<Observation>& frames) {
  for (std::size_t i = 0; i < indices.size(); ++i) store.set(indices[i], frames[i]);
}

}  // namespace

void PipelineOptions::validate() const {
  if (n_clusters < 2) throw ConfigurationError("pipeline.n_clusters must be at least 2");
  if (initial_observations < 1) throw ConfigurationError("pipeline.initial_observations must be positive");
  if (collection_envs < 1) throw ConfigurationError("pipeline.collection_envs must be positive");
  if (translate_prob < 0.0 || translate_prob > 1.0) throw ConfigurationError("pipeline.translate_prob must lie in [0, 1]");
  if (gan.iterations < 1 || gan.batch_size < 1 || gan.n_critic < 1) {
    throw ConfigurationError("pipeline.gan: iterations, batch_size and n_critic must be positive");
  }
  if (translate && initial_observations < 10 * n_clusters * gan.batch_size) {
    throw ConfigurationError("pipeline.initial_observations must be at least 10 * n_clusters * gan.batch_size");
  }
}

InitialDataset collect_initial_dataset(ppo::VecEnv& envs, int n_obs, Rng& rng) {
  if (n_obs < 1) throw ArgumentError("collect_initial_dataset: n_obs must be positive");
  InitialDataset out;
  std::set<LevelStepKey> seen;
  const std::int64_t step_cap = std::int64_t{1000} * n_obs;
  std::vector<int> actions(envs.size());
  while (true) {
    for (std::size_t i = 0; i < envs.size(); ++i) {
      const LevelStepKey key{envs.infos()[i].seed, envs.infos()[i].step};
      if (seen.insert(key).second) {
        out.observations.push_back(envs.observations()[i]);
        out.keys.push_back(key);
        if (static_cast<int>(out.observations.size()) == n_obs) return out;
      }
    }
    if (out.env_steps >= step_cap) throw DataError("collect_initial_dataset: too few distinct observations reachable");
    for (std::size_t i = 0; i < envs.size(); ++i) {
      actions[i] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(envs.env(i).num_actions())));
    }
    envs.step(actions);
    out.env_steps += static_cast<std::int64_t>(envs.size());
  }
}

BootstrapArtifacts bootstrap_setup(const std::vector<Observation>& dataset, int n_clusters,
                                   const PipelineOptions& options, std::uint64_t seed,
                                   const std::function<void(int, const styleforge::LossStats&)>& on_iteration) {
  if (dataset.empty()) throw ArgumentError("bootstrap_setup: empty dataset");
  if (n_clusters < 2) throw ConfigurationError("bootstrap_setup: n_clusters must be at least 2");
  const Rng root(seed);
  const auto extractor = percept::downsample_extractor();
  const percept::FeatureMatrix features = percept::extract_features(dataset, extractor);

  for (int n = n_clusters; n >= 2; --n) {
    if (static_cast<int>(dataset.size()) < 10 * n) continue;
    percept::ClusterModel model = percept::fit_clusters(features, n, root.fork(1).next_u64(), extractor.id);
    std::vector<std::vector<Observation>> parts(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      const int k = percept::assign_features(model, features.row(i).transpose()).cluster;
      parts[static_cast<std::size_t>(k)].push_back(dataset[static_cast<std::size_t>(i)]);
    }
    if (std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); })) continue;

    BootstrapArtifacts out;
    out.requested_clusters = n_clusters;
    for (const auto& p : parts) out.cluster_counts.push_back(static_cast<int>(p.size()));
    Rng balance_rng = root.fork(2);
    auto balanced = styleforge::balance_clusters(std::move(parts), balance_rng);
    styleforge::TranslatorConfig tconfig = options.translator;
    tconfig.n_clusters = n;
    tconfig.image_size = dataset.front().height;
    styleforge::TrainResult trained =
        styleforge::train_translator(balanced, tconfig, options.gan, root.fork(3).next_u64(), on_iteration);
    out.clusters = std::move(model);
    out.translator = std::move(trained.model);
    out.gan_history = std::move(trained.history);
    return out;
  }
  throw DataError("bootstrap_setup: every cluster count from " + std::to_string(n_clusters) +
                  " down to 2 left an empty cluster");
}

TranslationRecord translate_rollout(ppo::RolloutBuffer& buffer, const BootstrapArtifacts& artifacts, double prob,
                                    Rng& rng) {
  const auto extractor = percept::downsample_extractor();
  TranslationRecord record;
  auto run = [&](FrameStore& store, bool is_bootstrap) {
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (prob >= 1.0 || rng.uniform() < prob) chosen.push_back(i);
    }
    for (std::size_t begin = 0; begin < chosen.size(); begin += kTranslateChunk) {
      const std::size_t end = std::min(chosen.size(), begin + kTranslateChunk);
      const std::vector<std::size_t> idx(chosen.begin() + static_cast<std::ptrdiff_t>(begin),
                                         chosen.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<Observation> frames;
      frames.reserve(idx.size());
      for (std::size_t i : idx) frames.push_back(store.get(i));
      styleforge::Translation t = styleforge::translate_batch(artifacts.translator, artifacts.clusters, extractor, frames, rng);
      rewrite_frames(store, idx, t.observations);
      if (is_bootstrap) {
        record.bootstrap_translated += idx.size();
      } else {
        record.indices.insert(record.indices.end(), idx.begin(), idx.end());
        record.source.insert(record.source.end(), t.source.begin(), t.source.end());
        record.target.insert(record.target.end(), t.target.begin(), t.target.end());
      }
    }
  };
  run(buffer.obs, false);
  run(buffer.bootstrap_obs, true);
  return record;
}

void augment_rollout(ppo::RolloutBuffer& buffer, augment::Kind kind, Rng& rng) {
  if (kind != augment::Kind::CutoutColor && kind != augment::Kind::Crop) {
    throw ArgumentError("augment_rollout: only cutout_color and crop are image augmentations");
  }
  auto apply = [&](FrameStore& store) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      const Observation obs = store.get(i);
      store.set(i, kind == augment::Kind::Crop ? augment::random_crop(obs, rng) : augment::random_cutout_color(obs, rng));
    }
  };
  apply(buffer.obs);
  apply(buffer.bootstrap_obs);
}

void TrainerConfig::validate() const {
  env.validate();
  ppo.validate();
  if (augment == augment::Kind::Thinker) pipeline.validate();
  policy_for(*this).validate();
}

ppo::PolicyConfig policy_for(const TrainerConfig& config) {
  ppo::PolicyConfig p = config.policy;
  p.obs_height = config.env.obs_size;
  p.obs_width = config.env.obs_size;
  p.num_actions = env::kNumActions;
  return p;
}

std::unique_ptr<ppo::VecEnv> make_train_envs(const env::EnvConfig& config, int count, std::uint64_t seed) {
  std::vector<std::unique_ptr<env::Environment>> envs;
  for (int i = 0; i < count; ++i) envs.push_back(std::make_unique<env::ColorMaze>(config));
  auto seeds = std::make_shared<std::vector<std::uint64_t>>(env::train_level_seeds(config));
  auto out = std::make_unique<ppo::VecEnv>(
      std::move(envs), [seeds](Rng& rng) { return (*seeds)[rng.uniform_int(seeds->size())]; }, seed);
  out->reset_all();
  return out;
}

Trainer::Trainer(TrainerConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
  config_.validate();
  const Rng root(seed);
  model_ = ppo::PolicyModel<float>(policy_for(config_), root.fork(kModelStream).next_u64());
  typename nn::Adam<float>::Options opts;
  opts.lr = config_.ppo.lr;
  optimizer_ = std::make_unique<nn::Adam<float>>(nn::parameters_of(model_.slots()), opts);
  envs_ = make_train_envs(config_.env, config_.ppo.num_envs(), root.fork(kEnvStream).next_u64());
  action_rng_ = root.fork(kActionStream);
  minibatch_rng_ = root.fork(kMinibatchStream);
  translate_rng_ = root.fork(kTranslateStream);
  augment_rng_ = root.fork(kAugmentStream);
}

bool Trainer::uses_translation() const {
  return config_.augment == augment::Kind::Thinker && config_.pipeline.translate;
}

BootstrapArtifacts& Trainer::bootstrap(
    const std::function<void(int, const styleforge::LossStats&)>& on_iteration) {
  if (!uses_translation()) throw StateError("Trainer::bootstrap: translation is not enabled for this agent");
  const Rng root = Rng(seed_).fork(kBootstrapStream);
  auto envs = make_train_envs(config_.env, config_.pipeline.collection_envs, root.fork(1).next_u64());
  Rng action_rng = root.fork(2);
  InitialDataset dataset = collect_initial_dataset(*envs, config_.pipeline.initial_observations, action_rng);
  artifacts_ = bootstrap_setup(dataset.observations, config_.pipeline.n_clusters, config_.pipeline,
                               root.fork(3).next_u64(), on_iteration);
  initial_steps_ = dataset.env_steps;
  return *artifacts_;
}

void Trainer::set_artifacts(BootstrapArtifacts artifacts, std::int64_t initial_steps) {
  artifacts_ = std::move(artifacts);
  initial_steps_ = initial_steps;
}

double Trainer::train_reward_mean() const {
  if (recent_returns_.empty()) return 0.0;
  return std::accumulate(recent_returns_.begin(), recent_returns_.end(), 0.0) / static_cast<double>(recent_returns_.size());
}

IterationStats Trainer::iterate() {
  if (uses_translation() && !artifacts_) throw StateError("Trainer::iterate: bootstrap artifacts are missing");
  const auto& hyper = config_.ppo;
  ppo::RolloutBuffer buffer = ppo::collect_rollout(*envs_, model_, hyper.rollout_fragment, action_rng_);
  IterationStats stats;
  if (uses_translation() && config_.pipeline.translate_prob > 0.0) {
    const TranslationRecord record = translate_rollout(buffer, *artifacts_, config_.pipeline.translate_prob, translate_rng_);
    stats.translated = record.indices.size();
    if (stats.translated + record.bootstrap_translated > 0) ppo::refresh_estimates(buffer, model_);
  } else if (config_.augment == augment::Kind::CutoutColor || config_.augment == augment::Kind::Crop) {
    augment_rollout(buffer, config_.augment, augment_rng_);
    ppo::refresh_estimates(buffer, model_);
  }
  ppo::compute_advantages(buffer, hyper.gamma, hyper.gae_lambda);
  stats.update = ppo::update_policy(model_, *optimizer_, buffer, hyper, minibatch_rng_);

  for (double r : buffer.finished_returns) {
    recent_returns_.push_back(r);
    if (recent_returns_.size() > kRewardWindow) recent_returns_.pop_front();
  }
  ppo_steps_ += static_cast<std::int64_t>(buffer.size());
  ++iterations_;
  stats.ppo_steps = ppo_steps_;
  stats.episodes = buffer.finished_returns.size();
  stats.train_reward_mean = train_reward_mean();
  return stats;
}

std::string Trainer::save_state() const {
  nlohmann::json j;
  j["envs"] = envs_->save_state();
  j["action_rng"] = action_rng_.state();
  j["minibatch_rng"] = minibatch_rng_.state();
  j["translate_rng"] = translate_rng_.state();
  j["augment_rng"] = augment_rng_.state();
  j["recent_returns"] = std::vector<double>(recent_returns_.begin(), recent_returns_.end());
  j["ppo_steps"] = ppo_steps_;
  j["initial_steps"] = initial_steps_;
  j["iterations"] = iterations_;
  j["adam_steps"] = optimizer_->step_count();
  return j.dump();
}

void Trainer::load_state(const std::string& state) {
  try {
    const auto j = nlohmann::json::parse(state);
    envs_->load_state(j.at("envs").get<std::string>());
    action_rng_.set_state(j.at("action_rng").get<std::string>());
    minibatch_rng_.set_state(j.at("minibatch_rng").get<std::string>());
    translate_rng_.set_state(j.at("translate_rng").get<std::string>());
    augment_rng_.set_state(j.at("augment_rng").get<std::string>());
    const auto returns = j.at("recent_returns").get<std::vector<double>>();
    recent_returns_.assign(returns.begin(), returns.end());
    ppo_steps_ = j.at("ppo_steps").get<std::int64_t>();
    initial_steps_ = j.at("initial_steps").get<std::int64_t>();
    iterations_ = j.at("iterations").get<std::int64_t>();
    optimizer_->set_step_count(j.at("adam_steps").get<std::int64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("Trainer::load_state: ") + e.what());
  }
}

}  // namespace thinker::pipeline
