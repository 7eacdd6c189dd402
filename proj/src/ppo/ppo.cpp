#include "thinker/ppo/ppo.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "thinker/core/errors.hpp"

namespace thinker::ppo {

PpoHyper PpoHyper::desk() {
  PpoHyper h;
  h.train_batch = 4096;
  h.minibatch = 512;
  return h;
}

void PpoHyper::validate() const {
  if (gamma < 0 || gamma > 1) throw ConfigurationError("ppo.gamma must lie in [0, 1]");
  if (gae_lambda < 0 || gae_lambda > 1) throw ConfigurationError("ppo.gae_lambda must lie in [0, 1]");
  if (lr < 0) throw ConfigurationError("ppo.lr must be non-negative");
  if (epochs < 1) throw ConfigurationError("ppo.epochs must be positive");
  if (rollout_fragment < 1) throw ConfigurationError("ppo.rollout_fragment must be positive");
  if (train_batch < rollout_fragment || train_batch % rollout_fragment != 0) {
    throw ConfigurationError("ppo.train_batch must be a positive multiple of ppo.rollout_fragment");
  }
  if (minibatch < 1 || minibatch > train_batch) throw ConfigurationError("ppo.minibatch must lie in [1, train_batch]");
  if (clip <= 0 || vf_clip <= 0) throw ConfigurationError("ppo.clip and ppo.vf_clip must be positive");
  if (grad_clip <= 0) throw ConfigurationError("ppo.grad_clip must be positive");
  if (kl_coeff != 0.0) throw ConfigurationError("ppo.kl_coeff: only 0 (early stopping on target_kl) is supported");
}

VecEnv::VecEnv(std::vector<std::unique_ptr<env::Environment>> envs, LevelSampler sampler, std::uint64_t seed)
    : envs_(std::move(envs)), sampler_(std::move(sampler)), rng_(seed) {
  if (envs_.empty()) throw ArgumentError("VecEnv: no environments");
  obs_.resize(envs_.size());
  infos_.resize(envs_.size());
  running_returns_.assign(envs_.size(), 0.0);
}

void VecEnv::start_episode(std::size_t i) {
  const std::uint64_t seed = sampler_(rng_);
  obs_[i] = envs_[i]->reset(seed);
  infos_[i] = {seed, 0};
  running_returns_[i] = 0.0;
}

void VecEnv::reset_all() {
  for (std::size_t i = 0; i < envs_.size(); ++i) start_episode(i);
}

VecEnv::Step VecEnv::step(const std::vector<int>& actions) {
  if (actions.size() != envs_.size()) throw ArgumentError("VecEnv::step: one action per environment required");
  Step out;
  out.rewards.resize(envs_.size());
  out.dones.resize(envs_.size());
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    env::StepResult r = envs_[i]->step(actions[i]);
    out.rewards[i] = r.reward;
    out.dones[i] = r.done ? 1 : 0;
    running_returns_[i] += r.reward;
    if (r.done) {
      finished_.push_back(running_returns_[i]);
      start_episode(i);
    } else {
      obs_[i] = std::move(r.obs);
      infos_[i] = r.info;
    }
  }
  return out;
}

std::vector<double> VecEnv::take_finished_returns() { return std::exchange(finished_, {}); }

std::string VecEnv::save_state() const {
  std::ostringstream out;
  out.precision(17);
  out << rng_.state() << '\n' << envs_.size() << '\n';
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    out << envs_[i]->save_state() << '\n' << infos_[i].seed << ' ' << infos_[i].step << ' ' << running_returns_[i] << '\n';
  }
  return out.str();
}

void VecEnv::load_state(const std::string& state) {
  std::istringstream in(state);
  std::string line;
  std::getline(in, line);
  rng_.set_state(line);
  std::getline(in, line);
  if (std::stoul(line) != envs_.size()) throw DataError("VecEnv::load_state: environment count differs");
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    std::getline(in, line);
    envs_[i]->load_state(line);
    std::getline(in, line);
    std::istringstream fields(line);
    if (!(fields >> infos_[i].seed >> infos_[i].step >> running_returns_[i])) throw DataError("VecEnv::load_state: malformed state");
    obs_[i] = envs_[i]->observe();
  }
  finished_.clear();
}

std::vector<double> log_probabilities(const Tensor<float>& logits, const std::vector<int>& actions) {
  const Index n = logits.dim(0), a = logits.dim(1);
  const Tensor<float> logp = nn::kernels::log_softmax_rows(logits);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out[i] = logp[i * a + actions[i]];
  return out;
}

int sample_action(std::span<const float> logits, Rng& rng) {
  const float m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> weights(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) weights[k] = std::exp(static_cast<double>(logits[k] - m));
  return static_cast<int>(rng.categorical(weights));
}

RolloutBuffer collect_rollout(VecEnv& envs, const PolicyModel<float>& model, int fragment, Rng& rng) {
  if (fragment < 1) throw ArgumentError("collect_rollout: fragment must be positive");
  const int e = static_cast<int>(envs.size());
  const std::size_t total = static_cast<std::size_t>(e) * fragment;
  const auto& first = envs.observations()[0];
  RolloutBuffer buf;
  buf.num_envs = e;
  buf.fragment = fragment;
  buf.obs = FrameStore(first.height, first.width);
  buf.obs.reserve(total);
  // Frames are appended in time order and reordered into fragments at the end.
  FrameStore time_major(first.height, first.width);
  time_major.reserve(total);
  std::vector<int> actions(total);
  std::vector<double> logp(total), rewards(total), values(total);
  std::vector<std::uint8_t> dones(total);
  std::vector<std::uint64_t> seeds(total);
  std::vector<int> steps(total);
  const Index a = model.config().num_actions;

  for (int t = 0; t < fragment; ++t) {
    const auto& obs = envs.observations();
    const Tensor<float> x = to_tensor<float>(obs, PixelConvention::Unit);
    const PolicyOutput<float> out = policy_forward(model, x);
    std::vector<int> chosen(e);
    for (int i = 0; i < e; ++i) {
      chosen[i] = sample_action(std::span<const float>(out.logits.value().data() + i * a, a), rng);
    }
    const std::vector<double> lp = log_probabilities(out.logits.value(), chosen);
    for (int i = 0; i < e; ++i) {
      const std::size_t k = static_cast<std::size_t>(i) * fragment + t;
      time_major.push(obs[i]);
      actions[k] = chosen[i];
      logp[k] = lp[i];
      values[k] = out.values.value()[i];
      seeds[k] = envs.infos()[i].seed;
      steps[k] = envs.infos()[i].step;
    }
    const VecEnv::Step s = envs.step(chosen);
    for (int i = 0; i < e; ++i) {
      const std::size_t k = static_cast<std::size_t>(i) * fragment + t;
      rewards[k] = s.rewards[i];
      dones[k] = s.dones[i];
    }
  }
  for (int i = 0; i < e; ++i) {
    for (int t = 0; t < fragment; ++t) buf.obs.push(time_major.get(static_cast<std::size_t>(t) * e + i));
  }
  buf.bootstrap_obs = FrameStore(first.height, first.width);
  for (const auto& obs : envs.observations()) buf.bootstrap_obs.push(obs);
  {
    const Tensor<float> x = to_tensor<float>(envs.observations(), PixelConvention::Unit);
    const PolicyOutput<float> out = policy_forward(model, x);
    buf.bootstrap_values.assign(out.values.value().data(), out.values.value().data() + e);
  }
  buf.actions = std::move(actions);
  buf.behavior_logp = std::move(logp);
  buf.rewards = std::move(rewards);
  buf.dones = std::move(dones);
  buf.values = std::move(values);
  buf.level_seeds = std::move(seeds);
  buf.step_counts = std::move(steps);
  buf.finished_returns = envs.take_finished_returns();
  return buf;
}

void refresh_estimates(RolloutBuffer& buffer, const PolicyModel<float>& model) {
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < buffer.size(); begin += kChunk) {
    const std::size_t end = std::min(buffer.size(), begin + kChunk);
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const PolicyOutput<float> out = policy_forward(model, buffer.obs.unit_tensor<float>(idx));
    const std::vector<int> acts(buffer.actions.begin() + begin, buffer.actions.begin() + end);
    const std::vector<double> lp = log_probabilities(out.logits.value(), acts);
    for (std::size_t i = begin; i < end; ++i) {
      buffer.behavior_logp[i] = lp[i - begin];
      buffer.values[i] = out.values.value()[static_cast<Index>(i - begin)];
    }
  }
  std::vector<std::size_t> idx(buffer.bootstrap_obs.size());
  std::iota(idx.begin(), idx.end(), 0);
  const PolicyOutput<float> out = policy_forward(model, buffer.bootstrap_obs.unit_tensor<float>(idx));
  buffer.bootstrap_values.assign(out.values.value().data(), out.values.value().data() + idx.size());
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
                      double bootstrap_value, double gamma, double lambda) {
  const std::size_t t_max = rewards.size();
  if (values.size() != t_max || dones.size() != t_max) throw ArgumentError("compute_gae: sequence lengths differ");
  if (gamma < 0 || gamma > 1 || lambda < 0 || lambda > 1) throw ArgumentError("compute_gae: gamma and lambda must lie in [0, 1]");
  GaeResult out;
  out.advantages.resize(t_max);
  out.returns.resize(t_max);
  double next_value = bootstrap_value, running = 0.0;
  for (std::size_t k = t_max; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * live * next_value - values[k];
    running = delta + gamma * lambda * live * running;
    out.advantages[k] = running;
    out.returns[k] = running + values[k];
    next_value = values[k];
  }
  return out;
}

void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda) {
  buffer.advantages.resize(buffer.size());
  buffer.returns.resize(buffer.size());
  const std::size_t t = static_cast<std::size_t>(buffer.fragment);
  for (int e = 0; e < buffer.num_envs; ++e) {
    const std::size_t begin = static_cast<std::size_t>(e) * t;
    const GaeResult r = compute_gae(std::span(buffer.rewards).subspan(begin, t), std::span(buffer.values).subspan(begin, t),
                                    std::span(buffer.dones).subspan(begin, t), buffer.bootstrap_values[e], gamma, lambda);
    std::copy(r.advantages.begin(), r.advantages.end(), buffer.advantages.begin() + begin);
    std::copy(r.returns.begin(), r.returns.end(), buffer.returns.begin() + begin);
  }
}

template <typename S>
Var<S> ppo_loss(const PolicyModel<S>& model, const Minibatch<S>& batch, const PpoHyper& hyper, LossStats& stats) {
  const Index n = batch.obs.dim(0);
  const std::size_t un = static_cast<std::size_t>(n);
  if (batch.actions.size() != un || batch.behavior_logp.size() != un || batch.advantages.size() != un ||
      batch.returns.size() != un || batch.old_values.size() != un) {
    throw ArgumentError("ppo_loss: minibatch fields differ in length");
  }
  auto column = [n](const std::vector<double>& v) {
    Tensor<S> t({n});
    for (Index i = 0; i < n; ++i) t[i] = static_cast<S>(v[i]);
    return t;
  };
  const Tensor<S> adv = column(batch.advantages), ret = column(batch.returns), old_v = column(batch.old_values);
  Tensor<S> neg_old_logp = column(batch.behavior_logp);
  neg_old_logp.vec() = -neg_old_logp.vec();

  const PolicyOutput<S> out = model.forward(Var<S>(batch.obs));
  const Var<S> log_probs = nn::log_softmax(out.logits);
  const Var<S> logp = nn::gather_columns(log_probs, batch.actions);
  const Var<S> ratio = nn::exp(nn::add_const(logp, neg_old_logp));
  const Var<S> surr1 = nn::mul_const(ratio, adv);
  const Var<S> surr2 = nn::mul_const(nn::clamp(ratio, S(1 - hyper.clip), S(1 + hyper.clip)), adv);
  const Var<S> policy = nn::neg(nn::mean(nn::minimum(surr1, surr2)));

  Tensor<S> neg_ret = ret;
  neg_ret.vec() = -neg_ret.vec();
  Tensor<S> neg_old_v = old_v;
  neg_old_v.vec() = -neg_old_v.vec();
  const Var<S> v_clipped = nn::add_const(nn::clamp(nn::add_const(out.values, neg_old_v), S(-hyper.vf_clip), S(hyper.vf_clip)), old_v);
  const Var<S> value = nn::mean(nn::maximum(nn::square(nn::add_const(out.values, neg_ret)), nn::square(nn::add_const(v_clipped, neg_ret))));

  const Var<S> entropy = nn::neg(nn::mean(nn::sum_per_sample(nn::mul(nn::exp(log_probs), log_probs))));
  const Var<S> total = nn::sub(nn::add(policy, nn::scale(value, S(hyper.vf_coeff))), nn::scale(entropy, S(hyper.ent_coeff)));

  const auto& r = ratio.value();
  double clipped = 0.0, kl = 0.0;
  for (Index i = 0; i < n; ++i) {
    clipped += std::abs(static_cast<double>(r[i]) - 1.0) > hyper.clip ? 1.0 : 0.0;
    kl += batch.behavior_logp[i] - static_cast<double>(logp.value()[i]);
  }
  stats.policy_loss = policy.value().item();
  stats.value_loss = value.value().item();
  stats.entropy = entropy.value().item();
  stats.mean_ratio = static_cast<double>(r.vec().mean());
  stats.clip_fraction = clipped / n;
  stats.approx_kl = kl / n;
  stats.total = total.value().item();
  return total;
}

UpdateStats update_policy(PolicyModel<float>& model, nn::Adam<float>& optimizer, const RolloutBuffer& buffer,
                          const PpoHyper& hyper, Rng& rng) {
  hyper.validate();
  const std::size_t n = buffer.size();
  if (n == 0 || buffer.advantages.size() != n || buffer.returns.size() != n) {
    throw ArgumentError("update_policy: buffer has no computed advantages");
  }
  double mean = 0.0, sq = 0.0;
  for (double a : buffer.advantages) mean += a;
  mean /= static_cast<double>(n);
  for (double a : buffer.advantages) sq += (a - mean) * (a - mean);
  const double stddev = std::sqrt(sq / static_cast<double>(n));
  std::vector<double> normalized(n);
  for (std::size_t i = 0; i < n; ++i) normalized[i] = (buffer.advantages[i] - mean) / (stddev + 1e-8);

  const nn::VarList<float> params = optimizer.params();
  UpdateStats stats;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t mb = static_cast<std::size_t>(hyper.minibatch);
  int loss_count = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_kl = 0.0;
    int epoch_batches = 0;
    for (std::size_t begin = 0; begin < n; begin += mb) {
      const std::size_t end = std::min(n, begin + mb);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      Minibatch<float> batch;
      batch.obs = buffer.obs.unit_tensor<float>(idx);
      for (std::size_t k : idx) {
        batch.actions.push_back(buffer.actions[k]);
        batch.behavior_logp.push_back(buffer.behavior_logp[k]);
        batch.advantages.push_back(normalized[k]);
        batch.returns.push_back(buffer.returns[k]);
        batch.old_values.push_back(buffer.values[k]);
      }
      LossStats ls;
      const Var<float> loss = ppo_loss(model, batch, hyper, ls);
      const nn::VarList<float> grads = nn::grad(loss, params);
      for (std::size_t i = 0; i < params.size(); ++i) {
        nn::Var<float> p = params[i];
        p.mutable_grad() = grads[i].value();
      }
      stats.grad_norm += nn::clip_grad_norm(params, hyper.grad_clip);
      optimizer.step();
      ++stats.gradient_steps;
      ++loss_count;
      stats.policy_loss += ls.policy_loss;
      stats.value_loss += ls.value_loss;
      stats.entropy += ls.entropy;
      stats.clip_fraction += ls.clip_fraction;
      stats.approx_kl += ls.approx_kl;
      epoch_kl += ls.approx_kl;
      ++epoch_batches;
    }
    ++stats.epochs_completed;
    if (epoch_kl / epoch_batches > hyper.target_kl && epoch + 1 < hyper.epochs) {
      stats.early_stopped = true;
      break;
    }
  }
  const double inv = 1.0 / std::max(loss_count, 1);
  stats.policy_loss *= inv;
  stats.value_loss *= inv;
  stats.entropy *= inv;
  stats.clip_fraction *= inv;
  stats.approx_kl *= inv;
  stats.grad_norm *= inv;
  return stats;
}

template Var<float> ppo_loss(const PolicyModel<float>&, const Minibatch<float>&, const PpoHyper&, LossStats&);
template Var<double> ppo_loss(const PolicyModel<double>&, const Minibatch<double>&, const PpoHyper&, LossStats&);

}  // namespace thinker::ppo
