#include "thinker/styleforge/translator.hpp"

#include <algorithm>

#include "thinker/core/errors.hpp"

namespace thinker::styleforge {

using nn::ConvGeometry;

void TranslatorConfig::validate() const {
  if (n_clusters < 2) throw ConfigurationError("n_clusters: at least two clusters are required");
  if (image_size < 4 || image_size % 4 != 0) throw ConfigurationError("image_size must be a positive multiple of 4");
  if (d_layers < 1 || image_size % (1 << d_layers) != 0) throw ConfigurationError("d_layers: image_size must be divisible by 2^d_layers");
  if (g_base < 1 || d_base < 1) throw ConfigurationError("g_base and d_base must be positive");
  if (g_residual_blocks < 0) throw ConfigurationError("g_residual_blocks must be non-negative");
  if (lambda_cls < 0 || lambda_rec < 0 || lambda_gp < 0) throw ConfigurationError("loss weights must be non-negative");
}

namespace {

constexpr ConvGeometry kSame{1, 1};
constexpr ConvGeometry kDown{2, 1};
constexpr double kLeak = 0.01;

void check_labels(const std::vector<int>& labels, Index batch, int n) {
  if (static_cast<Index>(labels.size()) != batch) throw ArgumentError("label count does not match batch size");
  for (int c : labels) {
    if (c < 0 || c >= n) throw ArgumentError("label " + std::to_string(c) + " out of range [0, " + std::to_string(n) + ")");
  }
}

template <typename S>
Tensor<S> one_hot_planes(const std::vector<int>& labels, int n, Index h, Index w) {
  const Index count = static_cast<Index>(labels.size());
  Tensor<S> planes = Tensor<S>::constant({count, n, h, w}, S(0));
  const Index plane = h * w;
  for (Index i = 0; i < count; ++i) planes.vec().segment((i * n + labels[i]) * plane, plane).setOnes();
  return planes;
}

template <typename S>
void check_image_batch(const Tensor<S>& x, int image_size) {
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != image_size || x.dim(3) != image_size) {
    throw ArgumentError("expected [N,3," + std::to_string(image_size) + "," + std::to_string(image_size) + "], got " +
                        nn::to_string(x.shape()));
  }
}

template <typename S>
Tensor<S> slice_batch(const Tensor<S>& x, Index begin, Index end) {
  nn::Shape shape = x.shape();
  shape[0] = end - begin;
  Tensor<S> out(shape);
  const Index per = x.size() / x.dim(0);
  out.vec() = x.vec().segment(begin * per, (end - begin) * per);
  return out;
}

}  // namespace

template <typename S>
void Generator<S>::Stage::collect(const std::string& prefix, nn::ParameterSlots<S>& out) {
  conv.collect(prefix, out);
  if (norm) norm->collect(prefix + ".norm", out);
}

template <typename S>
typename Generator<S>::Stage Generator<S>::stage(Index in, Index out, Index kernel, nn::ConvGeometry geometry, bool norm,
                                                 Rng& rng) {
  Stage s{nn::Conv2d<S>(in, out, kernel, geometry, rng), std::nullopt};
  if (norm) s.norm.emplace(out);
  return s;
}

template <typename S>
Generator<S>::Generator(const TranslatorConfig& config, Rng& rng) : n_(config.n_clusters), skip_(config.g_skip), input_residual_(config.g_input_residual) {
  config.validate();
  const Index b = config.g_base;
  const bool norm = config.g_instance_norm;
  stem_ = stage(3 + n_, b, 3, kSame, norm, rng);
  down1_ = stage(b, 2 * b, 4, kDown, norm, rng);
  down2_ = stage(2 * b, 4 * b, 4, kDown, norm, rng);
  for (int i = 0; i < config.g_residual_blocks; ++i) {
    Stage first = stage(4 * b, 4 * b, 3, kSame, norm, rng);
    Stage second = stage(4 * b, 4 * b, 3, kSame, norm, rng);
    blocks_.emplace_back(std::move(first), std::move(second));
  }
  up1_ = stage(4 * b, 2 * b, 3, kSame, norm, rng);
  up2_ = stage(2 * b, b, 3, kSame, norm, rng);
  out_ = nn::Conv2d<S>(skip_ ? 2 * b : b, 3, 3, kSame, rng);
  out_.scale_weights(config.output_init_scale);
}

template <typename S>
Var<S> Generator<S>::operator()(const Var<S>& x, const std::vector<int>& labels) const {
  if (x.value().rank() != 4 || x.shape()[1] != 3) throw ArgumentError("Generator: expected [N,3,H,W], got " + nn::to_string(x.shape()));
  if (x.shape()[2] % 4 != 0 || x.shape()[3] % 4 != 0) throw ArgumentError("Generator: spatial size must be divisible by 4");
  check_labels(labels, x.shape()[0], n_);
  const Var<S> cond(one_hot_planes<S>(labels, n_, x.shape()[2], x.shape()[3]));
  const Var<S> stem = nn::relu(stem_(nn::concat_channels(x, cond)));
  Var<S> h = nn::relu(down1_(stem));
  h = nn::relu(down2_(h));
  for (const auto& [first, second] : blocks_) h = nn::add(h, second(nn::relu(first(h))));
  h = nn::relu(up1_(nn::upsample_nearest2x(h)));
  h = nn::relu(up2_(nn::upsample_nearest2x(h)));
  if (skip_) h = nn::concat_channels(h, stem);
  return input_residual_ ? nn::tanh(nn::add(x, out_(h))) : nn::tanh(out_(h));
}

template <typename S>
void Generator<S>::collect(const std::string& prefix, nn::ParameterSlots<S>& out) {
  stem_.collect(prefix + ".stem", out);
  down1_.collect(prefix + ".down1", out);
  down2_.collect(prefix + ".down2", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].first.collect(prefix + ".block" + std::to_string(i) + ".a", out);
    blocks_[i].second.collect(prefix + ".block" + std::to_string(i) + ".b", out);
  }
  up1_.collect(prefix + ".up1", out);
  up2_.collect(prefix + ".up2", out);
  out_.collect(prefix + ".out", out);
}

template <typename S>
Discriminator<S>::Discriminator(const TranslatorConfig& config, Rng& rng) : image_size_(config.image_size) {
  config.validate();
  Index channels = 3;
  for (int i = 0; i < config.d_layers; ++i) {
    const Index next = static_cast<Index>(config.d_base) << i;
    trunk_.emplace_back(channels, next, 4, kDown, rng);
    channels = next;
  }
  src_head_ = nn::Conv2d<S>(channels, 1, 3, kSame, rng);
  cls_head_ = nn::Conv2d<S>(channels, config.n_clusters, config.image_size >> config.d_layers, ConvGeometry{1, 0}, rng);
}

template <typename S>
CriticOutput<S> Discriminator<S>::operator()(const Var<S>& x) const {
  check_image_batch(x.value(), image_size_);
  Var<S> h = x;
  for (const auto& conv : trunk_) h = nn::leaky_relu(conv(h), S(kLeak));
  const Var<S> logits = cls_head_(h);
  return {src_head_(h), nn::reshape(logits, {logits.shape()[0], logits.shape()[1]})};
}

template <typename S>
void Discriminator<S>::collect(const std::string& prefix, nn::ParameterSlots<S>& out) {
  for (std::size_t i = 0; i < trunk_.size(); ++i) trunk_[i].collect(prefix + ".conv" + std::to_string(i), out);
  src_head_.collect(prefix + ".src", out);
  cls_head_.collect(prefix + ".cls", out);
}

template <typename S>
TranslatorModel<S>::TranslatorModel(const TranslatorConfig& cfg, std::uint64_t seed) : config(cfg) {
  config.validate();
  Rng g_rng = Rng(seed).fork(1);
  Rng d_rng = Rng(seed).fork(2);
  generator = Generator<S>(config, g_rng);
  discriminator = Discriminator<S>(config, d_rng);
}

template <typename S>
nn::ParameterSlots<S> TranslatorModel<S>::generator_slots() {
  nn::ParameterSlots<S> slots;
  generator.collect("generator", slots);
  return slots;
}

template <typename S>
nn::ParameterSlots<S> TranslatorModel<S>::discriminator_slots() {
  nn::ParameterSlots<S> slots;
  discriminator.collect("discriminator", slots);
  return slots;
}

template <typename S>
Tensor<S> generate(const TranslatorModel<S>& model, const Tensor<S>& x, const std::vector<int>& labels) {
  check_image_batch(x, model.config.image_size);
  check_labels(labels, x.dim(0), model.config.n_clusters);
  nn::NoGradGuard no_grad;
  constexpr Index kChunk = 64;
  Tensor<S> out(x.shape());
  const Index per = x.size() / std::max<Index>(x.dim(0), 1);
  for (Index begin = 0; begin < x.dim(0); begin += kChunk) {
    const Index end = std::min(x.dim(0), begin + kChunk);
    const std::vector<int> chunk_labels(labels.begin() + begin, labels.begin() + end);
    const Var<S> y = model.generator(Var<S>(slice_batch(x, begin, end)), chunk_labels);
    out.vec().segment(begin * per, (end - begin) * per) = y.value().vec();
  }
  return out;
}

template <typename S>
CriticOutput<S> discriminate(const TranslatorModel<S>& model, const Tensor<S>& x) {
  nn::NoGradGuard no_grad;
  return model.discriminator(Var<S>(x));
}

template <typename S>
Var<S> gradient_penalty(const std::function<Var<S>(const Var<S>&)>& critic, const Tensor<S>& real, const Tensor<S>& fake,
                        Rng& rng) {
  if (!real.same_shape(fake) || real.rank() < 2) throw ArgumentError("gradient_penalty: real and fake shapes differ");
  const Index n = real.dim(0), per = real.size() / n;
  Tensor<S> mixed(real.shape());
  for (Index i = 0; i < n; ++i) {
    const S eps = static_cast<S>(rng.uniform());
    mixed.vec().segment(i * per, per) = eps * real.vec().segment(i * per, per) + (S(1) - eps) * fake.vec().segment(i * per, per);
  }
  nn::EnableGradGuard enable;
  const Var<S> x_hat(std::move(mixed), true);
  const Var<S> score = nn::sum(nn::mean_per_sample(critic(x_hat)));
  const Var<S> g = nn::grad(score, {x_hat}, true)[0];
  const Var<S> norm = nn::sqrt(nn::add_scalar(nn::sum_per_sample(nn::square(g)), S(1e-16)));
  return nn::mean(nn::square(nn::add_scalar(norm, S(-1))));
}

template <typename S>
Var<S> discriminator_loss(const TranslatorModel<S>& model, const Tensor<S>& x_real, const GanBatch& batch, Rng& rng,
                          LossStats& stats) {
  check_image_batch(x_real, model.config.image_size);
  check_labels(batch.c_src, x_real.dim(0), model.config.n_clusters);
  const Tensor<S> fake = generate(model, x_real, batch.c_tgt);
  const auto& d = model.discriminator;
  const CriticOutput<S> real_out = d(Var<S>(x_real));
  const Var<S> fake_src = d.source(Var<S>(fake));
  const Var<S> adv = nn::sub(nn::mean(fake_src), nn::mean(real_out.src));
  const Var<S> gp = gradient_penalty<S>([&d](const Var<S>& x) { return d.source(x); }, x_real, fake, rng);
  const Var<S> cls = nn::cross_entropy(real_out.cls, batch.c_src);
  const auto& c = model.config;
  const Var<S> total = nn::add(nn::add(adv, nn::scale(gp, S(c.lambda_gp))), nn::scale(cls, S(c.lambda_cls)));
  stats.d_adv = adv.value().item();
  stats.gp = gp.value().item();
  stats.d_cls = cls.value().item();
  stats.d_total = total.value().item();
  return total;
}

template <typename S>
Var<S> cycle_reconstruction_loss(const Var<S>& x, const Var<S>& reconstructed) {
  if (x.shape() != reconstructed.shape()) throw ArgumentError("cycle_reconstruction_loss: shape mismatch");
  return nn::mean(nn::abs(nn::sub(x, reconstructed)));
}

template <typename S>
Var<S> generator_loss(const TranslatorModel<S>& model, const Tensor<S>& x_real, const GanBatch& batch, LossStats& stats) {
  check_image_batch(x_real, model.config.image_size);
  const Var<S> x(x_real);
  const Var<S> fake = model.generator(x, batch.c_tgt);
  const CriticOutput<S> out = model.discriminator(fake);
  const Var<S> adv = nn::neg(nn::mean(out.src));
  const Var<S> cls = nn::cross_entropy(out.cls, batch.c_tgt);
  const Var<S> rec = cycle_reconstruction_loss(x, model.generator(fake, batch.c_src));
  const auto& c = model.config;
  const Var<S> total = nn::add(nn::add(adv, nn::scale(cls, S(c.lambda_cls))), nn::scale(rec, S(c.lambda_rec)));
  stats.g_adv = adv.value().item();
  stats.g_cls = cls.value().item();
  stats.g_rec = rec.value().item();
  stats.g_total = total.value().item();
  return total;
}

std::vector<std::vector<Observation>> balance_clusters(std::vector<std::vector<Observation>> clusters, Rng& rng) {
  if (clusters.empty()) return clusters;
  std::size_t smallest = clusters[0].size();
  for (const auto& c : clusters) smallest = std::min(smallest, c.size());
  for (auto& c : clusters) {
    rng.shuffle(c);
    c.resize(smallest);
  }
  return clusters;
}

namespace {

template <typename S>
void assign_gradients(const nn::VarList<S>& params, const nn::VarList<S>& grads) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Var<S> p = params[i];
    p.mutable_grad() = grads[i].value();
  }
}

}  // namespace

TrainResult train_translator(const std::vector<std::vector<Observation>>& clusters, const TranslatorConfig& config,
                             const GanTrainConfig& train, std::uint64_t seed,
                             const std::function<void(int, const LossStats&)>& on_iteration) {
  if (clusters.size() < 2) throw ConfigurationError("train_translator: at least two clusters are required");
  if (static_cast<int>(clusters.size()) != config.n_clusters) {
    throw ConfigurationError("train_translator: config.n_clusters does not match the number of clusters");
  }
  if (train.batch_size < 1 || train.n_critic < 1 || train.iterations < 0) {
    throw ConfigurationError("train_translator: batch_size and n_critic must be positive");
  }
  std::vector<Tensor<float>> data;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    if (clusters[k].empty()) throw DataError("train_translator: cluster " + std::to_string(k) + " is empty");
    data.push_back(to_tensor<float>(clusters[k], PixelConvention::Signed));
  }

  TrainResult result{TranslatorModel<float>(config, seed), {}};
  auto& model = result.model;
  const nn::VarList<float> g_params = nn::parameters_of(model.generator_slots());
  const nn::VarList<float> d_params = nn::parameters_of(model.discriminator_slots());
  typename nn::Adam<float>::Options adam;
  adam.lr = train.lr;
  adam.beta1 = train.beta1;
  adam.beta2 = train.beta2;
  nn::Adam<float> g_opt(g_params, adam);
  nn::Adam<float> d_opt(d_params, adam);

  Rng rng = Rng(seed).fork(3);
  const int n = config.n_clusters;
  const Index size = config.image_size, per = 3 * size * size;
  std::vector<int> labels(static_cast<std::size_t>(train.batch_size));
  for (int i = 0; i < train.batch_size; ++i) labels[i] = i % n;

  auto sample = [&](GanBatch& batch, Tensor<float>& x) {
    batch.c_src = labels;
    batch.c_tgt.clear();
    rng.shuffle(batch.c_src);
    x = Tensor<float>({train.batch_size, 3, size, size});
    for (int i = 0; i < train.batch_size; ++i) {
      const int c = batch.c_src[i];
      const Index pick = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(data[c].dim(0))));
      x.vec().segment(i * per, per) = data[c].vec().segment(pick * per, per);
      int target = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n - 1)));
      if (target >= c) ++target;
      batch.c_tgt.push_back(target);
    }
  };

  for (int it = 0; it < train.iterations; ++it) {
    GanBatch batch;
    Tensor<float> x;
    sample(batch, x);
    LossStats stats;
    for (int k = 0; k < train.n_critic; ++k) {
      if (k > 0 && train.fresh_critic_batches) sample(batch, x);
      const Var<float> loss = discriminator_loss(model, x, batch, rng, stats);
      assign_gradients(d_params, nn::grad(loss, d_params));
      d_opt.step();
    }
    if (train.fresh_critic_batches) sample(batch, x);
    const Var<float> g_loss = generator_loss(model, x, batch, stats);
    assign_gradients(g_params, nn::grad(g_loss, g_params));
    g_opt.step();

    result.history.push_back(stats);
    if (on_iteration) on_iteration(it, stats);
  }
  return result;
}

Translation translate_batch(const TranslatorModel<float>& model, const percept::ClusterModel& clusters,
                            const percept::FeatureExtractor& extractor, std::span<const Observation> batch, Rng& rng) {
  const int n = model.config.n_clusters;
  if (n < 2 || clusters.n != n) throw StateError("translate_batch: translator and cluster model disagree on n >= 2");
  Translation out;
  if (batch.empty()) return out;
  for (const auto& obs : batch) {
    const int src = percept::assign_cluster(clusters, obs, extractor).cluster;
    int target = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n - 1)));
    if (target >= src) ++target;
    out.source.push_back(src);
    out.target.push_back(target);
  }
  const Tensor<float> x = to_tensor<float>(batch, PixelConvention::Signed);
  const Tensor<float> y = generate(model, x, out.target);
  out.observations = from_tensor(y, PixelConvention::Signed, PixelConvention::Unit);
  for (std::size_t i = 0; i < batch.size(); ++i) out.observations[i] = convert(out.observations[i], batch[i].convention);
  return out;
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;
template struct TranslatorModel<float>;
template struct TranslatorModel<double>;
template Tensor<float> generate(const TranslatorModel<float>&, const Tensor<float>&, const std::vector<int>&);
template Tensor<double> generate(const TranslatorModel<double>&, const Tensor<double>&, const std::vector<int>&);
template CriticOutput<float> discriminate(const TranslatorModel<float>&, const Tensor<float>&);
template CriticOutput<double> discriminate(const TranslatorModel<double>&, const Tensor<double>&);
template Var<float> gradient_penalty(const std::function<Var<float>(const Var<float>&)>&, const Tensor<float>&, const Tensor<float>&, Rng&);
template Var<double> gradient_penalty(const std::function<Var<double>(const Var<double>&)>&, const Tensor<double>&, const Tensor<double>&, Rng&);
template Var<float> discriminator_loss(const TranslatorModel<float>&, const Tensor<float>&, const GanBatch&, Rng&, LossStats&);
template Var<double> discriminator_loss(const TranslatorModel<double>&, const Tensor<double>&, const GanBatch&, Rng&, LossStats&);
template Var<float> cycle_reconstruction_loss(const Var<float>&, const Var<float>&);
template Var<double> cycle_reconstruction_loss(const Var<double>&, const Var<double>&);
template Var<float> generator_loss(const TranslatorModel<float>&, const Tensor<float>&, const GanBatch&, LossStats&);
template Var<double> generator_loss(const TranslatorModel<double>&, const Tensor<double>&, const GanBatch&, LossStats&);

}  // namespace thinker::styleforge
