#include "thinker/nn/ops.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace thinker::nn {

namespace {

template <typename S>
Var<S> constant(Tensor<S> t) {
  return Var<S>(std::move(t), false);
}

template <typename S>
void require_same_shape(const char* op, const Var<S>& a, const Var<S>& b) {
  if (a.shape() != b.shape()) {
    throw ArgumentError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

template <typename S>
void require_rank(const char* op, const Var<S>& a, int rank) {
  if (static_cast<int>(a.shape().size()) != rank) {
    throw ArgumentError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(a.shape()));
  }
}

template <typename S, typename F>
Tensor<S> map_unary(const Tensor<S>& a, F f) {
  Tensor<S> out(a.shape());
  out.vec() = a.vec().unaryExpr(f);
  return out;
}

template <typename S>
Index inner_size(const Shape& shape) {
  if (shape.empty()) throw ArgumentError("per-sample op on a scalar");
  return shape[0] == 0 ? 0 : numel(shape) / shape[0];
}

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require_same_shape("add", a, b);
  Tensor<S> out(a.shape(), a.value().vec() + b.value().vec());
  return make_op<S>("add", std::move(out), {a, b},
                    [](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {g, g}; });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require_same_shape("sub", a, b);
  Tensor<S> out(a.shape(), a.value().vec() - b.value().vec());
  return make_op<S>("sub", std::move(out), {a, b}, [](const Var<S>& g, const std::vector<bool>& needs) -> VarList<S> {
    return {g, needs[1] ? neg(g) : Var<S>()};
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require_same_shape("mul", a, b);
  Tensor<S> out(a.shape(), a.value().vec().cwiseProduct(b.value().vec()));
  return make_op<S>("mul", std::move(out), {a, b}, [a, b](const Var<S>& g, const std::vector<bool>& needs) -> VarList<S> {
    return {needs[0] ? mul(g, b) : Var<S>(), needs[1] ? mul(g, a) : Var<S>()};
  });
}

namespace {
template <typename S>
Var<S> select_min_max(const char* name, const Var<S>& a, const Var<S>& b, bool take_min) {
  require_same_shape(name, a, b);
  const auto& av = a.value().vec();
  const auto& bv = b.value().vec();
  Tensor<S> out(a.shape());
  Tensor<S> pick_a(a.shape());
  for (Index i = 0; i < av.size(); ++i) {
    // Ties route the gradient to `a`.
    const bool first = take_min ? av[i] <= bv[i] : av[i] >= bv[i];
    out[i] = first ? av[i] : bv[i];
    pick_a[i] = first ? S(1) : S(0);
  }
  Tensor<S> pick_b(a.shape(), (S(1) - pick_a.vec().array()).matrix());
  return make_op<S>(name, std::move(out), {a, b},
                    [pick_a, pick_b](const Var<S>& g, const std::vector<bool>& needs) -> VarList<S> {
                      return {needs[0] ? mul_const(g, pick_a) : Var<S>(), needs[1] ? mul_const(g, pick_b) : Var<S>()};
                    });
}
}  // namespace

template <typename S>
Var<S> minimum(const Var<S>& a, const Var<S>& b) {
  return select_min_max("minimum", a, b, true);
}

template <typename S>
Var<S> maximum(const Var<S>& a, const Var<S>& b) {
  return select_min_max("maximum", a, b, false);
}

template <typename S>
Var<S> neg(const Var<S>& a) {
  Tensor<S> out(a.shape(), -a.value().vec());
  return make_op<S>("neg", std::move(out), {a},
                    [](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {neg(g)}; });
}

template <typename S>
Var<S> scale(const Var<S>& a, S factor) {
  Tensor<S> out(a.shape(), a.value().vec() * factor);
  return make_op<S>("scale", std::move(out), {a},
                    [factor](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {scale(g, factor)}; });
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S offset) {
  Tensor<S> out(a.shape(), (a.value().vec().array() + offset).matrix());
  return make_op<S>("add_scalar", std::move(out), {a},
                    [](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {g}; });
}

template <typename S>
Var<S> mul_const(const Var<S>& a, const Tensor<S>& c) {
  if (a.shape() != c.shape()) {
    throw ArgumentError("mul_const: shape mismatch " + to_string(a.shape()) + " vs " + to_string(c.shape()));
  }
  Tensor<S> out(a.shape(), a.value().vec().cwiseProduct(c.vec()));
  return make_op<S>("mul_const", std::move(out), {a},
                    [c](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {mul_const(g, c)}; });
}

template <typename S>
Var<S> add_const(const Var<S>& a, const Tensor<S>& c) {
  if (a.shape() != c.shape()) {
    throw ArgumentError("add_const: shape mismatch " + to_string(a.shape()) + " vs " + to_string(c.shape()));
  }
  Tensor<S> out(a.shape(), a.value().vec() + c.vec());
  return make_op<S>("add_const", std::move(out), {a},
                    [](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {g}; });
}

template <typename S>
Var<S> square(const Var<S>& a) {
  Tensor<S> out(a.shape(), a.value().vec().cwiseAbs2());
  return make_op<S>("square", std::move(out), {a},
                    [a](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {mul(g, scale(a, S(2)))}; });
}

template <typename S>
Var<S> abs(const Var<S>& a) {
  Tensor<S> sign = map_unary(a.value(), [](S v) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
  Tensor<S> out(a.shape(), a.value().vec().cwiseAbs());
  return make_op<S>("abs", std::move(out), {a},
                    [sign](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {mul_const(g, sign)}; });
}

template <typename S>
Var<S> clamp(const Var<S>& a, S lo, S hi) {
  Tensor<S> out = map_unary(a.value(), [lo, hi](S v) { return std::min(std::max(v, lo), hi); });
  Tensor<S> pass = map_unary(a.value(), [lo, hi](S v) { return (v >= lo && v <= hi) ? S(1) : S(0); });
  return make_op<S>("clamp", std::move(out), {a},
                    [pass](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {mul_const(g, pass)}; });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& a, S slope) {
  Tensor<S> out = map_unary(a.value(), [slope](S v) { return v > S(0) ? v : slope * v; });
  Tensor<S> local = map_unary(a.value(), [slope](S v) { return v > S(0) ? S(1) : slope; });
  return make_op<S>("leaky_relu", std::move(out), {a},
                    [local](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {mul_const(g, local)}; });
}

template <typename S>
Var<S> sqrt(const Var<S>& a) {
  Tensor<S> out(a.shape(), a.value().vec().cwiseSqrt());
  Tensor<S> local = map_unary(out, [](S y) { return S(0.5) / y; });
  return make_op<S>(
      "sqrt", std::move(out), {a},
      [local](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {mul_const(g, local)}; }, false);
}

template <typename S>
Var<S> exp(const Var<S>& a) {
  Tensor<S> out(a.shape(), a.value().vec().array().exp().matrix());
  Tensor<S> local = out;
  return make_op<S>(
      "exp", std::move(out), {a},
      [local](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {mul_const(g, local)}; }, false);
}

template <typename S>
Var<S> tanh(const Var<S>& a) {
  Tensor<S> out(a.shape(), a.value().vec().array().tanh().matrix());
  Tensor<S> local = map_unary(out, [](S y) { return S(1) - y * y; });
  return make_op<S>(
      "tanh", std::move(out), {a},
      [local](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {mul_const(g, local)}; }, false);
}

template <typename S>
Var<S> instance_norm(const Var<S>& x, S eps) {
  require_rank("instance_norm", x, 4);
  const Index groups = x.shape()[0] * x.shape()[1], plane = x.shape()[2] * x.shape()[3];
  Tensor<S> out(x.shape());
  Tensor<S> inv_std({groups});
  auto in = x.value().matrix(groups, plane);
  auto y = out.matrix(groups, plane);
  for (Index g = 0; g < groups; ++g) {
    const S mu = in.row(g).mean();
    const S var = (in.row(g).array() - mu).square().mean();
    inv_std[g] = S(1) / std::sqrt(var + eps);
    y.row(g) = (in.row(g).array() - mu) * inv_std[g];
  }
  Tensor<S> normalized = out;
  return make_op<S>(
      "instance_norm", std::move(out), {x},
      [normalized, inv_std, groups, plane](const Var<S>& g, const std::vector<bool>&) -> VarList<S> {
        Tensor<S> dx(normalized.shape());
        auto dy = g.value().matrix(groups, plane);
        auto yn = normalized.matrix(groups, plane);
        auto out = dx.matrix(groups, plane);
        for (Index k = 0; k < groups; ++k) {
          const S mean_dy = dy.row(k).mean();
          const S mean_dy_y = dy.row(k).cwiseProduct(yn.row(k)).mean();
          out.row(k) = (dy.row(k).array() - mean_dy - yn.row(k).array() * mean_dy_y) * inv_std[k];
        }
        return {Var<S>(std::move(dx))};
      },
      false);
}

// ----------------------------------------------------------------- reductions

template <typename S>
Var<S> sum(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::scalar(a.value().vec().sum());
  const Shape shape = a.shape();
  return make_op<S>("sum", std::move(out), {a}, [shape](const Var<S>& g, const std::vector<bool>&) -> VarList<S> {
    return {expand_scalar(g, shape)};
  });
}

template <typename S>
Var<S> mean(const Var<S>& a) {
  const Index n = a.value().size();
  if (n == 0) throw ArgumentError("mean: empty tensor");
  return scale(sum(a), S(1) / static_cast<S>(n));
}

template <typename S>
Var<S> expand_scalar(const Var<S>& a, const Shape& shape) {
  if (a.value().size() != 1) throw ArgumentError("expand_scalar: input must have one element");
  Tensor<S> out = Tensor<S>::constant(shape, a.value()[0]);
  const Shape in_shape = a.shape();
  return make_op<S>("expand_scalar", std::move(out), {a},
                    [in_shape](const Var<S>& g, const std::vector<bool>&) -> VarList<S> {
                      return {reshape(sum(g), in_shape)};
                    });
}

template <typename S>
Var<S> sum_per_sample(const Var<S>& a) {
  const Index n = a.shape().at(0), inner = inner_size<S>(a.shape());
  Tensor<S> out({n});
  if (inner > 0) out.vec() = a.value().matrix(n, inner).rowwise().sum();
  const Shape shape = a.shape();
  return make_op<S>("sum_per_sample", std::move(out), {a},
                    [shape](const Var<S>& g, const std::vector<bool>&) -> VarList<S> {
                      return {expand_per_sample(g, shape)};
                    });
}

template <typename S>
Var<S> mean_per_sample(const Var<S>& a) {
  const Index inner = inner_size<S>(a.shape());
  if (inner == 0) throw ArgumentError("mean_per_sample: empty samples");
  return scale(sum_per_sample(a), S(1) / static_cast<S>(inner));
}

template <typename S>
Var<S> expand_per_sample(const Var<S>& a, const Shape& shape) {
  require_rank("expand_per_sample", a, 1);
  if (shape.empty() || shape[0] != a.shape()[0]) {
    throw ArgumentError("expand_per_sample: cannot expand " + to_string(a.shape()) + " to " + to_string(shape));
  }
  const Index n = shape[0], inner = inner_size<S>(shape);
  Tensor<S> out(shape);
  if (inner > 0) out.matrix(n, inner) = a.value().vec().replicate(1, inner);
  return make_op<S>("expand_per_sample", std::move(out), {a},
                    [](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {sum_per_sample(g)}; });
}

// ---------------------------------------------------------------------- shape

template <typename S>
Var<S> reshape(const Var<S>& a, const Shape& shape) {
  if (numel(shape) != a.value().size()) {
    throw ArgumentError("reshape: cannot reshape " + to_string(a.shape()) + " to " + to_string(shape));
  }
  const Shape in_shape = a.shape();
  return make_op<S>("reshape", a.value().reshaped(shape), {a},
                    [in_shape](const Var<S>& g, const std::vector<bool>&) -> VarList<S> {
                      return {reshape(g, in_shape)};
                    });
}

template <typename S>
Var<S> flatten(const Var<S>& a) {
  const Index n = a.shape().at(0);
  return reshape(a, {n, inner_size<S>(a.shape())});
}

template <typename S>
Var<S> concat_channels(const Var<S>& a, const Var<S>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sa.size() != sb.size() || sa[0] != sb[0] ||
      !std::equal(sa.begin() + 2, sa.end(), sb.begin() + 2)) {
    throw ArgumentError("concat_channels: incompatible shapes " + to_string(sa) + " and " + to_string(sb));
  }
  const Index n = sa[0], ca = sa[1], cb = sb[1];
  const Index plane = numel(Shape(sa.begin() + 2, sa.end()));
  Shape out_shape = sa;
  out_shape[1] = ca + cb;
  Tensor<S> out(out_shape);
  for (Index i = 0; i < n; ++i) {
    std::copy_n(a.value().data() + i * ca * plane, ca * plane, out.data() + i * (ca + cb) * plane);
    std::copy_n(b.value().data() + i * cb * plane, cb * plane, out.data() + (i * (ca + cb) + ca) * plane);
  }
  return make_op<S>(
      "concat_channels", std::move(out), {a, b},
      [sa, sb, n, ca, cb, plane](const Var<S>& g, const std::vector<bool>& needs) -> VarList<S> {
        VarList<S> grads(2);
        if (needs[0]) {
          Tensor<S> ga(sa);
          for (Index i = 0; i < n; ++i)
            std::copy_n(g.value().data() + i * (ca + cb) * plane, ca * plane, ga.data() + i * ca * plane);
          grads[0] = constant(std::move(ga));
        }
        if (needs[1]) {
          Tensor<S> gb(sb);
          for (Index i = 0; i < n; ++i)
            std::copy_n(g.value().data() + (i * (ca + cb) + ca) * plane, cb * plane, gb.data() + i * cb * plane);
          grads[1] = constant(std::move(gb));
        }
        return grads;
      },
      false);
}

// ------------------------------------------------------------- linear algebra

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b, bool transpose_a, bool transpose_b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const auto am = a.value().matrix(a.shape()[0], a.shape()[1]);
  const auto bm = b.value().matrix(b.shape()[0], b.shape()[1]);
  const Index rows = transpose_a ? am.cols() : am.rows();
  const Index inner_a = transpose_a ? am.rows() : am.cols();
  const Index inner_b = transpose_b ? bm.cols() : bm.rows();
  const Index cols = transpose_b ? bm.rows() : bm.cols();
  if (inner_a != inner_b) {
    throw ArgumentError("matmul: inner dimensions differ for " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  Tensor<S> out({rows, cols});
  auto om = out.matrix(rows, cols);
  if (!transpose_a && !transpose_b) om.noalias() = am * bm;
  if (!transpose_a && transpose_b) om.noalias() = am * bm.transpose();
  if (transpose_a && !transpose_b) om.noalias() = am.transpose() * bm;
  if (transpose_a && transpose_b) om.noalias() = am.transpose() * bm.transpose();
  return make_op<S>("matmul", std::move(out), {a, b},
                    [a, b, transpose_a, transpose_b](const Var<S>& g, const std::vector<bool>& needs) -> VarList<S> {
                      VarList<S> grads(2);
                      if (needs[0]) grads[0] = transpose_a ? matmul(b, g, transpose_b, true) : matmul(g, b, false, !transpose_b);
                      if (needs[1]) grads[1] = transpose_b ? matmul(g, a, true, transpose_a) : matmul(a, g, !transpose_a, false);
                      return grads;
                    });
}

namespace {
// View of x[N, C, rest...] as N blocks of C x plane.
struct ChannelLayout {
  Index n, c, plane;
};
ChannelLayout channel_layout(const Shape& shape, const char* op) {
  if (shape.size() < 2) throw ArgumentError(std::string(op) + ": expected at least rank 2, got " + to_string(shape));
  return {shape[0], shape[1], numel(Shape(shape.begin() + 2, shape.end()))};
}
}  // namespace

template <typename S>
Var<S> channel_broadcast(const Var<S>& b, const Shape& shape) {
  require_rank("channel_broadcast", b, 1);
  const ChannelLayout l = channel_layout(shape, "channel_broadcast");
  if (b.shape()[0] != l.c) {
    throw ArgumentError("channel_broadcast: " + to_string(b.shape()) + " does not match channels of " + to_string(shape));
  }
  Tensor<S> out(shape);
  for (Index i = 0; i < l.n; ++i) {
    for (Index ch = 0; ch < l.c; ++ch) {
      std::fill_n(out.data() + (i * l.c + ch) * l.plane, l.plane, b.value()[ch]);
    }
  }
  return make_op<S>("channel_broadcast", std::move(out), {b},
                    [](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {channel_sum(g)}; });
}

template <typename S>
Var<S> channel_sum(const Var<S>& x) {
  const ChannelLayout l = channel_layout(x.shape(), "channel_sum");
  Tensor<S> out({l.c});
  for (Index i = 0; i < l.n; ++i) {
    for (Index ch = 0; ch < l.c; ++ch) {
      const S* p = x.value().data() + (i * l.c + ch) * l.plane;
      S acc = 0;
      for (Index k = 0; k < l.plane; ++k) acc += p[k];
      out[ch] += acc;
    }
  }
  const Shape shape = x.shape();
  return make_op<S>("channel_sum", std::move(out), {x},
                    [shape](const Var<S>& g, const std::vector<bool>&) -> VarList<S> {
                      return {channel_broadcast(g, shape)};
                    });
}

template <typename S>
Var<S> bias_add(const Var<S>& x, const Var<S>& b) {
  require_rank("bias_add", b, 1);
  const ChannelLayout l = channel_layout(x.shape(), "bias_add");
  if (b.shape()[0] != l.c) {
    throw ArgumentError("bias_add: bias " + to_string(b.shape()) + " does not match " + to_string(x.shape()));
  }
  Tensor<S> out = x.value();
  for (Index i = 0; i < l.n; ++i) {
    for (Index ch = 0; ch < l.c; ++ch) {
      S* p = out.data() + (i * l.c + ch) * l.plane;
      const S v = b.value()[ch];
      for (Index k = 0; k < l.plane; ++k) p[k] += v;
    }
  }
  return make_op<S>("bias_add", std::move(out), {x, b}, [](const Var<S>& g, const std::vector<bool>& needs) -> VarList<S> {
    return {g, needs[1] ? channel_sum(g) : Var<S>()};
  });
}

template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  return bias_add(matmul(x, w, false, true), b);
}

// ---------------------------------------------------------------- convolution

template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, ConvGeometry geometry) {
  Tensor<S> out = kernels::conv2d(x.value(), w.value(), geometry);
  const Shape x_shape = x.shape(), w_shape = w.shape();
  return make_op<S>("conv2d", std::move(out), {x, w},
                    [x, w, x_shape, w_shape, geometry](const Var<S>& g, const std::vector<bool>& needs) -> VarList<S> {
                      VarList<S> grads(2);
                      if (needs[0]) grads[0] = conv2d_input_grad(g, w, x_shape, geometry);
                      if (needs[1]) grads[1] = conv2d_weight_grad(x, g, w_shape, geometry);
                      return grads;
                    });
}

template <typename S>
Var<S> conv2d_input_grad(const Var<S>& grad_out, const Var<S>& w, const Shape& input_shape, ConvGeometry geometry) {
  Tensor<S> out = kernels::conv2d_input_grad(grad_out.value(), w.value(), input_shape, geometry);
  const Shape w_shape = w.shape();
  return make_op<S>("conv2d_input_grad", std::move(out), {grad_out, w},
                    [grad_out, w, w_shape, geometry](const Var<S>& g, const std::vector<bool>& needs) -> VarList<S> {
                      VarList<S> grads(2);
                      if (needs[0]) grads[0] = conv2d(g, w, geometry);
                      if (needs[1]) grads[1] = conv2d_weight_grad(g, grad_out, w_shape, geometry);
                      return grads;
                    });
}

template <typename S>
Var<S> conv2d_weight_grad(const Var<S>& x, const Var<S>& grad_out, const Shape& weight_shape, ConvGeometry geometry) {
  Tensor<S> out = kernels::conv2d_weight_grad(x.value(), grad_out.value(), weight_shape, geometry);
  const Shape x_shape = x.shape();
  return make_op<S>("conv2d_weight_grad", std::move(out), {x, grad_out},
                    [x, grad_out, x_shape, geometry](const Var<S>& g, const std::vector<bool>& needs) -> VarList<S> {
                      VarList<S> grads(2);
                      if (needs[0]) grads[0] = conv2d_input_grad(grad_out, g, x_shape, geometry);
                      if (needs[1]) grads[1] = conv2d(x, g, geometry);
                      return grads;
                    });
}

template <typename S>
Var<S> max_pool2d(const Var<S>& x, Index kernel, ConvGeometry geometry) {
  require_rank("max_pool2d", x, 4);
  const Shape& s = x.shape();
  const Index n = s[0], c = s[1], h = s[2], w = s[3];
  const Index ho = conv_output_size(h, kernel, geometry), wo = conv_output_size(w, kernel, geometry);
  if (ho <= 0 || wo <= 0) throw ArgumentError("max_pool2d: window larger than input " + to_string(s));
  Tensor<S> out({n, c, ho, wo});
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(out.size()));
  const S* in = x.value().data();
  Index o = 0;
  for (Index plane = 0; plane < n * c; ++plane) {
    const S* src = in + plane * h * w;
    for (Index oy = 0; oy < ho; ++oy) {
      for (Index ox = 0; ox < wo; ++ox, ++o) {
        Index best = -1;
        S best_value = S(0);
        for (Index i = 0; i < kernel; ++i) {
          const Index iy = oy * geometry.stride - geometry.pad + i;
          if (iy < 0 || iy >= h) continue;
          for (Index j = 0; j < kernel; ++j) {
            const Index ix = ox * geometry.stride - geometry.pad + j;
            if (ix < 0 || ix >= w) continue;
            const S v = src[iy * w + ix];
            if (best < 0 || v > best_value) {
              best = iy * w + ix;
              best_value = v;
            }
          }
        }
        out[o] = best_value;
        (*argmax)[static_cast<std::size_t>(o)] = plane * h * w + best;
      }
    }
  }
  return make_op<S>(
      "max_pool2d", std::move(out), {x},
      [argmax, s](const Var<S>& g, const std::vector<bool>&) -> VarList<S> {
        Tensor<S> gx(s);
        for (std::size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += g.value()[static_cast<Index>(i)];
        return {constant(std::move(gx))};
      },
      false);
}

template <typename S>
Var<S> upsample_nearest2x(const Var<S>& x) {
  require_rank("upsample_nearest2x", x, 4);
  const Shape& s = x.shape();
  const Index planes = s[0] * s[1], h = s[2], w = s[3];
  Tensor<S> out({s[0], s[1], 2 * h, 2 * w});
  for (Index p = 0; p < planes; ++p) {
    const S* src = x.value().data() + p * h * w;
    S* dst = out.data() + p * 4 * h * w;
    for (Index y = 0; y < 2 * h; ++y) {
      for (Index xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
    }
  }
  return make_op<S>("upsample_nearest2x", std::move(out), {x},
                    [](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {sum_pool2x(g)}; });
}

template <typename S>
Var<S> sum_pool2x(const Var<S>& x) {
  require_rank("sum_pool2x", x, 4);
  const Shape& s = x.shape();
  if (s[2] % 2 || s[3] % 2) throw ArgumentError("sum_pool2x: spatial size must be even, got " + to_string(s));
  const Index planes = s[0] * s[1], h = s[2] / 2, w = s[3] / 2;
  Tensor<S> out({s[0], s[1], h, w});
  for (Index p = 0; p < planes; ++p) {
    const S* src = x.value().data() + p * 4 * h * w;
    S* dst = out.data() + p * h * w;
    for (Index y = 0; y < 2 * h; ++y) {
      for (Index xx = 0; xx < 2 * w; ++xx) dst[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
    }
  }
  return make_op<S>("sum_pool2x", std::move(out), {x},
                    [](const Var<S>& g, const std::vector<bool>&) -> VarList<S> { return {upsample_nearest2x(g)}; });
}

// ------------------------------------------------------------- classification

namespace kernels {

template <typename S>
Tensor<S> log_softmax_rows(const Tensor<S>& logits) {
  if (logits.rank() != 2) throw ArgumentError("log_softmax: expected [N, A], got " + to_string(logits.shape()));
  const Index n = logits.shape()[0], a = logits.shape()[1];
  Tensor<S> out(logits.shape());
  auto in = logits.matrix(n, a);
  auto om = out.matrix(n, a);
  for (Index i = 0; i < n; ++i) {
    const S m = in.row(i).maxCoeff();
    const S lse = m + std::log((in.row(i).array() - m).exp().sum());
    om.row(i) = (in.row(i).array() - lse).matrix();
  }
  return out;
}

template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& logits) {
  Tensor<S> out = log_softmax_rows(logits);
  out.vec() = out.vec().array().exp().matrix();
  return out;
}

}  // namespace kernels

template <typename S>
Var<S> log_softmax(const Var<S>& logits) {
  Tensor<S> out = kernels::log_softmax_rows(logits.value());
  Tensor<S> probs(out.shape(), out.vec().array().exp().matrix());
  const Index n = out.shape()[0], a = out.shape()[1];
  return make_op<S>(
      "log_softmax", std::move(out), {logits},
      [probs, n, a](const Var<S>& g, const std::vector<bool>&) -> VarList<S> {
        Tensor<S> gx(probs.shape());
        auto gm = g.value().matrix(n, a);
        auto pm = probs.matrix(n, a);
        auto out = gx.matrix(n, a);
        for (Index i = 0; i < n; ++i) out.row(i) = gm.row(i) - pm.row(i) * gm.row(i).sum();
        return {constant(std::move(gx))};
      },
      false);
}

template <typename S>
Var<S> gather_columns(const Var<S>& x, const std::vector<int>& columns) {
  require_rank("gather_columns", x, 2);
  const Index n = x.shape()[0], a = x.shape()[1];
  if (static_cast<Index>(columns.size()) != n) {
    throw ArgumentError("gather_columns: " + std::to_string(columns.size()) + " indices for " + std::to_string(n) + " rows");
  }
  Tensor<S> out({n});
  for (Index i = 0; i < n; ++i) {
    const int col = columns[static_cast<std::size_t>(i)];
    if (col < 0 || col >= a) throw ArgumentError("gather_columns: index " + std::to_string(col) + " out of range");
    out[i] = x.value()[i * a + col];
  }
  const Shape shape = x.shape();
  return make_op<S>(
      "gather_columns", std::move(out), {x},
      [columns, shape, a](const Var<S>& g, const std::vector<bool>&) -> VarList<S> {
        Tensor<S> gx(shape);
        for (std::size_t i = 0; i < columns.size(); ++i) {
          gx[static_cast<Index>(i) * a + columns[i]] = g.value()[static_cast<Index>(i)];
        }
        return {constant(std::move(gx))};
      },
      false);
}

template <typename S>
Var<S> cross_entropy(const Var<S>& logits, const std::vector<int>& labels) {
  return neg(mean(gather_columns(log_softmax(logits), labels)));
}

#define THINKER_INSTANTIATE_OPS(S)                                                                       \
  template Var<S> add<S>(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> sub<S>(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> mul<S>(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> minimum<S>(const Var<S>&, const Var<S>&);                                              \
  template Var<S> maximum<S>(const Var<S>&, const Var<S>&);                                              \
  template Var<S> neg<S>(const Var<S>&);                                                                 \
  template Var<S> scale<S>(const Var<S>&, S);                                                            \
  template Var<S> add_scalar<S>(const Var<S>&, S);                                                       \
  template Var<S> mul_const<S>(const Var<S>&, const Tensor<S>&);                                         \
  template Var<S> add_const<S>(const Var<S>&, const Tensor<S>&);                                         \
  template Var<S> square<S>(const Var<S>&);                                                              \
  template Var<S> abs<S>(const Var<S>&);                                                                 \
  template Var<S> clamp<S>(const Var<S>&, S, S);                                                         \
  template Var<S> leaky_relu<S>(const Var<S>&, S);                                                       \
  template Var<S> sqrt<S>(const Var<S>&);                                                                \
  template Var<S> exp<S>(const Var<S>&);                                                                 \
  template Var<S> tanh<S>(const Var<S>&);                                                                \
  template Var<S> instance_norm<S>(const Var<S>&, S);                                                    \
  template Var<S> sum<S>(const Var<S>&);                                                                 \
  template Var<S> mean<S>(const Var<S>&);                                                                \
  template Var<S> expand_scalar<S>(const Var<S>&, const Shape&);                                         \
  template Var<S> sum_per_sample<S>(const Var<S>&);                                                      \
  template Var<S> mean_per_sample<S>(const Var<S>&);                                                     \
  template Var<S> expand_per_sample<S>(const Var<S>&, const Shape&);                                     \
  template Var<S> reshape<S>(const Var<S>&, const Shape&);                                               \
  template Var<S> flatten<S>(const Var<S>&);                                                             \
  template Var<S> concat_channels<S>(const Var<S>&, const Var<S>&);                                      \
  template Var<S> matmul<S>(const Var<S>&, const Var<S>&, bool, bool);                                   \
  template Var<S> bias_add<S>(const Var<S>&, const Var<S>&);                                             \
  template Var<S> channel_sum<S>(const Var<S>&);                                                         \
  template Var<S> channel_broadcast<S>(const Var<S>&, const Shape&);                                     \
  template Var<S> linear<S>(const Var<S>&, const Var<S>&, const Var<S>&);                                \
  template Var<S> conv2d<S>(const Var<S>&, const Var<S>&, ConvGeometry);                                 \
  template Var<S> conv2d_input_grad<S>(const Var<S>&, const Var<S>&, const Shape&, ConvGeometry);        \
  template Var<S> conv2d_weight_grad<S>(const Var<S>&, const Var<S>&, const Shape&, ConvGeometry);       \
  template Var<S> max_pool2d<S>(const Var<S>&, Index, ConvGeometry);                                     \
  template Var<S> upsample_nearest2x<S>(const Var<S>&);                                                  \
  template Var<S> sum_pool2x<S>(const Var<S>&);                                                          \
  template Var<S> log_softmax<S>(const Var<S>&);                                                         \
  template Var<S> gather_columns<S>(const Var<S>&, const std::vector<int>&);                             \
  template Var<S> cross_entropy<S>(const Var<S>&, const std::vector<int>&);                              \
  template Tensor<S> kernels::log_softmax_rows<S>(const Tensor<S>&);                                     \
  template Tensor<S> kernels::softmax_rows<S>(const Tensor<S>&);

THINKER_INSTANTIATE_OPS(float)
THINKER_INSTANTIATE_OPS(double)

}  // namespace thinker::nn
