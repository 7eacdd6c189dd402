#pragma once

#include <vector>

#include "thinker/nn/autograd.hpp"

// Differentiable ops over Var<Scalar>. Instantiated for float and double.
// Ops whose backward is itself built from recorded ops support double
// backward; the rest (tanh, exp, sqrt, max_pool2d, log_softmax, ...) are
// first-order only and the engine refuses to build higher-order graphs
// through them.
namespace thinker::nn {

struct ConvGeometry {
  Index stride = 1;
  Index pad = 0;
};

inline Index conv_output_size(Index in, Index kernel, const ConvGeometry& g) {
  return (in + 2 * g.pad - kernel) / g.stride + 1;
}

// Elementwise, same shapes.
template <typename S> Var<S> add(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> sub(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> mul(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> minimum(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> maximum(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> neg(const Var<S>& a);
template <typename S> Var<S> scale(const Var<S>& a, S factor);
template <typename S> Var<S> add_scalar(const Var<S>& a, S offset);
template <typename S> Var<S> mul_const(const Var<S>& a, const Tensor<S>& c);
template <typename S> Var<S> add_const(const Var<S>& a, const Tensor<S>& c);
template <typename S> Var<S> square(const Var<S>& a);
template <typename S> Var<S> abs(const Var<S>& a);
template <typename S> Var<S> clamp(const Var<S>& a, S lo, S hi);
template <typename S> Var<S> leaky_relu(const Var<S>& a, S slope);
template <typename S> Var<S> relu(const Var<S>& a) { return leaky_relu(a, S(0)); }
template <typename S> Var<S> sqrt(const Var<S>& a);
template <typename S> Var<S> exp(const Var<S>& a);
template <typename S> Var<S> tanh(const Var<S>& a);
// Per-sample, per-channel normalization over H x W (no affine). First order only.
template <typename S> Var<S> instance_norm(const Var<S>& x, S eps = S(1e-5));

// Reductions. Scalars have shape {}.
template <typename S> Var<S> sum(const Var<S>& a);
template <typename S> Var<S> mean(const Var<S>& a);
template <typename S> Var<S> expand_scalar(const Var<S>& a, const Shape& shape);
// Reduce every axis but the first: [N, ...] -> [N].
template <typename S> Var<S> sum_per_sample(const Var<S>& a);
template <typename S> Var<S> mean_per_sample(const Var<S>& a);
template <typename S> Var<S> expand_per_sample(const Var<S>& a, const Shape& shape);

// Shape.
template <typename S> Var<S> reshape(const Var<S>& a, const Shape& shape);
template <typename S> Var<S> flatten(const Var<S>& a);  // [N, ...] -> [N, rest]
template <typename S> Var<S> concat_channels(const Var<S>& a, const Var<S>& b);

// op(a) * op(b) for rank-2 operands; op transposes when the flag is set.
template <typename S> Var<S> matmul(const Var<S>& a, const Var<S>& b, bool transpose_a = false, bool transpose_b = false);
// Adds b[C] along axis 1 of x[N, C, ...].
template <typename S> Var<S> bias_add(const Var<S>& x, const Var<S>& b);
template <typename S> Var<S> channel_sum(const Var<S>& x);
template <typename S> Var<S> channel_broadcast(const Var<S>& b, const Shape& shape);
// x[N, in] * w[out, in]^T + b[out]
template <typename S> Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b);

// Convolution family: x[N,C,H,W], w[O,C,kh,kw]. The three ops are mutual
// adjoints, so conv2d is differentiable to any order.
template <typename S> Var<S> conv2d(const Var<S>& x, const Var<S>& w, ConvGeometry geometry);
template <typename S>
Var<S> conv2d_input_grad(const Var<S>& grad_out, const Var<S>& w, const Shape& input_shape, ConvGeometry geometry);
template <typename S>
Var<S> conv2d_weight_grad(const Var<S>& x, const Var<S>& grad_out, const Shape& weight_shape, ConvGeometry geometry);

template <typename S> Var<S> max_pool2d(const Var<S>& x, Index kernel, ConvGeometry geometry);
template <typename S> Var<S> upsample_nearest2x(const Var<S>& x);
template <typename S> Var<S> sum_pool2x(const Var<S>& x);

// Row-wise over [N, A].
template <typename S> Var<S> log_softmax(const Var<S>& logits);
template <typename S> Var<S> gather_columns(const Var<S>& x, const std::vector<int>& columns);
// Mean negative log-likelihood of `labels` under softmax(logits).
template <typename S> Var<S> cross_entropy(const Var<S>& logits, const std::vector<int>& labels);

// Raw kernels shared by the ops and by inference code.
namespace kernels {
template <typename S> Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, ConvGeometry g);
template <typename S>
Tensor<S> conv2d_input_grad(const Tensor<S>& grad_out, const Tensor<S>& w, const Shape& input_shape, ConvGeometry g);
template <typename S>
Tensor<S> conv2d_weight_grad(const Tensor<S>& x, const Tensor<S>& grad_out, const Shape& weight_shape, ConvGeometry g);
template <typename S> Tensor<S> softmax_rows(const Tensor<S>& logits);
template <typename S> Tensor<S> log_softmax_rows(const Tensor<S>& logits);
}  // namespace kernels

}  // namespace thinker::nn
