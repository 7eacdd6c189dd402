// im2col-based convolution kernels. A batch is processed in chunks of images
// whose column matrix fits a fixed element budget.
#include <algorithm>

#include "thinker/nn/ops.hpp"

namespace thinker::nn::kernels {

namespace {

struct ConvDims {
  Index n, c, h, w;  // input
  Index o, kh, kw;   // weight
  Index ho, wo;      // output
  Index k() const { return c * kh * kw; }
  Index p() const { return ho * wo; }
};

ConvDims make_dims(const Shape& input, const Shape& weight, const ConvGeometry& g, const char* op) {
  if (input.size() != 4 || weight.size() != 4) {
    throw ArgumentError(std::string(op) + ": expected rank-4 input and weight, got " + to_string(input) + " and " +
                        to_string(weight));
  }
  if (input[1] != weight[1]) {
    throw ArgumentError(std::string(op) + ": input channels " + std::to_string(input[1]) + " != weight channels " +
                        std::to_string(weight[1]));
  }
  if (g.stride < 1 || g.pad < 0) throw ArgumentError(std::string(op) + ": invalid stride/padding");
  ConvDims d{input[0], input[1], input[2], input[3], weight[0], weight[2], weight[3], 0, 0};
  d.ho = conv_output_size(d.h, d.kh, g);
  d.wo = conv_output_size(d.w, d.kw, g);
  if (d.ho <= 0 || d.wo <= 0) {
    throw ArgumentError(std::string(op) + ": kernel larger than padded input " + to_string(input));
  }
  return d;
}

Index images_per_chunk(const ConvDims& d) {
  constexpr Index budget = Index{1} << 18;
  return std::clamp<Index>(budget / std::max<Index>(d.k() * d.p(), 1), 1, std::max<Index>(d.n, 1));
}

// Output columns [lo, hi) whose input column ox*stride - pad + j is in range.
inline void valid_range(Index out, Index in, Index stride, Index offset, Index& lo, Index& hi) {
  // ox*stride + offset >= 0  and  ox*stride + offset < in
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  hi = in - offset <= 0 ? 0 : (in - offset + stride - 1) / stride;
  hi = std::min(hi, out);
  lo = std::min(lo, hi);
}

template <typename S>
void im2col(const S* image, const ConvDims& d, const ConvGeometry& g, S* cols, Index ld, Index offset) {
  for (Index c = 0; c < d.c; ++c) {
    const S* plane = image + c * d.h * d.w;
    for (Index i = 0; i < d.kh; ++i) {
      for (Index j = 0; j < d.kw; ++j) {
        S* row = cols + ((c * d.kh + i) * d.kw + j) * ld + offset;
        Index lo, hi;
        valid_range(d.wo, d.w, g.stride, j - g.pad, lo, hi);
        for (Index oy = 0; oy < d.ho; ++oy) {
          const Index iy = oy * g.stride - g.pad + i;
          S* out = row + oy * d.wo;
          if (iy < 0 || iy >= d.h) {
            std::fill(out, out + d.wo, S(0));
            continue;
          }
          std::fill(out, out + lo, S(0));
          std::fill(out + hi, out + d.wo, S(0));
          const S* src = plane + iy * d.w + (j - g.pad);
          if (g.stride == 1) {
            std::copy(src + lo, src + hi, out + lo);
          } else {
            for (Index ox = lo; ox < hi; ++ox) out[ox] = src[ox * g.stride];
          }
        }
      }
    }
  }
}

template <typename S>
void col2im(const S* cols, const ConvDims& d, const ConvGeometry& g, Index ld, Index offset, S* image) {
  for (Index c = 0; c < d.c; ++c) {
    S* plane = image + c * d.h * d.w;
    for (Index i = 0; i < d.kh; ++i) {
      for (Index j = 0; j < d.kw; ++j) {
        const S* row = cols + ((c * d.kh + i) * d.kw + j) * ld + offset;
        Index lo, hi;
        valid_range(d.wo, d.w, g.stride, j - g.pad, lo, hi);
        for (Index oy = 0; oy < d.ho; ++oy) {
          const Index iy = oy * g.stride - g.pad + i;
          if (iy < 0 || iy >= d.h) continue;
          const S* in = row + oy * d.wo;
          S* dst = plane + iy * d.w + (j - g.pad);
          if (g.stride == 1) {
            for (Index ox = lo; ox < hi; ++ox) dst[ox] += in[ox];
          } else {
            for (Index ox = lo; ox < hi; ++ox) dst[ox * g.stride] += in[ox];
          }
        }
      }
    }
  }
}

// Copies the [nb, O, P] block of an NCHW tensor into an O x (nb*P) matrix.
template <typename S>
void gather_output(const S* src, Index nb, Index o, Index p, S* dst) {
  const Index m = nb * p;
  for (Index b = 0; b < nb; ++b) {
    for (Index ch = 0; ch < o; ++ch) {
      std::copy_n(src + (b * o + ch) * p, p, dst + ch * m + b * p);
    }
  }
}

template <typename S>
void scatter_output(const S* src, Index nb, Index o, Index p, S* dst) {
  const Index m = nb * p;
  for (Index b = 0; b < nb; ++b) {
    for (Index ch = 0; ch < o; ++ch) {
      std::copy_n(src + ch * m + b * p, p, dst + (b * o + ch) * p);
    }
  }
}

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, ConvGeometry g) {
  const ConvDims d = make_dims(x.shape(), w.shape(), g, "conv2d");
  Tensor<S> y({d.n, d.o, d.ho, d.wo});
  const Index k = d.k(), p = d.p(), chunk = images_per_chunk(d);
  Eigen::Map<const RowMat<S>> wm(w.data(), d.o, k);
  std::vector<S> cols, out;
  for (Index n0 = 0; n0 < d.n; n0 += chunk) {
    const Index nb = std::min(chunk, d.n - n0), m = nb * p;
    cols.resize(static_cast<std::size_t>(k * m));
    for (Index b = 0; b < nb; ++b) im2col(x.data() + (n0 + b) * d.c * d.h * d.w, d, g, cols.data(), m, b * p);
    Eigen::Map<const RowMat<S>> cm(cols.data(), k, m);
    if (nb == 1) {
      Eigen::Map<RowMat<S>> om(y.data() + n0 * d.o * p, d.o, m);
      om.noalias() = wm * cm;
    } else {
      out.resize(static_cast<std::size_t>(d.o * m));
      Eigen::Map<RowMat<S>> om(out.data(), d.o, m);
      om.noalias() = wm * cm;
      scatter_output(out.data(), nb, d.o, p, y.data() + n0 * d.o * p);
    }
  }
  return y;
}

template <typename S>
Tensor<S> conv2d_input_grad(const Tensor<S>& grad_out, const Tensor<S>& w, const Shape& input_shape, ConvGeometry g) {
  const ConvDims d = make_dims(input_shape, w.shape(), g, "conv2d_input_grad");
  if (grad_out.shape() != Shape{d.n, d.o, d.ho, d.wo}) {
    throw ArgumentError("conv2d_input_grad: gradient shape " + to_string(grad_out.shape()) + " does not match output " +
                        to_string({d.n, d.o, d.ho, d.wo}));
  }
  Tensor<S> gx(input_shape);
  const Index k = d.k(), p = d.p(), chunk = images_per_chunk(d);
  Eigen::Map<const RowMat<S>> wm(w.data(), d.o, k);
  std::vector<S> cols, gbuf;
  for (Index n0 = 0; n0 < d.n; n0 += chunk) {
    const Index nb = std::min(chunk, d.n - n0), m = nb * p;
    const S* gptr = grad_out.data() + n0 * d.o * p;
    if (nb > 1) {
      gbuf.resize(static_cast<std::size_t>(d.o * m));
      gather_output(gptr, nb, d.o, p, gbuf.data());
      gptr = gbuf.data();
    }
    Eigen::Map<const RowMat<S>> gm(gptr, d.o, m);
    cols.resize(static_cast<std::size_t>(k * m));
    Eigen::Map<RowMat<S>> cm(cols.data(), k, m);
    cm.noalias() = wm.transpose() * gm;
    for (Index b = 0; b < nb; ++b) col2im(cols.data(), d, g, m, b * p, gx.data() + (n0 + b) * d.c * d.h * d.w);
  }
  return gx;
}

template <typename S>
Tensor<S> conv2d_weight_grad(const Tensor<S>& x, const Tensor<S>& grad_out, const Shape& weight_shape, ConvGeometry g) {
  const ConvDims d = make_dims(x.shape(), weight_shape, g, "conv2d_weight_grad");
  if (grad_out.shape() != Shape{d.n, d.o, d.ho, d.wo}) {
    throw ArgumentError("conv2d_weight_grad: gradient shape " + to_string(grad_out.shape()) + " does not match output " +
                        to_string({d.n, d.o, d.ho, d.wo}));
  }
  Tensor<S> gw(weight_shape);
  const Index k = d.k(), p = d.p(), chunk = images_per_chunk(d);
  Eigen::Map<RowMat<S>> gwm(gw.data(), d.o, k);
  std::vector<S> cols, gbuf;
  for (Index n0 = 0; n0 < d.n; n0 += chunk) {
    const Index nb = std::min(chunk, d.n - n0), m = nb * p;
    cols.resize(static_cast<std::size_t>(k * m));
    for (Index b = 0; b < nb; ++b) im2col(x.data() + (n0 + b) * d.c * d.h * d.w, d, g, cols.data(), m, b * p);
    const S* gptr = grad_out.data() + n0 * d.o * p;
    if (nb > 1) {
      gbuf.resize(static_cast<std::size_t>(d.o * m));
      gather_output(gptr, nb, d.o, p, gbuf.data());
      gptr = gbuf.data();
    }
    Eigen::Map<const RowMat<S>> gm(gptr, d.o, m);
    Eigen::Map<const RowMat<S>> cm(cols.data(), k, m);
    gwm.noalias() += gm * cm.transpose();
  }
  return gw;
}

#define THINKER_INSTANTIATE_CONV(S)                                                                     \
  template Tensor<S> conv2d<S>(const Tensor<S>&, const Tensor<S>&, ConvGeometry);                     \
  template Tensor<S> conv2d_input_grad<S>(const Tensor<S>&, const Tensor<S>&, const Shape&, ConvGeometry); \
  template Tensor<S> conv2d_weight_grad<S>(const Tensor<S>&, const Tensor<S>&, const Shape&, ConvGeometry);

THINKER_INSTANTIATE_CONV(float)
THINKER_INSTANTIATE_CONV(double)

}  // namespace thinker::nn::kernels
