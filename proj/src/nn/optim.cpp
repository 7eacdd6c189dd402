#include "thinker/nn/optim.hpp"

#include <cmath>

namespace thinker::nn {

template <typename S>
Adam<S>::Adam(VarList<S> params, Options options) : params_(std::move(params)), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

template <typename S>
void Adam<S>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename S>
void Adam<S>::step() {
  ++steps_;
  const S b1 = static_cast<S>(options_.beta1);
  const S b2 = static_cast<S>(options_.beta2);
  const S lr = static_cast<S>(options_.lr);
  const S eps = static_cast<S>(options_.eps);
  const S bias1 = S(1) - static_cast<S>(std::pow(options_.beta1, static_cast<double>(steps_)));
  const S bias2 = S(1) - static_cast<S>(std::pow(options_.beta2, static_cast<double>(steps_)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor<S>& g = params_[i].grad();
    if (g.size() == 0) continue;
    auto& m = m_[i].vec();
    auto& v = v_[i].vec();
    m = b1 * m + (S(1) - b1) * g.vec();
    v = b2 * v + (S(1) - b2) * g.vec().cwiseAbs2();
    auto& p = params_[i].mutable_value().vec();
    p.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + eps);
  }
}

template <typename S>
double global_grad_norm(const VarList<S>& params) {
  double total = 0.0;
  for (const auto& p : params) {
    if (p.grad().size() == 0) continue;
    total += p.grad().vec().template cast<double>().squaredNorm();
  }
  return std::sqrt(total);
}

template <typename S>
double clip_grad_norm(const VarList<S>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const S factor = static_cast<S>(max_norm / (norm + 1e-6));
    for (auto p : params) {
      if (p.grad().size() == 0) continue;
      p.mutable_grad().vec() *= factor;
    }
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;
template double global_grad_norm<float>(const VarList<float>&);
template double global_grad_norm<double>(const VarList<double>&);
template double clip_grad_norm<float>(const VarList<float>&, double);
template double clip_grad_norm<double>(const VarList<double>&, double);

}  // namespace thinker::nn
