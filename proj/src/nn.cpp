#include "rsbm/nn.hpp"

#include <cmath>

#include "rsbm/errors.hpp"

namespace rsbm::nn {

Matrix silu(const Matrix& x) {
  return x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
}

Matrix silu_grad(const Matrix& x) {
  return x.unaryExpr([](double v) {
    const double sig = 1.0 / (1.0 + std::exp(-v));
    return sig * (1.0 + v * (1.0 - sig));
  });
}

DenseSlot allocate_dense(int in, int out, size_t& cursor) {
  DenseSlot slot;
  slot.in = in;
  slot.out = out;
  slot.weight_offset = cursor;
  cursor += static_cast<size_t>(in) * out;
  slot.bias_offset = cursor;
  cursor += static_cast<size_t>(out);
  return slot;
}

void init_dense(const DenseSlot& slot, std::span<double> params, Rng& rng, double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(slot.in));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  auto w = slot.weight(params);
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = uniform(rng);
  }
  slot.bias(params).setZero();
}

Mlp::Mlp(std::vector<int> widths, size_t& cursor) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ShapeError("Mlp needs at least input and output widths");
  for (size_t i = 0; i + 1 < widths_.size(); ++i) {
    layers_.push_back(allocate_dense(widths_[i], widths_[i + 1], cursor));
  }
}

void Mlp::init(std::span<double> params, Rng& rng, bool zero_last) const {
  for (size_t i = 0; i < layers_.size(); ++i) {
    init_dense(layers_[i], params, rng);
    if (zero_last && i + 1 == layers_.size()) layers_[i].weight(params).setZero();
  }
}

Matrix Mlp::forward(std::span<const double> params, const Matrix& x, Tape* tape) const {
  if (x.rows() != in_dim()) throw ShapeError("Mlp::forward: input width mismatch");
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Matrix h = x;
  for (size_t i = 0; i < layers_.size(); ++i) {
    const auto& slot = layers_[i];
    if (tape) tape->inputs.push_back(h);
    Matrix z = slot.weight(params) * h;
    z.colwise() += slot.bias(params);
    if (i + 1 == layers_.size()) return z;
    if (tape) tape->pre.push_back(z);
    h = silu(z);
  }
  return h;
}

Matrix Mlp::backward(std::span<const double> params, const Tape& tape, const Matrix& d_out,
                     std::span<double> grad) const {
  Matrix d = d_out;
  for (size_t li = layers_.size(); li-- > 0;) {
    const auto& slot = layers_[li];
    if (li + 1 < layers_.size()) d = d.cwiseProduct(silu_grad(tape.pre[li]));
    slot.weight(grad) += d * tape.inputs[li].transpose();
    slot.bias(grad) += d.rowwise().sum();
    d = slot.weight(params).transpose() * d;
  }
  return d;
}

void AdamW::step_update(std::span<double> params, std::span<const double> grad) {
  if (m.size() != params.size()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  }
  ++step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    params[i] -= lr * weight_decay * params[i];
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace rsbm::nn
