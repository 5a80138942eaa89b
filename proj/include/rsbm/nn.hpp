#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "rsbm/trajectory.hpp"

namespace rsbm::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstVectorMap = Eigen::Map<const Vector>;
using VectorMap = Eigen::Map<Vector>;

/// SiLU x * sigmoid(x) and its derivative.
Matrix silu(const Matrix& x);
Matrix silu_grad(const Matrix& x);

/// Position of a dense layer (W: out x in, b: out) inside a flat parameter vector.
struct DenseSlot {
  int in = 0;
  int out = 0;
  size_t weight_offset = 0;
  size_t bias_offset = 0;

  size_t size() const { return static_cast<size_t>(in) * out + out; }

  ConstMatrixMap weight(std::span<const double> p) const {
    return ConstMatrixMap(p.data() + weight_offset, out, in);
  }
  MatrixMap weight(std::span<double> p) const { return MatrixMap(p.data() + weight_offset, out, in); }
  ConstVectorMap bias(std::span<const double> p) const {
    return ConstVectorMap(p.data() + bias_offset, out);
  }
  VectorMap bias(std::span<double> p) const { return VectorMap(p.data() + bias_offset, out); }
};

/// Appends a dense slot to a running parameter count.
DenseSlot allocate_dense(int in, int out, size_t& cursor);

/// Uniform fan-in initialisation U(-1/sqrt(in), 1/sqrt(in)), zero bias.
void init_dense(const DenseSlot& slot, std::span<double> params, Rng& rng, double gain = 1.0);

/// Plain SiLU MLP over column batches; last layer linear.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> widths, size_t& cursor);

  struct Tape {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each hidden layer
  };

  int in_dim() const { return widths_.front(); }
  int out_dim() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }

  void init(std::span<double> params, Rng& rng, bool zero_last) const;

  Matrix forward(std::span<const double> params, const Matrix& x, Tape* tape = nullptr) const;

  /// Accumulates parameter gradients into grad; returns d loss / d input.
  Matrix backward(std::span<const double> params, const Tape& tape, const Matrix& d_out,
                  std::span<double> grad) const;

 private:
  std::vector<int> widths_;
  std::vector<DenseSlot> layers_;
};

/// Adam with decoupled weight decay.
struct AdamW {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  void step_update(std::span<double> params, std::span<const double> grad);
};

}  // namespace rsbm::nn
