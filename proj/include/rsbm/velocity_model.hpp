#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rsbm/bridge.hpp"
#include "rsbm/nn.hpp"

namespace rsbm {

/// Low-dimensional conditioning vector standing in for a perception embedding.
struct ContextVector {
  static constexpr int kDefaultDim = 8;
  std::vector<double> values;

  int dim() const { return static_cast<int>(values.size()); }
  bool all_finite() const;
};

/// What the network head regresses onto.
enum class TargetKind { v, x0, eps };

std::string to_string(TargetKind kind);
TargetKind parse_target_kind(const std::string& name);

struct VelocityArch {
  int horizon = Trajectory::kDefaultHorizon;
  int context_dim = ContextVector::kDefaultDim;
  std::vector<int> hidden = {128, 128};
  int time_embed_dim = 16;

  int dim() const { return 2 * horizon; }
  friend bool operator==(const VelocityArch&, const VelocityArch&) = default;
};

/// Conditional field v_theta(a_t, t, c): an MLP over the flattened trajectory
/// whose hidden layers are modulated by FiLM scale/shift computed from the
/// sinusoidal time embedding concatenated with the context.
///
///   u_l = (W_l h_{l-1} + b_l) * (1 + gamma_l) + beta_l,   h_l = silu(u_l)
///   [gamma_l; beta_l] = F_l [emb(t); c] + g_l
///   out = W_o h_L + b_o
///
/// The bridge config is part of the model: the time embedding covers
/// [sigma_min, sigma_max] and the sampler converts head outputs with it.
class VelocityModel {
 public:
  VelocityModel() = default;
  VelocityModel(VelocityArch arch, TargetKind target, BridgeConfig bridge);

  const VelocityArch& arch() const { return arch_; }
  TargetKind target() const { return target_; }
  const BridgeConfig& bridge() const { return bridge_; }

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  size_t num_params() const { return params_.size(); }

  /// Fan-in uniform init with a zeroed output layer (initial field is zero).
  void init(Rng& rng);

  /// Time features: sin/cos pairs over log-spaced frequencies.
  nn::Vector time_embedding(double t) const;

  /// Raw head output for one input (D-vector; interpretation per target()).
  std::vector<double> forward(const Trajectory& a_t, double t, const ContextVector& c) const;

  /// Batched forward. Columns are samples: a_t is D x B, c is d x B.
  struct Tape {
    nn::Matrix cond;
    std::vector<nn::Matrix> inputs;
    std::vector<nn::Matrix> linear;
    std::vector<nn::Matrix> gamma;
    std::vector<nn::Matrix> pre;
  };
  nn::Matrix forward_batch(const nn::Matrix& a_t, std::span<const double> t, const nn::Matrix& c,
                           Tape* tape = nullptr) const;

  /// Accumulates d loss / d params into grad, given d loss / d output.
  void backward_batch(const Tape& tape, const nn::Matrix& d_out, std::span<double> grad) const;

 private:
  struct FilmLayer {
    nn::DenseSlot linear;
    nn::DenseSlot film;
  };

  VelocityArch arch_;
  TargetKind target_ = TargetKind::v;
  BridgeConfig bridge_;
  std::vector<FilmLayer> layers_;
  nn::DenseSlot head_;
  std::vector<double> frequencies_;
  std::vector<double> params_;
};

/// Converts a head output into a velocity for the ODE sampler.
///   v:   identity
///   x0:  v = dmu_dt(x0_hat, aT, t) + dlog_sigma_dt (a_t - mu_hat)
///   eps: same with x0_hat = (a_t - s aT - sigma eps_hat) / (1 - s)
/// Throws PoleError when 1 - s_t < 1e-9.
Trajectory to_velocity(std::span<const double> head_output, const Trajectory& a_t,
                       const Trajectory& aT, double t, const BridgeConfig& cfg, TargetKind kind);

/// One training triple: data endpoint, prior endpoint, context.
struct CfmExample {
  Trajectory a0;
  Trajectory aT;
  ContextVector c;
};

/// A frozen flow-matching minibatch (bridge draws already made).
struct CfmBatch {
  nn::Matrix a_t;     // D x B
  std::vector<double> t;
  nn::Matrix c;       // d x B
  nn::Matrix target;  // D x B, native target of the head
};

/// Draws t and bridge noise per example and records the head's native target
/// (v*, a0, or the noise).
CfmBatch make_cfm_batch(std::span<const CfmExample> examples, TargetKind kind,
                        const BridgeConfig& cfg, Rng& rng);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean over batch and components of (head - target)^2 and its gradient.
LossAndGrad cfm_loss_and_grad(const VelocityModel& model, const CfmBatch& batch);

struct TrainState {
  VelocityModel model;
  nn::AdamW optimizer;
  long step = 0;
  int batch_size = 256;
  std::vector<double> loss_trace;  // one entry per epoch

  TrainState() = default;
  TrainState(VelocityModel m, double lr, int batch);
};

/// Supplies the prior endpoint for a training example (a0, c).
using TrainPriorFn = std::function<Trajectory(const Trajectory& a0, const ContextVector& c, Rng&)>;

struct TrainingItem {
  Trajectory a0;
  ContextVector c;
};

/// Runs epochs of shuffled minibatch AdamW on the flow-matching loss.
/// Throws DivergenceError on a non-finite loss.
void train(TrainState& state, std::span<const TrainingItem> dataset, int epochs,
           const TrainPriorFn& prior, Rng& rng);

}  // namespace rsbm
