#pragma once

#include <cstdint>
#include <vector>

#include "rsbm/metrics.hpp"
#include "rsbm/prior.hpp"
#include "rsbm/sampler.hpp"
#include "rsbm/toy_data.hpp"

namespace rsbm {

/// Independent, reproducible random stream for (seed, stream id).
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

/// Everything needed to train one prior + velocity model pair.
struct ExperimentConfig {
  BridgeConfig bridge;
  TargetKind target = TargetKind::v;
  PriorKind prior;
  VelocityArch arch;
  int epochs = 30;
  double lr = 1e-4;
  int batch = 256;
  PriorTrainOptions prior_training;
  bool hide_phase = false;
  std::uint64_t seed = 0;
};

struct TrainedPipeline {
  VelocityModel model;
  Prior prior;
  std::vector<double> loss_trace;
  bool hide_phase = false;
};

/// Two-phase training: fit the learned prior (if selected), then the velocity
/// field on bridges between data and prior endpoints.
TrainedPipeline train_pipeline(const Dataset& train_set, const ExperimentConfig& cfg);

/// Builds the untrained pipeline (prior fitted, velocity initialised only).
TrainedPipeline init_pipeline(const Dataset& train_set, const ExperimentConfig& cfg);

/// Continues velocity training of an initialised pipeline.
void train_velocity(TrainedPipeline& pipeline, const Dataset& train_set, const ExperimentConfig& cfg);

struct EvalOptions {
  Solver solver = Solver::heun;
  int k = 3;
  double rho = 7.0;
  std::uint64_t seed = 0;
  /// When false the prior endpoint itself is the prediction (prior-only row).
  bool use_bridge = true;
};

struct Evaluation {
  EvalReport report;
  std::vector<Trajectory> predictions;
};

/// One prior draw per test sample (seeded by options.seed), then ODE inference.
Evaluation evaluate(const TrainedPipeline& pipeline, const Dataset& test_set, const EvalOptions& options);

}  // namespace rsbm
