#pragma once

#include <vector>

#include "rsbm/bridge.hpp"

namespace rsbm {

/// Strictly decreasing integration nodes t_0 > t_1 > ... > t_k.
struct TimestepSchedule {
  std::vector<double> steps;
  double rho = 7.0;

  /// Number of integration intervals.
  int k() const { return static_cast<int>(steps.size()) - 1; }

  /// Throws DomainError unless there are >= 2 nodes, strictly decreasing, t_k >= 0.
  void validate() const;
};

/// n power-law warped nodes from t_hi down to t_lo (both included):
/// (t_hi^{1/rho} + i/(n-1) (t_lo^{1/rho} - t_hi^{1/rho}))^rho.
std::vector<double> karras_nodes(int n, double t_hi, double t_lo, double rho);

/// Inference schedule with k intervals: k Karras nodes from cfg.t_max() down to
/// cfg.sigma_min followed by a terminal 0. The sampler evaluates the model at
/// the k positive nodes only. For k = 1 the schedule is {t_max, 0}.
TimestepSchedule karras_schedule(int k, const BridgeConfig& cfg, double rho = 7.0);

/// Same construction with an explicit top node.
TimestepSchedule karras_schedule(int k, double t_hi, double t_lo, double rho);

/// k equal intervals from t_hi to t_lo, no terminal zero.
TimestepSchedule uniform_schedule(int k, double t_hi, double t_lo);

/// t ~ U(sigma_min, t_max) for flow-matching training.
double sample_training_time(Rng& rng, const BridgeConfig& cfg);

}  // namespace rsbm
