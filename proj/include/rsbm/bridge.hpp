#pragma once

#include <span>
#include <vector>

#include "rsbm/trajectory.hpp"

namespace rsbm {

/// Fraction of sigma_max excluded at the top of the time interval. The
/// log-derivative of the bridge std has a pole at s_t = 1.
inline constexpr double kUpperClamp = 1e-3;

/// (sigma_max, sigma_min, epsilon) triple that selects one member of the
/// epsilon-rectified bridge family.
struct BridgeConfig {
  double sigma_max = 10.0;
  double sigma_min = 0.002;
  double epsilon = 0.5;

  /// Throws DomainError unless 0 < sigma_min < sigma_max and 0 < epsilon <= 1.
  void validate() const;

  /// Largest time at which training draws and velocity evaluations happen.
  double t_max() const { return (1.0 - kUpperClamp) * sigma_max; }

  friend bool operator==(const BridgeConfig&, const BridgeConfig&) = default;
};

/// One draw a_t ~ q_eps(. | a0, aT) together with everything used to make it,
/// so the target velocity is a pure function of the sample.
struct BridgeSample {
  Trajectory a_t;
  Trajectory mu_t;
  double t = 0.0;
  std::vector<double> noise;
  double sigma_t = 0.0;
};

/// s_t = t^2 / sigma_max^2 for t in [0, sigma_max].
double interp_coeff(double t, const BridgeConfig& cfg);

/// mu_t = s_t aT + (1 - s_t) a0.
Trajectory bridge_mean(const Trajectory& a0, const Trajectory& aT, double t,
                       const BridgeConfig& cfg);

/// sigma_{eps,t} = sqrt(eps t^2 (1 - s_t)); exactly zero at both endpoints.
double bridge_std(double t, const BridgeConfig& cfg);

/// d sigma_{eps,t} / dt = sqrt(eps) (1 - 2 s_t) / sqrt(1 - s_t), for t in [0, sigma_max).
double bridge_std_dt(double t, const BridgeConfig& cfg);

/// Draws noise ~ N(0, I_D) and returns a_t = mu_t + sigma_t * noise.
/// Requires t in [sigma_min, sigma_max).
BridgeSample sample_bridge(const Trajectory& a0, const Trajectory& aT, double t,
                           const BridgeConfig& cfg, Rng& rng);

/// Same as sample_bridge with caller-supplied noise (length D).
BridgeSample sample_bridge_with_noise(const Trajectory& a0, const Trajectory& aT, double t,
                                      const BridgeConfig& cfg, std::span<const double> noise);

/// d mu_t / dt = (2t / sigma_max^2) (aT - a0).
Trajectory dmu_dt(const Trajectory& a0, const Trajectory& aT, double t, const BridgeConfig& cfg);

/// d log sigma_{eps,t} / dt = (1 - 2 s_t) / (t (1 - s_t)). Epsilon does not
/// appear: the sqrt(eps) factors of sigma and its derivative cancel.
/// Valid on [sigma_min, sigma_max); throws PoleError at or beyond sigma_max.
double dlog_sigma_dt(double t, const BridgeConfig& cfg);

/// v* = dmu_dt + dlog_sigma_dt (a_t - mu_t).
Trajectory target_velocity(const BridgeSample& sample, const Trajectory& a0,
                           const Trajectory& aT, const BridgeConfig& cfg);

/// Per-component conditional variance of the target velocity,
/// eps (1 - 2 s_t)^2 / (1 - s_t), for t in [0, sigma_max).
double velocity_variance(double t, const BridgeConfig& cfg);

/// KL(q_eps || q_1) between the rectified and the standard bridge kernels:
/// (D / 2)(eps - 1 - ln eps).
double kl_rectified(double epsilon, int dim);

}  // namespace rsbm
