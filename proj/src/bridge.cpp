#include "rsbm/bridge.hpp"

#include <cmath>
#include <string>

#include "rsbm/errors.hpp"

namespace rsbm {

namespace {

void require_time(double t, double lo, const BridgeConfig& cfg, const char* what) {
  if (!(t >= lo && t <= cfg.sigma_max)) {
    throw DomainError(std::string(what) + ": t=" + std::to_string(t) + " outside [" +
                      std::to_string(lo) + ", " + std::to_string(cfg.sigma_max) + "]");
  }
}

void require_below_pole(double t, const BridgeConfig& cfg, const char* what) {
  if (t >= cfg.sigma_max) {
    throw PoleError(std::string(what) + ": t=" + std::to_string(t) +
                    " reaches the s_t = 1 pole (sigma_max=" + std::to_string(cfg.sigma_max) + ")");
  }
}

}  // namespace

void BridgeConfig::validate() const {
  if (!(sigma_min > 0.0 && sigma_min < sigma_max && std::isfinite(sigma_max))) {
    throw DomainError("bridge config requires 0 < sigma_min < sigma_max");
  }
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw DomainError("bridge config requires epsilon in (0, 1], got " + std::to_string(epsilon));
  }
}

double interp_coeff(double t, const BridgeConfig& cfg) {
  require_time(t, 0.0, cfg, "interp_coeff");
  return (t * t) / (cfg.sigma_max * cfg.sigma_max);
}

Trajectory bridge_mean(const Trajectory& a0, const Trajectory& aT, double t,
                       const BridgeConfig& cfg) {
  require_same_shape(a0, aT, "bridge_mean");
  const double s = interp_coeff(t, cfg);
  Trajectory mu(a0.horizon());
  for (int i = 0; i < mu.dim(); ++i) mu[i] = s * aT[i] + (1.0 - s) * a0[i];
  return mu;
}

double bridge_std(double t, const BridgeConfig& cfg) {
  const double s = interp_coeff(t, cfg);
  // At t = sigma_max, s is exactly 1 in floating point, so the result is exactly 0.
  return std::sqrt(cfg.epsilon * t * t * (1.0 - s));
}

double bridge_std_dt(double t, const BridgeConfig& cfg) {
  require_below_pole(t, cfg, "bridge_std_dt");
  const double s = interp_coeff(t, cfg);
  return std::sqrt(cfg.epsilon) * (1.0 - 2.0 * s) / std::sqrt(1.0 - s);
}

BridgeSample sample_bridge(const Trajectory& a0, const Trajectory& aT, double t,
                           const BridgeConfig& cfg, Rng& rng) {
  const std::vector<double> noise = standard_normal(a0.dim(), rng);
  return sample_bridge_with_noise(a0, aT, t, cfg, noise);
}

BridgeSample sample_bridge_with_noise(const Trajectory& a0, const Trajectory& aT, double t,
                                      const BridgeConfig& cfg, std::span<const double> noise) {
  if (!(t >= cfg.sigma_min && t < cfg.sigma_max)) {
    throw DomainError("sample_bridge: t=" + std::to_string(t) + " outside [sigma_min, sigma_max)");
  }
  if (static_cast<int>(noise.size()) != a0.dim()) {
    throw ShapeError("sample_bridge: noise length does not match trajectory dimension");
  }
  BridgeSample out;
  out.t = t;
  out.mu_t = bridge_mean(a0, aT, t, cfg);
  out.sigma_t = bridge_std(t, cfg);
  out.noise.assign(noise.begin(), noise.end());
  out.a_t = out.mu_t;
  for (int i = 0; i < out.a_t.dim(); ++i) out.a_t[i] += out.sigma_t * noise[i];
  return out;
}

Trajectory dmu_dt(const Trajectory& a0, const Trajectory& aT, double t, const BridgeConfig& cfg) {
  require_same_shape(a0, aT, "dmu_dt");
  require_time(t, 0.0, cfg, "dmu_dt");
  const double rate = 2.0 * t / (cfg.sigma_max * cfg.sigma_max);
  Trajectory out(a0.horizon());
  for (int i = 0; i < out.dim(); ++i) out[i] = rate * (aT[i] - a0[i]);
  return out;
}

double dlog_sigma_dt(double t, const BridgeConfig& cfg) {
  require_below_pole(t, cfg, "dlog_sigma_dt");
  if (t < cfg.sigma_min) {
    throw DomainError("dlog_sigma_dt: t=" + std::to_string(t) + " below sigma_min");
  }
  const double s = interp_coeff(t, cfg);
  return (1.0 - 2.0 * s) / (t * (1.0 - s));
}

Trajectory target_velocity(const BridgeSample& sample, const Trajectory& a0,
                           const Trajectory& aT, const BridgeConfig& cfg) {
  require_same_shape(sample.a_t, a0, "target_velocity");
  Trajectory v = dmu_dt(a0, aT, sample.t, cfg);
  const double rate = dlog_sigma_dt(sample.t, cfg);
  for (int i = 0; i < v.dim(); ++i) v[i] += rate * (sample.a_t[i] - sample.mu_t[i]);
  return v;
}

double velocity_variance(double t, const BridgeConfig& cfg) {
  require_below_pole(t, cfg, "velocity_variance");
  const double s = interp_coeff(t, cfg);
  const double num = 1.0 - 2.0 * s;
  return cfg.epsilon * num * num / (1.0 - s);
}

double kl_rectified(double epsilon, int dim) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw DomainError("kl_rectified: epsilon must be in (0, 1], got " + std::to_string(epsilon));
  }
  if (dim <= 0) throw DomainError("kl_rectified: dimension must be positive");
  return 0.5 * dim * (epsilon - 1.0 - std::log(epsilon));
}

}  // namespace rsbm
