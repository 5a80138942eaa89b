#include "rsbm/schedules.hpp"

#include <cmath>
#include <string>

#include "rsbm/errors.hpp"

namespace rsbm {

void TimestepSchedule::validate() const {
  if (steps.size() < 2) throw DomainError("schedule needs at least two nodes");
  for (size_t i = 1; i < steps.size(); ++i) {
    if (!(steps[i] < steps[i - 1])) {
      throw DomainError("schedule is not strictly decreasing at node " + std::to_string(i));
    }
  }
  if (steps.back() < 0.0) throw DomainError("schedule ends below zero");
}

std::vector<double> karras_nodes(int n, double t_hi, double t_lo, double rho) {
  if (n < 1) throw DomainError("karras_nodes: need at least one node");
  if (!(t_hi > t_lo && t_lo > 0.0)) throw DomainError("karras_nodes: need t_hi > t_lo > 0");
  if (!(rho > 0.0)) throw DomainError("karras_nodes: rho must be positive");
  if (n == 1) return {t_hi};

  const double hi = std::pow(t_hi, 1.0 / rho);
  const double lo = std::pow(t_lo, 1.0 / rho);
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double frac = static_cast<double>(i) / (n - 1);
    out[i] = std::pow(hi + frac * (lo - hi), rho);
  }
  out.front() = t_hi;
  out.back() = t_lo;
  return out;
}

TimestepSchedule karras_schedule(int k, const BridgeConfig& cfg, double rho) {
  cfg.validate();
  return karras_schedule(k, cfg.t_max(), cfg.sigma_min, rho);
}

TimestepSchedule karras_schedule(int k, double t_hi, double t_lo, double rho) {
  if (k < 1) throw DomainError("karras_schedule: k must be >= 1");
  TimestepSchedule out;
  out.rho = rho;
  out.steps = karras_nodes(k, t_hi, t_lo, rho);
  out.steps.push_back(0.0);
  out.validate();
  return out;
}

TimestepSchedule uniform_schedule(int k, double t_hi, double t_lo) {
  if (k < 1) throw DomainError("uniform_schedule: k must be >= 1");
  if (!(t_hi > t_lo && t_lo >= 0.0)) throw DomainError("uniform_schedule: need t_hi > t_lo >= 0");
  TimestepSchedule out;
  out.rho = 1.0;
  out.steps.resize(static_cast<size_t>(k) + 1);
  for (int i = 0; i <= k; ++i) out.steps[i] = t_hi + (t_lo - t_hi) * i / k;
  out.steps.back() = t_lo;
  return out;
}

double sample_training_time(Rng& rng, const BridgeConfig& cfg) {
  std::uniform_real_distribution<double> uniform(cfg.sigma_min, cfg.t_max());
  return uniform(rng);
}

}  // namespace rsbm
