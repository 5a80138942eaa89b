#pragma once

#include <functional>
#include <string>

#include "rsbm/prior.hpp"
#include "rsbm/schedules.hpp"
#include "rsbm/velocity_model.hpp"

namespace rsbm {

enum class Solver { heun, euler };

std::string to_string(Solver solver);
Solver parse_solver(const std::string& name);

/// A velocity field over trajectories; each call counts as one evaluation.
using VelocityField = std::function<Trajectory(const Trajectory& a, double t)>;

struct SamplerConfig {
  Solver solver = Solver::heun;
  TimestepSchedule schedule;
};

struct SampleResult {
  Trajectory a0_hat;
  int nfe = 0;
};

/// Heun over the schedule with signed steps dt = t_{i+1} - t_i < 0:
///   d1 = v(a, t_i), a~ = a + d1 dt, d2 = v(a~, t_{i+1}), a += (d1 + d2) dt / 2.
/// The last interval is a single Euler step with the slope evaluated at its
/// left node, so the field is never evaluated at the final node (t = 0 for
/// inference schedules) and k intervals cost 2k - 1 evaluations.
/// Throws DivergenceError on a non-finite state.
SampleResult heun_integrate(const VelocityField& field, const Trajectory& aT,
                            const TimestepSchedule& schedule);

/// Explicit Euler over the schedule; k intervals cost k evaluations.
SampleResult euler_integrate(const VelocityField& field, const Trajectory& aT,
                             const TimestepSchedule& schedule);

SampleResult integrate(const VelocityField& field, const Trajectory& aT, const SamplerConfig& cfg);

/// Evaluations used by a k-interval run: heun 2k - 1, euler k.
int nfe_of(Solver solver, int k);

/// Exact velocity of the noise-free bridge between known endpoints:
/// v(a, t) = dmu_dt(a0, aT, t) + dlog_sigma_dt(t) (a - mu_t).
VelocityField oracle_field(const Trajectory& a0, const Trajectory& aT, const BridgeConfig& cfg);

/// Closed-form solution of the oracle field ODE through (t_start, a_start):
/// a(t) = mu_t + (a_start - mu_{t_start}) sigma(t) / sigma(t_start).
Trajectory oracle_solution(const Trajectory& a0, const Trajectory& aT, const BridgeConfig& cfg,
                           double t_start, const Trajectory& a_start, double t);

/// Learned field: model head converted to a velocity with the model's own
/// bridge config and the run's prior endpoint aT.
VelocityField model_field(const VelocityModel& model, const ContextVector& c, const Trajectory& aT);

/// Full inference for one context: a_{t_0} = aT, integrate to t = 0.
SampleResult generate(const VelocityModel& model, const ContextVector& c, const Trajectory& aT,
                      const SamplerConfig& cfg);

}  // namespace rsbm
