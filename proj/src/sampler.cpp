#include "rsbm/sampler.hpp"

#include <string>

#include "rsbm/errors.hpp"

namespace rsbm {

namespace {

void require_finite(const Trajectory& a, int step) {
  if (!a.all_finite()) {
    throw DivergenceError("integration produced a non-finite state at step " + std::to_string(step));
  }
}

void axpy(Trajectory& a, double scale, const Trajectory& d) {
  for (int i = 0; i < a.dim(); ++i) a[i] += scale * d[i];
}

}  // namespace

std::string to_string(Solver solver) { return solver == Solver::heun ? "heun" : "euler"; }

Solver parse_solver(const std::string& name) {
  if (name == "heun") return Solver::heun;
  if (name == "euler") return Solver::euler;
  throw std::invalid_argument("unknown solver '" + name + "' (expected heun or euler)");
}

SampleResult heun_integrate(const VelocityField& field, const Trajectory& aT,
                            const TimestepSchedule& schedule) {
  schedule.validate();
  const int k = schedule.k();
  SampleResult out{aT, 0};
  Trajectory& a = out.a0_hat;
  for (int i = 0; i < k; ++i) {
    const double t = schedule.steps[i];
    const double dt = schedule.steps[i + 1] - t;
    const Trajectory d1 = field(a, t);
    ++out.nfe;
    if (i + 1 == k) {
      axpy(a, dt, d1);
    } else {
      Trajectory predictor = a;
      axpy(predictor, dt, d1);
      require_finite(predictor, i);
      const Trajectory d2 = field(predictor, schedule.steps[i + 1]);
      ++out.nfe;
      for (int j = 0; j < a.dim(); ++j) a[j] += 0.5 * (d1[j] + d2[j]) * dt;
    }
    require_finite(a, i);
  }
  return out;
}

SampleResult euler_integrate(const VelocityField& field, const Trajectory& aT,
                             const TimestepSchedule& schedule) {
  schedule.validate();
  SampleResult out{aT, 0};
  for (int i = 0; i < schedule.k(); ++i) {
    const double t = schedule.steps[i];
    const Trajectory d = field(out.a0_hat, t);
    ++out.nfe;
    axpy(out.a0_hat, schedule.steps[i + 1] - t, d);
    require_finite(out.a0_hat, i);
  }
  return out;
}

SampleResult integrate(const VelocityField& field, const Trajectory& aT, const SamplerConfig& cfg) {
  return cfg.solver == Solver::heun ? heun_integrate(field, aT, cfg.schedule)
                                    : euler_integrate(field, aT, cfg.schedule);
}

int nfe_of(Solver solver, int k) {
  if (k < 1) throw DomainError("nfe_of: k must be >= 1");
  return solver == Solver::heun ? 2 * k - 1 : k;
}

VelocityField oracle_field(const Trajectory& a0, const Trajectory& aT, const BridgeConfig& cfg) {
  require_same_shape(a0, aT, "oracle_field");
  return [a0, aT, cfg](const Trajectory& a, double t) {
    Trajectory v = dmu_dt(a0, aT, t, cfg);
    const Trajectory mu = bridge_mean(a0, aT, t, cfg);
    const double rate = dlog_sigma_dt(t, cfg);
    for (int i = 0; i < v.dim(); ++i) v[i] += rate * (a[i] - mu[i]);
    return v;
  };
}

Trajectory oracle_solution(const Trajectory& a0, const Trajectory& aT, const BridgeConfig& cfg,
                           double t_start, const Trajectory& a_start, double t) {
  const double ratio = bridge_std(t, cfg) / bridge_std(t_start, cfg);
  Trajectory out = bridge_mean(a0, aT, t, cfg);
  const Trajectory mu_start = bridge_mean(a0, aT, t_start, cfg);
  for (int i = 0; i < out.dim(); ++i) out[i] += (a_start[i] - mu_start[i]) * ratio;
  return out;
}

VelocityField model_field(const VelocityModel& model, const ContextVector& c, const Trajectory& aT) {
  return [&model, c, aT](const Trajectory& a, double t) {
    const std::vector<double> head = model.forward(a, t, c);
    return to_velocity(head, a, aT, t, model.bridge(), model.target());
  };
}

SampleResult generate(const VelocityModel& model, const ContextVector& c, const Trajectory& aT,
                      const SamplerConfig& cfg) {
  return integrate(model_field(model, c, aT), aT, cfg);
}

}  // namespace rsbm
