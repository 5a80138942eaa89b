#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "rsbm/errors.hpp"
#include "rsbm/pipeline.hpp"
#include "rsbm/velocity_model.hpp"

using namespace rsbm;

namespace {

Trajectory random_traj(Rng& rng, int horizon = 8, double scale = 1.0) {
  Trajectory t(horizon);
  std::normal_distribution<double> n(0.0, scale);
  for (int i = 0; i < t.dim(); ++i) t[i] = n(rng);
  return t;
}

ContextVector random_context(Rng& rng, int dim = 8) {
  ContextVector c;
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < dim; ++i) c.values.push_back(n(rng));
  return c;
}

void randomize(std::span<double> params, Rng& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  for (double& p : params) p = n(rng);
}

VelocityArch tiny_arch() {
  VelocityArch a;
  a.horizon = 1;
  a.context_dim = 1;
  a.hidden = {3};
  a.time_embed_dim = 2;
  return a;
}

double norm2(std::span<const double> v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

std::vector<CfmExample> random_examples(int n, int horizon, int cdim, Rng& rng) {
  std::vector<CfmExample> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({random_traj(rng, horizon), random_traj(rng, horizon, 2.0), random_context(rng, cdim)});
  }
  return out;
}

}  // namespace

TEST_SUITE("velocity_model") {

TEST_CASE("target kind names") {
  for (auto k : {TargetKind::v, TargetKind::x0, TargetKind::eps}) {
    CHECK(parse_target_kind(to_string(k)) == k);
  }
  CHECK_THROWS(parse_target_kind("score"));
}

TEST_CASE("all-zero parameters give the zero field") {
  VelocityModel m(VelocityArch{}, TargetKind::v, BridgeConfig{});
  CHECK(m.num_params() > 0);
  Rng rng(1);
  const auto out = m.forward(random_traj(rng), 3.0, random_context(rng));
  REQUIRE(out.size() == 16);
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("fresh init has a zero head so the initial field is zero") {
  VelocityModel m(VelocityArch{}, TargetKind::v, BridgeConfig{});
  Rng rng(2);
  m.init(rng);
  const auto out = m.forward(random_traj(rng), 1.0, random_context(rng));
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic") {
  VelocityModel m(VelocityArch{}, TargetKind::v, BridgeConfig{});
  Rng rng(3);
  m.init(rng);
  randomize(m.params(), rng, 0.1);
  const Trajectory a = random_traj(rng);
  const ContextVector c = random_context(rng);
  CHECK(m.forward(a, 4.2, c) == m.forward(a, 4.2, c));
}

TEST_CASE("forward rejects bad inputs") {
  VelocityModel m(VelocityArch{}, TargetKind::v, BridgeConfig{});
  Rng rng(4);
  Trajectory a = random_traj(rng);
  ContextVector c = random_context(rng);
  CHECK_THROWS_AS(m.forward(Trajectory(5), 1.0, c), ShapeError);
  CHECK_THROWS_AS(m.forward(a, 1.0, ContextVector{{1.0}}), ShapeError);
  a[3] = std::nan("");
  CHECK_THROWS_AS(m.forward(a, 1.0, c), DomainError);
  a[3] = 0.0;
  c.values[0] = INFINITY;
  CHECK_THROWS_AS(m.forward(a, 1.0, c), DomainError);
}

TEST_CASE("random model output is finite and within the layer-norm bound") {
  // With P = ||theta||_2 every weight matrix and bias has norm <= P, |silu(x)| <= |x|, and
  // ||[gamma; beta]|| <= P (||cond|| + 1) =: K, so ||h_l|| <= (P ||h_{l-1}|| + P)(1 + K) + K
  // and ||out|| <= P ||h_L|| + P.
  VelocityModel m(VelocityArch{}, TargetKind::v, BridgeConfig{});
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    randomize(m.params(), rng, 0.3);
    const Trajectory a = random_traj(rng, 8, 3.0);
    const ContextVector c = random_context(rng);
    std::uniform_real_distribution<double> ut(0.002, 9.99);
    const auto out = m.forward(a, ut(rng), c);
    for (double v : out) CHECK(std::isfinite(v));

    const double p = norm2(m.params());
    const double cond = std::sqrt(m.arch().time_embed_dim / 2.0 + std::pow(norm2(c.values), 2));
    const double k = p * (cond + 1.0);
    double h = norm2(a.flat());
    for (size_t l = 0; l < m.arch().hidden.size(); ++l) h = (p * h + p) * (1.0 + k) + k;
    CHECK(norm2(out) <= p * h + p);
  }
}

TEST_CASE("time embedding is bounded sin/cos pairs") {
  VelocityModel m(VelocityArch{}, TargetKind::v, BridgeConfig{});
  for (double t : {0.002, 0.5, 9.99}) {
    const nn::Vector e = m.time_embedding(t);
    REQUIRE(e.size() == 16);
    for (int j = 0; j < 8; ++j) CHECK(e(j) * e(j) + e(j + 8) * e(j + 8) == doctest::Approx(1.0));
  }
}

TEST_CASE("to_velocity identity for v and pole guard") {
  Rng rng(6);
  const BridgeConfig cfg;
  const Trajectory a = random_traj(rng), aT = random_traj(rng);
  const Trajectory head = random_traj(rng);
  CHECK(to_velocity(head.flat(), a, aT, 3.0, cfg, TargetKind::v) == head);
  CHECK_THROWS_AS(to_velocity(head.flat(), a, aT, 10.0, cfg, TargetKind::x0), PoleError);
  CHECK_THROWS_AS(to_velocity(head.flat(), a, aT, 10.0, cfg, TargetKind::eps), PoleError);
  CHECK_THROWS_AS(to_velocity(std::vector<double>(3), a, aT, 3.0, cfg, TargetKind::x0), ShapeError);
}

TEST_CASE("to_velocity round trips from true x0 and true noise") {
  Rng rng(7);
  for (int rep = 0; rep < 1000; ++rep) {
    BridgeConfig cfg;
    cfg.epsilon = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    const double t = std::uniform_real_distribution<double>(cfg.sigma_min, cfg.t_max())(rng);
    const Trajectory a0 = random_traj(rng), aT = random_traj(rng, 8, 3.0);
    const BridgeSample s = sample_bridge(a0, aT, t, cfg, rng);
    const Trajectory v = target_velocity(s, a0, aT, cfg);
    const Trajectory vx = to_velocity(a0.flat(), s.a_t, aT, t, cfg, TargetKind::x0);
    const Trajectory ve = to_velocity(s.noise, s.a_t, aT, t, cfg, TargetKind::eps);
    for (int i = 0; i < v.dim(); ++i) {
      CHECK(std::abs(vx[i] - v[i]) <= 1e-10 * std::max(1.0, std::abs(v[i])));
      CHECK(std::abs(ve[i] - v[i]) <= 1e-10 * std::max(1.0, std::abs(v[i])));
    }
  }
}

TEST_CASE("cfm batch targets by kind") {
  Rng rng(8);
  const BridgeConfig cfg;
  const auto ex = random_examples(5, 8, 8, rng);
  Rng r1(3), r2(3), r3(3);
  const CfmBatch bv = make_cfm_batch(ex, TargetKind::v, cfg, r1);
  const CfmBatch bx = make_cfm_batch(ex, TargetKind::x0, cfg, r2);
  const CfmBatch be = make_cfm_batch(ex, TargetKind::eps, cfg, r3);
  for (int b = 0; b < 5; ++b) {
    CHECK(bv.t[b] == bx.t[b]);
    CHECK(bv.t[b] >= cfg.sigma_min);
    CHECK(bv.t[b] <= cfg.t_max());
    for (int i = 0; i < 16; ++i) {
      CHECK(bx.target(i, b) == ex[b].a0[i]);
      const double sigma = bridge_std(be.t[b], cfg);
      const double mu = bridge_mean(ex[b].a0, ex[b].aT, be.t[b], cfg)[i];
      CHECK(be.a_t(i, b) == doctest::Approx(mu + sigma * be.target(i, b)).epsilon(1e-12));
    }
  }
  CHECK_THROWS(make_cfm_batch(std::span<const CfmExample>(), TargetKind::v, cfg, rng));
}

TEST_CASE("perfect predictor has zero loss and zero gradient") {
  Rng rng(9);
  VelocityModel m(VelocityArch{}, TargetKind::x0, BridgeConfig{});
  m.init(rng);
  const Trajectory a0 = random_traj(rng);
  std::vector<CfmExample> ex(4, CfmExample{a0, random_traj(rng), random_context(rng)});
  // zeroed head weights and bias = a0 make the x0 head exact
  randomize(m.params(), rng, 0.0);
  const size_t n = m.num_params();
  for (int i = 0; i < 16; ++i) m.params()[n - 16 + i] = a0[i];
  const CfmBatch batch = make_cfm_batch(ex, TargetKind::x0, m.bridge(), rng);
  const LossAndGrad lg = cfm_loss_and_grad(m, batch);
  CHECK(lg.loss == 0.0);
  for (double g : lg.grad) CHECK(g == 0.0);
}

TEST_CASE("analytic gradient matches central differences") {
  for (auto kind : {TargetKind::v, TargetKind::x0, TargetKind::eps}) {
    Rng rng(10);
    VelocityModel m(tiny_arch(), kind, BridgeConfig{});
    randomize(m.params(), rng, 0.7);
    const auto ex = random_examples(6, 1, 1, rng);
    const CfmBatch batch = make_cfm_batch(ex, kind, m.bridge(), rng);
    const LossAndGrad lg = cfm_loss_and_grad(m, batch);
    const double h = 1e-4;
    int checked = 0;
    for (size_t i = 0; i < m.num_params(); ++i) {
      const double keep = m.params()[i];
      m.params()[i] = keep + h;
      const double up = cfm_loss_and_grad(m, batch).loss;
      m.params()[i] = keep - h;
      const double down = cfm_loss_and_grad(m, batch).loss;
      m.params()[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      if (std::abs(lg.grad[i]) < 1e-8 && std::abs(fd) < 1e-8) continue;
      const double rel = std::abs(lg.grad[i] - fd) / std::max(std::abs(lg.grad[i]), std::abs(fd));
      CHECK(rel < 1e-3);
      ++checked;
    }
    CHECK(checked > static_cast<int>(m.num_params()) / 2);
  }
}

TEST_CASE("zero predictor loss matches the analytic expectation") {
  // E[loss] = (1/D) E_t ||dmu/dt||^2 + E_t velocity_variance(t), t ~ U(sigma_min, t_max)
  const BridgeConfig cfg;
  VelocityModel m(VelocityArch{}, TargetKind::v, cfg);
  Rng rng(11);
  const Trajectory a0 = random_traj(rng), aT = random_traj(rng, 8, 2.0);
  const double gap2 = std::pow(norm2((aT - a0).flat()), 2);
  const double lo = cfg.sigma_min, hi = cfg.t_max();
  const int q = 2000000;
  double drift = 0.0, var = 0.0;
  for (int i = 0; i < q; ++i) {
    const double t = lo + (hi - lo) * (i + 0.5) / q;
    const double rate = 2.0 * t / (cfg.sigma_max * cfg.sigma_max);
    drift += rate * rate * gap2 / 16.0;
    var += velocity_variance(t, cfg);
  }
  const double expected = (drift + var) / q;

  std::vector<CfmExample> ex(1000, CfmExample{a0, aT, ContextVector{std::vector<double>(8, 0.0)}});
  double total = 0.0;
  const int batches = 300;
  for (int b = 0; b < batches; ++b) {
    total += cfm_loss_and_grad(m, make_cfm_batch(ex, TargetKind::v, cfg, rng)).loss;
  }
  CHECK(std::abs(total / batches - expected) <= 0.05 * expected);
}

TEST_CASE("smaller epsilon lowers the untrained loss") {
  Rng rng(12);
  const auto ex = random_examples(256, 8, 8, rng);
  double loss[2] = {0.0, 0.0};
  const double eps[2] = {0.5, 1.0};
  for (int e = 0; e < 2; ++e) {
    BridgeConfig cfg;
    cfg.epsilon = eps[e];
    VelocityModel m(VelocityArch{}, TargetKind::v, cfg);
    Rng init(5);
    m.init(init);
    randomize(m.params(), init, 0.05);
    Rng draws(77);
    for (int b = 0; b < 200; ++b) {
      loss[e] += cfm_loss_and_grad(m, make_cfm_batch(ex, TargetKind::v, cfg, draws)).loss;
    }
  }
  CHECK(loss[0] <= loss[1]);
}

TEST_CASE("AdamW step") {
  nn::AdamW opt;
  opt.lr = 0.1;
  opt.weight_decay = 0.01;
  std::vector<double> p = {1.0, -2.0};
  const std::vector<double> g = {0.5, -0.25};
  opt.step_update(p, g);
  // first bias-corrected step moves each coordinate by lr * sign(g), after decoupled decay
  const double e1 = 1.0 - 0.1 * 0.01 * 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
  const double e2 = -2.0 - 0.1 * 0.01 * -2.0 + 0.1 * 0.25 / (0.25 + 1e-8);
  CHECK(p[0] == doctest::Approx(e1).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(e2).epsilon(1e-12));
  CHECK(opt.m.size() == 2);
  CHECK(opt.v.size() == 2);
  CHECK(opt.step == 1);
}

TEST_CASE("training: zero epochs, determinism and loss decrease") {
  Rng data_rng = make_rng(3, 0);
  const auto tasks = make_task_family({ToyShape::star_patrol, ToyShape::figure8}, 16, 0.05, data_rng);
  const auto items = to_training_items(generate_dataset(500, tasks, data_rng));
  const TrainPriorFn gauss = [](const Trajectory& a0, const ContextVector&, Rng& r) {
    Trajectory out(a0.horizon());
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < out.dim(); ++i) out[i] = a0[i] + n(r);
    return out;
  };

  VelocityModel m(VelocityArch{}, TargetKind::x0, BridgeConfig{});
  Rng init(1);
  m.init(init);

  TrainState idle(m, 1e-3, 64);
  Rng r0(5);
  train(idle, items, 0, gauss, r0);
  CHECK(idle.loss_trace.empty());
  CHECK(idle.step == 0);
  CHECK(std::equal(idle.model.params().begin(), idle.model.params().end(), m.params().begin()));

  TrainState a(m, 1e-3, 64), b(m, 1e-3, 64);
  Rng ra(5), rb(5);
  train(a, items, 30, gauss, ra);
  train(b, items, 30, gauss, rb);
  REQUIRE(a.loss_trace.size() == 30);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.loss_trace.back() < 0.1 * a.loss_trace.front());
}

TEST_CASE("training aborts on a divergent loss") {
  const std::vector<TrainingItem> items = {{Trajectory(8, 1.0), ContextVector{std::vector<double>(8, 0.0)}}};
  VelocityModel m(VelocityArch{}, TargetKind::x0, BridgeConfig{});
  TrainState st(m, 1e-3, 4);
  Rng rng(1);
  const TrainPriorFn bad = [](const Trajectory& a0, const ContextVector&, Rng&) {
    Trajectory out = a0;
    out[0] = 1e300 * 1e10;
    return out;
  };
  CHECK_THROWS_AS(train(st, items, 1, bad, rng), DivergenceError);
}

}  // TEST_SUITE
