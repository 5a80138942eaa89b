#include <cmath>

#include "doctest.h"
#include "rsbm/errors.hpp"
#include "rsbm/pipeline.hpp"
#include "rsbm/prior.hpp"

using namespace rsbm;

namespace {

Trajectory random_traj(Rng& rng, double scale = 1.0) {
  Trajectory t(8);
  std::normal_distribution<double> n(0.0, scale);
  for (int i = 0; i < t.dim(); ++i) t[i] = n(rng);
  return t;
}

ContextVector ctx(double v) { return ContextVector{std::vector<double>(8, v)}; }

PriorKind kind_of(PriorVariant v, double pert = 1.0) {
  PriorKind k;
  k.variant = v;
  k.perturbation_scale = pert;
  return k;
}

}  // namespace

TEST_SUITE("prior") {

TEST_CASE("variant names") {
  CHECK(parse_prior_variant("gaussian") == PriorVariant::gaussian);
  CHECK(parse_prior_variant("perturbed") == PriorVariant::perturbed_gt);
  CHECK(parse_prior_variant("perturbed_gt") == PriorVariant::perturbed_gt);
  CHECK(parse_prior_variant("learned") == PriorVariant::learned);
  CHECK_THROWS(parse_prior_variant("uniform"));
  for (auto v : {PriorVariant::gaussian, PriorVariant::perturbed_gt, PriorVariant::learned}) {
    CHECK(parse_prior_variant(to_string(v)) == v);
  }
}

TEST_CASE("scale validation") {
  PriorKind k;
  k.gaussian_scale = 0.0;
  CHECK_THROWS_AS(k.validate(), DomainError);
  PriorKind p;
  p.perturbation_scale = -1.0;
  CHECK_THROWS_AS(p.validate(), DomainError);
  CHECK_THROWS(Prior(kind_of(PriorVariant::learned)));
}

TEST_CASE("gaussian prior: zero draw gives the zero trajectory, scale applied") {
  const Prior p(kind_of(PriorVariant::gaussian));
  const std::vector<double> zero(16, 0.0);
  CHECK(p.sample_with_noise(ctx(0.0), std::nullopt, zero) == Trajectory(8, 0.0));
  Rng rng(1);
  double sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Trajectory t = sample_prior(p, ctx(0.0), std::nullopt, 8, rng);
    for (int j = 0; j < t.dim(); ++j) sq += t[j] * t[j];
  }
  CHECK(sq / (16.0 * n) == doctest::Approx(100.0).epsilon(0.03));
}

TEST_CASE("perturbed prior") {
  Rng rng(2);
  const Trajectory a0 = random_traj(rng);
  const Prior exact(kind_of(PriorVariant::perturbed_gt, 0.0));
  CHECK(exact.sample(ctx(0.0), a0, 8, rng) == a0);

  const double pert = 0.7;
  const Prior p(kind_of(PriorVariant::perturbed_gt, pert));
  double sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Trajectory d = p.sample(ctx(0.0), a0, 8, rng) - a0;
    for (int j = 0; j < d.dim(); ++j) sq += d[j] * d[j];
  }
  CHECK(std::abs(sq / n - 16.0 * pert * pert) <= 0.03 * 16.0 * pert * pert);
  CHECK_THROWS(p.sample(ctx(0.0), std::nullopt, 8, rng));
}

TEST_CASE("diagonal gaussian KL is nonnegative and zero at the standard normal") {
  CHECK(diagonal_gaussian_kl(std::vector<double>(4, 0.0), std::vector<double>(4, 0.0)) == 0.0);
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> m(8), lv(8);
    for (int i = 0; i < 8; ++i) {
      m[i] = n(rng);
      lv[i] = n(rng);
    }
    CHECK(diagonal_gaussian_kl(m, lv) >= 0.0);
  }
  // one dimension: 0.5 (e^lv + m^2 - 1 - lv)
  CHECK(diagonal_gaussian_kl(std::vector<double>{1.0}, std::vector<double>{std::log(2.0)}) ==
        doctest::Approx(0.5 * (2.0 + 1.0 - 1.0 - std::log(2.0))));
}

TEST_CASE("learned prior shapes and ELBO terms") {
  LearnedPrior lp(8, 8);
  Rng rng(4);
  lp.init(rng);
  CHECK(lp.latent_dim() == 8);
  const Trajectory t = lp.sample(ctx(0.3), rng);
  CHECK(t.horizon() == 8);
  CHECK(t.all_finite());
  const auto [mean, logvar] = lp.encode(ctx(0.3), random_traj(rng));
  CHECK(mean.size() == 8);
  CHECK(logvar.size() == 8);

  std::vector<TrainingItem> batch;
  for (int i = 0; i < 5; ++i) batch.push_back({random_traj(rng), ctx(0.1 * i)});
  const auto terms = lp.elbo(batch, standard_normal(5 * 8, rng));
  CHECK(terms.kl >= 0.0);
  CHECK(terms.loss == doctest::Approx(terms.reconstruction + LearnedPrior::kBeta * terms.kl));
  CHECK_THROWS_AS(lp.elbo(batch, std::vector<double>(3)), ShapeError);
}

TEST_CASE("ELBO gradient matches central differences") {
  LearnedPrior lp(2, 2, 5, 3);
  Rng rng(5);
  lp.init(rng);
  std::normal_distribution<double> n(0.0, 0.3);
  for (double& p : lp.params()) p = n(rng);
  std::vector<TrainingItem> batch;
  for (int i = 0; i < 4; ++i) {
    Trajectory a(2);
    for (int j = 0; j < 4; ++j) a[j] = n(rng) * 3.0;
    batch.push_back({a, ContextVector{{n(rng), n(rng)}}});
  }
  const std::vector<double> xi = standard_normal(4 * 3, rng);
  const auto base = lp.elbo(batch, xi);
  const double h = 1e-5;
  int checked = 0;
  for (size_t i = 0; i < lp.params().size(); ++i) {
    const double keep = lp.params()[i];
    lp.params()[i] = keep + h;
    const double up = lp.elbo(batch, xi).loss;
    lp.params()[i] = keep - h;
    const double down = lp.elbo(batch, xi).loss;
    lp.params()[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    if (std::abs(fd) < 1e-8 && std::abs(base.grad[i]) < 1e-8) continue;
    CHECK(std::abs(fd - base.grad[i]) / std::max(std::abs(fd), std::abs(base.grad[i])) < 1e-3);
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("zero epochs leaves the prior unchanged") {
  LearnedPrior lp(8, 8);
  Rng rng(6);
  lp.init(rng);
  const std::vector<double> before(lp.params().begin(), lp.params().end());
  const std::vector<TrainingItem> items = {{random_traj(rng), ctx(0.0)}};
  PriorTrainOptions opt;
  opt.epochs = 0;
  train_prior(lp, items, opt, rng);
  CHECK(std::equal(before.begin(), before.end(), lp.params().begin()));
}

TEST_CASE("memorises a single repeated trajectory") {
  Rng rng(7);
  const Trajectory a0 = random_traj(rng);
  const std::vector<TrainingItem> items(256, TrainingItem{a0, ctx(0.5)});
  LearnedPrior lp(8, 8);
  lp.init(rng);
  PriorTrainOptions opt;
  opt.epochs = 150;
  opt.batch_size = 32;
  train_prior(lp, items, opt, rng);
  const auto terms = lp.elbo(items, standard_normal(256 * 8, rng));
  CHECK(terms.reconstruction < 0.05);
  CHECK(mse(lp.mean_sample(ctx(0.5)), a0) < 0.05);
}

TEST_CASE("trained prior mean is closer to the data than a gaussian draw") {
  Rng data_rng = make_rng(1, 0);
  const auto tasks = make_task_family({ToyShape::star_patrol, ToyShape::figure8}, 16, 0.05, data_rng);
  const auto train_set = generate_dataset(800, tasks, data_rng);
  const auto test_set = generate_dataset(100, tasks, data_rng);
  LearnedPrior lp(8, 8);
  Rng rng(8);
  lp.init(rng);
  PriorTrainOptions opt;
  opt.epochs = 40;
  opt.batch_size = 64;
  train_prior(lp, to_training_items(train_set), opt, rng);
  CHECK(lp.epoch_losses.size() == 40);
  CHECK(lp.epoch_losses.back() < lp.epoch_losses.front());

  const Prior gauss(kind_of(PriorVariant::gaussian));
  double learned_err = 0.0, gauss_err = 0.0;
  for (const auto& s : test_set) {
    const ContextVector c = make_context(s.task);
    learned_err += mse(lp.mean_sample(c), s.a0);
    gauss_err += mse(gauss.sample(c, std::nullopt, 8, rng), s.a0);
  }
  CHECK(learned_err < gauss_err);
}

}  // TEST_SUITE
