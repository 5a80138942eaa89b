#include "rsbm/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsbm/errors.hpp"

namespace rsbm {

std::string to_string(PriorVariant variant) {
  switch (variant) {
    case PriorVariant::gaussian: return "gaussian";
    case PriorVariant::perturbed_gt: return "perturbed";
    case PriorVariant::learned: return "learned";
  }
  return "?";
}

PriorVariant parse_prior_variant(const std::string& name) {
  if (name == "gaussian") return PriorVariant::gaussian;
  if (name == "perturbed" || name == "perturbed_gt") return PriorVariant::perturbed_gt;
  if (name == "learned") return PriorVariant::learned;
  throw std::invalid_argument("unknown prior '" + name + "' (expected gaussian, perturbed or learned)");
}

void PriorKind::validate() const {
  if (!(gaussian_scale > 0.0)) throw DomainError("prior: gaussian scale must be positive");
  if (!(perturbation_scale >= 0.0)) throw DomainError("prior: perturbation scale must be nonnegative");
}

LearnedPrior::LearnedPrior(int horizon, int context_dim, int hidden, int latent)
    : horizon_(horizon), context_dim_(context_dim), hidden_(hidden), latent_(latent) {
  const int dim = 2 * horizon;
  size_t cursor = 0;
  encoder_ = nn::Mlp({context_dim + dim, hidden, hidden, 2 * latent}, cursor);
  decoder_ = nn::Mlp({context_dim + latent, hidden, hidden, dim}, cursor);
  params_.assign(cursor, 0.0);
}

void LearnedPrior::init(Rng& rng) {
  encoder_.init(params_, rng, false);
  decoder_.init(params_, rng, false);
}

Trajectory LearnedPrior::decode(const ContextVector& c, std::span<const double> z) const {
  if (c.dim() != context_dim_ || static_cast<int>(z.size()) != latent_) {
    throw ShapeError("LearnedPrior::decode: input dimension mismatch");
  }
  nn::Matrix in(context_dim_ + latent_, 1);
  in.col(0).head(context_dim_) = nn::ConstVectorMap(c.values.data(), context_dim_);
  in.col(0).tail(latent_) = nn::ConstVectorMap(z.data(), latent_);
  const nn::Matrix out = decoder_.forward(params_, in);
  return Trajectory::from_flat({out.data(), static_cast<size_t>(out.size())});
}

std::pair<std::vector<double>, std::vector<double>> LearnedPrior::encode(
    const ContextVector& c, const Trajectory& a0) const {
  if (c.dim() != context_dim_ || a0.horizon() != horizon_) {
    throw ShapeError("LearnedPrior::encode: input dimension mismatch");
  }
  nn::Matrix in(context_dim_ + a0.dim(), 1);
  in.col(0).head(context_dim_) = nn::ConstVectorMap(c.values.data(), context_dim_);
  in.col(0).tail(a0.dim()) = nn::ConstVectorMap(a0.flat().data(), a0.dim());
  const nn::Matrix out = encoder_.forward(params_, in);
  std::vector<double> mean(out.data(), out.data() + latent_);
  std::vector<double> logvar(out.data() + latent_, out.data() + 2 * latent_);
  return {std::move(mean), std::move(logvar)};
}

Trajectory LearnedPrior::sample_posterior(const ContextVector& c, const Trajectory& a0,
                                          Rng& rng) const {
  auto [mean, logvar] = encode(c, a0);
  const std::vector<double> noise = standard_normal(latent_, rng);
  std::vector<double> z(latent_);
  for (int i = 0; i < latent_; ++i) z[i] = mean[i] + std::exp(0.5 * logvar[i]) * noise[i];
  return decode(c, z);
}

Trajectory LearnedPrior::sample(const ContextVector& c, Rng& rng) const {
  return decode(c, standard_normal(latent_, rng));
}

Trajectory LearnedPrior::mean_sample(const ContextVector& c) const {
  return decode(c, std::vector<double>(static_cast<size_t>(latent_), 0.0));
}

double diagonal_gaussian_kl(std::span<const double> mean, std::span<const double> logvar) {
  double kl = 0.0;
  for (size_t i = 0; i < mean.size(); ++i) {
    kl += 0.5 * (std::exp(logvar[i]) + mean[i] * mean[i] - 1.0 - logvar[i]);
  }
  return kl;
}

LearnedPrior::ElboTerms LearnedPrior::elbo(std::span<const TrainingItem> batch,
                                           const std::vector<double>& latent_noise) const {
  const auto b = static_cast<Eigen::Index>(batch.size());
  const int dim = 2 * horizon_;
  if (b == 0) throw std::invalid_argument("elbo: empty batch");
  if (latent_noise.size() != static_cast<size_t>(b * latent_)) {
    throw ShapeError("elbo: latent noise must be batch x latent");
  }

  nn::Matrix enc_in(context_dim_ + dim, b);
  nn::Matrix ctx(context_dim_, b);
  nn::Matrix target(dim, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    ctx.col(j) = nn::ConstVectorMap(batch[j].c.values.data(), context_dim_);
    target.col(j) = nn::ConstVectorMap(batch[j].a0.flat().data(), dim);
  }
  enc_in.topRows(context_dim_) = ctx;
  enc_in.bottomRows(dim) = target;

  nn::Mlp::Tape enc_tape;
  const nn::Matrix stats = encoder_.forward(params_, enc_in, &enc_tape);
  const nn::Matrix mean = stats.topRows(latent_);
  const nn::Matrix logvar = stats.bottomRows(latent_);
  const nn::ConstMatrixMap xi(latent_noise.data(), latent_, b);
  const nn::Matrix stddev = (0.5 * logvar.array()).exp().matrix();
  const nn::Matrix z = mean + stddev.cwiseProduct(xi);

  nn::Matrix dec_in(context_dim_ + latent_, b);
  dec_in.topRows(context_dim_) = ctx;
  dec_in.bottomRows(latent_) = z;
  nn::Mlp::Tape dec_tape;
  const nn::Matrix recon = decoder_.forward(params_, dec_in, &dec_tape);
  const nn::Matrix diff = recon - target;

  ElboTerms out;
  const double n_recon = static_cast<double>(diff.size());
  out.reconstruction = diff.squaredNorm() / n_recon;
  out.kl = 0.5 * (logvar.array().exp() + mean.array().square() - 1.0 - logvar.array()).sum() /
           static_cast<double>(b);
  out.loss = out.reconstruction + kBeta * out.kl;

  out.grad.assign(params_.size(), 0.0);
  const nn::Matrix d_recon = (2.0 / n_recon) * diff;
  const nn::Matrix d_dec_in = decoder_.backward(params_, dec_tape, d_recon, out.grad);
  const nn::Matrix d_z = d_dec_in.bottomRows(latent_);

  const double kl_w = kBeta / static_cast<double>(b);
  nn::Matrix d_stats(2 * latent_, b);
  d_stats.topRows(latent_) = d_z + kl_w * mean;
  d_stats.bottomRows(latent_) =
      (d_z.cwiseProduct(xi).cwiseProduct(stddev) * 0.5).matrix() +
      (kl_w * 0.5 * (logvar.array().exp() - 1.0)).matrix();
  encoder_.backward(params_, enc_tape, d_stats, out.grad);
  return out;
}

void train_prior(LearnedPrior& prior, std::span<const TrainingItem> dataset,
                 const PriorTrainOptions& options, Rng& rng) {
  if (options.epochs <= 0) return;
  if (dataset.empty()) throw std::invalid_argument("train_prior: empty dataset");

  nn::AdamW opt;
  opt.lr = options.lr;
  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<TrainingItem> batch;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += options.batch_size) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(options.batch_size));
      batch.clear();
      for (size_t i = start; i < stop; ++i) batch.push_back(dataset[order[i]]);
      const std::vector<double> noise =
          standard_normal(static_cast<int>(batch.size()) * prior.latent_dim(), rng);
      const auto terms = prior.elbo(batch, noise);
      if (!std::isfinite(terms.loss)) {
        throw DivergenceError("train_prior: non-finite loss at epoch " + std::to_string(epoch));
      }
      opt.step_update(prior.params(), terms.grad);
      loss_sum += terms.loss * static_cast<double>(stop - start);
    }
    prior.epoch_losses.push_back(loss_sum / static_cast<double>(dataset.size()));
  }
}

Prior::Prior(PriorKind kind, std::optional<LearnedPrior> learned)
    : kind_(kind), learned_(std::move(learned)) {
  kind_.validate();
  if (kind_.variant == PriorVariant::learned && !learned_) {
    throw std::invalid_argument("learned prior variant requires a LearnedPrior");
  }
}

Trajectory Prior::sample(const ContextVector& c, const std::optional<Trajectory>& a0, int horizon,
                         Rng& rng) const {
  const int noise_dim = kind_.variant == PriorVariant::learned ? learned_->latent_dim()
                        : a0                                  ? a0->dim()
                                                              : 2 * horizon;
  return sample_with_noise(c, a0, standard_normal(noise_dim, rng));
}

Trajectory Prior::sample_with_noise(const ContextVector& c, const std::optional<Trajectory>& a0,
                                    std::span<const double> noise) const {
  switch (kind_.variant) {
    case PriorVariant::gaussian: {
      Trajectory out = Trajectory::from_flat(noise);
      return out *= kind_.gaussian_scale;
    }
    case PriorVariant::perturbed_gt: {
      if (!a0) throw std::invalid_argument("perturbed prior needs the ground-truth trajectory");
      if (static_cast<int>(noise.size()) != a0->dim()) {
        throw ShapeError("perturbed prior: noise length mismatch");
      }
      return *a0 + Trajectory::from_flat(noise) * kind_.perturbation_scale;
    }
    case PriorVariant::learned:
      return learned_->decode(c, noise);
  }
  throw std::logic_error("unreachable prior variant");
}

Trajectory Prior::sample_train(const ContextVector& c, const Trajectory& a0, Rng& rng) const {
  if (kind_.variant == PriorVariant::learned) return learned_->sample_posterior(c, a0, rng);
  return sample(c, a0, a0.horizon(), rng);
}

Trajectory sample_prior(const Prior& prior, const ContextVector& c,
                        const std::optional<Trajectory>& a0_opt, int horizon, Rng& rng) {
  return prior.sample(c, a0_opt, horizon, rng);
}

}  // namespace rsbm
