#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rsbm/velocity_model.hpp"

namespace rsbm {

enum class PriorVariant { gaussian, perturbed_gt, learned };

std::string to_string(PriorVariant variant);
PriorVariant parse_prior_variant(const std::string& name);

struct PriorKind {
  PriorVariant variant = PriorVariant::learned;
  double gaussian_scale = 10.0;
  double perturbation_scale = 1.0;

  void validate() const;
};

/// Small conditional VAE: encoder (c, a0) -> (mean, log-variance) of z,
/// decoder (c, z) -> trajectory.
class LearnedPrior {
 public:
  static constexpr double kBeta = 0.1;

  LearnedPrior() = default;
  LearnedPrior(int horizon, int context_dim, int hidden = 64, int latent = 8);

  int horizon() const { return horizon_; }
  int context_dim() const { return context_dim_; }
  int hidden() const { return hidden_; }
  int latent_dim() const { return latent_; }

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }

  void init(Rng& rng);

  Trajectory decode(const ContextVector& c, std::span<const double> z) const;
  /// Posterior q(z | c, a0) as (mean, log-variance).
  std::pair<std::vector<double>, std::vector<double>> encode(const ContextVector& c,
                                                             const Trajectory& a0) const;

  /// Decoder output with z ~ q(z | c, a0) (training-time usage).
  Trajectory sample_posterior(const ContextVector& c, const Trajectory& a0, Rng& rng) const;
  /// Decoder output with z ~ N(0, I).
  Trajectory sample(const ContextVector& c, Rng& rng) const;
  /// Decoder output at z = 0.
  Trajectory mean_sample(const ContextVector& c) const;

  struct ElboTerms {
    double loss = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
    std::vector<double> grad;
  };
  /// Reconstruction MSE + kBeta * KL(q || N(0, I)) averaged over the batch,
  /// with the reparameterization noise supplied by the caller (B x latent).
  ElboTerms elbo(std::span<const TrainingItem> batch, const std::vector<double>& latent_noise) const;

  std::vector<double> epoch_losses;

 private:
  int horizon_ = 0;
  int context_dim_ = 0;
  int hidden_ = 0;
  int latent_ = 0;
  nn::Mlp encoder_;
  nn::Mlp decoder_;
  std::vector<double> params_;
};

/// Closed-form KL(N(mean, exp(logvar)) || N(0, I)) for a diagonal Gaussian.
double diagonal_gaussian_kl(std::span<const double> mean, std::span<const double> logvar);

struct PriorTrainOptions {
  int epochs = 30;
  int batch_size = 256;
  double lr = 1e-3;
};

/// Minibatch AdamW on the ELBO. Throws DivergenceError on a non-finite loss.
void train_prior(LearnedPrior& prior, std::span<const TrainingItem> dataset,
                 const PriorTrainOptions& options, Rng& rng);

/// A prior endpoint generator of one of the three variants.
class Prior {
 public:
  Prior() = default;
  explicit Prior(PriorKind kind, std::optional<LearnedPrior> learned = std::nullopt);

  const PriorKind& kind() const { return kind_; }
  const std::optional<LearnedPrior>& learned() const { return learned_; }

  /// Test-time endpoint: gaussian N(0, scale^2 I); perturbed_gt a0 + N(0, pert^2 I)
  /// (needs a0); learned decoder(c, z), z ~ N(0, I).
  Trajectory sample(const ContextVector& c, const std::optional<Trajectory>& a0, int horizon,
                    Rng& rng) const;

  /// Same with the standard-normal draw supplied: length D for gaussian and
  /// perturbed_gt, latent_dim for learned.
  Trajectory sample_with_noise(const ContextVector& c, const std::optional<Trajectory>& a0,
                               std::span<const double> noise) const;

  /// Training-time endpoint; the learned variant draws z from the posterior.
  Trajectory sample_train(const ContextVector& c, const Trajectory& a0, Rng& rng) const;

 private:
  PriorKind kind_;
  std::optional<LearnedPrior> learned_;
};

/// Free function form of Prior::sample.
Trajectory sample_prior(const Prior& prior, const ContextVector& c,
                        const std::optional<Trajectory>& a0_opt, int horizon, Rng& rng);

}  // namespace rsbm
