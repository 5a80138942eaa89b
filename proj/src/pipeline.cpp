#include "rsbm/pipeline.hpp"

#include "rsbm/errors.hpp"

namespace rsbm {

namespace {

enum Stream : std::uint64_t { kPriorInit = 1, kPriorTrain, kModelInit, kModelTrain, kEvalPrior };

}  // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5253424du};
  return Rng(seq);
}

TrainedPipeline init_pipeline(const Dataset& train_set, const ExperimentConfig& cfg) {
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  cfg.bridge.validate();
  const auto items = to_training_items(train_set, cfg.hide_phase);

  std::optional<LearnedPrior> learned;
  if (cfg.prior.variant == PriorVariant::learned) {
    learned.emplace(cfg.arch.horizon, cfg.arch.context_dim);
    Rng init_rng = make_rng(cfg.seed, kPriorInit);
    learned->init(init_rng);
    Rng train_rng = make_rng(cfg.seed, kPriorTrain);
    train_prior(*learned, items, cfg.prior_training, train_rng);
  }

  VelocityModel model(cfg.arch, cfg.target, cfg.bridge);
  Rng model_rng = make_rng(cfg.seed, kModelInit);
  model.init(model_rng);
  return TrainedPipeline{std::move(model), Prior(cfg.prior, std::move(learned)), {}, cfg.hide_phase};
}

void train_velocity(TrainedPipeline& pipeline, const Dataset& train_set, const ExperimentConfig& cfg) {
  const auto items = to_training_items(train_set, cfg.hide_phase);
  TrainState state(std::move(pipeline.model), cfg.lr, cfg.batch);
  Rng rng = make_rng(cfg.seed, kModelTrain);
  const Prior& prior = pipeline.prior;
  train(state, items, cfg.epochs,
        [&prior](const Trajectory& a0, const ContextVector& c, Rng& r) {
          return prior.sample_train(c, a0, r);
        },
        rng);
  pipeline.model = std::move(state.model);
  pipeline.loss_trace.insert(pipeline.loss_trace.end(), state.loss_trace.begin(),
                             state.loss_trace.end());
}

TrainedPipeline train_pipeline(const Dataset& train_set, const ExperimentConfig& cfg) {
  TrainedPipeline pipeline = init_pipeline(train_set, cfg);
  train_velocity(pipeline, train_set, cfg);
  return pipeline;
}

Evaluation evaluate(const TrainedPipeline& pipeline, const Dataset& test_set, const EvalOptions& options) {
  if (test_set.empty()) throw std::invalid_argument("evaluation set is empty");
  const VelocityModel& model = pipeline.model;
  SamplerConfig sampler{options.solver, karras_schedule(options.k, model.bridge(), options.rho)};
  Rng rng = make_rng(options.seed, kEvalPrior);

  Evaluation out;
  std::vector<Trajectory> gts;
  int nfe = 0;
  for (const auto& sample : test_set) {
    const ContextVector c = make_context(sample.task, pipeline.hide_phase, sample.a0.horizon());
    const Trajectory aT = pipeline.prior.sample(c, sample.a0, sample.a0.horizon(), rng);
    if (options.use_bridge) {
      SampleResult res = generate(model, c, aT, sampler);
      nfe = res.nfe;
      out.predictions.push_back(std::move(res.a0_hat));
    } else {
      out.predictions.push_back(aT);
    }
    gts.push_back(sample.a0);
  }
  out.report = summarize(out.predictions, gts, nfe);
  return out;
}

}  // namespace rsbm
