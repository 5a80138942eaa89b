#include "rsbm/velocity_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsbm/errors.hpp"
#include "rsbm/schedules.hpp"

namespace rsbm {

bool ContextVector::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::string to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::v: return "v";
    case TargetKind::x0: return "x0";
    case TargetKind::eps: return "eps";
  }
  return "?";
}

TargetKind parse_target_kind(const std::string& name) {
  if (name == "v") return TargetKind::v;
  if (name == "x0") return TargetKind::x0;
  if (name == "eps") return TargetKind::eps;
  throw std::invalid_argument("unknown prediction target '" + name + "' (expected v, x0 or eps)");
}

VelocityModel::VelocityModel(VelocityArch arch, TargetKind target, BridgeConfig bridge)
    : arch_(std::move(arch)), target_(target), bridge_(bridge) {
  bridge_.validate();
  if (arch_.horizon <= 0 || arch_.context_dim < 0 || arch_.hidden.empty()) {
    throw ShapeError("velocity model: invalid architecture");
  }
  if (arch_.time_embed_dim <= 0 || arch_.time_embed_dim % 2 != 0) {
    throw ShapeError("velocity model: time embedding dimension must be positive and even");
  }

  const int pairs = arch_.time_embed_dim / 2;
  const double log_lo = std::log(bridge_.sigma_min);
  const double log_hi = std::log(bridge_.sigma_max);
  for (int j = 0; j < pairs; ++j) {
    const double frac = pairs == 1 ? 1.0 : static_cast<double>(j) / (pairs - 1);
    frequencies_.push_back(std::exp(-(log_hi + frac * (log_lo - log_hi))));
  }

  const int cond_dim = arch_.time_embed_dim + arch_.context_dim;
  size_t cursor = 0;
  int width_in = arch_.dim();
  for (int width : arch_.hidden) {
    FilmLayer layer;
    layer.linear = nn::allocate_dense(width_in, width, cursor);
    layer.film = nn::allocate_dense(cond_dim, 2 * width, cursor);
    layers_.push_back(layer);
    width_in = width;
  }
  head_ = nn::allocate_dense(width_in, arch_.dim(), cursor);
  params_.assign(cursor, 0.0);
}

void VelocityModel::init(Rng& rng) {
  for (const auto& layer : layers_) {
    nn::init_dense(layer.linear, params_, rng);
    nn::init_dense(layer.film, params_, rng);
  }
  nn::init_dense(head_, params_, rng);
  head_.weight(std::span<double>(params_)).setZero();
}

nn::Vector VelocityModel::time_embedding(double t) const {
  const int pairs = static_cast<int>(frequencies_.size());
  nn::Vector emb(2 * pairs);
  for (int j = 0; j < pairs; ++j) {
    emb(j) = std::sin(frequencies_[j] * t);
    emb(pairs + j) = std::cos(frequencies_[j] * t);
  }
  return emb;
}

std::vector<double> VelocityModel::forward(const Trajectory& a_t, double t,
                                           const ContextVector& c) const {
  if (a_t.dim() != arch_.dim()) throw ShapeError("forward: trajectory dimension mismatch");
  if (c.dim() != arch_.context_dim) throw ShapeError("forward: context dimension mismatch");
  if (!a_t.all_finite() || !c.all_finite() || !std::isfinite(t)) {
    throw DomainError("forward: non-finite input");
  }
  nn::Matrix a = nn::ConstVectorMap(a_t.flat().data(), a_t.dim());
  nn::Matrix cm = nn::ConstVectorMap(c.values.data(), c.dim());
  const double ts[] = {t};
  nn::Matrix out = forward_batch(a, ts, cm);
  return {out.data(), out.data() + out.size()};
}

nn::Matrix VelocityModel::forward_batch(const nn::Matrix& a_t, std::span<const double> t,
                                        const nn::Matrix& c, Tape* tape) const {
  const Eigen::Index batch = a_t.cols();
  if (a_t.rows() != arch_.dim() || c.rows() != arch_.context_dim || c.cols() != batch ||
      static_cast<Eigen::Index>(t.size()) != batch) {
    throw ShapeError("forward_batch: inconsistent batch shapes");
  }
  const std::span<const double> p = params_;

  nn::Matrix cond(arch_.time_embed_dim + arch_.context_dim, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    cond.col(b).head(arch_.time_embed_dim) = time_embedding(t[b]);
  }
  cond.bottomRows(arch_.context_dim) = c;

  Tape local;
  Tape& tp = tape ? *tape : local;
  tp.cond = cond;
  tp.inputs.clear();
  tp.linear.clear();
  tp.gamma.clear();
  tp.pre.clear();

  nn::Matrix h = a_t;
  for (const auto& layer : layers_) {
    const int width = layer.linear.out;
    nn::Matrix z = layer.linear.weight(p) * h;
    z.colwise() += layer.linear.bias(p);
    nn::Matrix film = layer.film.weight(p) * cond;
    film.colwise() += layer.film.bias(p);
    nn::Matrix gamma = film.topRows(width);
    nn::Matrix u = z.cwiseProduct((gamma.array() + 1.0).matrix()) + film.bottomRows(width);

    tp.inputs.push_back(std::move(h));
    tp.linear.push_back(std::move(z));
    tp.gamma.push_back(std::move(gamma));
    h = nn::silu(u);
    tp.pre.push_back(std::move(u));
  }
  tp.inputs.push_back(h);
  nn::Matrix out = head_.weight(p) * h;
  out.colwise() += head_.bias(p);
  return out;
}

void VelocityModel::backward_batch(const Tape& tape, const nn::Matrix& d_out,
                                   std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ShapeError("backward_batch: gradient size mismatch");
  const std::span<const double> p = params_;

  head_.weight(grad) += d_out * tape.inputs.back().transpose();
  head_.bias(grad) += d_out.rowwise().sum();
  nn::Matrix d_h = head_.weight(p).transpose() * d_out;

  for (size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    const int width = layer.linear.out;
    const nn::Matrix d_u = d_h.cwiseProduct(nn::silu_grad(tape.pre[li]));
    const nn::Matrix d_z = d_u.cwiseProduct((tape.gamma[li].array() + 1.0).matrix());

    nn::Matrix d_film(2 * width, d_u.cols());
    d_film.topRows(width) = d_u.cwiseProduct(tape.linear[li]);
    d_film.bottomRows(width) = d_u;
    layer.film.weight(grad) += d_film * tape.cond.transpose();
    layer.film.bias(grad) += d_film.rowwise().sum();

    layer.linear.weight(grad) += d_z * tape.inputs[li].transpose();
    layer.linear.bias(grad) += d_z.rowwise().sum();
    if (li > 0) d_h = layer.linear.weight(p).transpose() * d_z;
  }
}

Trajectory to_velocity(std::span<const double> head_output, const Trajectory& a_t,
                       const Trajectory& aT, double t, const BridgeConfig& cfg, TargetKind kind) {
  require_same_shape(a_t, aT, "to_velocity");
  if (static_cast<int>(head_output.size()) != a_t.dim()) {
    throw ShapeError("to_velocity: head output dimension mismatch");
  }
  if (kind == TargetKind::v) return Trajectory::from_flat(head_output);

  const double s = interp_coeff(t, cfg);
  if (1.0 - s < 1e-9) throw PoleError("to_velocity: 1 - s_t below 1e-9");

  Trajectory x0_hat(a_t.horizon());
  if (kind == TargetKind::x0) {
    x0_hat = Trajectory::from_flat(head_output);
  } else {
    const double sigma = bridge_std(t, cfg);
    for (int i = 0; i < x0_hat.dim(); ++i) {
      x0_hat[i] = (a_t[i] - s * aT[i] - sigma * head_output[i]) / (1.0 - s);
    }
  }
  const Trajectory mu_hat = bridge_mean(x0_hat, aT, t, cfg);
  Trajectory v = dmu_dt(x0_hat, aT, t, cfg);
  const double rate = dlog_sigma_dt(t, cfg);
  for (int i = 0; i < v.dim(); ++i) v[i] += rate * (a_t[i] - mu_hat[i]);
  return v;
}

CfmBatch make_cfm_batch(std::span<const CfmExample> examples, TargetKind kind,
                        const BridgeConfig& cfg, Rng& rng) {
  if (examples.empty()) throw std::invalid_argument("make_cfm_batch: empty batch");
  const int dim = examples.front().a0.dim();
  const int cdim = examples.front().c.dim();
  const auto batch = static_cast<Eigen::Index>(examples.size());

  CfmBatch out;
  out.a_t.resize(dim, batch);
  out.c.resize(cdim, batch);
  out.target.resize(dim, batch);
  out.t.resize(examples.size());

  for (Eigen::Index b = 0; b < batch; ++b) {
    const CfmExample& ex = examples[b];
    if (ex.a0.dim() != dim || ex.c.dim() != cdim) throw ShapeError("make_cfm_batch: ragged batch");
    const double t = sample_training_time(rng, cfg);
    const BridgeSample sample = sample_bridge(ex.a0, ex.aT, t, cfg, rng);
    out.t[b] = t;
    out.a_t.col(b) = nn::ConstVectorMap(sample.a_t.flat().data(), dim);
    out.c.col(b) = nn::ConstVectorMap(ex.c.values.data(), cdim);
    switch (kind) {
      case TargetKind::v: {
        const Trajectory v = target_velocity(sample, ex.a0, ex.aT, cfg);
        out.target.col(b) = nn::ConstVectorMap(v.flat().data(), dim);
        break;
      }
      case TargetKind::x0:
        out.target.col(b) = nn::ConstVectorMap(ex.a0.flat().data(), dim);
        break;
      case TargetKind::eps:
        out.target.col(b) = nn::ConstVectorMap(sample.noise.data(), dim);
        break;
    }
  }
  return out;
}

LossAndGrad cfm_loss_and_grad(const VelocityModel& model, const CfmBatch& batch) {
  VelocityModel::Tape tape;
  const nn::Matrix out = model.forward_batch(batch.a_t, batch.t, batch.c, &tape);
  const nn::Matrix diff = out - batch.target;
  const double count = static_cast<double>(diff.size());

  LossAndGrad result;
  result.loss = diff.squaredNorm() / count;
  result.grad.assign(model.num_params(), 0.0);
  model.backward_batch(tape, (2.0 / count) * diff, result.grad);
  return result;
}

TrainState::TrainState(VelocityModel m, double lr, int batch)
    : model(std::move(m)), batch_size(batch) {
  optimizer.lr = lr;
}

void train(TrainState& state, std::span<const TrainingItem> dataset, int epochs,
           const TrainPriorFn& prior, Rng& rng) {
  if (epochs < 0) throw std::invalid_argument("train: negative epoch count");
  if (epochs == 0) return;
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (state.batch_size <= 0) throw std::invalid_argument("train: batch size must be positive");

  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<CfmExample> examples;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < order.size(); start += state.batch_size) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(state.batch_size));
      examples.clear();
      for (size_t i = start; i < stop; ++i) {
        const TrainingItem& item = dataset[order[i]];
        examples.push_back({item.a0, prior(item.a0, item.c, rng), item.c});
      }
      const CfmBatch batch = make_cfm_batch(examples, state.model.target(), state.model.bridge(), rng);
      const LossAndGrad lg = cfm_loss_and_grad(state.model, batch);
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(state.step));
      }
      state.optimizer.step_update(state.model.params(), lg.grad);
      ++state.step;
      loss_sum += lg.loss * static_cast<double>(stop - start);
      seen += stop - start;
    }
    state.loss_trace.push_back(loss_sum / static_cast<double>(seen));
  }
}

}  // namespace rsbm
