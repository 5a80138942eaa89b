#include "rsbm/metrics.hpp"

#include <cmath>

#include "rsbm/errors.hpp"

namespace rsbm {

double mse(const Trajectory& pred, const Trajectory& gt) {
  require_same_shape(pred, gt, "mse");
  double sum = 0.0;
  for (int i = 0; i < gt.dim(); ++i) {
    const double d = pred[i] - gt[i];
    sum += d * d;
  }
  return sum / gt.dim();
}

double cos_sim(const Trajectory& pred, const Trajectory& gt) {
  require_same_shape(pred, gt, "cos_sim");
  double dot = 0.0, np = 0.0, ng = 0.0;
  for (int i = 0; i < gt.dim(); ++i) {
    dot += pred[i] * gt[i];
    np += pred[i] * pred[i];
    ng += gt[i] * gt[i];
  }
  if (ng == 0.0) throw DomainError("cos_sim: ground truth is the zero vector");
  if (np == 0.0) return 0.0;
  return dot / (std::sqrt(np) * std::sqrt(ng));
}

double fde(const Trajectory& pred, const Trajectory& gt) {
  require_same_shape(pred, gt, "fde");
  const int last = gt.horizon() - 1;
  return std::hypot(pred.x(last) - gt.x(last), pred.y(last) - gt.y(last));
}

EvalReport summarize(const std::vector<Trajectory>& preds, const std::vector<Trajectory>& gts,
                     int nfe) {
  if (preds.size() != gts.size() || preds.empty()) {
    throw ShapeError("summarize: need equally many (>0) predictions and ground truths");
  }
  EvalReport report;
  report.nfe = nfe;
  for (size_t i = 0; i < preds.size(); ++i) {
    SampleRecord rec{mse(preds[i], gts[i]), cos_sim(preds[i], gts[i]), fde(preds[i], gts[i])};
    report.mse += rec.mse;
    report.cos_sim += rec.cos_sim;
    report.fde += rec.fde;
    report.records.push_back(rec);
  }
  const double n = static_cast<double>(preds.size());
  report.mse /= n;
  report.cos_sim /= n;
  report.fde /= n;
  return report;
}

}  // namespace rsbm
