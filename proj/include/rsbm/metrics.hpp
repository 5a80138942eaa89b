#pragma once

#include <vector>

#include "rsbm/trajectory.hpp"

namespace rsbm {

/// Mean squared error over all 2H components.
double mse(const Trajectory& pred, const Trajectory& gt);

/// Cosine similarity of the flattened trajectories. Throws DomainError when gt is all zero.
double cos_sim(const Trajectory& pred, const Trajectory& gt);

/// Euclidean distance between the final waypoints.
double fde(const Trajectory& pred, const Trajectory& gt);

struct SampleRecord {
  double mse = 0.0;
  double cos_sim = 0.0;
  double fde = 0.0;
};

struct EvalReport {
  double mse = 0.0;
  double cos_sim = 0.0;
  double fde = 0.0;
  int nfe = 0;
  std::vector<SampleRecord> records;
};

/// Aggregates per-sample metrics into means.
EvalReport summarize(const std::vector<Trajectory>& preds, const std::vector<Trajectory>& gts,
                     int nfe);

}  // namespace rsbm
