#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rsbm/velocity_model.hpp"

namespace rsbm {

enum class ToyShape { star_patrol, figure8 };

std::string to_string(ToyShape shape);
ToyShape parse_shape(const std::string& name);

/// One pose of a toy trajectory family.
struct ToyTask {
  ToyShape shape = ToyShape::figure8;
  double scale = 2.0;
  double rotation = 0.0;     // radians
  double start_phase = 0.0;  // radians along the loop
  double noise = 0.0;        // waypoint jitter std

  friend bool operator==(const ToyTask&, const ToyTask&) = default;
};

struct DataSample {
  ToyTask task;
  Trajectory a0;
};

using Dataset = std::vector<DataSample>;

/// Noise-free waypoints of a task: H points evenly spaced in loop parameter
/// starting at the task phase. figure8 follows scale * (sin u, sin u cos u);
/// star_patrol walks the closed 5-point star polyline of circumradius scale.
Trajectory toy_path(const ToyTask& task, int horizon = Trajectory::kDefaultHorizon);

/// n samples, each from a uniformly chosen task, with N(0, noise^2) jitter.
Dataset generate_dataset(int n, const std::vector<ToyTask>& tasks, Rng& rng,
                         int horizon = Trajectory::kDefaultHorizon);

/// count tasks with random poses: shape cycled from shapes, scale U(1.5, 2.5),
/// rotation and phase U(-0.4, 0.4).
std::vector<ToyTask> make_task_family(const std::vector<ToyShape>& shapes, int count,
                                      double noise, Rng& rng);

/// Context [is_star, is_figure8, goal_x, goal_y, scale, rotation, cos phase, sin phase],
/// goal being the noise-free final waypoint. hide_phase zeroes the goal and
/// phase entries, which leaves several valid continuations per context.
ContextVector make_context(const ToyTask& task, bool hide_phase = false,
                           int horizon = Trajectory::kDefaultHorizon);

std::vector<TrainingItem> to_training_items(const Dataset& data, bool hide_phase = false);

/// CSV with header shape,scale,rotation,phase,noise,x0,y0,...
void write_dataset_csv(std::ostream& out, const Dataset& data);
Dataset read_dataset_csv(std::istream& in);
std::string dataset_csv_header(int horizon = Trajectory::kDefaultHorizon);

}  // namespace rsbm
