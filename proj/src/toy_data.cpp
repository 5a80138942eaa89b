#include "rsbm/toy_data.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <tuple>

#include "rsbm/errors.hpp"

namespace rsbm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::pair<double, double> star_point(double u) {
  // Pentagram: vertex m sits at angle pi/2 + m * 4pi/5, traversed as a closed loop.
  const double pos = 5.0 * (u - std::floor(u));
  const int seg = static_cast<int>(pos) % 5;
  const double frac = pos - std::floor(pos);
  const auto vertex = [](int m) {
    const double angle = std::numbers::pi / 2.0 + m * 4.0 * std::numbers::pi / 5.0;
    return std::pair{std::cos(angle), std::sin(angle)};
  };
  const auto [x0, y0] = vertex(seg);
  const auto [x1, y1] = vertex(seg + 1);
  return {x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)};
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(ToyShape shape) {
  return shape == ToyShape::star_patrol ? "star" : "figure8";
}

ToyShape parse_shape(const std::string& name) {
  if (name == "star" || name == "star_patrol") return ToyShape::star_patrol;
  if (name == "figure8") return ToyShape::figure8;
  throw std::invalid_argument("unknown shape '" + name + "' (expected star or figure8)");
}

Trajectory toy_path(const ToyTask& task, int horizon) {
  Trajectory out(horizon);
  const double c = std::cos(task.rotation);
  const double s = std::sin(task.rotation);
  for (int j = 0; j < horizon; ++j) {
    const double u = task.start_phase + kTwoPi * j / horizon;
    double px = 0.0, py = 0.0;
    if (task.shape == ToyShape::figure8) {
      px = std::sin(u);
      py = std::sin(u) * std::cos(u);
    } else {
      std::tie(px, py) = star_point(u / kTwoPi);
    }
    out.x(j) = task.scale * (c * px - s * py);
    out.y(j) = task.scale * (s * px + c * py);
  }
  return out;
}

Dataset generate_dataset(int n, const std::vector<ToyTask>& tasks, Rng& rng, int horizon) {
  if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
  if (tasks.empty()) throw std::invalid_argument("generate_dataset: no tasks given");
  std::uniform_int_distribution<size_t> pick(0, tasks.size() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const ToyTask& task = tasks[pick(rng)];
    Trajectory a0 = toy_path(task, horizon);
    if (task.noise > 0.0) {
      for (int j = 0; j < a0.dim(); ++j) a0[j] += task.noise * normal(rng);
    }
    out.push_back({task, std::move(a0)});
  }
  return out;
}

std::vector<ToyTask> make_task_family(const std::vector<ToyShape>& shapes, int count, double noise,
                                      Rng& rng) {
  if (shapes.empty() || count < 1) throw std::invalid_argument("make_task_family: empty family");
  std::uniform_real_distribution<double> scale(1.5, 2.5);
  std::uniform_real_distribution<double> pose(-0.4, 0.4);
  std::vector<ToyTask> out;
  for (int i = 0; i < count; ++i) {
    ToyTask task;
    task.shape = shapes[static_cast<size_t>(i) % shapes.size()];
    task.scale = scale(rng);
    task.rotation = pose(rng);
    task.start_phase = pose(rng);
    task.noise = noise;
    out.push_back(task);
  }
  return out;
}

ContextVector make_context(const ToyTask& task, bool hide_phase, int horizon) {
  const Trajectory path = toy_path(task, horizon);
  const int last = horizon - 1;
  ContextVector c;
  c.values = {task.shape == ToyShape::star_patrol ? 1.0 : 0.0,
              task.shape == ToyShape::figure8 ? 1.0 : 0.0,
              hide_phase ? 0.0 : path.x(last),
              hide_phase ? 0.0 : path.y(last),
              task.scale,
              task.rotation,
              hide_phase ? 0.0 : std::cos(task.start_phase),
              hide_phase ? 0.0 : std::sin(task.start_phase)};
  return c;
}

std::vector<TrainingItem> to_training_items(const Dataset& data, bool hide_phase) {
  std::vector<TrainingItem> out;
  out.reserve(data.size());
  for (const auto& sample : data) {
    out.push_back({sample.a0, make_context(sample.task, hide_phase, sample.a0.horizon())});
  }
  return out;
}

std::string dataset_csv_header(int horizon) {
  std::string header = "shape,scale,rotation,phase,noise";
  for (int j = 0; j < horizon; ++j) {
    header += ",x" + std::to_string(j) + ",y" + std::to_string(j);
  }
  return header;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  const int horizon = data.empty() ? Trajectory::kDefaultHorizon : data.front().a0.horizon();
  out << dataset_csv_header(horizon) << '\n';
  for (const auto& sample : data) {
    const ToyTask& t = sample.task;
    out << to_string(t.shape) << ',' << format_double(t.scale) << ',' << format_double(t.rotation)
        << ',' << format_double(t.start_phase) << ',' << format_double(t.noise);
    for (double v : sample.a0.flat()) out << ',' << format_double(v);
    out << '\n';
  }
}

Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset CSV is empty");
  int columns = 1;
  for (char ch : line) columns += ch == ',';
  const int coords = columns - 5;
  if (coords <= 0 || coords % 2 != 0 || line != dataset_csv_header(coords / 2)) {
    throw FormatError("dataset CSV header not recognised: " + line);
  }

  Dataset out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (static_cast<int>(cells.size()) != columns) {
      throw FormatError("dataset CSV row " + std::to_string(row) + " has " +
                        std::to_string(cells.size()) + " cells, expected " + std::to_string(columns));
    }
    try {
      DataSample sample;
      sample.task.shape = parse_shape(cells[0]);
      sample.task.scale = std::stod(cells[1]);
      sample.task.rotation = std::stod(cells[2]);
      sample.task.start_phase = std::stod(cells[3]);
      sample.task.noise = std::stod(cells[4]);
      std::vector<double> flat;
      for (int j = 0; j < coords; ++j) flat.push_back(std::stod(cells[5 + j]));
      sample.a0 = Trajectory::from_flat(flat);
      out.push_back(std::move(sample));
    } catch (const std::invalid_argument& e) {
      throw FormatError("dataset CSV row " + std::to_string(row) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace rsbm
