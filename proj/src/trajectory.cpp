#include "rsbm/trajectory.hpp"

#include <cmath>
#include <string>

#include "rsbm/errors.hpp"

namespace rsbm {

Trajectory::Trajectory(int horizon, double fill) {
  if (horizon <= 0) throw ShapeError("trajectory horizon must be positive");
  values_.assign(static_cast<size_t>(2 * horizon), fill);
}

Trajectory Trajectory::from_flat(std::span<const double> flat) {
  if (flat.empty() || flat.size() % 2 != 0) {
    throw ShapeError("flat trajectory must have a positive even length, got " +
                     std::to_string(flat.size()));
  }
  Trajectory out;
  out.values_.assign(flat.begin(), flat.end());
  return out;
}

bool Trajectory::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Trajectory& Trajectory::operator+=(const Trajectory& other) {
  require_same_shape(*this, other, "operator+=");
  for (size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Trajectory& Trajectory::operator-=(const Trajectory& other) {
  require_same_shape(*this, other, "operator-=");
  for (size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

Trajectory& Trajectory::operator*=(double scale) {
  for (double& v : values_) v *= scale;
  return *this;
}

void require_same_shape(const Trajectory& a, const Trajectory& b, const char* what) {
  if (a.dim() != b.dim()) {
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.horizon()) +
                     " vs " + std::to_string(b.horizon()) + " waypoints)");
  }
}

std::vector<double> standard_normal(int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(static_cast<size_t>(dim));
  for (double& v : out) v = normal(rng);
  return out;
}

}  // namespace rsbm
