#pragma once

#include <random>
#include <span>
#include <vector>

namespace rsbm {

using Rng = std::mt19937_64;

/// H x 2 waypoint array stored waypoint-major: x0, y0, x1, y1, ...
///
/// The same flat layout is used by the bridge math, model I/O and metrics.
class Trajectory {
 public:
  static constexpr int kDefaultHorizon = 8;

  Trajectory() = default;
  explicit Trajectory(int horizon, double fill = 0.0);

  static Trajectory from_flat(std::span<const double> flat);

  int horizon() const { return static_cast<int>(values_.size() / 2); }
  int dim() const { return static_cast<int>(values_.size()); }

  double x(int i) const { return values_[2 * i]; }
  double y(int i) const { return values_[2 * i + 1]; }
  double& x(int i) { return values_[2 * i]; }
  double& y(int i) { return values_[2 * i + 1]; }

  double operator[](int i) const { return values_[i]; }
  double& operator[](int i) { return values_[i]; }

  std::span<const double> flat() const { return values_; }
  std::span<double> flat() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool all_finite() const;

  Trajectory& operator+=(const Trajectory& other);
  Trajectory& operator-=(const Trajectory& other);
  Trajectory& operator*=(double scale);

  friend Trajectory operator+(Trajectory a, const Trajectory& b) { return a += b; }
  friend Trajectory operator-(Trajectory a, const Trajectory& b) { return a -= b; }
  friend Trajectory operator*(Trajectory a, double s) { return a *= s; }
  friend Trajectory operator*(double s, Trajectory a) { return a *= s; }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;

 private:
  std::vector<double> values_;
};

/// Throws ShapeError when the two trajectories have different horizons.
void require_same_shape(const Trajectory& a, const Trajectory& b, const char* what);

/// Standard-normal draw of the given dimension.
std::vector<double> standard_normal(int dim, Rng& rng);

}  // namespace rsbm
