#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "rsbm/pipeline.hpp"

namespace rsbm::oracle {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

struct OracleReport {
  std::vector<CheckResult> checks;

  bool all_pass() const;
  void append(const OracleReport& other);
  /// [{"check", "measured", "expected", "tolerance", "pass", "detail"}, ...]
  nlohmann::json to_json() const;
};

/// Spread of d log sigma / dt across epsilon, computed as (d sigma/dt) / sigma
/// from the kernel for each epsilon. kernel_perturbation != 0 multiplies the
/// kernel std by (1 + p * eps * t / sigma_max), an epsilon-dependent defect
/// the check must catch.
struct InvarianceOptions {
  std::vector<double> epsilons = {0.01, 0.1, 0.5, 1.0};
  int t_points = 100;
  double kernel_perturbation = 0.0;
};
OracleReport check_epsilon_invariance(const BridgeConfig& base, const InvarianceOptions& options = {});

/// Monte-Carlo per-component variance of the target velocity against
/// eps (1 - 2s)^2 / (1 - s).
struct VarianceOptions {
  std::vector<double> s_values = {0.1, 0.25, 0.75};
  std::vector<double> epsilons = {0.25, 0.5, 1.0};
  int draws = 100000;
  double tolerance = 0.03;
  std::uint64_t seed = 2024;
};
OracleReport check_velocity_variance_mc(const BridgeConfig& base, const VarianceOptions& options = {});

/// Closed-form KL against an independent diagonal-Gaussian KL, plus
/// nonnegativity and monotonicity in epsilon.
OracleReport check_kl(const std::vector<double>& epsilons = {1.0, 0.5, 0.25, 0.1},
                      const std::vector<int>& dims = {2, 16});

/// Endpoint pinning of the kernel std and the 6-sigma deviation bound at sigma_min.
OracleReport check_boundary_pinning(const BridgeConfig& base, int draws = 10000,
                                    std::uint64_t seed = 7);

/// Evaluation counts of both integrators on inference schedules.
OracleReport check_nfe_accounting(const BridgeConfig& base);

/// Discretisation structure of the sampling-error bound: convergence slopes of
/// Heun and Euler on the analytic bridge field over an interior interval,
/// constant-field exactness, transport consistency, and (when a trained
/// model is given) the approximation floor of the learned field.
struct ErrorDecompositionOptions {
  std::vector<int> heun_ks = {3, 6, 12, 24};
  std::vector<int> euler_ks = {5, 10, 20, 40};
  double interval_hi = 0.8;  // fractions of sigma_max
  double interval_lo = 0.2;
  double slope_tolerance = 0.3;
  std::vector<int> model_ks = {1, 2, 3, 5, 10, 20, 40, 80, 160};
  std::uint64_t seed = 11;
};
OracleReport check_error_decomposition(const BridgeConfig& base,
                                       const ErrorDecompositionOptions& options = {},
                                       const TrainedPipeline* trained = nullptr,
                                       const Dataset* test_set = nullptr);

/// Least-squares slope of log(err) against log(k), sign flipped (order of convergence).
double convergence_order(const std::vector<int>& ks, const std::vector<double>& errors);

struct VerifyOptions {
  BridgeConfig bridge;
  double kernel_perturbation = 0.0;
  std::uint64_t seed = 0;
  /// Checkpointed pipeline for the approximation-floor check; when absent a
  /// small model is trained on a toy dataset.
  const TrainedPipeline* trained = nullptr;
  const Dataset* test_set = nullptr;
};

OracleReport run_all(const VerifyOptions& options);

}  // namespace rsbm::oracle
