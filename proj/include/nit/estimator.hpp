#pragma once

#include "nit/common.hpp"
#include "nit/metric_kernel.hpp"
#include "nit/score_qp.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nit {

// Primary observations y, auxiliary matrix s (n×K, K may be 0) and the
// known noise standard deviation.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd s;
  std::vector<ColumnKind> aux_kinds;
  double sigma = 1.0;
  // Optional metadata carried through I/O.
  std::vector<std::string> aux_names;
  std::vector<std::vector<std::string>> aux_labels;

  Index size() const { return y.size(); }
  Index aux_dims() const { return s.cols(); }
  void validate() const;
};

// [y | s] with column kinds; column 0 is the primary coordinate.
DataMatrix<double> pool(const Dataset& data);

// Replace the auxiliary block by the row mean of its continuous columns.
Dataset average_auxiliaries(const Dataset& data);

enum class BoxMode { off, automatic };

// User-level constraint choices, resolved against a dataset by
// build_constraints. Automatic box bounds are c_i = 10·(1 + ‖x_i‖₂)/σ².
struct ConstraintOptions {
  bool zero_sum = true;
  BoxMode box = BoxMode::off;
  std::optional<Eigen::VectorXd> box_bounds;  // explicit bounds override `box`
  bool monotone = false;                      // only valid when K = 0
};

ConstraintSet<double> build_constraints(const Dataset& data, double sigma2,
                                        const ConstraintOptions& opts);

struct FitOptions {
  double cov_ridge = 1e-6;
  SolveOptions<double> solver{};
};

struct McvConfig {
  double alpha = 0.1;
  std::vector<double> lambda_grid;  // empty: default_lambda_grid
  int replicates = 5;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0: hardware concurrency

  void validate() const;
};

struct LossPoint {
  double lambda;
  double loss;
};

struct FailedPoint {
  double lambda;
  std::string reason;
};

struct EstimateResult {
  Eigen::VectorXd delta;
  double lambda_hat = 0;
  std::vector<LossPoint> loss_curve;
  ScoreSolution<double> score;
  std::vector<double> grid;           // grid actually searched
  std::vector<FailedPoint> failed;    // grid points excluded from the search
  std::vector<std::string> diagnostics;
};

// Median pairwise generalized-Mahalanobis distance of the pooled data
// (over an evenly strided subset of at most 1000 records).
double median_pair_distance(const Dataset& data, double cov_ridge = 1e-6);

// 25 log-spaced bandwidths on [0.2, 20]·median_pair_distance.
std::vector<double> default_lambda_grid(const Dataset& data, double cov_ridge = 1e-6);

// log-spaced grid over [lo, hi] with `count` points.
std::vector<double> log_grid(double lo, double hi, int count);

// δ = y + σ²ĥ at a fixed bandwidth; loss_curve is left empty.
EstimateResult fit_nit(const Dataset& data, double lambda, const ConstraintOptions& cons = {},
                       const FitOptions& fit = {});

// Same, with an explicit noise variance in place of data.sigma².
EstimateResult fit_nit_with_variance(const Dataset& data, double sigma2, double lambda,
                                     const ConstraintOptions& cons, const FitOptions& fit);

// Validation loss n⁻¹Σ(δ_i - v_i)² - σ²(1 + 1/α²).
double mcv_loss(const Eigen::VectorXd& delta, const Eigen::VectorXd& v, double sigma, double alpha);

// Modified cross-validation over the bandwidth grid, then a refit on the
// original data at the selected bandwidth.
EstimateResult mcv_select(const Dataset& data, const McvConfig& cfg, const ConstraintOptions& cons = {},
                          const FitOptions& fit = {});

// Default entry point.
EstimateResult estimate(const Dataset& data, const McvConfig& cfg = {}, const ConstraintOptions& cons = {},
                        const FitOptions& fit = {});

}  // namespace nit
