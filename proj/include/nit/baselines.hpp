#pragma once

#include "nit/common.hpp"

namespace nit {

// Positive-part James-Stein shrinkage toward the precision-weighted grand
// mean, with per-coordinate noise levels.
Eigen::VectorXd james_stein(const Eigen::VectorXd& y, const Eigen::VectorXd& sigmas);
Eigen::VectorXd james_stein(const Eigen::VectorXd& y, double sigma);

// 1.06·sd(y)·n^(-1/5)
double silverman_bandwidth(const Eigen::VectorXd& y);

// Tweedie's formula with a Gaussian kernel density estimate of the marginal.
// f̂ is floored at 1e-30 and |f̂'/f̂| capped at 10/bandwidth.
Eigen::VectorXd tweedie_kde(const Eigen::VectorXd& y, double sigma, double bandwidth);
Eigen::VectorXd tweedie_kde(const Eigen::VectorXd& y, double sigma);

}  // namespace nit
