#include "nit/baselines.hpp"

#include <algorithm>
#include <cmath>

namespace nit {

Eigen::VectorXd james_stein(const Eigen::VectorXd& y, const Eigen::VectorXd& sigmas) {
  const Index n = y.size();
  if (n < 4) throw InvalidInput("james_stein: need n >= 4");
  if (sigmas.size() != n) throw InvalidInput("james_stein: sigmas length does not match y");
  if (!((sigmas.array() > 0).all())) throw InvalidInput("james_stein: sigmas must be positive");

  const Eigen::ArrayXd prec = sigmas.array().square().inverse();
  const double center = (prec * y.array()).sum() / prec.sum();
  const Eigen::ArrayXd dev = y.array() - center;
  const double spread = (prec * dev.square()).sum();
  const double factor = spread > 0 ? std::max(0.0, 1.0 - static_cast<double>(n - 3) / spread) : 0.0;
  return (center + factor * dev).matrix();
}

Eigen::VectorXd james_stein(const Eigen::VectorXd& y, double sigma) {
  return james_stein(y, Eigen::VectorXd::Constant(y.size(), sigma));
}

double silverman_bandwidth(const Eigen::VectorXd& y) {
  const double n = static_cast<double>(y.size());
  if (y.size() < 2) throw InvalidInput("silverman_bandwidth: need n >= 2");
  const double sd = std::sqrt((y.array() - y.mean()).square().sum() / (n - 1.0));
  if (!(sd > 0)) throw InvalidInput("silverman_bandwidth: y has zero spread");
  return 1.06 * sd * std::pow(n, -0.2);
}

Eigen::VectorXd tweedie_kde(const Eigen::VectorXd& y, double sigma, double bandwidth) {
  if (!(bandwidth > 0)) throw InvalidInput("tweedie_kde: bandwidth must be positive");
  const Index n = y.size();
  const double inv_h2 = 1.0 / (bandwidth * bandwidth);
  const double cap = 10.0 / bandwidth;
  Eigen::VectorXd out(n);
  // Common normalizing constants cancel in the ratio.
  for (Index i = 0; i < n; ++i) {
    const Eigen::ArrayXd d = y.array() - y(i);
    const Eigen::ArrayXd w = (-0.5 * inv_h2 * d.square()).exp();
    const double f = std::max(w.sum() / static_cast<double>(n), 1e-30);
    const double df = (w * d).sum() * inv_h2 / static_cast<double>(n);
    out(i) = y(i) + sigma * sigma * std::clamp(df / f, -cap, cap);
  }
  return out;
}

Eigen::VectorXd tweedie_kde(const Eigen::VectorXd& y, double sigma) {
  return tweedie_kde(y, sigma, silverman_bandwidth(y));
}

}  // namespace nit
