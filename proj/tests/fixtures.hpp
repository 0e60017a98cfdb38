#pragma once

// Small mixture models shared by the oracle tests and the acceptance run.

#include "nit/oracle.hpp"

#include <random>

namespace fixture {

using nit::ColumnKind;
using nit::MixtureComponent;
using nit::MixtureModel;

inline Eigen::VectorXd v(std::initializer_list<double> xs) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) out(i++) = x;
  return out;
}

inline Eigen::MatrixXd m(Eigen::Index r, std::initializer_list<double> xs) {
  Eigen::MatrixXd out(r, r);
  auto it = xs.begin();
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j) out(i, j) = *it++;
  return out;
}

// S is an independent copy of Y around μ ~ N(μ₀, τ²).
inline MixtureModel matched_copy(double mu0, double tau, double sigma) {
  const double t2 = tau * tau;
  return MixtureModel(sigma, {ColumnKind::continuous},
                      {MixtureComponent{1.0, v({mu0, mu0}), m(2, {t2, t2, t2, t2 + sigma * sigma}), {}}});
}

// S is a group label; Y | S=k ~ (1-π_k) N(0,1) + π_k N(μ,1), μ ~ N(2,1).
inline MixtureModel two_groups() {
  std::vector<MixtureComponent> comps;
  const double pis[2] = {0.01, 0.4};
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd pmf = Eigen::VectorXd::Zero(2);
    pmf(k) = 1.0;
    comps.push_back({0.5 * (1 - pis[k]), v({0}), m(1, {0}), {pmf}});
    comps.push_back({0.5 * pis[k], v({2}), m(1, {1}), {pmf}});
  }
  return MixtureModel(1.0, {ColumnKind::categorical}, comps);
}

inline MixtureModel random_mixture(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2, 2), pos(0.2, 1.5), w(0.2, 1.0);
  const int comps = 1 + int(rng() % 3);
  std::vector<ColumnKind> kinds = {ColumnKind::continuous, ColumnKind::categorical};
  std::vector<double> weights;
  for (int k = 0; k < comps; ++k) weights.push_back(w(rng));
  double total = 0;
  for (double x : weights) total += x;
  std::vector<MixtureComponent> out;
  for (int k = 0; k < comps; ++k) {
    Eigen::MatrixXd a(2, 2);
    a << pos(rng), u(rng) * 0.3, 0, pos(rng);
    Eigen::VectorXd pmf(3);
    pmf << w(rng), w(rng), w(rng);
    pmf /= pmf.sum();
    out.push_back({weights[k] / total, v({u(rng), u(rng)}), a * a.transpose(), {pmf}});
  }
  double sum = 0;
  for (const auto& c : out) sum += c.weight;
  out.back().weight += 1 - sum;
  return MixtureModel(pos(rng), kinds, out);
}

}  // namespace fixture
