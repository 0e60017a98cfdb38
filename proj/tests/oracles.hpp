#pragma once

// Reference computations used only by the tests. They are written directly
// from the defining formulas, without the library's factorizations or
// shortcuts, so that agreement is meaningful.

#include "nit/oracle.hpp"
#include "nit/simulation.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// exp(-d²/(2λ²)) with d² from an explicit double loop over the precision.
inline double kernel(const VectorXd& u, const VectorXd& v, const MatrixXd& precision,
                     const std::vector<int>& continuous, const std::vector<int>& categorical, double lambda) {
  double d2 = 0;
  for (std::size_t a = 0; a < continuous.size(); ++a)
    for (std::size_t b = 0; b < continuous.size(); ++b)
      d2 += (u(continuous[a]) - v(continuous[a])) * precision(a, b) * (u(continuous[b]) - v(continuous[b]));
  for (int c : categorical) d2 += u(c) != v(c) ? 1.0 : 0.0;
  return std::exp(-d2 / (2 * lambda * lambda));
}

// Gaussian density via explicit inverse and determinant (LU).
inline double gaussian_pdf(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov) {
  const Eigen::FullPivLU<MatrixXd> lu(cov);
  const VectorXd d = x - mean;
  const double q = d.dot(lu.inverse() * d);
  return std::exp(-0.5 * q) / std::sqrt(std::pow(2 * std::numbers::pi, double(x.size())) * lu.determinant());
}

// f(y, s) by plain summation over components.
inline double mixture_density(const nit::MixtureModel& model, double y, const VectorXd& s) {
  std::vector<int> cont, cat;
  for (int j = 0; j < int(model.aux_kinds().size()); ++j)
    (model.aux_kinds()[j] == nit::ColumnKind::continuous ? cont : cat).push_back(j);
  const double s2 = model.noise_sd() * model.noise_sd();
  double total = 0;
  for (const auto& c : model.components()) {
    VectorXd x(1 + cont.size());
    x(0) = y;
    for (std::size_t a = 0; a < cont.size(); ++a) x(a + 1) = s(cont[a]);
    MatrixXd cov = c.cov;
    cov(0, 0) += s2;
    double p = c.weight * gaussian_pdf(x, c.mean, cov);
    for (std::size_t q = 0; q < cat.size(); ++q) {
      const auto label = static_cast<Eigen::Index>(std::llround(s(cat[q])));
      p *= (label >= 0 && label < c.pmfs[q].size()) ? c.pmfs[q](label) : 0.0;
    }
    total += p;
  }
  return total;
}

inline double mixture_score_fd(const nit::MixtureModel& model, double y, const VectorXd& s, double step) {
  return (std::log(mixture_density(model, y + step, s)) - std::log(mixture_density(model, y - step, s))) /
         (2 * step);
}

// Positive-part James-Stein, transcribed term by term.
inline VectorXd james_stein(const VectorXd& y, const VectorXd& sig) {
  const auto n = y.size();
  double num = 0, den = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    num += y(i) / (sig(i) * sig(i));
    den += 1 / (sig(i) * sig(i));
  }
  const double center = num / den;
  double spread = 0;
  for (Eigen::Index i = 0; i < n; ++i) spread += (y(i) - center) * (y(i) - center) / (sig(i) * sig(i));
  double factor = 1 - double(n - 3) / spread;
  if (factor < 0) factor = 0;
  VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = center + factor * (y(i) - center);
  return out;
}

// KDE Tweedie rule with normalized density, double loop.
inline VectorXd tweedie_kde(const VectorXd& y, double sigma, double h) {
  const auto n = y.size();
  VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double f = 0, df = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double z = (y(i) - y(j)) / h;
      const double phi = std::exp(-0.5 * z * z) / (std::sqrt(2 * std::numbers::pi) * h);
      f += phi / double(n);
      df += -z / h * phi / double(n);
    }
    double ratio = df / std::max(f, 1e-30);
    ratio = std::max(-10 / h, std::min(10 / h, ratio));
    out(i) = y(i) + sigma * sigma * ratio;
  }
  return out;
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

inline double std_error(const std::vector<double>& v) {
  const double m = mean(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(v.size() - 1) / double(v.size()));
}

inline nit::DataMatrix<double> random_data(std::mt19937_64& rng, Eigen::Index n, int continuous_aux,
                                           int categorical_aux, int levels = 3) {
  std::normal_distribution<double> z;
  std::uniform_int_distribution<int> lab(0, levels - 1);
  nit::DataMatrix<double> x;
  const int dims = 1 + continuous_aux + categorical_aux;
  x.values.resize(n, dims);
  x.kinds.assign(dims, nit::ColumnKind::continuous);
  for (int j = 1 + continuous_aux; j < dims; ++j) x.kinds[j] = nit::ColumnKind::categorical;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double common = z(rng);
    x.values(i, 0) = common + 0.7 * z(rng);
    for (int j = 1; j <= continuous_aux; ++j) x.values(i, j) = 0.5 * common + z(rng) * (1 + j);
    for (int j = 1 + continuous_aux; j < dims; ++j) x.values(i, j) = lab(rng);
  }
  return x;
}

}  // namespace oracle
