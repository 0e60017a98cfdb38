#pragma once

// Generalized Mahalanobis metric over pooled records x = (y, s) and the
// Gaussian kernel matrices used by the score program.
//
// Kernel: K(u, v) = exp(-d²(u, v) / (2 λ²)) with
//   d²(u, v) = (u_c - v_c)ᵀ P (u_c - v_c) + #{categorical j : u_j != v_j},
// where u_c is the continuous sub-vector (primary coordinate first) and P
// the regularized precision of the continuous columns.

#include "nit/common.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace nit {

// n records of dimension K+1. Column 0 is the primary coordinate and is
// always continuous; categorical columns hold integer label codes.
template <typename Scalar>
struct DataMatrix {
  Matrix<Scalar> values;
  std::vector<ColumnKind> kinds;

  Index rows() const { return values.rows(); }
  Index dims() const { return values.cols(); }

  std::vector<Index> columns_of(ColumnKind kind) const {
    std::vector<Index> out;
    for (std::size_t j = 0; j < kinds.size(); ++j)
      if (kinds[j] == kind) out.push_back(static_cast<Index>(j));
    return out;
  }

  void validate() const {
    if (values.rows() < 2)
      throw InvalidInput("DataMatrix: need at least 2 records, got " +
                         std::to_string(values.rows()));
    if (static_cast<Index>(kinds.size()) != values.cols())
      throw InvalidInput("DataMatrix: column kind count does not match dimension");
    if (kinds.empty() || kinds[0] != ColumnKind::continuous)
      throw InvalidInput("DataMatrix: primary column must be continuous");
    if (!values.allFinite()) throw InvalidInput("DataMatrix: non-finite entry");
  }
};

// Metric part of the kernel configuration.
template <typename Scalar>
struct Metric {
  Matrix<Scalar> precision;          // over continuous columns, primary first
  std::vector<Index> continuous;     // column indices, continuous[0] == 0
  std::vector<Index> categorical;
  Scalar cov_ridge = Scalar(1e-6);

  Scalar primary_precision() const { return precision(0, 0); }
};

template <typename Scalar>
struct KernelConfig {
  Metric<Scalar> metric;
  Scalar lambda = Scalar(1);
};

// Entries scaled by n⁻²:
//   k(i,j)      = K(x_i, x_j)
//   grad_k(i,j) = ∂K(x_i, x_j)/∂x_{1j}
//   grad2_k(i,j)= ∂²K(x_i, x_j)/∂x_{1i}∂x_{1j}
template <typename Scalar>
struct KernelMatrices {
  Matrix<Scalar> k;
  Matrix<Scalar> grad_k;
  Matrix<Scalar> grad2_k;

  Index size() const { return k.rows(); }
};

// Regularized precision (Σ̂ + cov_ridge·diag(Σ̂))⁻¹ of the continuous columns,
// with Σ̂ the sample covariance (denominator n-1). A constant column is an
// error when cov_ridge == 0; otherwise its diagonal is regularized with
// cov_ridge alone (all its pairwise differences are zero, so the value
// does not enter any distance).
template <typename Scalar>
Metric<Scalar> compute_metric(const DataMatrix<Scalar>& data, Scalar cov_ridge = Scalar(1e-6)) {
  data.validate();
  if (cov_ridge < 0) throw InvalidInput("compute_metric: cov_ridge must be >= 0");

  Metric<Scalar> metric;
  metric.continuous = data.columns_of(ColumnKind::continuous);
  metric.categorical = data.columns_of(ColumnKind::categorical);
  metric.cov_ridge = cov_ridge;

  const Index n = data.rows();
  const Index c = static_cast<Index>(metric.continuous.size());
  Matrix<Scalar> xc(n, c);
  for (Index j = 0; j < c; ++j) xc.col(j) = data.values.col(metric.continuous[j]);

  const Vector<Scalar> mean = xc.colwise().mean().transpose();
  const Matrix<Scalar> centered = xc.rowwise() - mean.transpose();
  Matrix<Scalar> cov = (centered.transpose() * centered) / Scalar(n - 1);

  for (Index j = 0; j < c; ++j) {
    const Scalar var = cov(j, j);
    if (!(var > 0)) {
      if (cov_ridge == 0)
        throw InvalidInput("compute_metric: continuous column " +
                           std::to_string(metric.continuous[j]) +
                           " is constant and cov_ridge = 0 (singular covariance)");
      cov(j, j) += cov_ridge;
    } else {
      cov(j, j) += cov_ridge * var;
    }
  }

  Eigen::LLT<Matrix<Scalar>> llt(cov);
  if (llt.info() != Eigen::Success)
    throw InvalidInput("compute_metric: covariance of continuous columns is singular; "
                       "increase cov_ridge");
  Matrix<Scalar> precision = llt.solve(Matrix<Scalar>::Identity(c, c));
  metric.precision = (precision + precision.transpose()) / Scalar(2);
  return metric;
}

template <typename Scalar>
Scalar distance_sq(std::span<const Scalar> u, std::span<const Scalar> v,
                   const Metric<Scalar>& metric) {
  if (u.size() != v.size()) throw InvalidInput("distance_sq: record dimension mismatch");
  const Index c = static_cast<Index>(metric.continuous.size());
  Vector<Scalar> diff(c);
  for (Index a = 0; a < c; ++a) {
    const auto col = static_cast<std::size_t>(metric.continuous[a]);
    if (col >= u.size()) throw InvalidInput("distance_sq: record does not match metric schema");
    diff(a) = u[col] - v[col];
  }
  Scalar d2 = diff.dot(metric.precision * diff);
  for (Index col : metric.categorical) {
    if (static_cast<std::size_t>(col) >= u.size())
      throw InvalidInput("distance_sq: record does not match metric schema");
    if (u[col] != v[col]) d2 += Scalar(1);
  }
  return std::max(d2, Scalar(0));
}

template <typename Scalar>
Scalar distance_sq(const Vector<Scalar>& u, const Vector<Scalar>& v, const Metric<Scalar>& metric) {
  return distance_sq<Scalar>(std::span<const Scalar>(u.data(), static_cast<std::size_t>(u.size())),
                             std::span<const Scalar>(v.data(), static_cast<std::size_t>(v.size())),
                             metric);
}

// Pairwise quantities that do not depend on λ. sq_dist holds d²(x_i, x_j);
// primary_load holds w = X_c·P·e₁, so [P(x_i - x_j)]₁ = w_i - w_j.
template <typename Scalar>
struct PairGeometry {
  Matrix<Scalar> sq_dist;
  Vector<Scalar> primary_load;
  Scalar p11 = Scalar(1);

  Index size() const { return sq_dist.rows(); }
};

template <typename Scalar>
PairGeometry<Scalar> pair_geometry(const DataMatrix<Scalar>& data, const Metric<Scalar>& metric) {
  data.validate();
  const Index n = data.rows();
  const Index c = static_cast<Index>(metric.continuous.size());
  if (metric.precision.rows() != c || metric.precision.cols() != c)
    throw InvalidInput("pair_geometry: precision does not match continuous columns");

  Matrix<Scalar> xc(n, c);
  for (Index j = 0; j < c; ++j) xc.col(j) = data.values.col(metric.continuous[j]);

  // P = L Lᵀ, so d² over continuous columns is ‖(x_i - x_j)ᵀ L‖².
  Eigen::LLT<Matrix<Scalar>> llt(metric.precision);
  if (llt.info() != Eigen::Success)
    throw InvalidInput("pair_geometry: precision is not positive definite");
  const Matrix<Scalar> z = xc * Matrix<Scalar>(llt.matrixL());

  PairGeometry<Scalar> geo;
  geo.p11 = metric.precision(0, 0);
  geo.primary_load = xc * metric.precision.col(0);
  geo.sq_dist.resize(n, n);
  const Index ncat = static_cast<Index>(metric.categorical.size());
  for (Index j = 0; j < n; ++j) {
    geo.sq_dist(j, j) = Scalar(0);
    for (Index i = j + 1; i < n; ++i) {
      Scalar d2 = (z.row(i) - z.row(j)).squaredNorm();
      for (Index q = 0; q < ncat; ++q) {
        const Index col = metric.categorical[q];
        if (data.values(i, col) != data.values(j, col)) d2 += Scalar(1);
      }
      geo.sq_dist(i, j) = d2;
      geo.sq_dist(j, i) = d2;
    }
  }
  return geo;
}

template <typename Scalar>
KernelMatrices<Scalar> kernel_matrices(const PairGeometry<Scalar>& geo, Scalar lambda) {
  if (!(lambda > 0)) throw InvalidInput("kernel_matrices: lambda must be positive");
  const Index n = geo.size();
  const Scalar scale = Scalar(1) / (Scalar(n) * Scalar(n));
  const Scalar inv_l2 = Scalar(1) / (lambda * lambda);
  const Scalar inv_l4 = inv_l2 * inv_l2;
  const Scalar half_inv_l2 = Scalar(0.5) * inv_l2;

  KernelMatrices<Scalar> km;
  km.k.resize(n, n);
  km.grad_k.resize(n, n);
  km.grad2_k.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    const Scalar wj = geo.primary_load(j);
    for (Index i = 0; i < n; ++i) {
      const Scalar kij = scale * std::exp(-half_inv_l2 * geo.sq_dist(i, j));
      const Scalar gap = geo.primary_load(i) - wj;
      km.k(i, j) = kij;
      km.grad_k(i, j) = kij * gap * inv_l2;
      km.grad2_k(i, j) = kij * (geo.p11 * inv_l2 - gap * gap * inv_l4);
    }
    km.k(j, j) = scale;
    km.grad_k(j, j) = Scalar(0);
    km.grad2_k(j, j) = scale * geo.p11 * inv_l2;
  }
  return km;
}

template <typename Scalar>
KernelMatrices<Scalar> kernel_matrices(const DataMatrix<Scalar>& data, const KernelConfig<Scalar>& cfg) {
  return kernel_matrices(pair_geometry(data, cfg.metric), cfg.lambda);
}

// Unscaled kernel and its primary-coordinate derivatives at one pair.
template <typename Scalar>
struct KernelPoint {
  Scalar value;   // K(u, v)
  Scalar d_u1;    // ∂K/∂u₁
  Scalar d_v1;    // ∂K/∂v₁
  Scalar d_u1v1;  // ∂²K/∂u₁∂v₁
};

template <typename Scalar>
KernelPoint<Scalar> kernel_point(std::span<const Scalar> u, std::span<const Scalar> v,
                                 const KernelConfig<Scalar>& cfg) {
  const auto& m = cfg.metric;
  const Scalar l2 = cfg.lambda * cfg.lambda;
  const Scalar k = std::exp(-distance_sq<Scalar>(u, v, m) / (Scalar(2) * l2));
  Scalar gap = 0;  // [P(u_c - v_c)]₁
  for (std::size_t a = 0; a < m.continuous.size(); ++a) {
    const auto col = static_cast<std::size_t>(m.continuous[a]);
    gap += m.precision(0, static_cast<Index>(a)) * (u[col] - v[col]);
  }
  return {k, -k * gap / l2, k * gap / l2, k * (m.primary_precision() / l2 - gap * gap / (l2 * l2))};
}

}  // namespace nit
