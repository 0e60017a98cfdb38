#include "nit/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace nit {

void Dataset::validate() const {
  if (y.size() < 2) throw InvalidInput("Dataset: need n >= 2, got " + std::to_string(y.size()));
  if (!(sigma > 0) || !std::isfinite(sigma)) throw InvalidInput("Dataset: sigma must be positive");
  if (s.cols() > 0 && s.rows() != y.size())
    throw InvalidInput("Dataset: auxiliary rows do not match n");
  if (static_cast<Index>(aux_kinds.size()) != s.cols())
    throw InvalidInput("Dataset: auxiliary kind count does not match K");
  if (!y.allFinite() || !s.allFinite()) throw InvalidInput("Dataset: non-finite value");
}

DataMatrix<double> pool(const Dataset& data) {
  data.validate();
  const Index n = data.size();
  const Index k = data.aux_dims();
  DataMatrix<double> x;
  x.values.resize(n, k + 1);
  x.values.col(0) = data.y;
  if (k > 0) x.values.rightCols(k) = data.s;
  x.kinds.reserve(static_cast<std::size_t>(k + 1));
  x.kinds.push_back(ColumnKind::continuous);
  x.kinds.insert(x.kinds.end(), data.aux_kinds.begin(), data.aux_kinds.end());
  return x;
}

Dataset average_auxiliaries(const Dataset& data) {
  data.validate();
  std::vector<Index> cont;
  for (Index j = 0; j < data.aux_dims(); ++j)
    if (data.aux_kinds[j] == ColumnKind::continuous) cont.push_back(j);
  if (cont.empty()) throw InvalidInput("average_auxiliaries: no continuous auxiliary columns");
  Dataset out = data;
  out.s.resize(data.size(), 1);
  out.s.col(0).setZero();
  for (Index j : cont) out.s.col(0) += data.s.col(j);
  out.s.col(0) /= static_cast<double>(cont.size());
  out.aux_kinds = {ColumnKind::continuous};
  out.aux_names = {"aux_mean"};
  out.aux_labels.clear();
  return out;
}

ConstraintSet<double> build_constraints(const Dataset& data, double sigma2, const ConstraintOptions& opts) {
  ConstraintSet<double> cons;
  cons.zero_sum = opts.zero_sum;
  const Index n = data.size();
  if (opts.box_bounds) {
    if (opts.box_bounds->size() != n) throw InvalidInput("box bounds: length does not match n");
    cons.box = *opts.box_bounds;
  } else if (opts.box == BoxMode::automatic) {
    Eigen::VectorXd c(n);
    for (Index i = 0; i < n; ++i) {
      double sq = data.y(i) * data.y(i);
      if (data.aux_dims() > 0) sq += data.s.row(i).squaredNorm();
      c(i) = 10.0 * (1.0 + std::sqrt(sq)) / sigma2;
    }
    cons.box = std::move(c);
  }
  if (opts.monotone) {
    if (data.aux_dims() != 0)
      throw InvalidInput("monotone constraint requires K = 0 (no auxiliary columns)");
    cons.monotone = MonotoneOrder<double>{data.y, sigma2};
  }
  return cons;
}

void McvConfig::validate() const {
  if (!(alpha > 0 && alpha <= 1)) throw InvalidInput("McvConfig: alpha must be in (0, 1]");
  if (replicates < 1) throw InvalidInput("McvConfig: replicates must be >= 1");
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    if (!(lambda_grid[i] > 0)) throw InvalidInput("McvConfig: grid values must be positive");
    if (i > 0 && !(lambda_grid[i] > lambda_grid[i - 1]))
      throw InvalidInput("McvConfig: grid must be strictly increasing");
  }
}

double median_pair_distance(const Dataset& data, double cov_ridge) {
  const DataMatrix<double> x = pool(data);
  const Metric<double> metric = compute_metric(x, cov_ridge);
  const Index n = x.rows();
  const Index m = std::min<Index>(n, 1000);
  std::vector<Index> pick(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) pick[i] = (i * n) / m;

  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (Index a = 0; a < m; ++a) {
    const Eigen::VectorXd u = x.values.row(pick[a]).transpose();
    for (Index b = a + 1; b < m; ++b) {
      const Eigen::VectorXd v = x.values.row(pick[b]).transpose();
      dist.push_back(std::sqrt(distance_sq(u, v, metric)));
    }
  }
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  const double med = *mid;
  if (!(med > 0)) throw InvalidInput("median_pair_distance: all records coincide");
  return med;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0) || !(hi >= lo) || count < 1) throw InvalidInput("log_grid: need 0 < lo <= hi, count >= 1");
  if (count == 1) return {lo};
  if (hi == lo) throw InvalidInput("log_grid: lo == hi requires count == 1");
  std::vector<double> grid(static_cast<std::size_t>(count));
  const double step = (std::log(hi) - std::log(lo)) / (count - 1);
  for (int i = 0; i < count; ++i) grid[i] = std::exp(std::log(lo) + step * i);
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

std::vector<double> default_lambda_grid(const Dataset& data, double cov_ridge) {
  const double med = median_pair_distance(data, cov_ridge);
  return log_grid(0.2 * med, 20.0 * med, 25);
}

namespace {

ScoreSolution<double> solve_at(const PairGeometry<double>& geo, double lambda,
                               const ConstraintSet<double>& cons, const FitOptions& fit) {
  const KernelMatrices<double> km = kernel_matrices(geo, lambda);
  return solve_score(km, cons, fit.solver);
}

}  // namespace

EstimateResult fit_nit_with_variance(const Dataset& data, double sigma2, double lambda,
                                     const ConstraintOptions& cons, const FitOptions& fit) {
  if (!(lambda > 0)) throw InvalidInput("fit_nit: lambda must be positive");
  const DataMatrix<double> x = pool(data);
  const Metric<double> metric = compute_metric(x, fit.cov_ridge);
  const PairGeometry<double> geo = pair_geometry(x, metric);
  const ConstraintSet<double> set = build_constraints(data, sigma2, cons);

  EstimateResult out;
  out.score = solve_at(geo, lambda, set, fit);
  out.delta = data.y + sigma2 * out.score.h;
  out.lambda_hat = lambda;
  out.grid = {lambda};
  if (data.size() < 10)
    out.diagnostics.push_back("warning: n = " + std::to_string(data.size()) +
                              " < 10; score estimate is unreliable");
  return out;
}

EstimateResult fit_nit(const Dataset& data, double lambda, const ConstraintOptions& cons,
                       const FitOptions& fit) {
  return fit_nit_with_variance(data, data.sigma * data.sigma, lambda, cons, fit);
}

double mcv_loss(const Eigen::VectorXd& delta, const Eigen::VectorXd& v, double sigma, double alpha) {
  return (delta - v).squaredNorm() / static_cast<double>(delta.size()) -
         sigma * sigma * (1.0 + 1.0 / (alpha * alpha));
}

EstimateResult mcv_select(const Dataset& data, const McvConfig& cfg, const ConstraintOptions& cons,
                          const FitOptions& fit) {
  data.validate();
  cfg.validate();
  const std::vector<double> grid =
      cfg.lambda_grid.empty() ? default_lambda_grid(data, fit.cov_ridge) : cfg.lambda_grid;
  const std::size_t g = grid.size();
  const auto reps = static_cast<std::size_t>(cfg.replicates);
  const Index n = data.size();
  const double sigma2 = data.sigma * data.sigma;
  const double fit_var = sigma2 * (1.0 + cfg.alpha * cfg.alpha);

  // losses[r * g + j]; NaN marks a failed fit.
  std::vector<double> losses(reps * g, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> reasons(reps * g);

  for (std::size_t r = 0; r < reps; ++r) {
    std::mt19937_64 rng(combine_seed(cfg.seed, r));
    std::normal_distribution<double> noise(0.0, data.sigma);
    Eigen::VectorXd eta(n);
    for (Index i = 0; i < n; ++i) eta(i) = noise(rng);

    Dataset u_data = data;
    u_data.y = data.y + cfg.alpha * eta;
    const Eigen::VectorXd v = data.y - eta / cfg.alpha;

    const DataMatrix<double> x = pool(u_data);
    const Metric<double> metric = compute_metric(x, fit.cov_ridge);
    const PairGeometry<double> geo = pair_geometry(x, metric);
    const ConstraintSet<double> set = build_constraints(u_data, fit_var, cons);

    parallel_for(
        g,
        [&](std::size_t j) {
          try {
            const ScoreSolution<double> sol = solve_at(geo, grid[j], set, fit);
            const Eigen::VectorXd delta = u_data.y + fit_var * sol.h;
            losses[r * g + j] = mcv_loss(delta, v, data.sigma, cfg.alpha);
          } catch (const Error& e) {
            reasons[r * g + j] = e.what();
          }
        },
        cfg.threads);
  }

  EstimateResult out;
  out.grid = grid;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < g; ++j) {
    double sum = 0;
    std::string reason;
    for (std::size_t r = 0; r < reps; ++r) {
      const double l = losses[r * g + j];
      if (std::isnan(l)) {
        reason = reasons[r * g + j];
        break;
      }
      sum += l;
    }
    if (!reason.empty()) {
      out.failed.push_back({grid[j], reason});
      continue;
    }
    const double mean = sum / static_cast<double>(reps);
    out.loss_curve.push_back({grid[j], mean});
    if (mean < best) {  // strict: ties keep the smaller λ
      best = mean;
      out.lambda_hat = grid[j];
    }
  }
  if (out.loss_curve.empty())
    throw Error("mcv_select: every grid point failed; first failure: " + out.failed.front().reason);
  for (const auto& f : out.failed)
    out.diagnostics.push_back("excluded lambda " + std::to_string(f.lambda) + ": " + f.reason);

  EstimateResult refit = fit_nit_with_variance(data, sigma2, out.lambda_hat, cons, fit);
  out.delta = std::move(refit.delta);
  out.score = std::move(refit.score);
  out.diagnostics.insert(out.diagnostics.end(), refit.diagnostics.begin(), refit.diagnostics.end());
  return out;
}

EstimateResult estimate(const Dataset& data, const McvConfig& cfg, const ConstraintOptions& cons,
                        const FitOptions& fit) {
  return mcv_select(data, cfg, cons, fit);
}

}  // namespace nit
