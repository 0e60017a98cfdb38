#include "doctest.h"
#include "oracles.hpp"

#include "nit/estimator.hpp"

#include <numeric>

using nit::ColumnKind;
using nit::Dataset;
using nit::Index;

namespace {

Dataset gaussian_data(std::uint64_t seed, Index n, int aux) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Dataset d;
  d.y.resize(n);
  d.s.resize(n, aux);
  d.aux_kinds.assign(aux, ColumnKind::continuous);
  d.sigma = 1.0;
  for (Index i = 0; i < n; ++i) {
    const double theta = z(rng);
    d.y(i) = theta + z(rng);
    for (int j = 0; j < aux; ++j) d.s(i, j) = theta + z(rng);
  }
  return d;
}

}  // namespace

TEST_SUITE("nit_estimator") {

TEST_CASE("forcing h = 0 returns y") {
  const Dataset d = gaussian_data(1, 30, 1);
  nit::ConstraintOptions cons;
  cons.box_bounds = Eigen::VectorXd::Zero(30);
  const auto r = nit::fit_nit(d, 0.7, cons);
  CHECK((r.delta - d.y).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("delta = y + σ²h and the mean is preserved") {
  Dataset d = gaussian_data(2, 80, 2);
  d.sigma = 0.7;
  nit::McvConfig cfg;
  cfg.lambda_grid = nit::log_grid(0.5, 5.0, 4);
  cfg.replicates = 2;
  const auto r = nit::estimate(d, cfg);
  CHECK((r.delta - d.y - 0.49 * r.score.h).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(std::abs(r.delta.mean() - d.y.mean()) <= 1e-8);
}

TEST_CASE("single-point grid") {
  const Dataset d = gaussian_data(3, 40, 1);
  nit::McvConfig cfg;
  cfg.lambda_grid = {1.7};
  const auto r = nit::mcv_select(d, cfg);
  CHECK(r.lambda_hat == 1.7);
  REQUIRE(r.loss_curve.size() == 1);
  CHECK(r.loss_curve[0].lambda == 1.7);
}

TEST_CASE("same seed, same output; loss curve bit-for-bit") {
  const Dataset d = gaussian_data(4, 60, 1);
  nit::McvConfig cfg;
  cfg.seed = 99;
  cfg.lambda_grid = nit::log_grid(0.3, 6.0, 6);
  const auto a = nit::estimate(d, cfg);
  cfg.threads = 3;
  const auto b = nit::estimate(d, cfg);
  CHECK(a.delta == b.delta);
  CHECK(a.lambda_hat == b.lambda_hat);
  REQUIRE(a.loss_curve.size() == b.loss_curve.size());
  for (std::size_t i = 0; i < a.loss_curve.size(); ++i) CHECK(a.loss_curve[i].loss == b.loss_curve[i].loss);
  cfg.seed = 100;
  const auto c = nit::estimate(d, cfg);
  CHECK(c.loss_curve[0].loss != a.loss_curve[0].loss);
}

TEST_CASE("joint location shift moves delta by the same amount") {
  const Dataset d = gaussian_data(5, 50, 1);
  Dataset shifted = d;
  shifted.y.array() += 3.5;
  nit::FitOptions fit;
  fit.cov_ridge = 0;
  const auto a = nit::fit_nit(d, 0.9, {}, fit);
  const auto b = nit::fit_nit(shifted, 0.9, {}, fit);
  // Relative to the correction size: rounding y + 3.5 alone perturbs the
  // inputs at 1e-16, which the 1e-8 kernel ridge amplifies by up to ~1e9.
  const double scale = std::max(1.0, a.score.h.cwiseAbs().maxCoeff());
  CHECK((b.delta.array() - a.delta.array() - 3.5).abs().maxCoeff() <= 1e-6 * scale);
}

TEST_CASE("record permutation permutes delta") {
  const Dataset d = gaussian_data(6, 45, 2);
  std::vector<Index> perm(45);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(6);
  std::shuffle(perm.begin(), perm.end(), rng);
  Dataset p = d;
  for (Index i = 0; i < 45; ++i) {
    p.y(i) = d.y(perm[i]);
    p.s.row(i) = d.s.row(perm[i]);
  }
  const auto a = nit::fit_nit(d, 1.2);
  const auto b = nit::fit_nit(p, 1.2);
  double worst = 0;
  for (Index i = 0; i < 45; ++i) worst = std::max(worst, std::abs(b.delta(i) - a.delta(perm[i])));
  CHECK(worst <= 1e-9);
}

TEST_CASE("failed grid points are excluded and reported") {
  const Dataset d = gaussian_data(7, 30, 1);
  nit::McvConfig cfg;
  cfg.lambda_grid = {1e-300, 1.0};
  const auto r = nit::mcv_select(d, cfg);
  CHECK(r.lambda_hat == 1.0);
  REQUIRE(r.failed.size() == 1);
  CHECK(r.failed[0].lambda == 1e-300);
  CHECK(r.loss_curve.size() == 1);
  CHECK(!r.diagnostics.empty());

  cfg.lambda_grid = {1e-300};
  CHECK_THROWS_AS(nit::mcv_select(d, cfg), nit::Error);
}

TEST_CASE("ties keep the smaller bandwidth") {
  // With h pinned to zero every bandwidth has the same loss.
  const Dataset d = gaussian_data(8, 20, 0);
  nit::McvConfig cfg;
  cfg.lambda_grid = {0.5, 1.0, 2.0};
  nit::ConstraintOptions cons;
  cons.box_bounds = Eigen::VectorXd::Zero(20);
  const auto r = nit::mcv_select(d, cfg, cons);
  CHECK(r.loss_curve[0].loss == r.loss_curve[2].loss);
  CHECK(r.lambda_hat == 0.5);
}

TEST_CASE("small n warns but runs") {
  const Dataset d = gaussian_data(9, 6, 1);
  const auto r = nit::fit_nit(d, 1.0);
  CHECK(r.delta.size() == 6);
  REQUIRE(!r.diagnostics.empty());
  CHECK(r.diagnostics[0].find("warning") != std::string::npos);
}

TEST_CASE("configuration errors") {
  const Dataset d = gaussian_data(10, 20, 1);
  nit::McvConfig cfg;
  cfg.alpha = 0;
  CHECK_THROWS_AS(nit::estimate(d, cfg), nit::InvalidInput);
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(nit::estimate(d, cfg), nit::InvalidInput);
  cfg = {};
  cfg.lambda_grid = {1.0, 1.0};
  CHECK_THROWS_AS(nit::estimate(d, cfg), nit::InvalidInput);
  cfg = {};
  cfg.replicates = 0;
  CHECK_THROWS_AS(nit::estimate(d, cfg), nit::InvalidInput);
  nit::ConstraintOptions cons;
  cons.monotone = true;
  CHECK_THROWS_AS(nit::fit_nit(d, 1.0, cons), nit::InvalidInput);
  Dataset bad = d;
  bad.sigma = 0;
  CHECK_THROWS_AS(nit::fit_nit(bad, 1.0), nit::InvalidInput);
  CHECK_THROWS_AS(nit::fit_nit(d, -1.0), nit::InvalidInput);
}

TEST_CASE("monotone fit without auxiliaries") {
  const Dataset d = gaussian_data(11, 40, 0);
  nit::ConstraintOptions cons;
  cons.monotone = true;
  const auto r = nit::fit_nit(d, 0.3, cons);
  std::vector<Index> order(40);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return d.y(a) < d.y(b); });
  for (std::size_t i = 1; i < order.size(); ++i) CHECK(r.delta(order[i - 1]) <= r.delta(order[i]) + 1e-8);
}

TEST_CASE("automatic box bounds") {
  const Dataset d = gaussian_data(12, 25, 1);
  nit::ConstraintOptions cons;
  cons.box = nit::BoxMode::automatic;
  const auto set = nit::build_constraints(d, 4.0, cons);
  REQUIRE(set.box);
  const double norm = std::sqrt(d.y(3) * d.y(3) + d.s(3, 0) * d.s(3, 0));
  CHECK((*set.box)(3) == doctest::Approx(10 * (1 + norm) / 4.0));
  const auto r = nit::fit_nit(d, 1.0, cons);
  CHECK(r.score.h.cwiseAbs().maxCoeff() <= set.box->maxCoeff() * 4.0);
}

TEST_CASE("auxiliary averaging") {
  Dataset d = gaussian_data(13, 10, 3);
  const auto avg = nit::average_auxiliaries(d);
  REQUIRE(avg.aux_dims() == 1);
  CHECK(avg.s(4, 0) == doctest::Approx((d.s(4, 0) + d.s(4, 1) + d.s(4, 2)) / 3));
  d.aux_kinds = {ColumnKind::categorical, ColumnKind::categorical, ColumnKind::categorical};
  CHECK_THROWS_AS(nit::average_auxiliaries(d), nit::InvalidInput);
}

TEST_CASE("identity estimator has expected MCV loss σ²(1+α²)") {
  // δ(U) = U exactly, so the loss is a function of η alone.
  std::mt19937_64 rng(14);
  std::normal_distribution<double> z;
  const double alpha = 0.1;
  const Index n = 50;
  const Dataset d = gaussian_data(15, n, 0);
  std::vector<double> losses;
  for (int draw = 0; draw < 10000; ++draw) {
    Eigen::VectorXd eta(n);
    for (auto& e : eta) e = z(rng);
    const Eigen::VectorXd u = d.y + alpha * eta, v = d.y - eta / alpha;
    losses.push_back(nit::mcv_loss(u, v, 1.0, alpha));
  }
  CHECK(std::abs(oracle::mean(losses) - 1.01) <= 3 * oracle::std_error(losses));
}

TEST_CASE("default grid spans the median distance") {
  const Dataset d = gaussian_data(16, 120, 1);
  const double med = nit::median_pair_distance(d);
  const auto grid = nit::default_lambda_grid(d);
  CHECK(grid.size() == 25);
  CHECK(grid.front() == doctest::Approx(0.2 * med));
  CHECK(grid.back() == doctest::Approx(20 * med));
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
}

}
