#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

#include "nit/baselines.hpp"
#include "nit/oracle.hpp"

using nit::ColumnKind;
using nit::MixtureComponent;
using nit::MixtureModel;

using namespace fixture;

TEST_SUITE("oracle") {

TEST_CASE("trivial scores") {
  const MixtureModel g(1.0, {}, {MixtureComponent{1.0, v({0.5}), m(1, {1.25}), {}}});
  // Var(y) = 1.25 + 1
  CHECK(g.score(1.7, {}) == doctest::Approx(-(1.7 - 0.5) / 2.25).epsilon(1e-14));
  const MixtureModel two(std::sqrt(0.5), {},
                         {MixtureComponent{0.5, v({0}), m(1, {0.5}), {}}, MixtureComponent{0.5, v({2}), m(1, {0.5}), {}}});
  CHECK(std::abs(two.score(1.0, {})) < 1e-15);
}

TEST_CASE("scores match finite differences of the directly summed density") {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> z;
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const MixtureModel model = random_mixture(rng);
    const double y = 2 * z(rng);
    const Eigen::VectorXd s = v({z(rng), double(rng() % 3)});
    const double fd = oracle::mixture_score_fd(model, y, s, 1e-5);
    worst = std::max(worst, std::abs(fd - model.score(y, {s.data(), 2})));
    CHECK(model.log_density(y, {s.data(), 2}) ==
          doctest::Approx(std::log(oracle::mixture_density(model, y, s))).epsilon(1e-10));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("far tails stay finite") {
  std::mt19937_64 rng(103);
  const MixtureModel model = random_mixture(rng);
  for (double y : {-1e3, -60.0, 60.0, 1e3}) {
    const double s[2] = {40.0, 1.0};
    CHECK(std::isfinite(model.score(y, s)));
    CHECK(std::isfinite(model.marginal_score(y)));
  }
}

TEST_CASE("matched copy reproduces the averaging rule") {
  const MixtureModel model = matched_copy(0.0, 1.0, 1.0);
  nit::Dataset d;
  d.y = v({1.0, -0.3, 2.5});
  d.s = v({1.0, 0.8, -1.0});
  d.aux_kinds = {ColumnKind::continuous};
  const Eigen::VectorXd delta = nit::oracle_nit(model, d);
  CHECK(std::abs(delta(0) - 2.0 / 3.0) <= 1e-12);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(delta(i) - (d.y(i) + d.s(i)) / 3) <= 1e-12);

  const MixtureModel other = matched_copy(0.7, 1.3, 0.6);
  const Eigen::VectorXd o = nit::oracle_nit(other, d);
  for (Eigen::Index i = 0; i < 3; ++i) {
    const double ref = (0.36 * 0.7 + 1.69 * (d.y(i) + d.s(i))) / (0.36 + 2 * 1.69);
    CHECK(std::abs(o(i) - ref) <= 1e-12);
  }
}

TEST_CASE("independent auxiliary leaves the oracle unchanged") {
  const MixtureModel model(1.0, {ColumnKind::continuous},
                           {MixtureComponent{0.3, v({0, 5}), m(2, {1, 0, 0, 2}), {}},
                            MixtureComponent{0.7, v({3, 5}), m(2, {0.5, 0, 0, 2}), {}}});
  std::mt19937_64 rng(107);
  Eigen::VectorXd theta;
  const nit::Dataset d = nit::sample_dataset(model, 200, rng, &theta);
  const Eigen::VectorXd with = nit::oracle_nit(model, d);
  const Eigen::VectorXd without = nit::oracle_marginal(model, d);
  CHECK((with - without).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("binary-label conditional score is a reweighted two-component mixture") {
  const double p = 0.3;
  const MixtureModel model(1.0, {ColumnKind::categorical},
                           {MixtureComponent{1 - p, v({0}), m(1, {0.25}), {v({0.95, 0.05})}},
                            MixtureComponent{p, v({2}), m(1, {0.25}), {v({0.1, 0.9})}}});
  for (double label : {0.0, 1.0}) {
    const double w0 = (1 - p) * (label == 1 ? 0.05 : 0.95);
    const double w1 = p * (label == 1 ? 0.9 : 0.1);
    for (double y : {-1.0, 0.4, 1.9, 3.3}) {
      const double f0 = w0 * std::exp(-0.5 * y * y / 1.25);
      const double f1 = w1 * std::exp(-0.5 * (y - 2) * (y - 2) / 1.25);
      const double ref = (f0 * (-y / 1.25) + f1 * (-(y - 2) / 1.25)) / (f0 + f1);
      CHECK(model.score(y, {&label, 1}) == doctest::Approx(ref).epsilon(1e-12));
      CHECK(model.score(y, {&label, 1}) ==
            doctest::Approx(oracle::mixture_score_fd(model, y, v({label}), 1e-5)).epsilon(1e-6));
    }
  }
}

TEST_CASE("invalid models") {
  CHECK_THROWS_AS(MixtureModel(1.0, {}, {MixtureComponent{0.5, v({0}), m(1, {1}), {}}}), nit::InvalidInput);
  CHECK_THROWS_AS(MixtureModel(0.0, {}, {MixtureComponent{1.0, v({0}), m(1, {1}), {}}}), nit::InvalidInput);
  CHECK_THROWS_AS(MixtureModel(1.0, {ColumnKind::continuous},
                               {MixtureComponent{1.0, v({0, 0}), m(2, {1, 0, 0, -1}), {}}}),
                  nit::InvalidInput);
}

TEST_CASE("Gaussian Fisher information") {
  const MixtureModel g(1.0, {}, {MixtureComponent{1.0, v({0}), m(1, {1}), {}}});
  const auto gain = nit::fisher_gain_mc(g, 20000, 5);
  CHECK(std::abs(gain.info_y - 0.5) <= 3 * gain.info_y_se);
  CHECK(std::abs(gain.gain) <= 1e-12);
  CHECK_THROWS_AS(nit::fisher_gain_mc(g, 999, 5), nit::InvalidInput);
}

TEST_CASE("Fisher gain for an independent auxiliary is zero") {
  const MixtureModel model(1.0, {ColumnKind::continuous},
                           {MixtureComponent{0.5, v({0, 1}), m(2, {1, 0, 0, 1}), {}},
                            MixtureComponent{0.5, v({2, 1}), m(2, {1, 0, 0, 1}), {}}});
  const auto gain = nit::fisher_gain_mc(model, 20000, 7);
  CHECK(std::abs(gain.gain) <= 3 * gain.std_error + 1e-15);
}

TEST_CASE("two-group example risk reduction by quadrature") {
  const MixtureModel model = two_groups();
  const auto info = nit::fisher_information_quadrature(model);
  const double reduction = nit::relative_risk_reduction(model, info);
  CHECK(reduction == doctest::Approx(0.216).epsilon(0.01 / 0.216));
  CHECK(info.info_y_given_s >= info.info_y);

  const auto mc = nit::fisher_gain_mc(model, 200000, 3);
  CHECK(std::abs(mc.info_y - info.info_y) <= 3 * mc.info_y_se);
  CHECK(std::abs(mc.info_y_given_s - info.info_y_given_s) <= 3 * mc.info_y_given_s_se);
}

TEST_CASE("Bayes risk of simple rules") {
  const MixtureModel g(1.0, {}, {MixtureComponent{1.0, v({0}), m(1, {1}), {}}});
  const auto orc = nit::bayes_risk_mc(g, [&](const nit::Dataset& d) { return nit::oracle_nit(g, d); }, 200, 500, 9);
  CHECK(std::abs(orc.mse - 0.5) <= 3 * orc.std_error);
  const auto naive = nit::bayes_risk_mc(g, [](const nit::Dataset& d) { return d.y; }, 200, 500, 9);
  CHECK(std::abs(naive.mse - 1.0) <= 3 * naive.std_error);
}

}

TEST_SUITE("baselines") {

TEST_CASE("James-Stein examples") {
  CHECK_THROWS_AS(nit::james_stein(v({1, 2, 3}), 1.0), nit::InvalidInput);
  CHECK_THROWS_AS(nit::james_stein(v({1, 2, 3, 4}), v({1, 1, 0, 1})), nit::InvalidInput);

  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(8, 2.5);
  CHECK(nit::james_stein(flat, 1.0) == flat);

  std::mt19937_64 rng(109);
  std::normal_distribution<double> z(0, std::sqrt(2.0));
  Eigen::VectorXd y(10000);
  for (auto& e : y) e = z(rng);
  const Eigen::VectorXd js = nit::james_stein(y, 1.0);
  const double factor = (js(0) - js.mean()) / (y(0) - y.mean());
  CHECK(std::abs(factor - 0.5) <= 0.02);

  Eigen::VectorXd sig(12), x(12);
  for (int i = 0; i < 12; ++i) {
    sig(i) = i % 2 ? 2.0 : 1.0;
    x(i) = sig(i) * z(rng) + (i % 3);
  }
  CHECK((nit::james_stein(x, sig) - oracle::james_stein(x, sig)).cwiseAbs().maxCoeff() <= 1e-13);

  const Eigen::VectorXd shifted = nit::james_stein((x.array() + 7.25).matrix(), sig);
  CHECK((shifted.array() - 7.25 - nit::james_stein(x, sig).array()).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("kernel Tweedie examples") {
  std::mt19937_64 rng(113);
  std::normal_distribution<double> z(0, std::sqrt(2.0));
  Eigen::VectorXd y(10000);
  for (auto& e : y) e = z(rng);
  const Eigen::VectorXd d = nit::tweedie_kde(y, 1.0);
  CHECK((d - y / 2).cwiseAbs().mean() <= 0.1);

  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(5, -1.5);
  CHECK(nit::tweedie_kde(flat, 1.0, 0.3) == flat);

  Eigen::VectorXd small(60);
  for (auto& e : small) e = z(rng);
  small(0) = 40.0;  // isolated point hits the ratio cap on its neighbours
  for (double h : {0.05, 0.4, 2.0})
    CHECK((nit::tweedie_kde(small, 0.8, h) - oracle::tweedie_kde(small, 0.8, h)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK_THROWS_AS(nit::tweedie_kde(small, 1.0, 0.0), nit::InvalidInput);
}

}
