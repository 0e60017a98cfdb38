#include "nit/oracle.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <numbers>

namespace nit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Index label_of(double value) { return static_cast<Index>(std::llround(value)); }

// Responsibility-weighted average of `values` with log-weights `logs`.
double weighted_mean(const std::vector<double>& logs, const std::vector<double>& values) {
  double top = kNegInf;
  for (double l : logs) top = std::max(top, l);
  if (top == kNegInf) return std::numeric_limits<double>::quiet_NaN();
  double num = 0, den = 0;
  for (std::size_t k = 0; k < logs.size(); ++k) {
    if (logs[k] == kNegInf) continue;
    const double w = std::exp(logs[k] - top);
    num += w * values[k];
    den += w;
  }
  return num / den;
}

double log_sum_exp(const std::vector<double>& logs) {
  double top = kNegInf;
  for (double l : logs) top = std::max(top, l);
  if (top == kNegInf) return kNegInf;
  double sum = 0;
  for (double l : logs)
    if (l != kNegInf) sum += std::exp(l - top);
  return top + std::log(sum);
}

}  // namespace

MixtureModel::MixtureModel(double noise_sd, std::vector<ColumnKind> aux_kinds,
                           std::vector<MixtureComponent> components)
    : noise_sd_(noise_sd), aux_kinds_(std::move(aux_kinds)), components_(std::move(components)) {
  if (!(noise_sd_ > 0)) throw InvalidInput("MixtureModel: noise_sd must be positive");
  if (components_.empty()) throw InvalidInput("MixtureModel: no components");
  for (std::size_t j = 0; j < aux_kinds_.size(); ++j)
    (aux_kinds_[j] == ColumnKind::continuous ? continuous_ : categorical_).push_back(static_cast<Index>(j));

  const Index dim = 1 + static_cast<Index>(continuous_.size());
  double total = 0;
  for (const auto& c : components_) {
    if (!(c.weight > 0)) throw InvalidInput("MixtureModel: component weights must be positive");
    total += c.weight;
    if (c.mean.size() != dim || c.cov.rows() != dim || c.cov.cols() != dim)
      throw InvalidInput("MixtureModel: component mean/cov do not match the continuous schema");
    if (c.pmfs.size() != categorical_.size())
      throw InvalidInput("MixtureModel: one pmf per categorical auxiliary is required");
    for (const auto& pmf : c.pmfs)
      if (pmf.size() == 0 || (pmf.array() < 0).any() || std::abs(pmf.sum() - 1.0) > 1e-12)
        throw InvalidInput("MixtureModel: pmf entries must be nonnegative and sum to 1");
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("MixtureModel: weights must sum to 1");

  const double s2 = noise_sd_ * noise_sd_;
  for (const auto& c : components_) {
    Prepared p;
    p.log_weight = std::log(c.weight);
    Eigen::MatrixXd joint = c.cov;
    joint(0, 0) += s2;
    Eigen::LLT<Eigen::MatrixXd> llt(joint);
    if (llt.info() != Eigen::Success)
      throw InvalidInput("MixtureModel: joint covariance of (y, continuous s) is not positive definite");
    p.joint_precision = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
    const double log_det = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    p.log_norm = -0.5 * (static_cast<double>(dim) * std::log(2.0 * std::numbers::pi) + log_det);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.cov);
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    p.latent_root = eig.eigenvectors() * root.asDiagonal();
    p.y_var = joint(0, 0);
    prepared_.push_back(std::move(p));
  }
}

double MixtureModel::label_log_prob(const MixtureComponent& c, std::span<const double> s) const {
  double lp = 0;
  for (std::size_t q = 0; q < categorical_.size(); ++q) {
    const Index label = label_of(s[static_cast<std::size_t>(categorical_[q])]);
    const auto& pmf = c.pmfs[q];
    if (label < 0 || label >= pmf.size() || pmf(label) == 0) return kNegInf;
    lp += std::log(pmf(label));
  }
  return lp;
}

void MixtureModel::component_terms(double y, std::span<const double> s, std::vector<double>& log_terms,
                                   std::vector<double>& scores, bool use_categorical) const {
  if (static_cast<Index>(s.size()) != aux_dims())
    throw InvalidInput("MixtureModel: auxiliary record has wrong dimension");
  const Index dim = 1 + static_cast<Index>(continuous_.size());
  log_terms.resize(components_.size());
  scores.resize(components_.size());
  Eigen::VectorXd diff(dim);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const auto& p = prepared_[k];
    diff(0) = y - c.mean(0);
    for (Index a = 0; a < static_cast<Index>(continuous_.size()); ++a)
      diff(a + 1) = s[static_cast<std::size_t>(continuous_[a])] - c.mean(a + 1);
    const Eigen::VectorXd pd = p.joint_precision * diff;
    double lt = p.log_weight + p.log_norm - 0.5 * diff.dot(pd);
    if (use_categorical) lt += label_log_prob(c, s);
    log_terms[k] = lt;
    scores[k] = -pd(0);
  }
}

double MixtureModel::log_density(double y, std::span<const double> s) const {
  std::vector<double> logs, scores;
  component_terms(y, s, logs, scores, true);
  return log_sum_exp(logs);
}

double MixtureModel::score(double y, std::span<const double> s) const {
  std::vector<double> logs, scores;
  component_terms(y, s, logs, scores, true);
  double out = weighted_mean(logs, scores);
  if (std::isnan(out)) {
    // Labels impossible under every component: fall back to the continuous part.
    component_terms(y, s, logs, scores, false);
    out = weighted_mean(logs, scores);
  }
  return out;
}

double MixtureModel::marginal_log_density(double y) const {
  std::vector<double> logs(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const double v = prepared_[k].y_var;
    const double d = y - components_[k].mean(0);
    logs[k] = prepared_[k].log_weight - 0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * d * d / v;
  }
  return log_sum_exp(logs);
}

double MixtureModel::marginal_score(double y) const {
  std::vector<double> logs(components_.size()), scores(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const double v = prepared_[k].y_var;
    const double d = y - components_[k].mean(0);
    logs[k] = prepared_[k].log_weight - 0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * d * d / v;
    scores[k] = -d / v;
  }
  return weighted_mean(logs, scores);
}

MixtureModel::Draw MixtureModel::sample(std::mt19937_64& rng) const {
  std::vector<double> weights;
  weights.reserve(components_.size());
  for (const auto& c : components_) weights.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::normal_distribution<double> gauss(0.0, 1.0);

  const std::size_t k = pick(rng);
  const auto& c = components_[k];
  const Index dim = c.mean.size();
  Eigen::VectorXd z(dim);
  for (Index a = 0; a < dim; ++a) z(a) = gauss(rng);
  const Eigen::VectorXd latent = c.mean + prepared_[k].latent_root * z;

  Draw d;
  d.theta = latent(0);
  d.y = d.theta + noise_sd_ * gauss(rng);
  d.s.resize(aux_dims());
  for (std::size_t a = 0; a < continuous_.size(); ++a) d.s(continuous_[a]) = latent(static_cast<Index>(a) + 1);
  for (std::size_t q = 0; q < categorical_.size(); ++q) {
    const auto& pmf = c.pmfs[q];
    std::discrete_distribution<Index> lab(pmf.data(), pmf.data() + pmf.size());
    d.s(categorical_[q]) = static_cast<double>(lab(rng));
  }
  return d;
}

double MixtureModel::mean_y() const {
  double m = 0;
  for (const auto& c : components_) m += c.weight * c.mean(0);
  return m;
}

double MixtureModel::var_y() const {
  double second = 0;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const double mu = components_[k].mean(0);
    second += components_[k].weight * (prepared_[k].y_var + mu * mu);
  }
  const double m = mean_y();
  return second - m * m;
}

double MixtureModel::mean_aux(Index j) const {
  double m = 0;
  for (const auto& c : components_) {
    if (aux_kinds_.at(static_cast<std::size_t>(j)) == ColumnKind::continuous) {
      const auto pos = std::find(continuous_.begin(), continuous_.end(), j) - continuous_.begin();
      m += c.weight * c.mean(pos + 1);
    } else {
      const auto pos = std::find(categorical_.begin(), categorical_.end(), j) - categorical_.begin();
      const auto& pmf = c.pmfs[static_cast<std::size_t>(pos)];
      for (Index l = 0; l < pmf.size(); ++l) m += c.weight * pmf(l) * static_cast<double>(l);
    }
  }
  return m;
}

double MixtureModel::var_aux(Index j) const {
  double second = 0;
  for (const auto& c : components_) {
    if (aux_kinds_.at(static_cast<std::size_t>(j)) == ColumnKind::continuous) {
      const auto pos = std::find(continuous_.begin(), continuous_.end(), j) - continuous_.begin() + 1;
      second += c.weight * (c.cov(pos, pos) + c.mean(pos) * c.mean(pos));
    } else {
      const auto pos = std::find(categorical_.begin(), categorical_.end(), j) - categorical_.begin();
      const auto& pmf = c.pmfs[static_cast<std::size_t>(pos)];
      for (Index l = 0; l < pmf.size(); ++l) second += c.weight * pmf(l) * static_cast<double>(l * l);
    }
  }
  const double m = mean_aux(j);
  return second - m * m;
}

double oracle_score(const MixtureModel& model, double y, std::span<const double> s) {
  return model.score(y, s);
}

namespace {

std::span<const double> row_span(const Dataset& data, Index i, std::vector<double>& buf) {
  buf.resize(static_cast<std::size_t>(data.aux_dims()));
  for (Index j = 0; j < data.aux_dims(); ++j) buf[j] = data.s(i, j);
  return buf;
}

}  // namespace

Eigen::VectorXd oracle_nit(const MixtureModel& model, const Dataset& data) {
  if (data.aux_dims() != model.aux_dims()) throw InvalidInput("oracle_nit: auxiliary schema mismatch");
  const double s2 = model.noise_sd() * model.noise_sd();
  Eigen::VectorXd out(data.size());
  std::vector<double> buf;
  for (Index i = 0; i < data.size(); ++i) out(i) = data.y(i) + s2 * model.score(data.y(i), row_span(data, i, buf));
  return out;
}

Eigen::VectorXd oracle_nit(const BlockOracle& oracle, const Dataset& data) {
  if (static_cast<Index>(oracle.block.size()) != data.size())
    throw InvalidInput("oracle_nit: block assignment length does not match n");
  Eigen::VectorXd out(data.size());
  std::vector<double> buf;
  for (Index i = 0; i < data.size(); ++i) {
    const MixtureModel& m = oracle.model_for(i);
    const double s2 = m.noise_sd() * m.noise_sd();
    out(i) = data.y(i) + s2 * m.score(data.y(i), row_span(data, i, buf));
  }
  return out;
}

Eigen::VectorXd oracle_marginal(const MixtureModel& model, const Dataset& data) {
  const double s2 = model.noise_sd() * model.noise_sd();
  Eigen::VectorXd out(data.size());
  for (Index i = 0; i < data.size(); ++i) out(i) = data.y(i) + s2 * model.marginal_score(data.y(i));
  return out;
}

FisherGain fisher_gain_mc(const MixtureModel& model, std::size_t n_mc, std::uint64_t seed) {
  if (n_mc < 1000) throw InvalidInput("fisher_gain_mc: n_mc must be >= 1000");
  std::mt19937_64 rng(seed);
  double sum_m = 0, sq_m = 0, sum_c = 0, sq_c = 0, sum_d = 0, sq_d = 0;
  std::vector<double> buf;
  for (std::size_t t = 0; t < n_mc; ++t) {
    const auto draw = model.sample(rng);
    buf.assign(draw.s.data(), draw.s.data() + draw.s.size());
    const double hm = model.marginal_score(draw.y);
    const double hc = model.score(draw.y, buf);
    const double m2 = hm * hm, c2 = hc * hc, d = c2 - m2;
    sum_m += m2; sq_m += m2 * m2;
    sum_c += c2; sq_c += c2 * c2;
    sum_d += d;  sq_d += d * d;
  }
  const double n = static_cast<double>(n_mc);
  auto se = [n](double sum, double sq) {
    const double mean = sum / n;
    return std::sqrt(std::max(0.0, (sq / n - mean * mean) * n / (n - 1.0)) / n);
  };
  const double s4 = std::pow(model.noise_sd(), 4);
  FisherGain g;
  g.info_y = sum_m / n;
  g.info_y_se = se(sum_m, sq_m);
  g.info_y_given_s = sum_c / n;
  g.info_y_given_s_se = se(sum_c, sq_c);
  g.gain = s4 * sum_d / n;
  g.std_error = s4 * se(sum_d, sq_d);
  return g;
}

FisherInformation fisher_information_quadrature(const MixtureModel& model) {
  for (ColumnKind k : model.aux_kinds())
    if (k == ColumnKind::continuous)
      throw InvalidInput("fisher_information_quadrature: continuous auxiliaries are not supported");

  using boost::math::quadrature::gauss_kronrod;
  const double inf = std::numeric_limits<double>::infinity();
  // ∫ (∂_y f)² / f dy = ∫ f·score² dy.
  auto integrate = [&](auto&& log_f, auto&& score) {
    auto integrand = [&](double y) {
      const double lf = log_f(y);
      if (lf == kNegInf) return 0.0;
      const double h = score(y);
      return std::exp(lf) * h * h;
    };
    return gauss_kronrod<double, 61>::integrate(integrand, -inf, inf, 15, 1e-13);
  };

  FisherInformation info;
  info.info_y = integrate([&](double y) { return model.marginal_log_density(y); },
                          [&](double y) { return model.marginal_score(y); });

  // Enumerate every label combination of the categorical auxiliaries.
  const Index k = model.aux_dims();
  std::vector<Index> sizes(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) {
    Index sz = 0;
    for (const auto& c : model.components()) sz = std::max(sz, c.pmfs[static_cast<std::size_t>(j)].size());
    sizes[j] = sz;
  }
  std::vector<double> labels(static_cast<std::size_t>(k), 0.0);
  info.info_y_given_s = 0;
  while (true) {
    const std::span<const double> s(labels);
    info.info_y_given_s += integrate([&](double y) { return model.log_density(y, s); },
                                     [&](double y) { return model.score(y, s); });
    Index j = 0;
    for (; j < k; ++j) {
      labels[j] += 1;
      if (static_cast<Index>(labels[j]) < sizes[j]) break;
      labels[j] = 0;
    }
    if (j == k) break;
  }
  return info;
}

double relative_risk_reduction(const MixtureModel& model, const FisherInformation& info) {
  const double s2 = model.noise_sd() * model.noise_sd();
  const double risk_y = s2 - s2 * s2 * info.info_y;
  const double risk_ys = s2 - s2 * s2 * info.info_y_given_s;
  return (risk_y - risk_ys) / risk_y;
}

Dataset sample_dataset(const MixtureModel& model, Index n, std::mt19937_64& rng, Eigen::VectorXd* theta) {
  Dataset d;
  d.sigma = model.noise_sd();
  d.aux_kinds = model.aux_kinds();
  d.y.resize(n);
  d.s.resize(n, model.aux_dims());
  if (theta) theta->resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto draw = model.sample(rng);
    d.y(i) = draw.y;
    if (model.aux_dims() > 0) d.s.row(i) = draw.s.transpose();
    if (theta) (*theta)(i) = draw.theta;
  }
  return d;
}

RiskEstimate bayes_risk_mc(const MixtureModel& model, const Estimator& estimator, std::size_t reps, Index n,
                           std::uint64_t seed) {
  if (reps < 1 || n < 2) throw InvalidInput("bayes_risk_mc: need reps >= 1 and n >= 2");
  std::vector<double> losses(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    std::mt19937_64 rng(combine_seed(seed, r));
    Eigen::VectorXd theta;
    const Dataset d = sample_dataset(model, n, rng, &theta);
    const Eigen::VectorXd delta = estimator(d);
    losses[r] = (delta - theta).squaredNorm() / static_cast<double>(n);
  }
  const Eigen::Map<const Eigen::VectorXd> l(losses.data(), static_cast<Index>(reps));
  RiskEstimate out;
  out.mse = l.mean();
  out.std_error = reps > 1 ? std::sqrt((l.array() - out.mse).square().sum() / double(reps - 1) / double(reps)) : 0.0;
  return out;
}

}  // namespace nit
