#include "nit/simulation.hpp"

#include "nit/baselines.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace nit {

namespace {

struct ParamRule {
  std::string key;
  double lo, hi;       // inclusive range; lo == hi means fixed
  double fallback;
  bool integer = false;
};

std::vector<ParamRule> rules_for(const std::string& family, Index n) {
  const double half = static_cast<double>(n / 2);
  if (family == "sim1_s1") return {{"sigma", 0.1, 0.1, 0.1}, {"sigma_s", 0.1, 1.0, 0.5}};
  if (family == "sim1_s2") return {{"sigma", 0.1, 1.0, 0.5}, {"sigma_s", 1.0, 1.0, 1.0}};
  if (family == "sim1_s3") return {{"sigma", 0.5, 0.5, 0.5}, {"sigma_s", 0.5, 0.5, 0.5}};
  if (family == "sim1_s4") return {{"p", 0.05, 0.5, 0.2}};
  if (family == "sim3_s1" || family == "sim3_s3") return {{"sigma", 0.5, 0.5, 0.5}, {"sigma_s", 0.1, 1.0, 0.5}};
  if (family == "sim3_s2" || family == "sim3_s4") return {{"sigma", 0.1, 1.0, 0.5}, {"sigma_s", 0.5, 0.5, 0.5}};
  if (family == "twosample_s1")
    return {{"k", 1, std::floor(static_cast<double>(n) / 2), std::min(50.0, std::floor(n / 2.0)), true}};
  if (family == "twosample_s2") return {{"k", 1, half, std::min(50.0, half), true}};
  if (family == "benefit_vs_K") return {{"K", 1, 12, 1, true}};
  throw InvalidInput("unknown simulation family '" + family + "'");
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Eigen::MatrixXd diag(std::initializer_list<double> d) {
  Eigen::VectorXd v(static_cast<Index>(d.size()));
  Index i = 0;
  for (double x : d) v(i++) = x;
  return v.asDiagonal();
}

MixtureComponent gaussian(double w, Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  return {w, std::move(mean), std::move(cov), {}};
}

Eigen::VectorXd vec(std::initializer_list<double> d) {
  Eigen::VectorXd v(static_cast<Index>(d.size()));
  Index i = 0;
  for (double x : d) v(i++) = x;
  return v;
}

std::vector<ColumnKind> continuous_kinds(Index k) {
  return std::vector<ColumnKind>(static_cast<std::size_t>(k), ColumnKind::continuous);
}

MixtureModel sim3_model(double sigma, double sigma_s, bool first_pair, bool second_pair) {
  // Components indexed by the latent atom a ∈ {0, 2}. θ^Y follows the first
  // pair's latent; columns 1-2 the first pair, 3-4 the second.
  const double vs = sigma * sigma + sigma_s * sigma_s;
  Eigen::MatrixXd cov = diag({sigma * sigma, vs, vs, vs, vs});
  std::vector<MixtureComponent> comps;
  for (double a : {0.0, 2.0}) {
    const double m1 = first_pair ? a : 0.0;
    const double m2 = second_pair ? a : 0.0;
    comps.push_back(gaussian(0.5, vec({m1, m1, m1, m2, m2}), cov));
  }
  return MixtureModel(1.0, continuous_kinds(4), std::move(comps));
}

struct TwoSampleBlock {
  Index count;
  double mu1, mu2;
};

std::vector<TwoSampleBlock> twosample_blocks(const std::string& family, Index n, Index k) {
  if (family == "twosample_s1") return {{k, 2.5, 1.0}, {k, 1.0, 1.0}, {n - 2 * k, 0.0, 0.0}};
  const Index half = n / 2;
  return {{k, 1.0, 1.0}, {half - k, 2.5, 1.0}, {n - half, 0.0, 0.0}};
}

double param(const SimulationSpec& s, const std::string& key) { return s.params.at(key); }

}  // namespace

const std::vector<std::string>& simulation_families() {
  static const std::vector<std::string> names = {"sim1_s1", "sim1_s2", "sim1_s3", "sim1_s4",
                                                 "sim3_s1", "sim3_s2", "sim3_s3", "sim3_s4",
                                                 "twosample_s1", "twosample_s2", "benefit_vs_K"};
  return names;
}

SimulationSpec resolve_spec(const SimulationSpec& spec) {
  if (spec.n < 2) throw InvalidInput("simulation: n must be >= 2");
  const auto rules = rules_for(spec.family, spec.n);
  for (const auto& [key, value] : spec.params) {
    const bool known = std::any_of(rules.begin(), rules.end(), [&](const ParamRule& r) { return r.key == key; });
    if (!known) throw InvalidInput("simulation: family " + spec.family + " has no parameter '" + key + "'");
  }
  SimulationSpec out = spec;
  for (const auto& r : rules) {
    auto it = spec.params.find(r.key);
    const double v = it == spec.params.end() ? r.fallback : it->second;
    if (!std::isfinite(v) || v < r.lo || v > r.hi) {
      const std::string range = r.lo == r.hi ? "fixed at " + format_number(r.lo)
                                             : "in [" + format_number(r.lo) + ", " + format_number(r.hi) + "]";
      throw InvalidInput("simulation: " + spec.family + " parameter " + r.key + " = " + format_number(v) +
                         " must be " + range);
    }
    if (r.integer && v != std::floor(v))
      throw InvalidInput("simulation: parameter " + r.key + " must be an integer");
    out.params[r.key] = v;
  }
  return out;
}

std::string params_key(const SimulationSpec& spec) {
  const SimulationSpec r = resolve_spec(spec);
  std::string out;
  for (const auto& [key, value] : r.params) {
    if (!out.empty()) out += ';';
    out += key + "=" + format_number(value);
  }
  return out;
}

BlockOracle family_oracle(const SimulationSpec& raw) {
  const SimulationSpec spec = resolve_spec(raw);
  const std::string& f = spec.family;
  const Index n = spec.n;
  BlockOracle out;
  out.block.assign(static_cast<std::size_t>(n), 0);

  if (f == "sim1_s1" || f == "sim1_s2" || f == "sim1_s3") {
    const double s2 = std::pow(param(spec, "sigma"), 2);
    const double ss2 = std::pow(param(spec, "sigma_s"), 2);
    Eigen::MatrixXd cov(2, 2);
    cov << 1 + s2, 1, 1, 1 + s2 + ss2;
    out.models.emplace_back(1.0, continuous_kinds(1),
                            std::vector{gaussian(0.5, vec({0, 0}), cov), gaussian(0.5, vec({1, 1}), cov)});
  } else if (f == "sim1_s4") {
    const double p = param(spec, "p");
    MixtureComponent off{1 - p, vec({0}), diag({0.25}), {vec({0.95, 0.05})}};
    MixtureComponent on{p, vec({2}), diag({0.25}), {vec({0.1, 0.9})}};
    out.models.emplace_back(1.0, std::vector{ColumnKind::categorical}, std::vector{off, on});
  } else if (f == "sim3_s1" || f == "sim3_s2") {
    out.models.push_back(sim3_model(param(spec, "sigma"), param(spec, "sigma_s"), true, true));
  } else if (f == "sim3_s3" || f == "sim3_s4") {
    const double sigma = param(spec, "sigma"), sigma_s = param(spec, "sigma_s");
    out.models.push_back(sim3_model(sigma, sigma_s, true, false));
    out.models.push_back(sim3_model(sigma, sigma_s, false, true));
    for (Index i = n / 2; i < n; ++i) out.block[static_cast<std::size_t>(i)] = 1;
  } else if (f == "twosample_s1" || f == "twosample_s2") {
    const auto k = static_cast<Index>(param(spec, "k"));
    std::vector<MixtureComponent> comps;
    for (const auto& b : twosample_blocks(f, n, k)) {
      if (b.count == 0) continue;
      comps.push_back(gaussian(static_cast<double>(b.count) / static_cast<double>(n), vec({b.mu1 - b.mu2, b.mu1 + b.mu2}),
                               diag({0.0, 2.0})));
    }
    double total = 0;
    for (const auto& c : comps) total += c.weight;
    for (auto& c : comps) c.weight /= total;
    out.models.emplace_back(std::sqrt(2.0), continuous_kinds(1), std::move(comps));
  } else if (f == "benefit_vs_K") {
    const auto k = static_cast<Index>(param(spec, "K"));
    Eigen::VectorXd d = Eigen::VectorXd::Constant(k + 1, 2.0);
    d(0) = 1.0;
    std::vector<MixtureComponent> comps;
    for (double a : {0.0, 2.0})
      comps.push_back(gaussian(0.5, Eigen::VectorXd::Constant(k + 1, a), d.asDiagonal()));
    out.models.emplace_back(1.0, continuous_kinds(k), std::move(comps));
  }
  return out;
}

SimulatedDataset generate(const SimulationSpec& raw) {
  const SimulationSpec spec = resolve_spec(raw);
  const std::string& f = spec.family;
  const Index n = spec.n;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  SimulatedDataset out;
  out.oracle = family_oracle(spec);
  Dataset& d = out.data;
  d.sigma = out.oracle.models.front().noise_sd();
  d.aux_kinds = out.oracle.models.front().aux_kinds();
  const Index k = static_cast<Index>(d.aux_kinds.size());
  d.y.resize(n);
  d.s.resize(n, k);
  out.theta.resize(n);
  for (Index j = 0; j < k; ++j) d.aux_names.push_back("s" + std::to_string(j + 1));

  if (f == "sim1_s1" || f == "sim1_s2" || f == "sim1_s3") {
    const double sigma = param(spec, "sigma"), sigma_s = param(spec, "sigma_s");
    for (Index i = 0; i < n; ++i) {
      const double xi = (coin(rng) ? 1.0 : 0.0) + z(rng);
      out.theta(i) = xi + sigma * z(rng);
      d.y(i) = out.theta(i) + z(rng);
      const double zeta = xi + sigma * z(rng);
      d.s(i, 0) = zeta + sigma_s * z(rng);
    }
  } else if (f == "sim1_s4") {
    std::bernoulli_distribution latent(param(spec, "p"));
    std::bernoulli_distribution s_off(0.05), s_on(0.9);
    for (Index i = 0; i < n; ++i) {
      const bool xi = latent(rng);
      out.theta(i) = (xi ? 2.0 : 0.0) + 0.5 * z(rng);
      d.y(i) = out.theta(i) + z(rng);
      d.s(i, 0) = (xi ? s_on(rng) : s_off(rng)) ? 1.0 : 0.0;
    }
    d.aux_labels = {{"0", "1"}};
  } else if (f.starts_with("sim3_")) {
    const double sigma = param(spec, "sigma"), sigma_s = param(spec, "sigma_s");
    const bool split = f == "sim3_s3" || f == "sim3_s4";
    for (Index i = 0; i < n; ++i) {
      const double eta = coin(rng) ? 2.0 : 0.0;
      const bool first_block = i < n / 2;
      const double eta1 = !split || first_block ? eta : 0.0;
      const double eta2 = !split || !first_block ? eta : 0.0;
      out.theta(i) = eta1 + sigma * z(rng);
      d.y(i) = out.theta(i) + z(rng);
      for (Index j = 0; j < 4; ++j) {
        const double theta_j = (j < 2 ? eta1 : eta2) + sigma * z(rng);
        d.s(i, j) = theta_j + sigma_s * z(rng);
      }
    }
  } else if (f.starts_with("twosample_")) {
    Index i = 0;
    for (const auto& b : twosample_blocks(f, n, static_cast<Index>(param(spec, "k")))) {
      for (Index c = 0; c < b.count; ++c, ++i) {
        const double x1 = b.mu1 + z(rng);
        const double x2 = b.mu2 + z(rng);
        out.theta(i) = b.mu1 - b.mu2;
        d.y(i) = x1 - x2;
        d.s(i, 0) = x1 + x2;
      }
    }
  } else if (f == "benefit_vs_K") {
    for (Index i = 0; i < n; ++i) {
      const double xi = coin(rng) ? 2.0 : 0.0;
      out.theta(i) = xi + z(rng);
      d.y(i) = out.theta(i) + z(rng);
      for (Index j = 0; j < k; ++j) d.s(i, j) = xi + z(rng) + z(rng);
    }
  }
  return out;
}

std::vector<MomentCheck> generator_self_test(const SimulationSpec& raw, Index n) {
  SimulationSpec spec = raw;
  spec.n = n;
  const SimulatedDataset sim = generate(spec);
  const BlockOracle& oracle = sim.oracle;

  std::vector<double> fraction(oracle.models.size(), 0.0);
  for (int b : oracle.block) fraction[static_cast<std::size_t>(b)] += 1.0 / static_cast<double>(n);

  std::vector<MomentCheck> out;
  auto check = [&](const std::string& name, const Eigen::VectorXd& x, auto&& model_mean, auto&& model_var) {
    double mean = 0, second = 0;
    for (std::size_t b = 0; b < oracle.models.size(); ++b) {
      const double m = model_mean(oracle.models[b]);
      mean += fraction[b] * m;
      second += fraction[b] * (model_var(oracle.models[b]) + m * m);
    }
    const double var = second - mean * mean;
    const double nn = static_cast<double>(x.size());
    const double xm = x.mean();
    const Eigen::ArrayXd c = x.array() - xm;
    const double sv = c.square().sum() / (nn - 1.0);
    const double m4 = c.square().square().mean();
    const double se_mean = std::sqrt(sv / nn);
    const double se_var = std::sqrt(std::max(m4 - sv * sv, 0.0) / nn);
    out.push_back({name, "mean", xm, mean, se_mean, std::abs(xm - mean) <= 3 * se_mean});
    out.push_back({name, "var", sv, var, se_var, std::abs(sv - var) <= 3 * se_var});
  };
  check("y", sim.data.y, [](const MixtureModel& m) { return m.mean_y(); },
        [](const MixtureModel& m) { return m.var_y(); });
  for (Index j = 0; j < sim.data.aux_dims(); ++j)
    check("s" + std::to_string(j + 1), sim.data.s.col(j), [j](const MixtureModel& m) { return m.mean_aux(j); },
          [j](const MixtureModel& m) { return m.var_aux(j); });
  return out;
}

ScoreCheck oracle_fd_check(const SimulationSpec& raw, std::size_t points, double step) {
  SimulationSpec spec = raw;
  spec.n = std::max<Index>(static_cast<Index>(points), 2);
  const SimulatedDataset sim = generate(spec);
  ScoreCheck out{0.0, points};
  std::vector<double> s(static_cast<std::size_t>(sim.data.aux_dims()));
  for (std::size_t p = 0; p < points; ++p) {
    const auto i = static_cast<Index>(p);
    for (Index j = 0; j < sim.data.aux_dims(); ++j) s[j] = sim.data.s(i, j);
    const MixtureModel& m = sim.oracle.model_for(i);
    const double y = sim.data.y(i);
    const double fd = (m.log_density(y + step, s) - m.log_density(y - step, s)) / (2 * step);
    out.max_abs_error = std::max(out.max_abs_error, std::abs(fd - m.score(y, s)));
  }
  return out;
}

const std::vector<std::string>& study_methods() {
  static const std::vector<std::string> names = {"naive", "js", "ebt", "nit_dd", "nit_or", "nit1_dd"};
  return names;
}

std::size_t StudyCell::completed() const {
  return static_cast<std::size_t>(std::count_if(losses.begin(), losses.end(), [](double l) { return !std::isnan(l); }));
}

double StudyCell::mse() const {
  double sum = 0;
  std::size_t c = 0;
  for (double l : losses)
    if (!std::isnan(l)) sum += l, ++c;
  return c ? sum / static_cast<double>(c) : std::numeric_limits<double>::quiet_NaN();
}

double StudyCell::std_error() const {
  const std::size_t c = completed();
  if (c < 2) return c == 1 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  const double m = mse();
  double ss = 0;
  for (double l : losses)
    if (!std::isnan(l)) ss += (l - m) * (l - m);
  return std::sqrt(ss / static_cast<double>(c - 1) / static_cast<double>(c));
}

const StudyCell& StudyResult::find(const std::string& family, Index n, const std::string& method,
                                   const std::string& params) const {
  for (const auto& c : cells)
    if (c.family == family && c.n == n && c.method == method && (params.empty() || c.params == params)) return c;
  throw InvalidInput("StudyResult: no cell for " + family + "/" + std::to_string(n) + "/" + method);
}

std::uint64_t replication_seed(std::uint64_t master, const SimulationSpec& spec, std::size_t rep) {
  std::uint64_t s = combine_seed(master, hash_string(spec.family));
  s = combine_seed(s, hash_string(params_key(spec)));
  s = combine_seed(s, static_cast<std::uint64_t>(spec.n));
  return combine_seed(s, rep);
}

Eigen::VectorXd apply_method(const std::string& method, const SimulatedDataset& sim, const StudyOptions& opts,
                             std::uint64_t seed) {
  const Dataset& d = sim.data;
  if (method == "naive") return d.y;
  if (method == "js") return james_stein(d.y, d.sigma);
  if (method == "ebt") return tweedie_kde(d.y, d.sigma);
  if (method == "nit_or") return oracle_nit(sim.oracle, d);
  if (method == "nit_dd" || method == "nit1_dd") {
    McvConfig mcv = opts.mcv;
    mcv.seed = combine_seed(seed, hash_string("mcv"));
    mcv.threads = 1;
    const Dataset input = method == "nit_dd" ? d : average_auxiliaries(d);
    return estimate(input, mcv, opts.constraints, opts.fit).delta;
  }
  throw InvalidInput("unknown method '" + method + "'");
}

StudyResult run_study(const std::vector<SimulationSpec>& specs, const std::vector<std::string>& methods,
                      std::size_t reps, std::uint64_t seed, const StudyOptions& opts) {
  if (reps < 1) throw InvalidInput("run_study: reps must be >= 1");
  for (const auto& m : methods)
    if (std::find(study_methods().begin(), study_methods().end(), m) == study_methods().end())
      throw InvalidInput("unknown method '" + m + "'");
  std::vector<SimulationSpec> resolved;
  for (const auto& s : specs) resolved.push_back(resolve_spec(s));

  StudyResult out;
  for (const auto& s : resolved)
    for (const auto& m : methods)
      out.cells.push_back({s.family, s.n, params_key(s), m, std::vector<double>(reps), std::vector<std::string>(reps)});

  const std::size_t tasks = resolved.size() * reps;
  parallel_for(
      tasks,
      [&](std::size_t t) {
        const std::size_t si = t / reps, rep = t % reps;
        SimulationSpec spec = resolved[si];
        spec.seed = replication_seed(seed, spec, rep);
        const SimulatedDataset sim = generate(spec);
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
          StudyCell& cell = out.cells[si * methods.size() + mi];
          try {
            const Eigen::VectorXd delta = apply_method(methods[mi], sim, opts, spec.seed);
            cell.losses[rep] = (delta - sim.theta).squaredNorm() / static_cast<double>(spec.n);
          } catch (const std::exception& e) {
            cell.losses[rep] = std::numeric_limits<double>::quiet_NaN();
            cell.failures[rep] = e.what();
          }
        }
      },
      opts.threads);
  return out;
}

PairedDiff paired_difference(const StudyCell& a, const StudyCell& b) {
  if (a.losses.size() != b.losses.size()) throw InvalidInput("paired_difference: replication counts differ");
  std::vector<double> diffs;
  for (std::size_t r = 0; r < a.losses.size(); ++r)
    if (!std::isnan(a.losses[r]) && !std::isnan(b.losses[r])) diffs.push_back(a.losses[r] - b.losses[r]);
  PairedDiff out{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), diffs.size()};
  if (diffs.empty()) return out;
  const Eigen::Map<const Eigen::VectorXd> v(diffs.data(), static_cast<Index>(diffs.size()));
  out.mean = v.mean();
  out.std_error = diffs.size() > 1
                      ? std::sqrt((v.array() - out.mean).square().sum() / double(diffs.size() - 1) / double(diffs.size()))
                      : 0.0;
  return out;
}

}  // namespace nit
