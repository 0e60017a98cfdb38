#pragma once

#include "nit/estimator.hpp"
#include "nit/oracle.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nit {

// Families: sim1_s1..sim1_s4, sim3_s1..sim3_s4, twosample_s1, twosample_s2,
// benefit_vs_K. Parameter keys: sigma, sigma_s, p, k, K.
struct SimulationSpec {
  std::string family;
  Index n = 1000;
  std::map<std::string, double> params;
  std::uint64_t seed = 0;
};

const std::vector<std::string>& simulation_families();

// Fills in defaults and checks keys and ranges; throws InvalidInput.
SimulationSpec resolve_spec(const SimulationSpec& spec);

// Canonical "key=value;..." rendering of the resolved parameters.
std::string params_key(const SimulationSpec& spec);

struct SimulatedDataset {
  Dataset data;
  Eigen::VectorXd theta;
  BlockOracle oracle;
};

SimulatedDataset generate(const SimulationSpec& spec);

// The oracle for a family at size n, without drawing data.
BlockOracle family_oracle(const SimulationSpec& spec);

struct MomentCheck {
  std::string column;  // "y" or "s<j>"
  std::string moment;  // "mean" or "var"
  double sample;
  double expected;
  double std_error;
  bool ok;  // |sample - expected| <= 3·std_error
};

// Draws a dataset of size n (default 1e5) and compares the first two
// moments of y and every auxiliary column with the oracle's analytic values.
std::vector<MomentCheck> generator_self_test(const SimulationSpec& spec, Index n = 100000);

struct ScoreCheck {
  double max_abs_error;
  std::size_t points;
};

// Analytic oracle scores vs centered finite differences of log f(y, s) at
// `points` drawn records.
ScoreCheck oracle_fd_check(const SimulationSpec& spec, std::size_t points, double step = 1e-5);

// naive, js, ebt, nit_dd, nit_or, nit1_dd
const std::vector<std::string>& study_methods();

struct StudyOptions {
  McvConfig mcv{};
  ConstraintOptions constraints{};
  FitOptions fit{};
  unsigned threads = 0;
};

struct StudyCell {
  std::string family;
  Index n;
  std::string params;
  std::string method;
  std::vector<double> losses;        // per replication; NaN when the method failed
  std::vector<std::string> failures; // reason per failed replication ("" otherwise)

  std::size_t completed() const;
  double mse() const;
  double std_error() const;
};

struct StudyResult {
  std::vector<StudyCell> cells;

  const StudyCell& find(const std::string& family, Index n, const std::string& method,
                        const std::string& params = {}) const;
};

std::uint64_t replication_seed(std::uint64_t master, const SimulationSpec& spec, std::size_t rep);

Eigen::VectorXd apply_method(const std::string& method, const SimulatedDataset& sim, const StudyOptions& opts,
                             std::uint64_t seed);

StudyResult run_study(const std::vector<SimulationSpec>& specs, const std::vector<std::string>& methods,
                      std::size_t reps, std::uint64_t seed, const StudyOptions& opts = {});

// Mean and standard error of the paired per-replication differences a - b
// over replications where both succeeded.
struct PairedDiff {
  double mean;
  double std_error;
  std::size_t count;
};
PairedDiff paired_difference(const StudyCell& a, const StudyCell& b);

}  // namespace nit
