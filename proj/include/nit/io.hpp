#pragma once

#include "nit/estimator.hpp"
#include "nit/simulation.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace nit {

struct DatasetSchema {
  std::string y_column = "y";
  std::vector<std::string> aux_columns;  // empty: every column other than y
  std::vector<std::string> categorical_columns;
  double sigma = 1.0;
};

// Reads a comma-separated file with a header row. Categorical labels are
// coded 0, 1, ... in order of first appearance.
Dataset read_dataset(const std::string& path, const DatasetSchema& schema);
Dataset parse_dataset(std::istream& in, const DatasetSchema& schema);

// 17 significant digits; round-trips every finite double.
std::string format_double(double v);

struct EstimateMeta {
  double alpha = 0.1;
  std::uint64_t seed = 0;
  int replicates = 5;
  ConstraintOptions constraints{};
  double cov_ridge = 1e-6;
  double ridge = 1e-8;
};

// Writes `index,y,delta,score_h` to `path` and a JSON sidecar to
// `<path>.meta.json`.
void write_estimates(const EstimateResult& result, const Dataset& data, const std::string& path,
                     const EstimateMeta& meta);

void write_study(const StudyResult& result, std::ostream& out);
void write_study(const StudyResult& result, const std::string& path);

}  // namespace nit
