#pragma once

// Finite mixtures over (θ, S) with Y = θ + N(0, σ²), and the oracle rules
// built from their exact scores.

#include "nit/common.hpp"
#include "nit/estimator.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace nit {

// One mixture component. Within a component (θ, continuous auxiliaries) is
// jointly Gaussian and each categorical auxiliary is drawn independently
// from its pmf (indexed by label code). Y adds N(0, σ²) noise to θ.
struct MixtureComponent {
  double weight = 1.0;
  Eigen::VectorXd mean;  // (θ, continuous auxiliaries in column order)
  Eigen::MatrixXd cov;   // covariance of (θ, continuous auxiliaries); may be singular
  std::vector<Eigen::VectorXd> pmfs;
};

class MixtureModel {
 public:
  MixtureModel(double noise_sd, std::vector<ColumnKind> aux_kinds, std::vector<MixtureComponent> components);

  double noise_sd() const { return noise_sd_; }
  Index aux_dims() const { return static_cast<Index>(aux_kinds_.size()); }
  const std::vector<ColumnKind>& aux_kinds() const { return aux_kinds_; }
  const std::vector<MixtureComponent>& components() const { return components_; }

  // log f(y, s): Gaussian density in (y, continuous s) times the pmf of the
  // categorical labels.
  double log_density(double y, std::span<const double> s) const;
  // ∇_y log f(y, s) = ∇_y log f(y | s).
  double score(double y, std::span<const double> s) const;
  double marginal_log_density(double y) const;
  // ∇_y log f₁(y) for the marginal of Y.
  double marginal_score(double y) const;

  struct Draw {
    double theta;
    double y;
    Eigen::VectorXd s;
  };
  Draw sample(std::mt19937_64& rng) const;

  double mean_y() const;
  double var_y() const;
  double mean_aux(Index j) const;
  double var_aux(Index j) const;

 private:
  struct Prepared {
    double log_weight;
    Eigen::MatrixXd joint_precision;  // of (y, continuous s)
    double log_norm;                  // -½ log det(2π·joint cov)
    Eigen::MatrixXd latent_root;      // R with R Rᵀ = cov, for sampling
    double y_var;                     // marginal variance of y in this component
  };

  // Per-component log density terms (with weights) and ∂_y log φ_k.
  void component_terms(double y, std::span<const double> s, std::vector<double>& log_terms,
                       std::vector<double>& scores, bool use_categorical) const;
  double label_log_prob(const MixtureComponent& c, std::span<const double> s) const;

  double noise_sd_;
  std::vector<ColumnKind> aux_kinds_;
  std::vector<Index> continuous_;   // auxiliary column indices
  std::vector<Index> categorical_;
  std::vector<MixtureComponent> components_;
  std::vector<Prepared> prepared_;
};

// Oracle assignment when different index blocks follow different mixtures.
struct BlockOracle {
  std::vector<MixtureModel> models;
  std::vector<int> block;  // model index per observation

  const MixtureModel& model_for(Index i) const { return models[static_cast<std::size_t>(block[i])]; }
};

double oracle_score(const MixtureModel& model, double y, std::span<const double> s);

// δ_i = y_i + σ²·∇_y log f(y_i | s_i), with σ the model's noise level.
Eigen::VectorXd oracle_nit(const MixtureModel& model, const Dataset& data);
Eigen::VectorXd oracle_nit(const BlockOracle& oracle, const Dataset& data);

// Oracle that ignores the auxiliaries: y + σ²·∇ log f₁(y).
Eigen::VectorXd oracle_marginal(const MixtureModel& model, const Dataset& data);

struct FisherGain {
  double gain;             // σ⁴(Î_{Y|S} - Î_Y)
  double std_error;
  double info_y;           // Î_Y
  double info_y_se;
  double info_y_given_s;   // Î_{Y|S}
  double info_y_given_s_se;
};

// Monte Carlo estimate of the Bayes-risk gain from using S.
FisherGain fisher_gain_mc(const MixtureModel& model, std::size_t n_mc, std::uint64_t seed);

struct FisherInformation {
  double info_y;
  double info_y_given_s;
};

// I_Y and I_{Y|S} by adaptive Gauss-Kronrod quadrature in y, summing over all
// categorical label combinations. Requires no continuous auxiliaries.
FisherInformation fisher_information_quadrature(const MixtureModel& model);

// [B(δπ(Y)) - B(δπ(Y,S))] / B(δπ(Y)) with B = σ² - σ⁴·I.
double relative_risk_reduction(const MixtureModel& model, const FisherInformation& info);

struct RiskEstimate {
  double mse;
  double std_error;
};

using Estimator = std::function<Eigen::VectorXd(const Dataset&)>;

// Mean of L²_n(δ, θ) over `reps` datasets of size n drawn from the model.
RiskEstimate bayes_risk_mc(const MixtureModel& model, const Estimator& estimator, std::size_t reps,
                           Index n, std::uint64_t seed);

// Draw a dataset of size n from the model; returns the true θ alongside.
Dataset sample_dataset(const MixtureModel& model, Index n, std::mt19937_64& rng, Eigen::VectorXd* theta);

}  // namespace nit
