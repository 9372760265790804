#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "perfpred/perf_model.hpp"

namespace perfpred {

/// Covariance parametrization Sigma_k = lambda_k D_k A_k D_k^T. The three
/// letters give volume (lambda), shape (A) and orientation (D): E = equal
/// across components, V = varying, I = identity.
enum class CovModel { EII, VII, EEI, VEI, EVI, VVI, EEE, EEV, VEV, VVV };

inline constexpr std::array<CovModel, 10> kAllCovModels = {
    CovModel::EII, CovModel::VII, CovModel::EEI, CovModel::VEI, CovModel::EVI,
    CovModel::VVI, CovModel::EEE, CovModel::EEV, CovModel::VEV, CovModel::VVV};

std::string_view to_string(CovModel model) noexcept;
/// Throws InvalidArgument for unknown codes.
CovModel parse_cov_model(std::string_view code);
/// Comma separated list, e.g. "EII,VVI,VVV".
std::vector<CovModel> parse_cov_models(std::string_view list);

/// Free covariance parameters for K components in d dimensions.
std::size_t covariance_params(CovModel model, std::size_t k, std::size_t d);
/// (K - 1) weights + K*d means + covariance parameters.
std::size_t mixture_params(CovModel model, std::size_t k, std::size_t d);

struct FitMeta {
  double loglik = 0.0;
  double bic = 0.0;
  std::size_t n_iter = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  std::size_t restarts = 0;
  std::size_t ridge_events = 0;
  /// Iterations whose log-likelihood fell below the previous one by more
  /// than round-off.
  std::size_t monotonicity_violations = 0;
  std::vector<double> loglik_trace;  // not serialized
  std::vector<std::string> notes;    // ridge and restart reports
};

/// Gaussian mixture over the joint space [q (d_q dims), r (d_r dims)].
struct MixtureModel {
  std::size_t d_q = 0;
  std::size_t d_r = 0;
  CovModel parametrization = CovModel::VVV;
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
  std::optional<OperatingPoint> operating_point;
  FitMeta fit_meta;

  std::size_t components() const noexcept { return weights.size(); }
  std::size_t dim() const noexcept { return d_q + d_r; }
  std::size_t n_params() const {
    return mixture_params(parametrization, components(), dim());
  }
  /// Throws InvalidArgument when weights, shapes or SPD-ness are off.
  void validate() const;
};

struct EmOptions {
  std::size_t components = 1;
  CovModel parametrization = CovModel::VVV;
  double tol = 1e-8;  // relative log-likelihood gain
  std::size_t max_iter = 500;
  std::uint64_t seed = 0;
  /// Components whose responsibility mass drops below this restart the fit.
  double min_component_mass = 1.0;
  std::size_t max_restarts = 10;
  /// Inner iterations for the VEI / VEV shape-orientation updates.
  std::size_t inner_iter = 20;
};

/// EM fit of a constrained Gaussian mixture. data is N x (d_q + d_r).
/// Initialization: k-means++ seeding on standardized data followed by one
/// hard-assignment M-step.
MixtureModel em_fit(const Eigen::MatrixXd& data, std::size_t d_q,
                    const EmOptions& options);

/// log N(x; mean, cov) for every row of data; throws NumericError if cov is
/// not positive definite.
Eigen::VectorXd log_gaussian_density(const Eigen::MatrixXd& data,
                                     const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& cov);

/// sum_i log sum_k pi_k N(x_i; mu_k, Sigma_k), evaluated with log-sum-exp.
double log_likelihood(const MixtureModel& model, const Eigen::MatrixXd& data);

/// 2 * loglik - n_params * ln(n_obs); larger is better.
double bic_value(double loglik, std::size_t n_params, std::size_t n_obs);
double bic(const MixtureModel& model, const Eigen::MatrixXd& data);

struct BicEntry {
  std::size_t components = 0;
  CovModel parametrization = CovModel::VVV;
  std::size_t n_params = 0;
  bool ok = false;
  double loglik = 0.0;
  double bic = 0.0;
  std::size_t n_iter = 0;
  std::string error;
};

struct ModelSearchResult {
  MixtureModel best;
  std::vector<BicEntry> table;
  std::size_t best_index = 0;  // into table
};

struct SearchOptions {
  std::size_t k_min = 1;
  std::size_t k_max = 9;
  std::vector<CovModel> parametrizations{kAllCovModels.begin(),
                                         kAllCovModels.end()};
  EmOptions em;  // components/parametrization overridden per cell
};

/// Fits every (K, parametrization) cell and returns the largest-BIC model;
/// ties go to fewer parameters. Failed cells are kept in the table with
/// ok = false. Throws NumericError if every cell fails.
ModelSearchResult model_search(const Eigen::MatrixXd& data, std::size_t d_q,
                               const SearchOptions& options);

struct ConditionalPrediction {
  std::vector<double> psi;
  std::vector<Eigen::VectorXd> cond_means;
  std::vector<Eigen::MatrixXd> cond_covs;
  Eigen::VectorXd expectation;
  double log_marginal = 0.0;  // log f(q)
  bool ridge_applied = false;

  std::size_t top_component() const;
};

/// Precomputed per-component quantities for repeated conditioning on q.
class Conditioner {
 public:
  explicit Conditioner(const MixtureModel& model);

  ConditionalPrediction condition(const Eigen::VectorXd& q) const;
  double log_marginal(const Eigen::VectorXd& q) const;

  /// True when some quality block needed a ridge to factorize.
  bool ridge_applied() const noexcept { return ridge_applied_; }

 private:
  struct Component {
    double log_weight;
    Eigen::VectorXd mean_q;
    Eigen::VectorXd mean_r;
    Eigen::LLT<Eigen::MatrixXd> chol_q;
    double log_norm_q;       // -0.5 (d_q log 2pi + log|Sigma_q|)
    Eigen::MatrixXd gain;    // Sigma_c^T Sigma_q^{-1}  (d_r x d_q)
    Eigen::MatrixXd cov_r;   // Sigma_r - gain Sigma_c
  };
  std::vector<double> log_terms(const Eigen::VectorXd& q) const;

  std::size_t d_q_;
  std::size_t d_r_;
  std::vector<Component> components_;
  bool ridge_applied_ = false;
};

ConditionalPrediction condition(const MixtureModel& model,
                                const Eigen::VectorXd& q);

/// f(q) = sum_k pi_k N(q; mu_{k,q}, Sigma_{k,q}).
double marginal_q_density(const MixtureModel& model, const Eigen::VectorXd& q);

struct RocPrediction {
  std::string label;
  double threshold = 0.0;
  Eigen::VectorXd raw;      // unclamped E(r|q)
  Eigen::VectorXd clamped;  // clamped into [0, 1]
  std::vector<bool> clamp_flags;
};

/// Clamps each component into [0, 1] and reports which ones moved.
RocPrediction clamp_prediction(const Eigen::VectorXd& expectation);

/// One prediction per operating point model. All models must share d_q.
std::vector<RocPrediction> predict_roc(
    const std::vector<MixtureModel>& models, const Eigen::VectorXd& q);

}  // namespace perfpred
