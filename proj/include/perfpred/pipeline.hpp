#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "perfpred/dataio.hpp"
#include "perfpred/error.hpp"
#include "perfpred/gmm.hpp"
#include "perfpred/perf_model.hpp"
#include "perfpred/quality_space.hpp"

namespace perfpred {

/// Error raised by a pipeline stage; what() is prefixed with the stage name.
class StageError : public Error {
 public:
  enum class Cause { kInput, kArgument, kNumeric };
  StageError(std::string stage, Cause cause, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)), cause_(cause) {}
  const std::string& stage() const noexcept { return stage_; }
  Cause cause() const noexcept { return cause_; }

 private:
  std::string stage_;
  Cause cause_;
};

/// Runs f, converting library errors into a StageError tagged with `stage`.
template <class F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const ParseError& e) {
    throw StageError(stage, StageError::Cause::kInput, e.what());
  } catch (const InvalidArgument& e) {
    throw StageError(stage, StageError::Cause::kArgument, e.what());
  } catch (const NumericError& e) {
    throw StageError(stage, StageError::Cause::kNumeric, e.what());
  }
}

struct FitConfig {
  std::size_t n_qs = 12;
  std::size_t n_rand = 20;
  double target_fmr = 0.001;
  /// Explicit decision threshold; overrides target_fmr when set.
  std::optional<double> threshold;
  BetaPosterior prior = kUniformPrior;
  double alpha = 0.05;  // credible interval level for the region summary
  RegionOptions regions;
  /// When non-empty, one region per distinct key instead of quantile regions.
  std::vector<std::string> cluster_keys;
  std::size_t k_min = 1;
  std::size_t k_max = 9;
  std::vector<CovModel> parametrizations{kAllCovModels.begin(),
                                         kAllCovModels.end()};
  EmOptions em;  // seed below takes precedence
  std::uint64_t seed = 0;
  std::size_t grid_points = 41;  // per quality axis, for the QR landscape
};

struct QrGridRow {
  std::vector<double> q;
  double fmr_hat = 0.0;
  double fnmr_hat = 0.0;
};

struct FitOutput {
  OperatingPoint operating_point;
  double achieved_fmr = 0.0;
  std::vector<QualityRegion> regions;
  std::vector<RegionPerformance> performance;
  Eigen::MatrixXd training;  // rows [q..., FMR, FNMR]
  ModelSearchResult search;
  std::vector<QrGridRow> qr_grid;
};

/// quantile grid -> regions -> per-region Beta posteriors at the operating
/// threshold -> sampled QR training set -> BIC model search -> QR landscape.
FitOutput fit_pipeline(const RecordSet& records, const FitConfig& config);

/// E(r|q) over a regular grid spanning [lo, hi] per axis.
std::vector<QrGridRow> qr_landscape(const MixtureModel& model,
                                    const std::vector<double>& lo,
                                    const std::vector<double>& hi,
                                    std::size_t points_per_axis);

struct PredictionRow {
  double fmr_hat = 0.0;
  double fnmr_hat = 0.0;
  bool fmr_clamped = false;
  bool fnmr_clamped = false;
  std::size_t top_component = 0;
  double fmr_raw = 0.0;
  double fnmr_raw = 0.0;
};

/// Predictions for every row of q (N x d_q). The model's r block must be
/// [FMR, FNMR].
std::vector<PredictionRow> predict_batch(const MixtureModel& model,
                                         const Eigen::MatrixXd& q);

/// Reads q1..qM (and g1..gM if the model needs them) by header name from any
/// CSV that has those columns.
Eigen::MatrixXd read_quality_csv(std::istream& in, std::size_t d_q);

/// Quality columns of a record set as an N x quality_dim matrix.
Eigen::MatrixXd quality_matrix(const RecordSet& records);

void write_bic_table_csv(const std::vector<BicEntry>& table, std::size_t dim,
                         std::ostream& out);
void write_qr_grid_csv(const std::vector<QrGridRow>& grid, std::ostream& out);
void write_region_performance_csv(const std::vector<QualityRegion>& regions,
                                  const std::vector<RegionPerformance>& perf,
                                  double alpha, std::ostream& out);
void write_predictions_csv(const std::vector<PredictionRow>& rows,
                           const std::string& operating_point,
                           std::ostream& out, bool header = true);

/// Parameter-count formula used in the BIC table, e.g. "(K-1)+K*d+K*d*(d+1)/2".
std::string parameter_formula(CovModel model);

}  // namespace perfpred
