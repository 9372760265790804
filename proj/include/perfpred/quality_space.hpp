#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "perfpred/dataio.hpp"

namespace perfpred {

inline constexpr double kDefaultVarianceFloor = 1e-6;
inline constexpr std::size_t kDefaultMinMembers = 8;

/// Per-axis quantile points at probabilities k/(n_qs-1), k = 0..n_qs-1.
struct QuantileGrid {
  std::size_t n_qs = 0;
  std::vector<std::vector<double>> axes;  // axes[d][k]

  std::size_t dims() const noexcept { return axes.size(); }
  /// (n_qs - 2)^d: points left after dropping the first and last per axis.
  std::size_t interior_count() const noexcept;
};

/// Gaussian with diagonal covariance.
struct DiagonalGaussian {
  std::vector<double> mean;
  std::vector<double> variance;
};

struct QualityRegion {
  std::size_t id = 0;
  std::vector<double> center;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::size_t> members;  // indices into the record set
  DiagonalGaussian q_model;
  /// Fewer than min_members records fell inside.
  bool sparse = false;
  /// q_model was not fitted from members (< 2 of them) and instead derived
  /// from the region bounds.
  bool q_model_from_bounds = false;
};

/// Type-7 (linear interpolation) sample quantile of already sorted data.
double quantile_sorted(const std::vector<double>& sorted, double p);

/// Uses only the first `dims` quality columns (0 = all of them).
QuantileGrid quantile_grid(const RecordSet& records, std::size_t n_qs,
                           std::size_t dims = 0);

struct RegionOptions {
  std::size_t min_members = kDefaultMinMembers;
  double variance_floor = kDefaultVarianceFloor;
};

/// One region per interior sampling point; on each axis the region spans the
/// closed interval between the quantile points either side of its center.
std::vector<QualityRegion> build_regions(const QuantileGrid& grid,
                                         const RecordSet& records,
                                         const RegionOptions& options = {});

/// One region per distinct key (ordered by key). Bounds are the members'
/// componentwise extent and the center is their mean.
std::vector<QualityRegion> build_cluster_regions(
    const RecordSet& records, const std::vector<std::string>& keys,
    const RegionOptions& options = {});

/// Sample mean and unbiased per-axis variance, floored at variance_floor.
/// Throws InvalidArgument for fewer than two samples.
DiagonalGaussian fit_region_gaussian(
    const std::vector<std::vector<double>>& samples,
    double variance_floor = kDefaultVarianceFloor);

/// CSV export: region_id,axis,lower,center,upper,n_members
void write_regions_csv(const std::vector<QualityRegion>& regions,
                       std::ostream& out);

// ---- IQA calibration --------------------------------------------------------

/// One observation: measured quality (q1, q2) and capture angles in degrees.
struct IqaRow {
  double q1 = 0.0;
  double q2 = 0.0;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
};

struct IqaCalibration {
  static constexpr double kAngleScale1 = 1.0 / 10.0;
  static constexpr double kAngleScale2 = 1.0 / 18.0;

  Eigen::Matrix<double, 4, 2> x = Eigen::Matrix<double, 4, 2>::Zero();
  double a_scale = kAngleScale1;
  double b_scale = kAngleScale2;
  /// Per (gamma1, gamma2) cell: mean of (q1, q2).
  std::map<std::pair<double, double>, std::array<double, 2>> cell_means;
  double residual_norm = 0.0;
};

/// Design matrix rows [q1, q2, gamma1, gamma2].
Eigen::MatrixX4d iqa_design(const std::vector<IqaRow>& rows);

/// Target rows [a*gamma1 + (q1 - mu1), b*gamma2 + (q2 - mu2)], with mu the
/// per-cell means of the rows themselves.
Eigen::MatrixX2d iqa_targets(const std::vector<IqaRow>& rows,
                             double a_scale = IqaCalibration::kAngleScale1,
                             double b_scale = IqaCalibration::kAngleScale2);

/// Least-squares x minimising ||A x - B||. Throws NumericError when A is
/// rank deficient and InvalidArgument for fewer than 4 rows or 2 cells.
IqaCalibration fit_iqa_calibration(const std::vector<IqaRow>& rows);

/// Least-squares solve for an explicit target matrix.
Eigen::Matrix<double, 4, 2> solve_iqa_least_squares(const Eigen::MatrixX4d& a,
                                                    const Eigen::MatrixX2d& b);

std::array<double, 2> apply_iqa_calibration(const IqaCalibration& cal,
                                            const IqaRow& row);

}  // namespace perfpred
