#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "perfpred/dataio.hpp"
#include "perfpred/quality_space.hpp"

namespace perfpred {

/// A decision threshold: scores >= threshold are accepted.
struct OperatingPoint {
  double threshold = 0.0;
  std::string label;
};

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Beta(a, b) distribution over an error rate.
struct BetaPosterior {
  double a = 1.0;
  double b = 1.0;

  double mean() const noexcept { return a / (a + b); }
  double variance() const noexcept {
    const double s = a + b;
    return a * b / (s * s * (s + 1.0));
  }
  double pdf(double x) const;
  double cdf(double x) const { return incomplete_beta(a, b, x); }
  /// Inverse CDF by bisection; absolute precision better than 1e-12.
  double quantile(double p) const;

  bool operator==(const BetaPosterior&) const = default;
};

/// The uniform prior.
inline constexpr BetaPosterior kUniformPrior{1.0, 1.0};

struct OutcomeCounts {
  std::size_t false_non_matches = 0;  // match scores < t
  std::size_t n_match = 0;
  std::size_t false_matches = 0;  // non-match scores >= t
  std::size_t n_nonmatch = 0;
};

OutcomeCounts count_outcomes(std::span<const double> scores,
                             std::span<const Label> labels, double threshold);

/// Counts over a subset of records (e.g. a quality region's members).
OutcomeCounts count_outcomes(const RecordSet& records,
                             std::span<const std::size_t> indices,
                             double threshold);

/// Conjugate update: Beta(m + prior.a, (n - m) + prior.b).
BetaPosterior beta_posterior(std::size_t failures, std::size_t trials,
                             const BetaPosterior& prior = kUniformPrior);

struct CredibleInterval {
  double lower = 0.0;
  double upper = 1.0;
};

/// Equal-tailed interval holding 1 - alpha of the posterior mass.
CredibleInterval credible_interval(const BetaPosterior& post, double alpha);

/// Joint (quality, performance) training sample; r = [FMR, FNMR].
struct QrSample {
  std::vector<double> q;
  std::array<double, 2> r{};
};

/// Draws n_rand samples: q from the region's diagonal Gaussian, FMR and FNMR
/// independently from their posteriors. The stream is derived from
/// (seed, region.id).
std::vector<QrSample> sample_qr(const QualityRegion& region,
                                const BetaPosterior& fnmr_post,
                                const BetaPosterior& fmr_post,
                                std::size_t n_rand, std::uint64_t seed);

struct RegionPerformance {
  std::size_t region_id = 0;
  OutcomeCounts counts;
  BetaPosterior fnmr;
  BetaPosterior fmr;
};

std::vector<RegionPerformance> region_posteriors(
    const RecordSet& records, const std::vector<QualityRegion>& regions,
    double threshold, const BetaPosterior& prior = kUniformPrior);

/// Pooled samples of every region as an (n_regions * n_rand) x (d_q + 2)
/// matrix, rows ordered by region then draw; columns [q..., FMR, FNMR].
Eigen::MatrixXd training_matrix(const std::vector<QualityRegion>& regions,
                                const std::vector<RegionPerformance>& perf,
                                std::size_t n_rand, std::uint64_t seed);

}  // namespace perfpred
