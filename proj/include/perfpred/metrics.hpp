#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "perfpred/dataio.hpp"
#include "perfpred/perf_model.hpp"

namespace perfpred {

/// Error rates at a threshold. Acceptance is score >= threshold.
struct ErrorRates {
  double far = 0.0;
  double frr = 0.0;
};

/// FAR = #{nonmatch >= t} / #nonmatch, FRR = #{match < t} / #match.
/// Throws InvalidArgument if either class is empty.
ErrorRates far_frr(std::span<const double> match_scores,
                   std::span<const double> nonmatch_scores, double threshold);

struct FmrOperatingPoint {
  OperatingPoint point;
  double achieved_fmr = 0.0;
};

/// Smallest threshold whose empirical FMR does not exceed target_fmr. The
/// threshold is placed just above the order statistic that must be
/// rejected. Throws InvalidArgument when fewer than ceil(1/target) non-match
/// scores are available.
FmrOperatingPoint threshold_for_fmr(std::span<const double> nonmatch_scores,
                                    double target_fmr);

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
  double car = 0.0;
  // Integer counts behind the rates; auc() uses them for exact arithmetic.
  std::size_t false_accepts = 0;
  std::size_t correct_accepts = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // sorted by FAR, then CAR, ascending
  std::size_t n_match = 0;       // 0 when the curve was not built from counts
  std::size_t n_nonmatch = 0;
};

/// Evaluates far_frr at every threshold and sorts by FAR.
RocCurve roc(std::span<const double> match_scores,
             std::span<const double> nonmatch_scores,
             std::span<const double> thresholds);

/// Candidate thresholds that trace the full empirical ROC: every distinct
/// score plus +/- infinity.
std::vector<double> roc_thresholds(std::span<const double> match_scores,
                                   std::span<const double> nonmatch_scores);

/// Trapezoidal area under CAR(FAR) over the FAR-sorted points. Computed in
/// integer arithmetic when the curve carries counts. Needs >= 2 points.
double auc(const RocCurve& curve);

/// AUC of the full empirical ROC of the two score sets.
double auc(std::span<const double> match_scores,
           std::span<const double> nonmatch_scores);

/// argmin over candidate thresholds (midpoints of adjacent distinct pooled
/// scores, plus +/- infinity) of (FAR + FRR) / 2. Ties resolve to the
/// smallest threshold.
double select_hter_threshold(std::span<const double> match_scores,
                             std::span<const double> nonmatch_scores);

/// (FAR(t) + FRR(t)) / 2 on the given (possibly perturbed) scores.
double hter(std::span<const double> match_scores,
            std::span<const double> nonmatch_scores, double threshold);

enum class ErrorKind { kFnmr, kFmr };

struct ErcAttempt {
  double score = 0.0;
  Label label = Label::kMatch;
  double predicted_error = 0.0;  // larger = worse predicted performance
};

struct ErcPoint {
  double reject_fraction = 0.0;
  double residual_error = 0.0;
  double ideal_error = 0.0;
  /// No attempts of the relevant class were retained; errors reported as 0.
  bool empty_retained = false;
};

struct ErcCurve {
  ErrorKind error_kind = ErrorKind::kFnmr;
  std::vector<ErcPoint> points;
  double baseline_error = 0.0;
};

/// Fractions 0, 1/steps, ..., 1.
std::vector<double> uniform_reject_grid(std::size_t steps = 200);

/// Error-versus-reject curve. Only attempts of the class the error kind
/// refers to take part (match attempts for FNMR, non-match for FMR). Attempts
/// are rejected in order of decreasing predicted error, ties by input order;
/// a fraction f rejects ceil(f * N) of them. The ideal curve rejects the
/// erroneous attempts first. reject_fractions must be strictly increasing in
/// [0, 1].
ErcCurve erc(std::span<const ErcAttempt> attempts, double threshold,
             ErrorKind kind, std::span<const double> reject_fractions);

ErcCurve erc(std::span<const ErcAttempt> attempts, double threshold,
             ErrorKind kind);

// CSV emitters for plotting.
void write_roc_csv(const RocCurve& curve, std::ostream& out);
void write_erc_csv(const ErcCurve& curve, std::ostream& out);

}  // namespace perfpred
