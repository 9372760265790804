#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "perfpred/dataio.hpp"

namespace perfpred {

/// Impostor-based uniqueness of one subject: (max - mean) / (max - min) of
/// its impostor scores.
struct IumResult {
  std::string subject_id;
  double u = 0.0;
  std::size_t n_impostors = 0;
  double s_min = 0.0;
  double s_max = 0.0;
  double s_mean = 0.0;
};

/// Throws InvalidArgument for fewer than 2 scores or constant scores.
IumResult ium(std::span<const double> impostor_scores,
              std::string subject_id = {});

/// IUM per probe_id over the non-match records, ordered by subject id.
/// Subjects whose impostor scores are degenerate are skipped.
std::vector<IumResult> ium_by_subject(const RecordSet& records);

/// Pearson correlation; throws InvalidArgument on size mismatch, fewer than
/// 3 pairs or zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

struct IumCorrelation {
  double r = 0.0;
  std::size_t n_joined = 0;
  std::size_t n_excluded = 0;  // subjects present on one side only
};

/// Pearson r of u over subjects present in both sets (inner join on
/// subject_id).
IumCorrelation ium_correlation(const std::vector<IumResult>& a,
                               const std::vector<IumResult>& b);

/// subject_id,u,n_impostors
void write_ium_csv(const std::vector<IumResult>& rows, std::ostream& out);

}  // namespace perfpred
