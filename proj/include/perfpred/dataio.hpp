#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace perfpred {

enum class Label { kMatch, kNonMatch };

std::string_view to_string(Label label) noexcept;

/// One comparison between a probe and a reference image.
struct VerificationRecord {
  std::string probe_id;
  std::string ref_id;
  double score = 0.0;  // similarity, higher = more similar
  Label label = Label::kMatch;
  /// Probe quality q1..qM, optionally followed by reference quality g1..gM.
  std::vector<double> quality;

  bool operator==(const VerificationRecord&) const = default;
};

struct RecordSet {
  std::vector<VerificationRecord> records;
  /// Total quality columns per record (M, or 2M with reference quality).
  std::size_t quality_dim = 0;
  /// True when the trailing half of `quality` holds reference quality g1..gM.
  bool has_reference_quality = false;
  std::map<std::string, std::string> meta;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }

  std::size_t count(Label label) const noexcept;

  /// Scores of all records with the given label, in record order.
  std::vector<double> scores(Label label) const;

  /// Throws InvalidArgument if any record violates the set's invariants.
  void validate() const;

  bool operator==(const RecordSet&) const = default;
};

/// Parses the records CSV. Accepts LF or CRLF line endings. Errors are
/// ParseError with the 1-based line number of the offending row.
RecordSet parse_records(std::istream& in);
RecordSet parse_records_string(std::string_view text);
RecordSet read_records_file(const std::string& path);

/// Writes the records CSV (LF line endings). Numbers are written with the
/// shortest representation that parses back to the same double.
void write_records(const RecordSet& set, std::ostream& out);
std::string write_records_string(const RecordSet& set);

/// Formats a double so that parsing it back yields the identical value.
std::string format_double(double value);

/// Strict decimal parse; returns false on trailing garbage or empty input.
bool parse_double(std::string_view text, double& out);

/// Negates every score; used to ingest distance-like (lower = better) scores.
void negate_scores(RecordSet& set);

/// Maps a quality vector to (mean, sd) of the match and non-match score
/// distributions: mean = base + slope . q (+/- class_offset).
struct ScoreModel {
  double base = 0.0;
  std::vector<double> slope;  // one per quality axis; empty means all zero
  double class_offset = 1.0;  // match mean sits +offset, non-match -offset
  double match_sd = 1.0;
  double nonmatch_sd = 1.0;

  double center(const std::vector<double>& quality) const;
  double match_mean(const std::vector<double>& quality) const {
    return center(quality) + class_offset;
  }
  double nonmatch_mean(const std::vector<double>& quality) const {
    return center(quality) - class_offset;
  }
  /// P(match score < t | q) under the model.
  double fnmr(const std::vector<double>& quality, double threshold) const;
  /// P(non-match score >= t | q) under the model.
  double fmr(const std::vector<double>& quality, double threshold) const;
};

struct SynthConfig {
  std::size_t n_subjects = 100;
  std::size_t scores_per_cell = 50;
  std::vector<std::vector<double>> quality_grid;
  /// Gaussian jitter added to the anchor quality of each record; zero keeps
  /// every record exactly on its anchor.
  double quality_jitter = 0.0;
  ScoreModel score_model;
  std::uint64_t seed = 0;
};

/// Deterministic synthetic dataset. For each anchor emits scores_per_cell
/// match and scores_per_cell non-match records; scores are drawn from the
/// score model evaluated at each record's own (jittered) quality.
RecordSet synthesize_dataset(const SynthConfig& config);

/// Evenly spaced anchors over [lo, hi]^dims with n points per axis.
std::vector<std::vector<double>> regular_grid(std::size_t dims, std::size_t n,
                                              double lo, double hi);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace perfpred
