#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "perfpred/dataio.hpp"

namespace perfpred {

/// Raster coordinates: x to the right, y downwards, origin top-left.
using Point2 = Eigen::Vector2d;

enum class CoordinateSpace { kOriginal, kNormalized };

/// Left and right eye, "left" from the viewer's perspective.
struct EyePair {
  Point2 left = Point2::Zero();
  Point2 right = Point2::Zero();
  CoordinateSpace space = CoordinateSpace::kOriginal;

  double interocular() const { return (right - left).norm(); }
  Point2 midpoint() const { return 0.5 * (left + right); }
};

struct Frame {
  int width = 64;
  int height = 80;
};

/// Canonical normalized-image eye positions in a 64x80 frame.
EyePair canonical_eyes();

/// P = (1/s) R(-alpha) (p - c) + C, mapping original image coordinates into
/// the normalized frame. `scale` is original inter-ocular distance over
/// normalized inter-ocular distance; alpha is the rotation of the source eye
/// axis relative to the target eye axis.
struct NormalizationTransform {
  double scale = 1.0;
  double angle = 0.0;  // radians
  Point2 source_center = Point2::Zero();
  Point2 target_center = Point2::Zero();
  EyePair target;
  Frame frame;
};

/// Throws InvalidArgument if either pair has coincident eyes.
NormalizationTransform build_transform(const EyePair& source,
                                       const EyePair& target,
                                       Frame frame = {});

Point2 map_point(const NormalizationTransform& t, const Point2& p);
/// Inverse of map_point.
Point2 unmap_point(const NormalizationTransform& t, const Point2& p);
EyePair map_pair(const NormalizationTransform& t, const EyePair& p);

/// Largest per-eye displacement over the manual inter-ocular distance.
double jesorsky(const EyePair& manual, const EyePair& detected);

struct EyeOffsets {
  Point2 left = Point2::Zero();   // (dX, dY) for the left eye
  Point2 right = Point2::Zero();  // (dX, dY) for the right eye
};

/// Detected minus manual, both mapped into the normalized frame.
EyeOffsets normalized_error(const NormalizationTransform& t,
                            const EyePair& manual, const EyePair& detected);

struct OffsetStats {
  std::size_t n = 0;
  EyeOffsets mean;
  EyeOffsets sd;  // sample standard deviation per axis
};

/// Per-axis mean and sample standard deviation over a set of offsets.
OffsetStats offset_stats(const std::vector<EyeOffsets>& offsets);

/// Offsets with the set mean removed, for detectors with a systematic bias.
std::vector<EyeOffsets> center_offsets(const std::vector<EyeOffsets>& offsets);

/// Rotates both eyes about their midpoint by theta_deg (image coordinates)
/// then translates by (tx, ty).
EyePair perturb_fixed(const EyePair& eyes, double theta_deg, double tx,
                      double ty);

inline constexpr int kPerturbRetryBudget = 1000;

/// Adds N(0, sigma_x) / N(0, sigma_y) offsets independently per eye and axis,
/// redrawing any eye that lands outside [0, width) x [0, height). Throws
/// NumericError when an eye cannot be placed within the retry budget.
EyePair perturb_random(const EyePair& eyes, double sigma_x, double sigma_y,
                       Frame frame, std::uint64_t seed);

// ---- perturbation sweeps ----------------------------------------------------

struct FixedPerturbation {
  double theta = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  auto operator<=>(const FixedPerturbation&) const = default;
};

struct RandomPerturbation {
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  std::uint64_t seed = 0;
  auto operator<=>(const RandomPerturbation&) const = default;
};

using Perturbation = std::variant<FixedPerturbation, RandomPerturbation>;

/// Rotations -20..20 step 5 degrees and translations {-9,-7,...,-1,0,1,...,9}.
std::vector<FixedPerturbation> default_fixed_grid();

struct ScoreTable {
  std::vector<double> match;
  std::vector<double> nonmatch;
};

struct SweepRow {
  Perturbation params;
  double hter = 0.0;
  double auc = 0.0;
};

struct SweepResult {
  double threshold = 0.0;  // selected on the unperturbed scores
  std::vector<SweepRow> rows;
  std::vector<Perturbation> skipped;
};

/// Evaluates each grid cell from its precomputed score table: HTER at the
/// threshold chosen on `baseline`, and AUC of the perturbed scores. Cells
/// without a table (or with an empty class) are skipped and reported.
SweepResult sweep_grid(const ScoreTable& baseline,
                       const std::map<Perturbation, ScoreTable>& tables,
                       const std::vector<Perturbation>& grid);

// ---- CSV interfaces ----------------------------------------------------------

struct EyeAnnotation {
  std::string image_id;
  EyePair eyes;
  std::string source;  // manual_a, manual_b, detector_x, ...
};

/// image_id,lx,ly,rx,ry,source
std::vector<EyeAnnotation> parse_eye_annotations(std::istream& in);
void write_eye_annotations(const std::vector<EyeAnnotation>& rows,
                           std::ostream& out);

/// Reads a perturbation score table. Fixed layout:
///   theta,tx,ty,score,label
/// random layout:
///   sigma_x,sigma_y,seed,score,label
std::map<Perturbation, ScoreTable> parse_sweep_scores(std::istream& in);

/// theta,tx,ty,hter,auc  or  sigma_x,sigma_y,seed,hter,auc
void write_sweep_csv(const SweepResult& result, std::ostream& out);

}  // namespace perfpred
