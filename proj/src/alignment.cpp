#include "perfpred/alignment.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "perfpred/error.hpp"
#include "perfpred/metrics.hpp"
#include "perfpred/random.hpp"

namespace perfpred {

namespace {

Eigen::Matrix2d rotation(double angle) {
  Eigen::Matrix2d r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

double axis_angle(const EyePair& p) {
  const Point2 v = p.right - p.left;
  return std::atan2(v.y(), v.x());
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double field_number(const std::string& s, std::size_t line) {
  double v;
  if (!parse_double(s, v) || !std::isfinite(v)) {
    throw ParseError(ParseError::Kind::kNonNumeric, line,
                     "non-numeric value '" + s + "'");
  }
  return v;
}

bool inside(const Point2& p, Frame f) {
  return p.x() >= 0.0 && p.x() < f.width && p.y() >= 0.0 && p.y() < f.height;
}

}  // namespace

EyePair canonical_eyes() {
  EyePair p;
  p.left = Point2(15.0, 16.0);
  p.right = Point2(48.0, 16.0);
  p.space = CoordinateSpace::kNormalized;
  return p;
}

NormalizationTransform build_transform(const EyePair& source,
                                       const EyePair& target, Frame frame) {
  const double src_iod = source.interocular();
  const double tgt_iod = target.interocular();
  if (!(src_iod > 0.0) || !(tgt_iod > 0.0)) {
    throw InvalidArgument("build_transform: coincident eye positions");
  }
  NormalizationTransform t;
  t.scale = src_iod / tgt_iod;
  t.angle = std::remainder(axis_angle(source) - axis_angle(target),
                           2.0 * std::numbers::pi);
  t.source_center = source.midpoint();
  t.target_center = target.midpoint();
  t.target = target;
  t.target.space = CoordinateSpace::kNormalized;
  t.frame = frame;
  return t;
}

Point2 map_point(const NormalizationTransform& t, const Point2& p) {
  return rotation(-t.angle) * (p - t.source_center) / t.scale + t.target_center;
}

Point2 unmap_point(const NormalizationTransform& t, const Point2& p) {
  return t.scale * (rotation(t.angle) * (p - t.target_center)) + t.source_center;
}

EyePair map_pair(const NormalizationTransform& t, const EyePair& p) {
  EyePair out;
  out.left = map_point(t, p.left);
  out.right = map_point(t, p.right);
  out.space = CoordinateSpace::kNormalized;
  return out;
}

double jesorsky(const EyePair& manual, const EyePair& detected) {
  const double iod = manual.interocular();
  if (!(iod > 0.0)) {
    throw InvalidArgument("jesorsky: manual eyes have zero inter-ocular distance");
  }
  const double dl = (manual.left - detected.left).norm();
  const double dr = (manual.right - detected.right).norm();
  return std::max(dl, dr) / iod;
}

EyeOffsets normalized_error(const NormalizationTransform& t,
                            const EyePair& manual, const EyePair& detected) {
  const EyePair m = map_pair(t, manual);
  const EyePair d = map_pair(t, detected);
  return {d.left - m.left, d.right - m.right};
}

OffsetStats offset_stats(const std::vector<EyeOffsets>& offsets) {
  OffsetStats st;
  st.n = offsets.size();
  if (offsets.empty()) return st;
  const double n = static_cast<double>(offsets.size());
  for (const auto& o : offsets) {
    st.mean.left += o.left / n;
    st.mean.right += o.right / n;
  }
  if (offsets.size() < 2) return st;
  for (const auto& o : offsets) {
    st.sd.left += (o.left - st.mean.left).cwiseAbs2();
    st.sd.right += (o.right - st.mean.right).cwiseAbs2();
  }
  st.sd.left = (st.sd.left / (n - 1.0)).cwiseSqrt();
  st.sd.right = (st.sd.right / (n - 1.0)).cwiseSqrt();
  return st;
}

std::vector<EyeOffsets> center_offsets(const std::vector<EyeOffsets>& offsets) {
  const auto st = offset_stats(offsets);
  std::vector<EyeOffsets> out = offsets;
  for (auto& o : out) {
    o.left -= st.mean.left;
    o.right -= st.mean.right;
  }
  return out;
}

EyePair perturb_fixed(const EyePair& eyes, double theta_deg, double tx,
                      double ty) {
  const Eigen::Matrix2d r = rotation(theta_deg * std::numbers::pi / 180.0);
  const Point2 c = eyes.midpoint();
  const Point2 shift(tx, ty);
  EyePair out = eyes;
  out.left = r * (eyes.left - c) + c + shift;
  out.right = r * (eyes.right - c) + c + shift;
  return out;
}

EyePair perturb_random(const EyePair& eyes, double sigma_x, double sigma_y,
                       Frame frame, std::uint64_t seed) {
  if (!(sigma_x >= 0.0) || !(sigma_y >= 0.0)) {
    throw InvalidArgument("perturb_random: sigma must be non-negative");
  }
  Rng rng(seed);
  auto draw = [&](const Point2& p) {
    for (int attempt = 0; attempt < kPerturbRetryBudget; ++attempt) {
      Point2 q(p.x() + sigma_x * rng.normal(), p.y() + sigma_y * rng.normal());
      if (inside(q, frame)) return q;
    }
    throw NumericError("perturb_random: no in-frame placement after " +
                       std::to_string(kPerturbRetryBudget) + " draws");
  };
  EyePair out = eyes;
  out.left = draw(eyes.left);
  out.right = draw(eyes.right);
  return out;
}

std::vector<FixedPerturbation> default_fixed_grid() {
  const double shifts[] = {-9, -7, -5, -3, -1, 0, 1, 3, 5, 7, 9};
  std::vector<FixedPerturbation> grid;
  for (int theta = -20; theta <= 20; theta += 5) {
    for (double tx : shifts) {
      for (double ty : shifts) grid.push_back({double(theta), tx, ty});
    }
  }
  return grid;
}

SweepResult sweep_grid(const ScoreTable& baseline,
                       const std::map<Perturbation, ScoreTable>& tables,
                       const std::vector<Perturbation>& grid) {
  SweepResult result;
  result.threshold = select_hter_threshold(baseline.match, baseline.nonmatch);
  for (const auto& cell : grid) {
    const auto it = tables.find(cell);
    if (it == tables.end() || it->second.match.empty() ||
        it->second.nonmatch.empty()) {
      result.skipped.push_back(cell);
      continue;
    }
    const auto& tab = it->second;
    result.rows.push_back({cell, hter(tab.match, tab.nonmatch, result.threshold),
                           auc(tab.match, tab.nonmatch)});
  }
  return result;
}

std::vector<EyeAnnotation> parse_eye_annotations(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&] {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next() || line != "image_id,lx,ly,rx,ry,source") {
    throw ParseError(ParseError::Kind::kMissingHeader, 1,
                     "expected header image_id,lx,ly,rx,ry,source");
  }
  std::vector<EyeAnnotation> rows;
  while (next()) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 6) {
      throw ParseError(ParseError::Kind::kColumnCount, line_no,
                       "expected 6 columns, got " + std::to_string(f.size()));
    }
    EyeAnnotation a;
    a.image_id = f[0];
    a.eyes.left = Point2(field_number(f[1], line_no), field_number(f[2], line_no));
    a.eyes.right = Point2(field_number(f[3], line_no), field_number(f[4], line_no));
    a.source = f[5];
    rows.push_back(std::move(a));
  }
  return rows;
}

void write_eye_annotations(const std::vector<EyeAnnotation>& rows,
                           std::ostream& out) {
  out << "image_id,lx,ly,rx,ry,source\n";
  for (const auto& r : rows) {
    out << r.image_id << ',' << format_double(r.eyes.left.x()) << ','
        << format_double(r.eyes.left.y()) << ','
        << format_double(r.eyes.right.x()) << ','
        << format_double(r.eyes.right.y()) << ',' << r.source << '\n';
  }
}

std::map<Perturbation, ScoreTable> parse_sweep_scores(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&] {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next()) {
    throw ParseError(ParseError::Kind::kMissingHeader, 1, "missing header");
  }
  bool fixed;
  if (line == "theta,tx,ty,score,label") {
    fixed = true;
  } else if (line == "sigma_x,sigma_y,seed,score,label") {
    fixed = false;
  } else {
    throw ParseError(ParseError::Kind::kMissingHeader, 1,
                     "expected header theta,tx,ty,score,label or "
                     "sigma_x,sigma_y,seed,score,label");
  }
  std::map<Perturbation, ScoreTable> tables;
  while (next()) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 5) {
      throw ParseError(ParseError::Kind::kColumnCount, line_no,
                       "expected 5 columns, got " + std::to_string(f.size()));
    }
    Perturbation key;
    if (fixed) {
      key = FixedPerturbation{field_number(f[0], line_no),
                              field_number(f[1], line_no),
                              field_number(f[2], line_no)};
    } else {
      const double seed = field_number(f[2], line_no);
      if (seed < 0 || seed != std::floor(seed)) {
        throw ParseError(ParseError::Kind::kNonNumeric, line_no,
                         "seed must be a non-negative integer");
      }
      key = RandomPerturbation{field_number(f[0], line_no),
                               field_number(f[1], line_no),
                               static_cast<std::uint64_t>(seed)};
    }
    const double score = field_number(f[3], line_no);
    auto& tab = tables[key];
    if (f[4] == "match") {
      tab.match.push_back(score);
    } else if (f[4] == "nonmatch") {
      tab.nonmatch.push_back(score);
    } else {
      throw ParseError(ParseError::Kind::kUnknownLabel, line_no,
                       "unknown label '" + f[4] + "'");
    }
  }
  return tables;
}

void write_sweep_csv(const SweepResult& result, std::ostream& out) {
  const bool fixed = result.rows.empty() ||
                     std::holds_alternative<FixedPerturbation>(result.rows[0].params);
  out << (fixed ? "theta,tx,ty,hter,auc\n" : "sigma_x,sigma_y,seed,hter,auc\n");
  for (const auto& row : result.rows) {
    if (const auto* p = std::get_if<FixedPerturbation>(&row.params)) {
      out << format_double(p->theta) << ',' << format_double(p->tx) << ','
          << format_double(p->ty);
    } else {
      const auto& r = std::get<RandomPerturbation>(row.params);
      out << format_double(r.sigma_x) << ',' << format_double(r.sigma_y) << ','
          << r.seed;
    }
    out << ',' << format_double(row.hter) << ',' << format_double(row.auc) << '\n';
  }
}

}  // namespace perfpred
