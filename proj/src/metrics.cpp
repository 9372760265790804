#include "perfpred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>

#include "perfpred/error.hpp"

namespace perfpred {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_classes(std::span<const double> match,
                     std::span<const double> nonmatch, const char* op) {
  if (match.empty() || nonmatch.empty()) {
    throw InvalidArgument(std::string(op) +
                          ": rates undefined with an empty score class");
  }
}

std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  return out;
}

// #{x in sorted : x < t}
std::size_t count_below(const std::vector<double>& sorted, double t) {
  return static_cast<std::size_t>(
      std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
}

}  // namespace

ErrorRates far_frr(std::span<const double> match_scores,
                   std::span<const double> nonmatch_scores, double threshold) {
  require_classes(match_scores, nonmatch_scores, "far_frr");
  std::size_t fa = 0;
  for (double s : nonmatch_scores) fa += s >= threshold;
  std::size_t fr = 0;
  for (double s : match_scores) fr += s < threshold;
  return {static_cast<double>(fa) / static_cast<double>(nonmatch_scores.size()),
          static_cast<double>(fr) / static_cast<double>(match_scores.size())};
}

FmrOperatingPoint threshold_for_fmr(std::span<const double> nonmatch_scores,
                                    double target_fmr) {
  if (!(target_fmr > 0.0 && target_fmr < 1.0)) {
    throw InvalidArgument("threshold_for_fmr: target must lie in (0,1)");
  }
  const std::size_t n = nonmatch_scores.size();
  const auto allowed =
      static_cast<std::size_t>(std::floor(target_fmr * static_cast<double>(n) + 1e-9));
  if (allowed < 1) {
    const auto required =
        static_cast<std::size_t>(std::ceil(1.0 / target_fmr - 1e-9));
    throw InvalidArgument("threshold_for_fmr: " + std::to_string(n) +
                          " non-match scores cannot resolve FMR " +
                          std::to_string(target_fmr) + "; need at least " +
                          std::to_string(required));
  }
  std::vector<double> desc(nonmatch_scores.begin(), nonmatch_scores.end());
  std::sort(desc.begin(), desc.end(), std::greater<>());
  double threshold;
  if (allowed >= n) {
    threshold = desc.back();
  } else {
    // Reject the (allowed+1)-th largest score and everything below it.
    threshold = std::nextafter(desc[allowed], kInf);
  }
  std::size_t accepted = 0;
  for (double s : desc) accepted += s >= threshold;
  FmrOperatingPoint out;
  out.point.threshold = threshold;
  out.achieved_fmr = static_cast<double>(accepted) / static_cast<double>(n);
  out.point.label = "FMR=" + std::to_string(target_fmr * 100.0) + "%";
  // Trim trailing zeros of the percentage for a readable label.
  auto& label = out.point.label;
  const auto pct = label.find('%');
  auto end = pct;
  while (end > 0 && label[end - 1] == '0') --end;
  if (end > 0 && label[end - 1] == '.') --end;
  label.erase(end, pct - end);
  return out;
}

std::vector<double> roc_thresholds(std::span<const double> match_scores,
                                   std::span<const double> nonmatch_scores) {
  std::vector<double> t;
  t.reserve(match_scores.size() + nonmatch_scores.size() + 2);
  t.push_back(-kInf);
  t.insert(t.end(), match_scores.begin(), match_scores.end());
  t.insert(t.end(), nonmatch_scores.begin(), nonmatch_scores.end());
  t.push_back(kInf);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

RocCurve roc(std::span<const double> match_scores,
             std::span<const double> nonmatch_scores,
             std::span<const double> thresholds) {
  require_classes(match_scores, nonmatch_scores, "roc");
  const auto m = sorted_copy(match_scores);
  const auto nm = sorted_copy(nonmatch_scores);
  RocCurve curve;
  curve.n_match = m.size();
  curve.n_nonmatch = nm.size();
  curve.points.reserve(thresholds.size());
  for (double t : thresholds) {
    RocPoint p;
    p.threshold = t;
    const std::size_t fr = count_below(m, t);
    p.false_accepts = nm.size() - count_below(nm, t);
    p.correct_accepts = m.size() - fr;
    p.far = static_cast<double>(p.false_accepts) / static_cast<double>(nm.size());
    p.frr = static_cast<double>(fr) / static_cast<double>(m.size());
    p.car = 1.0 - p.frr;
    curve.points.push_back(p);
  }
  std::stable_sort(curve.points.begin(), curve.points.end(),
                   [](const RocPoint& a, const RocPoint& b) {
                     if (a.far != b.far) return a.far < b.far;
                     return a.car < b.car;
                   });
  return curve;
}

double auc(const RocCurve& curve) {
  const auto& p = curve.points;
  if (p.size() < 2) throw InvalidArgument("auc: need at least 2 ROC points");
  if (curve.n_match > 0 && curve.n_nonmatch > 0) {
    std::uint64_t acc = 0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      acc += (p[i + 1].false_accepts - p[i].false_accepts) *
             (p[i].correct_accepts + p[i + 1].correct_accepts);
    }
    return static_cast<double>(acc) /
           (2.0 * static_cast<double>(curve.n_match) *
            static_cast<double>(curve.n_nonmatch));
  }
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    area += (p[i + 1].far - p[i].far) * 0.5 * (p[i].car + p[i + 1].car);
  }
  return area;
}

double auc(std::span<const double> match_scores,
           std::span<const double> nonmatch_scores) {
  const auto t = roc_thresholds(match_scores, nonmatch_scores);
  return auc(roc(match_scores, nonmatch_scores, t));
}

double select_hter_threshold(std::span<const double> match_scores,
                             std::span<const double> nonmatch_scores) {
  require_classes(match_scores, nonmatch_scores, "select_hter_threshold");
  const auto m = sorted_copy(match_scores);
  const auto nm = sorted_copy(nonmatch_scores);
  std::vector<double> pooled(m);
  pooled.insert(pooled.end(), nm.begin(), nm.end());
  std::sort(pooled.begin(), pooled.end());
  pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());

  std::vector<double> candidates;
  candidates.reserve(pooled.size() + 1);
  candidates.push_back(-kInf);
  for (std::size_t i = 0; i + 1 < pooled.size(); ++i) {
    candidates.push_back(pooled[i] + 0.5 * (pooled[i + 1] - pooled[i]));
  }
  candidates.push_back(kInf);

  const double n_m = static_cast<double>(m.size());
  const double n_nm = static_cast<double>(nm.size());
  double best_t = candidates.front();
  double best = kInf;
  for (double t : candidates) {
    const double frr = static_cast<double>(count_below(m, t)) / n_m;
    const double far =
        static_cast<double>(nm.size() - count_below(nm, t)) / n_nm;
    const double h = 0.5 * (far + frr);
    if (h < best) {
      best = h;
      best_t = t;
    }
  }
  return best_t;
}

double hter(std::span<const double> match_scores,
            std::span<const double> nonmatch_scores, double threshold) {
  const auto r = far_frr(match_scores, nonmatch_scores, threshold);
  return 0.5 * (r.far + r.frr);
}

std::vector<double> uniform_reject_grid(std::size_t steps) {
  if (steps == 0) throw InvalidArgument("uniform_reject_grid: steps must be > 0");
  std::vector<double> g(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    g[i] = static_cast<double>(i) / static_cast<double>(steps);
  }
  return g;
}

ErcCurve erc(std::span<const ErcAttempt> attempts, double threshold,
             ErrorKind kind, std::span<const double> reject_fractions) {
  const Label cls = kind == ErrorKind::kFnmr ? Label::kMatch : Label::kNonMatch;
  std::vector<const ErcAttempt*> rel;
  for (const auto& a : attempts) {
    if (!std::isfinite(a.predicted_error)) {
      throw InvalidArgument("erc: predicted errors must be finite");
    }
    if (a.label == cls) rel.push_back(&a);
  }
  if (rel.empty()) {
    throw InvalidArgument(std::string("erc: no ") +
                          (cls == Label::kMatch ? "match" : "non-match") +
                          " attempts");
  }
  for (std::size_t i = 0; i < reject_fractions.size(); ++i) {
    const double f = reject_fractions[i];
    if (!(f >= 0.0 && f <= 1.0)) {
      throw InvalidArgument("erc: reject fractions must lie in [0,1]");
    }
    if (i > 0 && !(f > reject_fractions[i - 1])) {
      throw InvalidArgument("erc: reject fractions must be strictly increasing");
    }
  }
  auto is_error = [&](const ErcAttempt& a) {
    return kind == ErrorKind::kFnmr ? a.score < threshold : a.score >= threshold;
  };

  std::stable_sort(rel.begin(), rel.end(),
                   [](const ErcAttempt* a, const ErcAttempt* b) {
                     return a->predicted_error > b->predicted_error;
                   });
  const std::size_t n = rel.size();
  std::vector<std::size_t> rejected_errors(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    rejected_errors[i + 1] = rejected_errors[i] + (is_error(*rel[i]) ? 1 : 0);
  }
  const std::size_t total_errors = rejected_errors[n];

  ErcCurve curve;
  curve.error_kind = kind;
  curve.baseline_error =
      static_cast<double>(total_errors) / static_cast<double>(n);
  curve.points.reserve(reject_fractions.size());
  for (double f : reject_fractions) {
    auto r = static_cast<std::size_t>(
        std::max(0.0, std::ceil(f * static_cast<double>(n) - 1e-9)));
    r = std::min(r, n);
    ErcPoint p;
    p.reject_fraction = f;
    const std::size_t kept = n - r;
    if (kept == 0) {
      p.empty_retained = true;
    } else {
      p.residual_error = static_cast<double>(total_errors - rejected_errors[r]) /
                         static_cast<double>(kept);
      p.ideal_error =
          static_cast<double>(total_errors - std::min(r, total_errors)) /
          static_cast<double>(kept);
    }
    curve.points.push_back(p);
  }
  return curve;
}

ErcCurve erc(std::span<const ErcAttempt> attempts, double threshold,
             ErrorKind kind) {
  const auto grid = uniform_reject_grid(200);
  return erc(attempts, threshold, kind, grid);
}

void write_roc_csv(const RocCurve& curve, std::ostream& out) {
  out << "far,frr,car,threshold\n";
  for (const auto& p : curve.points) {
    out << format_double(p.far) << ',' << format_double(p.frr) << ','
        << format_double(p.car) << ',' << format_double(p.threshold) << '\n';
  }
}

void write_erc_csv(const ErcCurve& curve, std::ostream& out) {
  out << "reject_fraction,residual_error,ideal_error\n";
  for (const auto& p : curve.points) {
    out << format_double(p.reject_fraction) << ','
        << format_double(p.residual_error) << ','
        << format_double(p.ideal_error) << '\n';
  }
}

}  // namespace perfpred
