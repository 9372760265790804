#include "perfpred/score_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include "perfpred/error.hpp"

namespace perfpred {

IumResult ium(std::span<const double> impostor_scores, std::string subject_id) {
  if (impostor_scores.size() < 2) {
    throw InvalidArgument("ium: need at least 2 impostor scores");
  }
  IumResult r;
  r.subject_id = std::move(subject_id);
  r.n_impostors = impostor_scores.size();
  const auto [lo, hi] =
      std::minmax_element(impostor_scores.begin(), impostor_scores.end());
  r.s_min = *lo;
  r.s_max = *hi;
  double sum = 0.0;
  for (double s : impostor_scores) sum += s;
  r.s_mean = sum / static_cast<double>(impostor_scores.size());
  if (!(r.s_max > r.s_min)) {
    throw InvalidArgument("ium: impostor scores are constant (max == min)");
  }
  r.u = (r.s_max - r.s_mean) / (r.s_max - r.s_min);
  // Rounding in the mean can push u a hair outside [0, 1].
  r.u = std::clamp(r.u, 0.0, 1.0);
  return r;
}

std::vector<IumResult> ium_by_subject(const RecordSet& records) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& rec : records.records) {
    if (rec.label == Label::kNonMatch) groups[rec.probe_id].push_back(rec.score);
  }
  std::vector<IumResult> out;
  out.reserve(groups.size());
  for (const auto& [id, scores] : groups) {
    try {
      out.push_back(ium(scores, id));
    } catch (const InvalidArgument&) {
      // degenerate subject; nothing to report
    }
  }
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("pearson: size mismatch");
  if (a.size() < 3) throw InvalidArgument("pearson: need at least 3 pairs");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) {
    throw InvalidArgument("pearson: zero variance, correlation undefined");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

IumCorrelation ium_correlation(const std::vector<IumResult>& a,
                               const std::vector<IumResult>& b) {
  std::map<std::string, double> lookup;
  for (const auto& r : b) lookup[r.subject_id] = r.u;
  std::vector<double> ua, ub;
  IumCorrelation out;
  for (const auto& r : a) {
    const auto it = lookup.find(r.subject_id);
    if (it == lookup.end()) {
      ++out.n_excluded;
      continue;
    }
    ua.push_back(r.u);
    ub.push_back(it->second);
  }
  out.n_joined = ua.size();
  out.n_excluded += b.size() - out.n_joined;
  out.r = pearson(ua, ub);
  return out;
}

void write_ium_csv(const std::vector<IumResult>& rows, std::ostream& out) {
  out << "subject_id,u,n_impostors\n";
  for (const auto& r : rows) {
    out << r.subject_id << ',' << format_double(r.u) << ',' << r.n_impostors
        << '\n';
  }
}

}  // namespace perfpred
