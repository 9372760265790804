#include "perfpred/perf_model.hpp"

#include <cmath>
#include <limits>

#include "perfpred/error.hpp"
#include "perfpred/random.hpp"

namespace perfpred {

namespace {

double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Continued fraction for I_x(a, b), modified Lentz evaluation.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete_beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw InvalidArgument("incomplete_beta: shapes must be positive");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      a * std::log(x) + b * std::log1p(-x) - log_beta_fn(a, b);
  const double front = std::exp(log_front);
  // The fraction converges fast for x < (a+1)/(a+b+2); otherwise use symmetry.
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double BetaPosterior::pdf(double x) const {
  if (x < 0.0 || x > 1.0) return 0.0;
  if (x == 0.0) {
    if (a < 1.0) return std::numeric_limits<double>::infinity();
    return a == 1.0 ? std::exp(-log_beta_fn(a, b)) : 0.0;
  }
  if (x == 1.0) {
    if (b < 1.0) return std::numeric_limits<double>::infinity();
    return b == 1.0 ? std::exp(-log_beta_fn(a, b)) : 0.0;
  }
  return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) -
                  log_beta_fn(a, b));
}

double BetaPosterior::quantile(double p) const {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InvalidArgument("BetaPosterior::quantile: p outside [0,1]");
  }
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  // 200 halvings exhaust double resolution well before the loop ends.
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

OutcomeCounts count_outcomes(std::span<const double> scores,
                             std::span<const Label> labels, double threshold) {
  if (scores.size() != labels.size()) {
    throw InvalidArgument("count_outcomes: scores/labels size mismatch");
  }
  if (scores.empty()) throw InvalidArgument("count_outcomes: no scores");
  OutcomeCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == Label::kMatch) {
      ++c.n_match;
      c.false_non_matches += scores[i] < threshold;
    } else {
      ++c.n_nonmatch;
      c.false_matches += scores[i] >= threshold;
    }
  }
  return c;
}

OutcomeCounts count_outcomes(const RecordSet& records,
                             std::span<const std::size_t> indices,
                             double threshold) {
  OutcomeCounts c;
  for (auto i : indices) {
    const auto& r = records.records.at(i);
    if (r.label == Label::kMatch) {
      ++c.n_match;
      c.false_non_matches += r.score < threshold;
    } else {
      ++c.n_nonmatch;
      c.false_matches += r.score >= threshold;
    }
  }
  return c;
}

BetaPosterior beta_posterior(std::size_t failures, std::size_t trials,
                             const BetaPosterior& prior) {
  if (failures > trials) {
    throw InvalidArgument("beta_posterior: failures (" +
                          std::to_string(failures) + ") exceed trials (" +
                          std::to_string(trials) + ")");
  }
  if (!(prior.a > 0.0) || !(prior.b > 0.0)) {
    throw InvalidArgument("beta_posterior: prior shapes must be positive");
  }
  return {static_cast<double>(failures) + prior.a,
          static_cast<double>(trials - failures) + prior.b};
}

CredibleInterval credible_interval(const BetaPosterior& post, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidArgument("credible_interval: alpha must lie in (0,1)");
  }
  return {post.quantile(0.5 * alpha), post.quantile(1.0 - 0.5 * alpha)};
}

std::vector<QrSample> sample_qr(const QualityRegion& region,
                                const BetaPosterior& fnmr_post,
                                const BetaPosterior& fmr_post,
                                std::size_t n_rand, std::uint64_t seed) {
  const auto& g = region.q_model;
  if (g.mean.empty() || g.mean.size() != g.variance.size()) {
    throw InvalidArgument("sample_qr: region has no fitted quality model");
  }
  Rng rng(derive_seed(seed, region.id));
  std::vector<QrSample> out(n_rand);
  for (auto& s : out) {
    s.q.resize(g.mean.size());
    for (std::size_t d = 0; d < g.mean.size(); ++d) {
      s.q[d] = rng.normal(g.mean[d], std::sqrt(g.variance[d]));
    }
    s.r[0] = rng.beta(fmr_post.a, fmr_post.b);
    s.r[1] = rng.beta(fnmr_post.a, fnmr_post.b);
  }
  return out;
}

std::vector<RegionPerformance> region_posteriors(
    const RecordSet& records, const std::vector<QualityRegion>& regions,
    double threshold, const BetaPosterior& prior) {
  std::vector<RegionPerformance> out;
  out.reserve(regions.size());
  for (const auto& region : regions) {
    RegionPerformance p;
    p.region_id = region.id;
    p.counts = count_outcomes(records, region.members, threshold);
    p.fnmr = beta_posterior(p.counts.false_non_matches, p.counts.n_match, prior);
    p.fmr = beta_posterior(p.counts.false_matches, p.counts.n_nonmatch, prior);
    out.push_back(p);
  }
  return out;
}

Eigen::MatrixXd training_matrix(const std::vector<QualityRegion>& regions,
                                const std::vector<RegionPerformance>& perf,
                                std::size_t n_rand, std::uint64_t seed) {
  if (regions.size() != perf.size()) {
    throw InvalidArgument("training_matrix: one posterior pair per region");
  }
  if (regions.empty()) throw InvalidArgument("training_matrix: no regions");
  const auto d_q = regions.front().q_model.mean.size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(regions.size() * n_rand),
                    static_cast<Eigen::Index>(d_q + 2));
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    for (const auto& s : sample_qr(regions[i], perf[i].fnmr, perf[i].fmr, n_rand,
                                   seed)) {
      for (std::size_t d = 0; d < d_q; ++d) {
        m(row, static_cast<Eigen::Index>(d)) = s.q[d];
      }
      m(row, static_cast<Eigen::Index>(d_q)) = s.r[0];
      m(row, static_cast<Eigen::Index>(d_q + 1)) = s.r[1];
      ++row;
    }
  }
  return m;
}

}  // namespace perfpred
