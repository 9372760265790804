#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "perfpred/error.hpp"
#include "perfpred/metrics.hpp"
#include "perfpred/random.hpp"

using namespace perfpred;

namespace {

std::vector<double> normals(Rng& r, std::size_t n, double mean = 0.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = r.normal(mean, 1.0);
  return v;
}

// Mann-Whitney statistic with half credit for ties: P(match > nonmatch).
double pairwise_auc(const std::vector<double>& m, const std::vector<double>& nm) {
  double s = 0.0;
  for (double a : m)
    for (double b : nm) s += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return s / (double(m.size()) * double(nm.size()));
}

}  // namespace

TEST_CASE("far and frr basics") {
  const std::vector<double> m{0.9}, nm{0.1};
  const auto r = far_frr(m, nm, 0.5);
  CHECK(r.far == 0.0);
  CHECK(r.frr == 0.0);
  const auto lo = far_frr(m, nm, -INFINITY);
  CHECK(lo.far == 1.0);
  CHECK(lo.frr == 0.0);
  CHECK_THROWS_AS(far_frr({}, nm, 0.0), InvalidArgument);
}

TEST_CASE("far and frr agree with a recount and are monotone in t") {
  Rng r(3);
  const auto m = normals(r, 300, 1.0), nm = normals(r, 400);
  const auto thresholds = roc_thresholds(m, nm);
  double prev_far = 2.0, prev_frr = -1.0;
  for (double t : thresholds) {
    const auto e = far_frr(m, nm, t);
    const auto fa = std::count_if(nm.begin(), nm.end(), [&](double s) { return s >= t; });
    const auto fr = std::count_if(m.begin(), m.end(), [&](double s) { return s < t; });
    CHECK(e.far == double(fa) / nm.size());
    CHECK(e.frr == double(fr) / m.size());
    CHECK(e.far <= prev_far);
    CHECK(e.frr >= prev_frr);
    prev_far = e.far;
    prev_frr = e.frr;
  }
}

TEST_CASE("threshold for a target FMR") {
  std::vector<double> nm;
  for (int i = 1; i <= 1000; ++i) nm.push_back(i / 1000.0);
  const auto op = threshold_for_fmr(nm, 0.001);
  CHECK(op.point.threshold > 0.999);
  CHECK(op.point.threshold < 1.0);
  CHECK(op.achieved_fmr == 0.001);
  CHECK(op.point.label == "FMR=0.1%");
  CHECK_THROWS_AS(threshold_for_fmr(std::vector<double>(999, 0.0), 0.001),
                  InvalidArgument);

  Rng r(5);
  const auto sym = normals(r, 10001);
  const auto half = threshold_for_fmr(sym, 0.5);
  auto sorted = sym;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::abs(half.point.threshold - sorted[5000]) < 0.01);
  CHECK(half.achieved_fmr <= 0.5);
}

TEST_CASE("achieved FMR never exceeds the target") {
  Rng r(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> nm(50 + r.below(2000));
    for (auto& x : nm) x = std::round(r.normal() * 20) / 20;  // many ties
    for (double f : {0.001, 0.01, 0.05, 0.1, 0.3}) {
      if (f * nm.size() < 1.0) continue;
      const auto op = threshold_for_fmr(nm, f);
      const std::vector<double> m{0.0};
      CHECK(far_frr(m, nm, op.point.threshold).far <= f);
      CHECK(op.achieved_fmr == far_frr(m, nm, op.point.threshold).far);
    }
  }
}

TEST_CASE("ROC on separable scores") {
  const std::vector<double> m{5, 6, 7}, nm{1, 2, 3};
  const auto c = roc(m, nm, roc_thresholds(m, nm));
  bool pinned = false;
  for (const auto& p : c.points) pinned |= p.far == 0.0 && p.frr == 0.0;
  CHECK(pinned);
  CHECK(auc(m, nm) == 1.0);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    CHECK(c.points[i].far >= c.points[i - 1].far);
  }
}

TEST_CASE("AUC from two explicit points") {
  RocCurve c;
  c.points = {{0.0, 0.0, 0.0, 1.0}, {0.0, 1.0, 0.0, 1.0}};
  CHECK(auc(c) == 1.0);
  c.points.pop_back();
  CHECK_THROWS_AS(auc(c), InvalidArgument);
}

TEST_CASE("AUC equals the pairwise statistic and is rank invariant") {
  Rng r(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = normals(r, 80, 0.7), nm = normals(r, 120);
    for (auto& x : m) x = std::round(x * 4) / 4;  // ties
    for (auto& x : nm) x = std::round(x * 4) / 4;
    const double a = auc(m, nm);
    CHECK(a == doctest::Approx(pairwise_auc(m, nm)).epsilon(1e-15));
    auto tm = m, tnm = nm;
    for (auto& x : tm) x = std::exp(3 * x) + 2;
    for (auto& x : tnm) x = std::exp(3 * x) + 2;
    CHECK(auc(tm, tnm) == a);
  }
}

TEST_CASE("ROC thresholds reproduce exhaustive enumeration") {
  Rng r(13);
  const auto m = normals(r, 30, 0.5), nm = normals(r, 30);
  const auto c = roc(m, nm, roc_thresholds(m, nm));
  // every distinct (far, frr) pair reachable by any threshold appears
  for (double t = -5; t <= 5; t += 0.001) {
    const auto e = far_frr(m, nm, t);
    const bool found = std::any_of(c.points.begin(), c.points.end(), [&](const RocPoint& p) {
      return p.far == e.far && p.frr == e.frr;
    });
    REQUIRE(found);
  }
}

TEST_CASE("negated scores swap the roles of the classes") {
  Rng r(17);
  const auto m = normals(r, 100, 1.0), nm = normals(r, 150);
  std::vector<double> nm_neg, m_neg;
  for (double x : m) m_neg.push_back(-x);
  for (double x : nm) nm_neg.push_back(-x);
  // negating both and swapping labels gives the same ranking problem
  CHECK(auc(nm_neg, m_neg) == doctest::Approx(auc(m, nm)).epsilon(1e-15));
  CHECK(auc(m_neg, nm_neg) == doctest::Approx(1.0 - auc(m, nm)).epsilon(1e-12));
}

TEST_CASE("AUC of identically distributed classes") {
  Rng r(19);
  const auto m = normals(r, 5000), nm = normals(r, 5000);
  CHECK(std::abs(auc(m, nm) - 0.5) < 0.02);
}

TEST_CASE("HTER") {
  const std::vector<double> m{5, 6, 7}, nm{1, 2, 3};
  const double t = select_hter_threshold(m, nm);
  CHECK(t == 4.0);
  CHECK(hter(m, nm, t) == 0.0);

  Rng r(23);
  const auto a = normals(r, 10000), b = normals(r, 10000);
  CHECK(std::abs(hter(a, b, select_hter_threshold(a, b)) - 0.5) < 0.02);
}

TEST_CASE("HTER threshold is the exhaustive argmin") {
  Rng r(29);
  for (int trial = 0; trial < 30; ++trial) {
    auto m = normals(r, 100, 1.0), nm = normals(r, 100);
    for (auto& x : m) x = std::round(x * 5) / 5;
    const double t = select_hter_threshold(m, nm);
    const double h = hter(m, nm, t);
    double best = 1.0;
    for (double s = -6; s <= 7; s += 0.0005) best = std::min(best, hter(m, nm, s));
    best = std::min({best, hter(m, nm, -INFINITY), hter(m, nm, INFINITY)});
    CHECK(h == doctest::Approx(best).epsilon(1e-15));
    CHECK(h <= 0.5);
  }
}

TEST_CASE("ERC basics") {
  // 10 match attempts, 3 below the threshold
  std::vector<ErcAttempt> a;
  for (int i = 0; i < 10; ++i) {
    a.push_back({i < 3 ? -1.0 : 1.0, Label::kMatch, double(i % 4)});
  }
  a.push_back({5.0, Label::kNonMatch, 100.0});  // ignored for FNMR
  const auto grid = uniform_reject_grid(10);
  const auto c = erc(a, 0.0, ErrorKind::kFnmr, grid);
  CHECK(c.baseline_error == 0.3);
  CHECK(c.points[0].residual_error == 0.3);
  CHECK(c.points[0].ideal_error == 0.3);
  CHECK(c.points[3].ideal_error == 0.0);
  CHECK(c.points[2].ideal_error == doctest::Approx(1.0 / 8.0));
  CHECK(c.points.back().empty_retained);
  CHECK(c.points.back().residual_error == 0.0);
  for (std::size_t i = 0; i + 1 < c.points.size(); ++i) CHECK_FALSE(c.points[i].empty_retained);
}

TEST_CASE("ERC input checks") {
  std::vector<ErcAttempt> a{{1.0, Label::kNonMatch, 0.0}};
  CHECK_THROWS_AS(erc(a, 0.0, ErrorKind::kFnmr), InvalidArgument);
  a.push_back({1.0, Label::kMatch, 0.0});
  const std::vector<double> bad{0.0, 0.5, 0.5};
  CHECK_THROWS_AS(erc(a, 0.0, ErrorKind::kFnmr, bad), InvalidArgument);
  const std::vector<double> out_of_range{0.0, 1.5};
  CHECK_THROWS_AS(erc(a, 0.0, ErrorKind::kFnmr, out_of_range), InvalidArgument);
}

TEST_CASE("ideal predictor drops to zero at the baseline fraction") {
  Rng r(31);
  std::vector<ErcAttempt> a;
  for (int i = 0; i < 1000; ++i) {
    const double s = r.normal(1.0, 1.0);
    a.push_back({s, Label::kMatch, s < 0.0 ? 1.0 : 0.0});
  }
  const auto base = erc(a, 0.0, ErrorKind::kFnmr, std::vector<double>{0.0});
  const double x = base.baseline_error;
  const std::vector<double> grid{0.0, x / 2, x, std::min(1.0, x + 0.1)};
  const auto c = erc(a, 0.0, ErrorKind::kFnmr, grid);
  CHECK(c.points[2].residual_error == 0.0);
  CHECK(c.points[2].ideal_error == 0.0);
  CHECK(c.points[1].residual_error > 0.0);
}

TEST_CASE("constant predictions give a flat curve") {
  Rng r(37);
  std::vector<ErcAttempt> a;
  const int n = 20000;
  for (int i = 0; i < n; ++i) a.push_back({r.normal(1.0, 1.0), Label::kMatch, 0.5});
  const auto c = erc(a, 0.0, ErrorKind::kFnmr, uniform_reject_grid(10));
  const double p = c.baseline_error;
  for (const auto& pt : c.points) {
    if (pt.empty_retained) continue;
    const double kept = (1.0 - pt.reject_fraction) * n;
    CHECK(std::abs(pt.residual_error - p) <= 4 * std::sqrt(p * (1 - p) / kept));
  }
}

TEST_CASE("FMR error kind uses non-match attempts") {
  std::vector<ErcAttempt> a{{1.0, Label::kNonMatch, 2.0},
                            {-1.0, Label::kNonMatch, 1.0},
                            {-1.0, Label::kMatch, 9.0}};
  const std::vector<double> grid{0.0, 0.5};
  const auto c = erc(a, 0.0, ErrorKind::kFmr, grid);
  CHECK(c.baseline_error == 0.5);
  CHECK(c.points[1].residual_error == 0.0);
}

TEST_CASE("csv emitters") {
  const std::vector<double> m{1.0}, nm{0.0};
  std::ostringstream out;
  write_roc_csv(roc(m, nm, std::vector<double>{0.5}), out);
  CHECK(out.str() == "far,frr,car,threshold\n0.0,0.0,1.0,0.5\n");
  ErcCurve c;
  c.points = {{0.0, 0.25, 0.125, false}};
  std::ostringstream e;
  write_erc_csv(c, e);
  CHECK(e.str() == "reject_fraction,residual_error,ideal_error\n0.0,0.25,0.125\n");
}
