#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "perfpred/alignment.hpp"
#include "perfpred/error.hpp"
#include "perfpred/metrics.hpp"
#include "perfpred/random.hpp"

using namespace perfpred;

namespace {

constexpr double kPi = std::numbers::pi;

EyePair pair(double lx, double ly, double rx, double ry) {
  EyePair p;
  p.left = Point2(lx, ly);
  p.right = Point2(rx, ry);
  return p;
}

Point2 rotate(const Point2& p, double a) {
  return Point2(std::cos(a) * p.x() - std::sin(a) * p.y(),
                std::sin(a) * p.x() + std::cos(a) * p.y());
}

EyePair random_pair(Rng& r) {
  const Point2 c(100 + 50 * r.normal(), 120 + 50 * r.normal());
  const double a = r.uniform() * 2 * kPi;
  const double half = 20 + 30 * r.uniform();
  EyePair p;
  p.left = c - half * Point2(std::cos(a), std::sin(a));
  p.right = c + half * Point2(std::cos(a), std::sin(a));
  return p;
}

}  // namespace

TEST_CASE("canonical constants give scale 70/33") {
  const auto t = build_transform(pair(0, 0, 70, 0), canonical_eyes());
  CHECK(t.scale == doctest::Approx(70.0 / 33.0).epsilon(1e-15));
  CHECK(1.0 / t.scale == doctest::Approx(33.0 / 70.0).epsilon(1e-15));
  CHECK(t.angle == 0.0);
  CHECK(t.frame.width == 64);
  CHECK(t.frame.height == 80);
  const auto m = map_pair(t, pair(0, 0, 70, 0));
  CHECK((m.left - Point2(15, 16)).norm() < 1e-12);
  CHECK((m.right - Point2(48, 16)).norm() < 1e-12);
}

TEST_CASE("source at target is the identity") {
  const auto t = build_transform(canonical_eyes(), canonical_eyes());
  CHECK(t.scale == 1.0);
  CHECK(t.angle == 0.0);
  Rng r(1);
  for (int i = 0; i < 10; ++i) {
    const Point2 p(64 * r.uniform(), 80 * r.uniform());
    CHECK((map_point(t, p) - p).norm() < 1e-12);
  }
}

TEST_CASE("defining landmarks map exactly; center and midpoint are preserved") {
  Rng r(2);
  for (int i = 0; i < 100; ++i) {
    const auto src = random_pair(r);
    const auto t = build_transform(src, canonical_eyes());
    const auto m = map_pair(t, src);
    CHECK((m.left - canonical_eyes().left).norm() < 1e-12);
    CHECK((m.right - canonical_eyes().right).norm() < 1e-12);
    CHECK((map_point(t, src.midpoint()) - canonical_eyes().midpoint()).norm() < 1e-12);
    CHECK(m.space == CoordinateSpace::kNormalized);
    const Point2 p(300 * r.uniform(), 300 * r.uniform());
    CHECK((unmap_point(t, map_point(t, p)) - p).norm() < 1e-9);
  }
}

TEST_CASE("rotating the source rotates alpha") {
  Rng r(3);
  const auto base = pair(10, 20, 80, 20);
  const auto t0 = build_transform(base, canonical_eyes());
  for (int i = 0; i < 50; ++i) {
    const double beta = (r.uniform() - 0.5) * 4 * kPi;
    EyePair rot = base;
    const Point2 c = base.midpoint();
    rot.left = c + rotate(base.left - c, beta);
    rot.right = c + rotate(base.right - c, beta);
    const auto t = build_transform(rot, canonical_eyes());
    CHECK(std::abs(std::remainder(t.angle - t0.angle - beta, 2 * kPi)) < 1e-12);
  }
}

TEST_CASE("coincident eyes are rejected") {
  CHECK_THROWS_AS(build_transform(pair(1, 1, 1, 1), canonical_eyes()), InvalidArgument);
}

TEST_CASE("jesorsky measure") {
  const auto m = pair(0, 0, 70, 0);
  CHECK(jesorsky(m, m) == 0.0);
  CHECK(jesorsky(m, pair(7, 0, 70, 0)) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(jesorsky(m, pair(3, 4, 73, 4)) == doctest::Approx(5.0 / 70.0).epsilon(1e-15));
  CHECK_THROWS_AS(jesorsky(pair(1, 1, 1, 1), m), InvalidArgument);
}

TEST_CASE("jesorsky is invariant to similarity transforms of all points") {
  Rng r(5);
  for (int i = 0; i < 200; ++i) {
    const auto man = random_pair(r);
    EyePair det = man;
    det.left += Point2(3 * r.normal(), 3 * r.normal());
    det.right += Point2(3 * r.normal(), 3 * r.normal());
    const double j = jesorsky(man, det);
    const double a = r.uniform() * 2 * kPi;
    const double s = 0.2 + 5 * r.uniform();
    const Point2 shift(100 * r.normal(), 100 * r.normal());
    auto apply = [&](EyePair p) {
      p.left = s * rotate(p.left, a) + shift;
      p.right = s * rotate(p.right, a) + shift;
      return p;
    };
    CHECK(std::abs(jesorsky(apply(man), apply(det)) - j) < 1e-12);
  }
}

TEST_CASE("normalized error") {
  const auto man = pair(0, 0, 70, 0);
  const auto t = build_transform(man, canonical_eyes());
  auto e = normalized_error(t, man, man);
  CHECK(e.left.norm() == 0.0);
  CHECK(e.right.norm() == 0.0);

  // shifting by s original pixels along the eye axis moves by 1 normalized px
  EyePair det = man;
  det.left.x() += t.scale;
  det.right.x() += t.scale;
  e = normalized_error(t, man, det);
  CHECK(e.left.x() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e.right.x() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(e.left.y()) < 1e-12);

  // rotation about the center: antisymmetric vertical offsets
  det = perturb_fixed(man, 4.0, 0.0, 0.0);
  e = normalized_error(t, man, det);
  CHECK(e.left.y() == doctest::Approx(-e.right.y()).epsilon(1e-12));
  CHECK(std::abs(e.left.y()) > 0.1);

  // zero only when detected equals manual
  Rng r(7);
  for (int i = 0; i < 50; ++i) {
    EyePair d = man;
    d.right += Point2(r.normal(), r.normal());
    e = normalized_error(t, man, d);
    CHECK(e.right.norm() > 0.0);
  }
}

TEST_CASE("offset statistics, raw and centered") {
  std::vector<EyeOffsets> v{{Point2(1, 3), Point2(-1, 3)}, {Point2(3, 3), Point2(1, 5)}};
  const auto st = offset_stats(v);
  CHECK(st.n == 2);
  CHECK(st.mean.left == Point2(2, 3));
  CHECK(st.mean.right == Point2(0, 4));
  CHECK(st.sd.left.x() == doctest::Approx(std::sqrt(2.0)));
  CHECK(st.sd.left.y() == 0.0);
  const auto c = center_offsets(v);
  CHECK(c[0].left == Point2(-1, 0));
  CHECK(c[1].right == Point2(1, 1));
  const auto cs = offset_stats(c);
  CHECK(cs.mean.left.norm() == 0.0);
  CHECK(cs.sd.left == st.sd.left);
}

TEST_CASE("fixed perturbation") {
  const auto e = canonical_eyes();
  auto p = perturb_fixed(e, 0, 0, 0);
  CHECK(p.left == e.left);
  CHECK(p.right == e.right);
  p = perturb_fixed(e, 0, 3, 0);
  CHECK(p.left == e.left + Point2(3, 0));
  CHECK(p.right == e.right + Point2(3, 0));
  p = perturb_fixed(e, 180, 0, 0);
  CHECK((p.left - e.right).norm() < 1e-12);
  CHECK((p.right - e.left).norm() < 1e-12);

  Rng r(11);
  for (int i = 0; i < 500; ++i) {
    const auto src = random_pair(r);
    const auto q = perturb_fixed(src, 40 * r.normal(), 9 * r.normal(), 9 * r.normal());
    CHECK(std::abs(q.interocular() - src.interocular()) < 1e-12);
  }
}

TEST_CASE("random perturbation") {
  const auto e = canonical_eyes();
  const Frame f;
  auto p = perturb_random(e, 0, 0, f, 1);
  CHECK(p.left == e.left);
  CHECK(p.right == e.right);

  const auto a = perturb_random(e, 2, 3, f, 99);
  const auto b = perturb_random(e, 2, 3, f, 99);
  CHECK(a.left == b.left);
  CHECK(a.right == b.right);

  for (std::uint64_t s = 0; s < 2000; ++s) {
    p = perturb_random(e, 10, 10, f, s);
    for (const auto& q : {p.left, p.right}) {
      REQUIRE(q.x() >= 0.0);
      REQUIRE(q.x() < 64.0);
      REQUIRE(q.y() >= 0.0);
      REQUIRE(q.y() < 80.0);
    }
  }
  EyePair outside = e;
  outside.left = Point2(-1e6, -1e6);
  CHECK_THROWS_AS(perturb_random(outside, 1, 1, f, 1), NumericError);
  CHECK_THROWS_AS(perturb_random(e, -1, 1, f, 1), InvalidArgument);
}

TEST_CASE("random perturbation spread far from the border") {
  EyePair e;
  e.left = Point2(500, 500);
  e.right = Point2(540, 500);
  const Frame big{1000, 1000};
  const int n = 100000;
  double sx = 0, sy = 0;
  for (int i = 0; i < n; ++i) {
    const auto p = perturb_random(e, 1.5, 2.5, big, derive_seed(3, i));
    sx += std::pow(p.left.x() - 500, 2);
    sy += std::pow(p.left.y() - 500, 2);
  }
  CHECK(std::abs(std::sqrt(sx / n) - 1.5) / 1.5 < 0.02);
  CHECK(std::abs(std::sqrt(sy / n) - 2.5) / 2.5 < 0.02);
}

TEST_CASE("default grid shape") {
  const auto g = default_fixed_grid();
  CHECK(g.size() == 9 * 11 * 11);
  CHECK(g.front().theta == -20);
  CHECK(g.back().theta == 20);
  CHECK(std::count_if(g.begin(), g.end(), [](const FixedPerturbation& p) {
          return p.theta == 0 && p.tx == 0 && p.ty == 0;
        }) == 1);
}

TEST_CASE("sweep over precomputed tables") {
  Rng r(13);
  ScoreTable base;
  for (int i = 0; i < 200; ++i) {
    base.match.push_back(r.normal(2, 1));
    base.nonmatch.push_back(r.normal(0, 1));
  }
  std::map<Perturbation, ScoreTable> tables;
  tables[FixedPerturbation{0, 0, 0}] = base;
  ScoreTable shifted = base;
  for (auto& s : shifted.match) s -= 1;
  tables[FixedPerturbation{5, 1, 0}] = shifted;
  std::vector<Perturbation> grid{FixedPerturbation{0, 0, 0}, FixedPerturbation{5, 1, 0},
                                 FixedPerturbation{10, 0, 0}};
  const auto res = sweep_grid(base, tables, grid);
  REQUIRE(res.rows.size() == 2);
  CHECK(res.skipped.size() == 1);
  CHECK(res.rows.size() == grid.size() - res.skipped.size());
  const double t = select_hter_threshold(base.match, base.nonmatch);
  CHECK(res.threshold == t);
  CHECK(res.rows[0].hter == hter(base.match, base.nonmatch, t));
  CHECK(res.rows[0].auc == auc(base.match, base.nonmatch));
  CHECK(res.rows[1].hter > res.rows[0].hter);

  std::ostringstream out;
  write_sweep_csv(res, out);
  CHECK(out.str().rfind("theta,tx,ty,hter,auc\n0.0,0.0,0.0,", 0) == 0);
}

TEST_CASE("annotation csv round trip") {
  const std::string text =
      "image_id,lx,ly,rx,ry,source\n"
      "img1,10.5,20.0,60.0,21.25,manual_a\n"
      "img1,11.0,23.0,61.0,24.0,detector_x\n";
  std::istringstream in(text);
  const auto rows = parse_eye_annotations(in);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].eyes.left == Point2(10.5, 20.0));
  CHECK(rows[1].source == "detector_x");
  std::ostringstream out;
  write_eye_annotations(rows, out);
  CHECK(out.str() == text);

  std::istringstream bad("image_id,lx,ly,rx,ry,source\nimg,1,2,3,x,manual_a\n");
  try {
    parse_eye_annotations(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("sweep score tables parse both layouts") {
  std::istringstream fixed(
      "theta,tx,ty,score,label\n0,0,0,0.9,match\n0,0,0,0.1,nonmatch\n5,1,-1,0.4,match\n");
  const auto t = parse_sweep_scores(fixed);
  CHECK(t.size() == 2);
  CHECK(t.at(FixedPerturbation{0, 0, 0}).match.size() == 1);
  std::istringstream random(
      "sigma_x,sigma_y,seed,score,label\n1,2,7,0.9,match\n1,2,7,0.2,nonmatch\n");
  const auto u = parse_sweep_scores(random);
  CHECK(u.count(RandomPerturbation{1, 2, 7}) == 1);
  std::istringstream bad("sigma_x,sigma_y,seed,score,label\n1,2,0.5,0.9,match\n");
  CHECK_THROWS_AS(parse_sweep_scores(bad), ParseError);
  std::istringstream badlabel("theta,tx,ty,score,label\n0,0,0,0.9,genuine\n");
  CHECK_THROWS_AS(parse_sweep_scores(badlabel), ParseError);
}
