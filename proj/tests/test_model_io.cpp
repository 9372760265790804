#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "perfpred/error.hpp"
#include "perfpred/model_io.hpp"
#include "perfpred/random.hpp"

using namespace perfpred;

namespace {

MixtureModel fitted_model(std::uint64_t seed) {
  Rng r(seed);
  Eigen::MatrixXd x(300, 4);
  for (int i = 0; i < 300; ++i) {
    const double shift = i % 3;
    for (int j = 0; j < 4; ++j) x(i, j) = r.normal() / 3.0 + shift * (j + 1);
  }
  EmOptions o;
  o.components = 3;
  o.parametrization = CovModel::VVV;
  o.seed = seed;
  auto m = em_fit(x, 2, o);
  m.operating_point = OperatingPoint{0.123456789012345678, "FMR=0.1%"};
  return m;
}

}  // namespace

TEST_CASE("json round trip is bit exact") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto m = fitted_model(seed);
    const auto text = model_to_json(m);
    const auto back = model_from_json(text);
    CHECK(back.d_q == m.d_q);
    CHECK(back.d_r == m.d_r);
    CHECK(back.parametrization == m.parametrization);
    CHECK(back.weights == m.weights);
    for (std::size_t k = 0; k < m.components(); ++k) {
      CHECK(back.means[k] == m.means[k]);
      CHECK(back.covariances[k] == m.covariances[k]);
    }
    REQUIRE(back.operating_point);
    CHECK(back.operating_point->threshold == m.operating_point->threshold);
    CHECK(back.operating_point->label == m.operating_point->label);
    CHECK(back.fit_meta.loglik == m.fit_meta.loglik);
    CHECK(back.fit_meta.bic == m.fit_meta.bic);
    CHECK(back.fit_meta.seed == m.fit_meta.seed);
    CHECK(back.fit_meta.n_iter == m.fit_meta.n_iter);
    // serialize . parse . serialize is a fixed point
    CHECK(model_to_json(back) == text);
  }
}

TEST_CASE("awkward doubles survive") {
  MixtureModel m;
  m.d_q = 1;
  m.d_r = 1;
  m.weights = {1.0 / 3.0, 2.0 / 3.0};
  Eigen::VectorXd a(2), b(2);
  a << 5e-324, -1e308;
  b << 0.1 + 0.2, std::nextafter(1.0, 2.0);
  m.means = {a, b};
  m.covariances = {Eigen::MatrixXd::Identity(2, 2) * 1e-300,
                   Eigen::MatrixXd::Identity(2, 2) * 3.0000000000000004};
  const auto back = model_from_json(model_to_json(m));
  CHECK(back.means[0] == a);
  CHECK(back.means[1] == b);
  CHECK(back.covariances == m.covariances);
  CHECK_FALSE(back.operating_point);
}

TEST_CASE("malformed documents") {
  CHECK_THROWS_AS(model_from_json("not json"), ParseError);
  CHECK_THROWS_AS(model_from_json("[]"), ParseError);
  CHECK_THROWS_AS(model_from_json("{\"version\": 1}"), ParseError);
  auto text = model_to_json(fitted_model(4));
  auto wrong_version = text;
  wrong_version.replace(wrong_version.find("\"version\": 1"), 12, "\"version\": 9");
  CHECK_THROWS_AS(model_from_json(wrong_version), ParseError);
  auto bad_k = text;
  bad_k.replace(bad_k.find("\"K\": 3"), 6, "\"K\": 2");
  CHECK_THROWS_AS(model_from_json(bad_k), ParseError);
  auto bad_cov = text;
  bad_cov.replace(bad_cov.find("\"VVV\""), 5, "\"QQQ\"");
  CHECK_THROWS_AS(model_from_json(bad_cov), InvalidArgument);
}

TEST_CASE("save and load through a file") {
  const auto dir = std::filesystem::temp_directory_path() / "perfpred_model_io";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "model.json").string();
  const auto m = fitted_model(5);
  save_model(m, path);
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  const auto back = load_model(path);
  CHECK(model_to_json(back) == model_to_json(m));
  CHECK_THROWS_AS(load_model((dir / "missing.json").string()), ParseError);
  std::filesystem::remove_all(dir);
}
