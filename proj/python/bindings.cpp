#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "perfpred/alignment.hpp"
#include "perfpred/dataio.hpp"
#include "perfpred/error.hpp"
#include "perfpred/gmm.hpp"
#include "perfpred/metrics.hpp"
#include "perfpred/model_io.hpp"
#include "perfpred/perf_model.hpp"
#include "perfpred/pipeline.hpp"
#include "perfpred/score_analysis.hpp"

namespace py = pybind11;
using namespace perfpred;

namespace {

EyePair eye_pair(const std::array<double, 4>& v) {
  EyePair p;
  p.left = {v[0], v[1]};
  p.right = {v[2], v[3]};
  return p;
}

std::array<double, 4> eye_tuple(const EyePair& p) {
  return {p.left.x(), p.left.y(), p.right.x(), p.right.y()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Quality-based verification performance prediction";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  // records
  py::enum_<Label>(m, "Label").value("MATCH", Label::kMatch).value("NONMATCH", Label::kNonMatch);

  py::class_<VerificationRecord>(m, "VerificationRecord")
      .def(py::init<>())
      .def_readwrite("probe_id", &VerificationRecord::probe_id)
      .def_readwrite("ref_id", &VerificationRecord::ref_id)
      .def_readwrite("score", &VerificationRecord::score)
      .def_readwrite("label", &VerificationRecord::label)
      .def_readwrite("quality", &VerificationRecord::quality);

  py::class_<RecordSet>(m, "RecordSet")
      .def(py::init<>())
      .def_readwrite("records", &RecordSet::records)
      .def_readwrite("quality_dim", &RecordSet::quality_dim)
      .def("__len__", &RecordSet::size)
      .def("count", &RecordSet::count)
      .def("scores", &RecordSet::scores)
      .def("validate", &RecordSet::validate)
      .def("quality_matrix", [](const RecordSet& s) { return quality_matrix(s); });

  m.def("parse_records", [](const std::string& text) { return parse_records_string(text); });
  m.def("read_records", &read_records_file, py::arg("path"));
  m.def("write_records", &write_records_string);

  py::class_<ScoreModel>(m, "ScoreModel")
      .def(py::init<>())
      .def_readwrite("base", &ScoreModel::base)
      .def_readwrite("slope", &ScoreModel::slope)
      .def_readwrite("class_offset", &ScoreModel::class_offset)
      .def_readwrite("match_sd", &ScoreModel::match_sd)
      .def_readwrite("nonmatch_sd", &ScoreModel::nonmatch_sd)
      .def("fnmr", &ScoreModel::fnmr)
      .def("fmr", &ScoreModel::fmr);

  m.def(
      "synthesize",
      [](const ScoreModel& model, std::size_t dims, std::size_t grid_n, double lo, double hi,
         std::size_t n_subjects, std::size_t scores_per_cell, double jitter,
         std::uint64_t seed) {
        SynthConfig c;
        c.score_model = model;
        c.quality_grid = regular_grid(dims, grid_n, lo, hi);
        c.n_subjects = n_subjects;
        c.scores_per_cell = scores_per_cell;
        c.quality_jitter = jitter;
        c.seed = seed;
        return synthesize_dataset(c);
      },
      py::arg("model"), py::arg("dims") = 2, py::arg("grid_n") = 10, py::arg("lo") = -1.0,
      py::arg("hi") = 1.0, py::arg("n_subjects") = 100, py::arg("scores_per_cell") = 50,
      py::arg("jitter") = 0.0, py::arg("seed"));

  // beta posteriors
  py::class_<BetaPosterior>(m, "BetaPosterior")
      .def(py::init<double, double>(), py::arg("a") = 1.0, py::arg("b") = 1.0)
      .def_readwrite("a", &BetaPosterior::a)
      .def_readwrite("b", &BetaPosterior::b)
      .def("mean", &BetaPosterior::mean)
      .def("variance", &BetaPosterior::variance)
      .def("pdf", &BetaPosterior::pdf)
      .def("cdf", &BetaPosterior::cdf)
      .def("quantile", &BetaPosterior::quantile);
  m.def("beta_posterior", &beta_posterior, py::arg("failures"), py::arg("trials"),
        py::arg("prior") = kUniformPrior);
  m.def(
      "credible_interval",
      [](const BetaPosterior& p, double alpha) {
        const auto ci = credible_interval(p, alpha);
        return std::pair{ci.lower, ci.upper};
      },
      py::arg("posterior"), py::arg("alpha") = 0.05);

  // mixtures
  py::enum_<CovModel> cov(m, "CovModel");
  for (auto c : kAllCovModels) cov.value(std::string(to_string(c)).c_str(), c);

  py::class_<MixtureModel>(m, "MixtureModel")
      .def_readonly("d_q", &MixtureModel::d_q)
      .def_readonly("d_r", &MixtureModel::d_r)
      .def_readonly("parametrization", &MixtureModel::parametrization)
      .def_readonly("weights", &MixtureModel::weights)
      .def_readonly("means", &MixtureModel::means)
      .def_readonly("covariances", &MixtureModel::covariances)
      .def_property_readonly("loglik", [](const MixtureModel& x) { return x.fit_meta.loglik; })
      .def_property_readonly("bic", [](const MixtureModel& x) { return x.fit_meta.bic; })
      .def_property_readonly("loglik_trace",
                             [](const MixtureModel& x) { return x.fit_meta.loglik_trace; })
      .def_property_readonly("threshold",
                             [](const MixtureModel& x) -> std::optional<double> {
                               if (!x.operating_point) return std::nullopt;
                               return x.operating_point->threshold;
                             })
      .def("components", &MixtureModel::components)
      .def("to_json", [](const MixtureModel& x) { return model_to_json(x); })
      .def_static("from_json", [](const std::string& s) { return model_from_json(s); })
      .def("condition",
           [](const MixtureModel& x, const Eigen::VectorXd& q) {
             return condition(x, q).expectation;
           })
      .def("predict", [](const MixtureModel& x, const Eigen::MatrixXd& q) {
        Eigen::MatrixXd out(q.rows(), 2);
        const auto rows = predict_batch(x, q);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          out(static_cast<Eigen::Index>(i), 0) = rows[i].fmr_hat;
          out(static_cast<Eigen::Index>(i), 1) = rows[i].fnmr_hat;
        }
        return out;
      });

  m.def(
      "em_fit",
      [](const Eigen::MatrixXd& data, std::size_t d_q, std::size_t k, CovModel cov,
         std::uint64_t seed) {
        EmOptions o;
        o.components = k;
        o.parametrization = cov;
        o.seed = seed;
        return em_fit(data, d_q, o);
      },
      py::arg("data"), py::arg("d_q"), py::arg("components"),
      py::arg("parametrization") = CovModel::VVV, py::arg("seed") = 0);
  m.def(
      "model_search",
      [](const Eigen::MatrixXd& data, std::size_t d_q, std::size_t k_min, std::size_t k_max,
         std::vector<CovModel> models, std::uint64_t seed) {
        SearchOptions o;
        o.k_min = k_min;
        o.k_max = k_max;
        if (!models.empty()) o.parametrizations = std::move(models);
        o.em.seed = seed;
        return model_search(data, d_q, o).best;
      },
      py::arg("data"), py::arg("d_q"), py::arg("k_min") = 1, py::arg("k_max") = 9,
      py::arg("parametrizations") = std::vector<CovModel>{}, py::arg("seed") = 0);

  m.def(
      "fit",
      [](const RecordSet& records, std::uint64_t seed, double target_fmr, std::size_t n_qs,
         std::size_t n_rand, std::size_t k_max) {
        FitConfig c;
        c.seed = seed;
        c.target_fmr = target_fmr;
        c.n_qs = n_qs;
        c.n_rand = n_rand;
        c.k_max = k_max;
        auto out = fit_pipeline(records, c);
        return py::make_tuple(out.search.best, out.training, out.regions.size());
      },
      py::arg("records"), py::arg("seed"), py::arg("target_fmr") = 0.001,
      py::arg("n_qs") = 12, py::arg("n_rand") = 20, py::arg("k_max") = 9);

  // metrics
  m.def("auc", [](const std::vector<double>& mt, const std::vector<double>& nm) {
    return auc(mt, nm);
  });
  m.def("far_frr", [](const std::vector<double>& mt, const std::vector<double>& nm, double t) {
    const auto r = far_frr(mt, nm, t);
    return std::pair{r.far, r.frr};
  });
  m.def("select_hter_threshold", [](const std::vector<double>& mt, const std::vector<double>& nm) {
    return select_hter_threshold(mt, nm);
  });
  m.def("hter", [](const std::vector<double>& mt, const std::vector<double>& nm, double t) {
    return hter(mt, nm, t);
  });
  m.def("threshold_for_fmr", [](const std::vector<double>& nm, double target) {
    const auto r = threshold_for_fmr(nm, target);
    return std::pair{r.point.threshold, r.achieved_fmr};
  });

  // alignment, eyes as (lx, ly, rx, ry)
  m.def("jesorsky", [](const std::array<double, 4>& manual, const std::array<double, 4>& det) {
    return jesorsky(eye_pair(manual), eye_pair(det));
  });
  m.def("normalize_eyes", [](const std::array<double, 4>& source,
                             const std::array<double, 4>& points) {
    const auto t = build_transform(eye_pair(source), canonical_eyes());
    return eye_tuple(map_pair(t, eye_pair(points)));
  });
  m.def("perturb_fixed", [](const std::array<double, 4>& eyes, double theta, double tx,
                            double ty) {
    return eye_tuple(perturb_fixed(eye_pair(eyes), theta, tx, ty));
  });

  // uniqueness
  m.def("ium", [](const std::vector<double>& scores) { return ium(scores).u; });
  m.def("pearson", [](const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(a, b);
  });
}
