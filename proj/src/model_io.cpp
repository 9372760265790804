#include "perfpred/model_io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "perfpred/atomic_file.hpp"
#include "perfpred/error.hpp"

namespace perfpred {

namespace {

using nlohmann::json;

std::string num17(double v) {
  if (!std::isfinite(v)) {
    throw InvalidArgument("model_to_json: non-finite parameter");
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_vector(std::ostringstream& out, const Eigen::VectorXd& v) {
  out << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out << ", ";
    out << num17(v(i));
  }
  out << ']';
}

[[noreturn]] void bad(const std::string& what) {
  throw ParseError(ParseError::Kind::kBadHeader, 0, "model json: " + what);
}

Eigen::VectorXd read_vector(const json& j, std::size_t expected,
                            const char* what) {
  if (!j.is_array() || j.size() != expected) {
    bad(std::string(what) + " must be an array of length " +
        std::to_string(expected));
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(expected));
  for (std::size_t i = 0; i < expected; ++i) {
    if (!j[i].is_number()) bad(std::string(what) + " holds a non-number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

}  // namespace

std::string model_to_json(const MixtureModel& model) {
  model.validate();
  std::ostringstream out;
  out << "{\n";
  out << "  \"version\": " << kModelFormatVersion << ",\n";
  out << "  \"d_q\": " << model.d_q << ",\n";
  out << "  \"d_r\": " << model.d_r << ",\n";
  out << "  \"parametrization\": \"" << to_string(model.parametrization)
      << "\",\n";
  out << "  \"K\": " << model.components() << ",\n";
  out << "  \"weights\": [";
  for (std::size_t k = 0; k < model.components(); ++k) {
    if (k) out << ", ";
    out << num17(model.weights[k]);
  }
  out << "],\n";
  out << "  \"means\": [";
  for (std::size_t k = 0; k < model.components(); ++k) {
    out << (k ? ",\n    " : "\n    ");
    write_vector(out, model.means[k]);
  }
  out << "\n  ],\n";
  out << "  \"covariances\": [";
  for (std::size_t k = 0; k < model.components(); ++k) {
    out << (k ? ",\n    [" : "\n    [");
    const auto& c = model.covariances[k];
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      if (i) out << ",\n     ";
      write_vector(out, c.row(i).transpose());
    }
    out << ']';
  }
  out << "\n  ],\n";
  if (model.operating_point) {
    out << "  \"operating_point\": {\"threshold\": "
        << num17(model.operating_point->threshold)
        << ", \"label\": " << json(model.operating_point->label).dump()
        << "},\n";
  } else {
    out << "  \"operating_point\": null,\n";
  }
  const auto& m = model.fit_meta;
  out << "  \"fit_meta\": {\"loglik\": " << num17(m.loglik)
      << ", \"bic\": " << num17(m.bic) << ", \"n_iter\": " << m.n_iter
      << ", \"seed\": " << m.seed << ", \"converged\": "
      << (m.converged ? "true" : "false")
      << ", \"ridge_events\": " << m.ridge_events << "}\n";
  out << "}\n";
  return out.str();
}

MixtureModel model_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    bad(e.what());
  }
  if (!j.is_object()) bad("document must be an object");
  try {
    if (j.at("version").get<int>() != kModelFormatVersion) {
      bad("unsupported version " + j.at("version").dump());
    }
    MixtureModel model;
    model.d_q = j.at("d_q").get<std::size_t>();
    model.d_r = j.at("d_r").get<std::size_t>();
    model.parametrization =
        parse_cov_model(j.at("parametrization").get<std::string>());
    const auto k = j.at("K").get<std::size_t>();
    const auto d = model.d_q + model.d_r;
    const Eigen::VectorXd w = read_vector(j.at("weights"), k, "weights");
    model.weights.assign(w.data(), w.data() + w.size());
    const auto& means = j.at("means");
    const auto& covs = j.at("covariances");
    if (!means.is_array() || means.size() != k) bad("means must hold K vectors");
    if (!covs.is_array() || covs.size() != k) bad("covariances must hold K matrices");
    for (std::size_t c = 0; c < k; ++c) {
      model.means.push_back(read_vector(means[c], d, "mean"));
      const auto& rows = covs[c];
      if (!rows.is_array() || rows.size() != d) bad("covariance must have d rows");
      Eigen::MatrixXd cov(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
      for (std::size_t r = 0; r < d; ++r) {
        cov.row(static_cast<Eigen::Index>(r)) =
            read_vector(rows[r], d, "covariance row").transpose();
      }
      model.covariances.push_back(std::move(cov));
    }
    if (j.contains("operating_point") && !j.at("operating_point").is_null()) {
      const auto& op = j.at("operating_point");
      model.operating_point =
          OperatingPoint{op.at("threshold").get<double>(),
                         op.at("label").get<std::string>()};
    }
    if (j.contains("fit_meta")) {
      const auto& m = j.at("fit_meta");
      model.fit_meta.loglik = m.value("loglik", 0.0);
      model.fit_meta.bic = m.value("bic", 0.0);
      model.fit_meta.n_iter = m.value("n_iter", std::size_t{0});
      model.fit_meta.seed = m.value("seed", std::uint64_t{0});
      model.fit_meta.converged = m.value("converged", false);
      model.fit_meta.ridge_events = m.value("ridge_events", std::size_t{0});
    }
    model.validate();
    return model;
  } catch (const json::exception& e) {
    bad(e.what());
  }
}

void save_model(const MixtureModel& model, const std::string& path) {
  write_file_atomic(path, model_to_json(model));
}

MixtureModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::kIo, 0, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace perfpred
