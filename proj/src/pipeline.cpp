#include "perfpred/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "perfpred/error.hpp"
#include "perfpred/metrics.hpp"
#include "perfpred/random.hpp"

namespace perfpred {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

Eigen::MatrixXd quality_matrix(const RecordSet& records) {
  Eigen::MatrixXd q(static_cast<Eigen::Index>(records.size()),
                    static_cast<Eigen::Index>(records.quality_dim));
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t d = 0; d < records.quality_dim; ++d) {
      q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) =
          records.records[i].quality[d];
    }
  }
  return q;
}

std::vector<QrGridRow> qr_landscape(const MixtureModel& model,
                                    const std::vector<double>& lo,
                                    const std::vector<double>& hi,
                                    std::size_t points_per_axis) {
  if (lo.size() != model.d_q || hi.size() != model.d_q) {
    throw InvalidArgument("qr_landscape: bounds must have d_q entries");
  }
  if (points_per_axis < 2) {
    throw InvalidArgument("qr_landscape: need at least 2 points per axis");
  }
  const Conditioner cond(model);
  std::vector<QrGridRow> out;
  std::vector<std::size_t> idx(model.d_q, 0);
  for (;;) {
    QrGridRow row;
    row.q.resize(model.d_q);
    for (std::size_t d = 0; d < model.d_q; ++d) {
      row.q[d] = lo[d] + (hi[d] - lo[d]) * static_cast<double>(idx[d]) /
                             static_cast<double>(points_per_axis - 1);
    }
    const auto pred = cond.condition(
        Eigen::Map<const Eigen::VectorXd>(row.q.data(),
                                          static_cast<Eigen::Index>(row.q.size())));
    row.fmr_hat = pred.expectation(0);
    row.fnmr_hat = pred.expectation(1);
    out.push_back(std::move(row));
    std::size_t d = 0;
    while (d < model.d_q && ++idx[d] == points_per_axis) idx[d++] = 0;
    if (d == model.d_q) break;
  }
  return out;
}

FitOutput fit_pipeline(const RecordSet& records, const FitConfig& config) {
  FitOutput out;
  run_stage("validate", [&] {
    records.validate();
    if (records.count(Label::kMatch) == 0 ||
        records.count(Label::kNonMatch) == 0) {
      throw InvalidArgument("records need both match and non-match comparisons");
    }
    if (config.n_rand == 0) throw InvalidArgument("n_rand must be >= 1");
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
      throw InvalidArgument("alpha must lie in (0,1)");
    }
  });

  run_stage("threshold", [&] {
    if (config.threshold) {
      out.operating_point = {*config.threshold,
                             "t=" + format_double(*config.threshold)};
      out.achieved_fmr =
          far_frr(records.scores(Label::kMatch), records.scores(Label::kNonMatch),
                  *config.threshold)
              .far;
    } else {
      const auto op =
          threshold_for_fmr(records.scores(Label::kNonMatch), config.target_fmr);
      out.operating_point = op.point;
      out.achieved_fmr = op.achieved_fmr;
    }
  });

  run_stage("regions", [&] {
    if (!config.cluster_keys.empty()) {
      out.regions = build_cluster_regions(records, config.cluster_keys,
                                          config.regions);
    } else {
      const auto grid = quantile_grid(records, config.n_qs);
      out.regions = build_regions(grid, records, config.regions);
    }
  });

  run_stage("posteriors", [&] {
    out.performance = region_posteriors(records, out.regions,
                                        out.operating_point.threshold,
                                        config.prior);
  });

  run_stage("sampling", [&] {
    out.training = training_matrix(out.regions, out.performance, config.n_rand,
                                   derive_seed(config.seed, 1));
  });

  run_stage("model_search", [&] {
    SearchOptions search;
    search.k_min = config.k_min;
    search.k_max = config.k_max;
    search.parametrizations = config.parametrizations;
    search.em = config.em;
    search.em.seed = derive_seed(config.seed, 2);
    out.search = model_search(out.training, records.quality_dim, search);
    out.search.best.operating_point = out.operating_point;
  });

  run_stage("qr_grid", [&] {
    std::vector<double> lo(records.quality_dim, INFINITY);
    std::vector<double> hi(records.quality_dim, -INFINITY);
    for (const auto& r : records.records) {
      for (std::size_t d = 0; d < records.quality_dim; ++d) {
        lo[d] = std::min(lo[d], r.quality[d]);
        hi[d] = std::max(hi[d], r.quality[d]);
      }
    }
    out.qr_grid = qr_landscape(out.search.best, lo, hi, config.grid_points);
  });
  return out;
}

std::vector<PredictionRow> predict_batch(const MixtureModel& model,
                                         const Eigen::MatrixXd& q) {
  if (static_cast<std::size_t>(q.cols()) != model.d_q) {
    throw InvalidArgument("predict: quality has " + std::to_string(q.cols()) +
                          " columns, model expects " + std::to_string(model.d_q));
  }
  if (model.d_r != 2) {
    throw InvalidArgument("predict: model performance block must be [FMR, FNMR]");
  }
  const Conditioner cond(model);
  std::vector<PredictionRow> rows;
  rows.reserve(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const auto pred = cond.condition(q.row(i).transpose());
    const auto c = clamp_prediction(pred.expectation);
    PredictionRow row;
    row.fmr_raw = c.raw(0);
    row.fnmr_raw = c.raw(1);
    row.fmr_hat = c.clamped(0);
    row.fnmr_hat = c.clamped(1);
    row.fmr_clamped = c.clamp_flags[0];
    row.fnmr_clamped = c.clamp_flags[1];
    row.top_component = pred.top_component();
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd read_quality_csv(std::istream& in, std::size_t d_q) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&] {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next() || line.empty()) {
    throw ParseError(ParseError::Kind::kMissingHeader, 1, "missing header");
  }
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = split_commas(line);
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < header.size(); ++i) pos[header[i]] = i;

  auto has_all = [&](char prefix, std::size_t n) {
    for (std::size_t j = 1; j <= n; ++j) {
      if (!pos.count(prefix + std::to_string(j))) return false;
    }
    return true;
  };
  std::vector<std::size_t> cols;
  if (has_all('q', d_q)) {
    for (std::size_t j = 1; j <= d_q; ++j) cols.push_back(pos["q" + std::to_string(j)]);
  } else if (d_q % 2 == 0 && has_all('q', d_q / 2) && has_all('g', d_q / 2)) {
    for (std::size_t j = 1; j <= d_q / 2; ++j) cols.push_back(pos["q" + std::to_string(j)]);
    for (std::size_t j = 1; j <= d_q / 2; ++j) cols.push_back(pos["g" + std::to_string(j)]);
  } else {
    throw InvalidArgument("quality file lacks the " + std::to_string(d_q) +
                          " quality columns the model expects");
  }

  std::vector<std::vector<double>> rows;
  while (next()) {
    if (line.empty()) continue;
    const auto f = split_commas(line);
    if (f.size() != header.size()) {
      throw ParseError(ParseError::Kind::kColumnCount, line_no,
                       "expected " + std::to_string(header.size()) +
                           " columns, got " + std::to_string(f.size()));
    }
    std::vector<double> row(d_q);
    for (std::size_t j = 0; j < d_q; ++j) {
      if (!parse_double(f[cols[j]], row[j]) || !std::isfinite(row[j])) {
        throw ParseError(ParseError::Kind::kNonNumeric, line_no,
                         "non-numeric quality value '" + f[cols[j]] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd q(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(d_q));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d_q; ++j) {
      q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return q;
}

std::string parameter_formula(CovModel model) {
  const std::string head = "(K-1)+K*d+";
  switch (model) {
    case CovModel::EII: return head + "1";
    case CovModel::VII: return head + "K";
    case CovModel::EEI: return head + "d";
    case CovModel::VEI: return head + "K+(d-1)";
    case CovModel::EVI: return head + "1+K*(d-1)";
    case CovModel::VVI: return head + "K*d";
    case CovModel::EEE: return head + "d*(d+1)/2";
    case CovModel::EEV: return head + "1+(d-1)+K*d*(d-1)/2";
    case CovModel::VEV: return head + "K+(d-1)+K*d*(d-1)/2";
    case CovModel::VVV: return head + "K*d*(d+1)/2";
  }
  return {};
}

void write_bic_table_csv(const std::vector<BicEntry>& table, std::size_t dim,
                         std::ostream& out) {
  out << "K,parametrization,d,n_params,n_params_formula,loglik,bic,n_iter,ok,error\n";
  for (const auto& e : table) {
    std::string err = e.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << e.components << ',' << to_string(e.parametrization) << ',' << dim
        << ',' << e.n_params << ',' << parameter_formula(e.parametrization)
        << ',' << (e.ok ? format_double(e.loglik) : "") << ','
        << (e.ok ? format_double(e.bic) : "") << ',' << e.n_iter << ','
        << (e.ok ? 1 : 0) << ',' << err << '\n';
  }
}

void write_qr_grid_csv(const std::vector<QrGridRow>& grid, std::ostream& out) {
  if (grid.empty()) {
    out << "fmr_hat,fnmr_hat\n";
    return;
  }
  for (std::size_t d = 0; d < grid.front().q.size(); ++d) out << 'q' << d + 1 << ',';
  out << "fmr_hat,fnmr_hat\n";
  for (const auto& row : grid) {
    for (double q : row.q) out << format_double(q) << ',';
    out << format_double(row.fmr_hat) << ',' << format_double(row.fnmr_hat)
        << '\n';
  }
}

void write_region_performance_csv(const std::vector<QualityRegion>& regions,
                                  const std::vector<RegionPerformance>& perf,
                                  double alpha, std::ostream& out) {
  out << "region_id,n_members,sparse,n_match,false_non_matches,n_nonmatch,"
         "false_matches,fnmr_mean,fnmr_lower,fnmr_upper,fmr_mean,fmr_lower,"
         "fmr_upper\n";
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& p = perf[i];
    const auto ci_fnmr = credible_interval(p.fnmr, alpha);
    const auto ci_fmr = credible_interval(p.fmr, alpha);
    out << regions[i].id << ',' << regions[i].members.size() << ','
        << (regions[i].sparse ? 1 : 0) << ',' << p.counts.n_match << ','
        << p.counts.false_non_matches << ',' << p.counts.n_nonmatch << ','
        << p.counts.false_matches << ',' << format_double(p.fnmr.mean()) << ','
        << format_double(ci_fnmr.lower) << ',' << format_double(ci_fnmr.upper)
        << ',' << format_double(p.fmr.mean()) << ','
        << format_double(ci_fmr.lower) << ',' << format_double(ci_fmr.upper)
        << '\n';
  }
}

void write_predictions_csv(const std::vector<PredictionRow>& rows,
                           const std::string& operating_point,
                           std::ostream& out, bool header) {
  if (header) {
    out << "row,operating_point,fmr_hat,fnmr_hat,fmr_clamped,fnmr_clamped,"
           "top_component\n";
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << i << ',' << operating_point << ',' << format_double(r.fmr_hat) << ','
        << format_double(r.fnmr_hat) << ',' << (r.fmr_clamped ? 1 : 0) << ','
        << (r.fnmr_clamped ? 1 : 0) << ',' << r.top_component << '\n';
  }
}

}  // namespace perfpred
