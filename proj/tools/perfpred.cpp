// perfpred: command-line front end for quality-based performance prediction.
//
// Exit codes: 0 success, 1 invalid input data, 2 usage error, 3 numeric
// failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "perfpred/alignment.hpp"
#include "perfpred/atomic_file.hpp"
#include "perfpred/dataio.hpp"
#include "perfpred/error.hpp"
#include "perfpred/metrics.hpp"
#include "perfpred/model_io.hpp"
#include "perfpred/perf_model.hpp"
#include "perfpred/pipeline.hpp"
#include "perfpred/quality_space.hpp"
#include "perfpred/score_analysis.hpp"

namespace fs = std::filesystem;
using namespace perfpred;

namespace {

enum Exit { kOk = 0, kInvalidData = 1, kUsage = 2, kNumeric = 3 };

// ---- small CSV reader for the auxiliary inputs ------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line;  // source line of each row

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ParseError(ParseError::Kind::kBadHeader, 1,
                     "missing column '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& h : header) {
      if (h == name) return true;
    }
    return false;
  }
  double number(std::size_t row, std::size_t col) const {
    double v;
    if (!parse_double(rows[row][col], v) || !std::isfinite(v)) {
      throw ParseError(ParseError::Kind::kNonNumeric, line[row],
                       "non-numeric value '" + rows[row][col] + "' in column " +
                           header[col]);
    }
    return v;
  }
};

std::vector<std::string> split(const std::string& line) {
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

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::kIo, 0, "cannot open '" + path + "'");
  return in;
}

Table read_table(const std::string& path) {
  auto in = open_input(path);
  Table t;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (n == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    auto fields = split(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw ParseError(ParseError::Kind::kColumnCount, n,
                       "expected " + std::to_string(t.header.size()) +
                           " columns, got " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line.push_back(n);
  }
  if (t.header.empty()) {
    throw ParseError(ParseError::Kind::kMissingHeader, 1, "'" + path + "' is empty");
  }
  return t;
}

RecordSet load_records(const std::string& path, bool negate) {
  auto set = run_stage("read records", [&] {
    auto s = read_records_file(path);
    s.validate();
    return s;
  });
  if (negate) negate_scores(set);
  return set;
}

template <class Writer>
void write_output(const std::string& path, Writer&& writer) {
  std::ostringstream out;
  writer(out);
  run_stage("write " + path, [&] {
    try {
      write_file_atomic(path, out.str());
    } catch (const Error& e) {
      throw ParseError(ParseError::Kind::kIo, 0, e.what());
    }
  });
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw StageError("output", StageError::Cause::kInput,
                     "cannot create '" + dir + "': " + ec.message());
  }
}

// ---- subcommands -------------------------------------------------------------

struct ValidateArgs {
  std::string records;
};

int cmd_validate(const ValidateArgs& a) {
  const auto set = load_records(a.records, false);
  std::cout << "records " << set.size() << '\n'
            << "match " << set.count(Label::kMatch) << '\n'
            << "nonmatch " << set.count(Label::kNonMatch) << '\n'
            << "quality_dim " << set.quality_dim << '\n'
            << "reference_quality " << (set.has_reference_quality ? "yes" : "no")
            << '\n';
  return kOk;
}

struct FitArgs {
  std::string records;
  std::string out_dir;
  std::string clusters;
  std::size_t n_qs = 12;
  std::size_t n_rand = 20;
  std::vector<double> fmr{0.001};
  std::optional<double> threshold;
  double prior_a = 1.0;
  double prior_b = 1.0;
  double alpha = 0.05;
  std::size_t k_min = 1;
  std::size_t k_max = 9;
  std::string cov_models = "EII,VII,EEI,VEI,EVI,VVI,EEE,EEV,VEV,VVV";
  std::uint64_t seed = 0;
  std::size_t grid_points = 41;
  std::size_t min_members = kDefaultMinMembers;
  bool negate = false;
};

std::vector<std::string> read_cluster_keys(const std::string& path,
                                           std::size_t n_records) {
  return run_stage("read clusters", [&] {
    const auto t = read_table(path);
    const auto col = t.column("cluster");
    if (t.rows.size() != n_records) {
      throw InvalidArgument("cluster file has " + std::to_string(t.rows.size()) +
                            " rows, records have " + std::to_string(n_records));
    }
    std::vector<std::string> keys;
    keys.reserve(t.rows.size());
    for (const auto& r : t.rows) keys.push_back(r[col]);
    return keys;
  });
}

int cmd_fit(const FitArgs& a) {
  const auto set = load_records(a.records, a.negate);
  FitConfig cfg;
  cfg.n_qs = a.n_qs;
  cfg.n_rand = a.n_rand;
  cfg.prior = {a.prior_a, a.prior_b};
  cfg.alpha = a.alpha;
  cfg.k_min = a.k_min;
  cfg.k_max = a.k_max;
  cfg.parametrizations =
      run_stage("arguments", [&] { return parse_cov_models(a.cov_models); });
  cfg.seed = a.seed;
  cfg.grid_points = a.grid_points;
  cfg.regions.min_members = a.min_members;
  if (!a.clusters.empty()) cfg.cluster_keys = read_cluster_keys(a.clusters, set.size());
  ensure_dir(a.out_dir);

  std::vector<std::optional<double>> targets;
  if (a.threshold) {
    targets.push_back(std::nullopt);
  } else {
    for (double f : a.fmr) targets.push_back(f);
  }
  const bool single = targets.size() == 1;
  for (const auto& target : targets) {
    auto run = cfg;
    if (target) {
      run.target_fmr = *target;
    } else {
      run.threshold = a.threshold;
    }
    const auto out = fit_pipeline(set, run);
    const std::string suffix =
        single ? "" : "_fmr" + format_double(*target);
    const auto path = [&](const std::string& stem, const char* ext) {
      return (fs::path(a.out_dir) / (stem + suffix + ext)).string();
    };
    write_output(path("model", ".json"), [&](std::ostream& o) {
      o << model_to_json(out.search.best);
    });
    write_output(path("bic_table", ".csv"), [&](std::ostream& o) {
      write_bic_table_csv(out.search.table, set.quality_dim + 2, o);
    });
    write_output(path("qr_grid", ".csv"),
                 [&](std::ostream& o) { write_qr_grid_csv(out.qr_grid, o); });
    write_output(path("region_performance", ".csv"), [&](std::ostream& o) {
      write_region_performance_csv(out.regions, out.performance, a.alpha, o);
    });
    write_output(path("regions", ".csv"),
                 [&](std::ostream& o) { write_regions_csv(out.regions, o); });
    const auto& best = out.search.best;
    std::cout << out.operating_point.label << ": threshold "
              << format_double(out.operating_point.threshold) << ", achieved FMR "
              << format_double(out.achieved_fmr) << ", regions "
              << out.regions.size() << ", training " << out.training.rows() << "x"
              << out.training.cols() << ", selected K=" << best.components() << " "
              << to_string(best.parametrization) << " (BIC "
              << format_double(best.fit_meta.bic) << ")\n";
    for (const auto& note : best.fit_meta.notes) std::cout << "  note: " << note << '\n';
  }
  return kOk;
}

struct PredictArgs {
  std::vector<std::string> models;
  std::string quality;
  std::string out;
};

int cmd_predict(const PredictArgs& a) {
  std::vector<MixtureModel> models;
  for (const auto& path : a.models) {
    models.push_back(run_stage("read model", [&] { return load_model(path); }));
  }
  const auto d_q = models.front().d_q;
  for (const auto& m : models) {
    if (m.d_q != d_q) {
      throw StageError("read model", StageError::Cause::kArgument,
                       "models disagree on the quality dimension");
    }
  }
  const auto q = run_stage("read quality", [&] {
    auto in = open_input(a.quality);
    return read_quality_csv(in, d_q);
  });
  std::ostringstream body;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto rows = run_stage("predict", [&] { return predict_batch(models[i], q); });
    const std::string label = models[i].operating_point
                                  ? models[i].operating_point->label
                                  : "model" + std::to_string(i);
    write_predictions_csv(rows, label, body, i == 0);
  }
  if (a.out.empty()) {
    std::cout << body.str();
  } else {
    write_output(a.out, [&](std::ostream& o) { o << body.str(); });
  }
  return kOk;
}

struct RocArgs {
  std::string records;
  std::string out;
  bool negate = false;
};

int cmd_roc(const RocArgs& a) {
  const auto set = load_records(a.records, a.negate);
  const auto m = set.scores(Label::kMatch);
  const auto nm = set.scores(Label::kNonMatch);
  const auto [curve, area, t, h] = run_stage("roc", [&] {
    auto c = roc(m, nm, roc_thresholds(m, nm));
    const double ar = auc(c);
    const double th = select_hter_threshold(m, nm);
    return std::tuple{c, ar, th, hter(m, nm, th)};
  });
  if (!a.out.empty()) {
    write_output(a.out, [&](std::ostream& o) { write_roc_csv(curve, o); });
  }
  std::cout << "auc " << format_double(area) << '\n'
            << "hter " << format_double(h) << '\n'
            << "hter_threshold " << format_double(t) << '\n';
  return kOk;
}

struct ErcArgs {
  std::string records;
  std::string predictions;
  std::string operating_point;
  std::string kind = "fnmr";
  std::optional<double> threshold;
  std::optional<double> fmr;
  std::size_t steps = 200;
  std::string out;
  bool negate = false;
};

int cmd_erc(const ErcArgs& a) {
  const auto set = load_records(a.records, a.negate);
  const ErrorKind kind = a.kind == "fmr" ? ErrorKind::kFmr : ErrorKind::kFnmr;
  const auto predicted = run_stage("read predictions", [&] {
    const auto t = read_table(a.predictions);
    std::string column = "predicted_error";
    if (!t.has(column)) column = kind == ErrorKind::kFnmr ? "fnmr_hat" : "fmr_hat";
    const auto col = t.column(column);
    std::optional<std::size_t> op_col;
    if (t.has("operating_point")) op_col = t.column("operating_point");
    std::string wanted = a.operating_point;
    std::vector<double> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      if (op_col) {
        if (wanted.empty()) wanted = t.rows[i][*op_col];
        if (t.rows[i][*op_col] != wanted) continue;
      }
      out.push_back(t.number(i, col));
    }
    if (out.size() != set.size()) {
      throw InvalidArgument("predictions have " + std::to_string(out.size()) +
                            " rows, records have " + std::to_string(set.size()));
    }
    return out;
  });
  double threshold;
  if (a.threshold) {
    threshold = *a.threshold;
  } else {
    threshold = run_stage("threshold", [&] {
      return threshold_for_fmr(set.scores(Label::kNonMatch), a.fmr.value_or(0.001))
          .point.threshold;
    });
  }
  std::vector<ErcAttempt> attempts;
  attempts.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    attempts.push_back({set.records[i].score, set.records[i].label, predicted[i]});
  }
  const auto curve = run_stage("erc", [&] {
    return erc(attempts, threshold, kind, uniform_reject_grid(a.steps));
  });
  if (a.out.empty()) {
    write_erc_csv(curve, std::cout);
  } else {
    write_output(a.out, [&](std::ostream& o) { write_erc_csv(curve, o); });
  }
  std::cerr << "baseline " << a.kind << ' ' << format_double(curve.baseline_error)
            << " at threshold " << format_double(threshold) << '\n';
  return kOk;
}

struct SweepArgs {
  std::string baseline;
  std::string scores;
  std::string out;
  bool full_grid = false;
  bool negate = false;
};

int cmd_sweep(const SweepArgs& a) {
  const auto base = load_records(a.baseline, a.negate);
  auto tables = run_stage("read scores", [&] {
    auto in = open_input(a.scores);
    return parse_sweep_scores(in);
  });
  if (a.negate) {
    for (auto& [key, tab] : tables) {
      for (auto& s : tab.match) s = -s;
      for (auto& s : tab.nonmatch) s = -s;
    }
  }
  std::vector<Perturbation> grid;
  if (a.full_grid) {
    for (const auto& p : default_fixed_grid()) grid.push_back(p);
  } else {
    for (const auto& [key, tab] : tables) grid.push_back(key);
  }
  const ScoreTable baseline{base.scores(Label::kMatch), base.scores(Label::kNonMatch)};
  const auto result = run_stage("sweep", [&] { return sweep_grid(baseline, tables, grid); });
  if (a.out.empty()) {
    write_sweep_csv(result, std::cout);
  } else {
    write_output(a.out, [&](std::ostream& o) { write_sweep_csv(result, o); });
  }
  std::cerr << "threshold " << format_double(result.threshold) << ", cells "
            << result.rows.size() << ", skipped " << result.skipped.size() << '\n';
  return kOk;
}

struct IumArgs {
  std::string records;
  std::string session_b;
  std::string out;
  bool negate = false;
};

int cmd_ium(const IumArgs& a) {
  const auto set = load_records(a.records, a.negate);
  const auto rows = ium_by_subject(set);
  if (a.out.empty() && a.session_b.empty()) {
    write_ium_csv(rows, std::cout);
  } else if (!a.out.empty()) {
    write_output(a.out, [&](std::ostream& o) { write_ium_csv(rows, o); });
  }
  if (!a.session_b.empty()) {
    const auto other = ium_by_subject(load_records(a.session_b, a.negate));
    const auto c = run_stage("correlation", [&] { return ium_correlation(rows, other); });
    std::cout << "pearson_r " << format_double(c.r) << '\n'
              << "joined " << c.n_joined << '\n'
              << "excluded " << c.n_excluded << '\n';
  }
  return kOk;
}

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t n_subjects = 100;
  std::size_t scores_per_cell = 50;
  std::size_t dims = 2;
  std::size_t grid_n = 10;
  double lo = -1.0;
  double hi = 1.0;
  double jitter = 0.0;
  double base = 0.0;
  std::vector<double> slope;
  double class_offset = 1.0;
  double match_sd = 1.0;
  double nonmatch_sd = 1.0;
};

int cmd_synth(const SynthArgs& a) {
  const auto set = run_stage("synthesize", [&] {
    SynthConfig c;
    c.n_subjects = a.n_subjects;
    c.scores_per_cell = a.scores_per_cell;
    c.quality_grid = regular_grid(a.dims, a.grid_n, a.lo, a.hi);
    c.quality_jitter = a.jitter;
    c.score_model.base = a.base;
    c.score_model.slope = a.slope;
    c.score_model.class_offset = a.class_offset;
    c.score_model.match_sd = a.match_sd;
    c.score_model.nonmatch_sd = a.nonmatch_sd;
    c.seed = a.seed;
    if (!c.score_model.slope.empty() && c.score_model.slope.size() != a.dims) {
      throw InvalidArgument("--slope needs one value per quality axis");
    }
    return synthesize_dataset(c);
  });
  write_output(a.out, [&](std::ostream& o) { write_records(set, o); });
  std::cerr << "wrote " << set.size() << " records\n";
  return kOk;
}

struct CalibrateArgs {
  std::string rows;
  std::string out_json;
  std::string out_csv;
};

int cmd_calibrate(const CalibrateArgs& a) {
  const auto rows = run_stage("read rows", [&] {
    const auto t = read_table(a.rows);
    const std::size_t c[4] = {t.column("q1"), t.column("q2"), t.column("gamma1"),
                              t.column("gamma2")};
    std::vector<IqaRow> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      out.push_back({t.number(i, c[0]), t.number(i, c[1]), t.number(i, c[2]),
                     t.number(i, c[3])});
    }
    return out;
  });
  const auto cal = run_stage("calibrate", [&] { return fit_iqa_calibration(rows); });
  nlohmann::ordered_json j;
  j["a_scale"] = cal.a_scale;
  j["b_scale"] = cal.b_scale;
  auto x = nlohmann::json::array();
  for (int r = 0; r < 4; ++r) x.push_back({cal.x(r, 0), cal.x(r, 1)});
  j["x"] = x;
  j["residual_norm"] = cal.residual_norm;
  auto cells = nlohmann::json::array();
  for (const auto& [key, mean] : cal.cell_means) {
    cells.push_back({{"gamma1", key.first}, {"gamma2", key.second},
                     {"q1_mean", mean[0]}, {"q2_mean", mean[1]}});
  }
  j["cell_means"] = cells;
  const auto text = j.dump(2) + "\n";
  if (a.out_json.empty()) {
    std::cout << text;
  } else {
    write_output(a.out_json, [&](std::ostream& o) { o << text; });
  }
  if (!a.out_csv.empty()) {
    write_output(a.out_csv, [&](std::ostream& o) {
      o << "q1,q2,gamma1,gamma2,q1_hat,q2_hat\n";
      for (const auto& r : rows) {
        const auto h = apply_iqa_calibration(cal, r);
        o << format_double(r.q1) << ',' << format_double(r.q2) << ','
          << format_double(r.gamma1) << ',' << format_double(r.gamma2) << ','
          << format_double(h[0]) << ',' << format_double(h[1]) << '\n';
      }
    });
  }
  return kOk;
}

struct EyeErrorArgs {
  std::string annotations;
  std::string manual = "manual_a";
  std::string detected;
  std::string out;
};

int cmd_eye_error(const EyeErrorArgs& a) {
  const auto ann = run_stage("read annotations", [&] {
    auto in = open_input(a.annotations);
    return parse_eye_annotations(in);
  });
  std::map<std::string, EyePair> manual, detected;
  for (const auto& r : ann) {
    if (r.source == a.manual) manual[r.image_id] = r.eyes;
    if (r.source == a.detected) detected[r.image_id] = r.eyes;
  }
  std::vector<std::string> ids;
  std::vector<EyeOffsets> offsets;
  std::vector<double> jes;
  run_stage("normalize", [&] {
    for (const auto& [id, m] : manual) {
      const auto it = detected.find(id);
      if (it == detected.end()) continue;
      const auto t = build_transform(m, canonical_eyes());
      ids.push_back(id);
      offsets.push_back(normalized_error(t, m, it->second));
      jes.push_back(jesorsky(m, it->second));
    }
  });
  if (ids.empty()) {
    throw StageError("normalize", StageError::Cause::kInput,
                     "no image has both '" + a.manual + "' and '" + a.detected +
                         "' annotations");
  }
  const auto centered = center_offsets(offsets);
  const auto body = [&](std::ostream& o) {
    o << "image_id,dx_left,dy_left,dx_right,dy_right,dx_left_c,dy_left_c,"
         "dx_right_c,dy_right_c,jesorsky\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto& r = offsets[i];
      const auto& c = centered[i];
      o << ids[i] << ',' << format_double(r.left.x()) << ','
        << format_double(r.left.y()) << ',' << format_double(r.right.x()) << ','
        << format_double(r.right.y()) << ',' << format_double(c.left.x()) << ','
        << format_double(c.left.y()) << ',' << format_double(c.right.x()) << ','
        << format_double(c.right.y()) << ',' << format_double(jes[i]) << '\n';
    }
  };
  if (a.out.empty()) {
    body(std::cout);
  } else {
    write_output(a.out, body);
  }
  const auto st = offset_stats(offsets);
  std::cerr << "images " << st.n << ", mean offset left ("
            << format_double(st.mean.left.x()) << ", "
            << format_double(st.mean.left.y()) << ") right ("
            << format_double(st.mean.right.x()) << ", "
            << format_double(st.mean.right.y()) << ")\n";
  return kOk;
}

int exit_code(const StageError& e) {
  if (e.stage() == "validate" || e.stage() == "read records") return kInvalidData;
  switch (e.cause()) {
    case StageError::Cause::kInput: return kInvalidData;
    case StageError::Cause::kArgument: return kUsage;
    case StageError::Cause::kNumeric: return kNumeric;
  }
  return kInvalidData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quality-based face recognition performance prediction"};
  app.require_subcommand(1);

  ValidateArgs validate;
  auto* v = app.add_subcommand("validate", "Check a records CSV");
  v->add_option("records", validate.records, "records CSV")->required();

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit a quality-performance model");
  f->add_option("--records", fit.records, "records CSV")->required();
  f->add_option("--out-dir", fit.out_dir, "output directory")->required();
  f->add_option("--seed", fit.seed, "random seed")->required();
  f->add_option("--n-qs", fit.n_qs, "quantile points per quality axis")
      ->capture_default_str();
  f->add_option("--n-rand", fit.n_rand, "samples per region")->capture_default_str();
  f->add_option("--fmr", fit.fmr, "operating FMR target(s)")
      ->delimiter(',')
      ->capture_default_str();
  f->add_option("--threshold", fit.threshold, "explicit decision threshold")
      ->excludes(f->get_option("--fmr"));
  f->add_option("--prior-a", fit.prior_a, "Beta prior a")->capture_default_str();
  f->add_option("--prior-b", fit.prior_b, "Beta prior b")->capture_default_str();
  f->add_option("--alpha", fit.alpha, "credible interval level")->capture_default_str();
  f->add_option("--k-min", fit.k_min, "smallest K")->capture_default_str();
  f->add_option("--k-max", fit.k_max, "largest K")->capture_default_str();
  f->add_option("--cov-models", fit.cov_models, "parametrizations, comma separated")
      ->capture_default_str();
  f->add_option("--clusters", fit.clusters,
                "CSV with a 'cluster' column, one row per record");
  f->add_option("--grid-points", fit.grid_points, "QR landscape points per axis")
      ->capture_default_str();
  f->add_option("--min-members", fit.min_members, "sparse region threshold")
      ->capture_default_str();
  f->add_flag("--negate-scores", fit.negate, "scores are distances");

  PredictArgs predict;
  auto* p = app.add_subcommand("predict", "Predict FMR/FNMR for quality vectors");
  p->add_option("--model", predict.models, "model JSON (repeatable)")->required();
  p->add_option("--quality", predict.quality, "CSV with q1..qM columns")->required();
  p->add_option("--out", predict.out, "predictions CSV (default stdout)");

  RocArgs rocargs;
  auto* r = app.add_subcommand("roc", "ROC curve, AUC and HTER");
  r->add_option("--records", rocargs.records, "records CSV")->required();
  r->add_option("--out", rocargs.out, "ROC CSV");
  r->add_flag("--negate-scores", rocargs.negate, "scores are distances");

  ErcArgs ercargs;
  auto* e = app.add_subcommand("erc", "Error-versus-reject curve");
  e->add_option("--records", ercargs.records, "records CSV")->required();
  e->add_option("--predictions", ercargs.predictions,
                "predictions CSV, row-aligned with the records")
      ->required();
  e->add_option("--operating-point", ercargs.operating_point,
                "operating point label to use from the predictions");
  e->add_option("--kind", ercargs.kind, "fnmr or fmr")
      ->check(CLI::IsMember({"fnmr", "fmr"}))
      ->capture_default_str();
  auto* th = e->add_option("--threshold", ercargs.threshold, "decision threshold");
  e->add_option("--fmr", ercargs.fmr, "threshold from this FMR target")->excludes(th);
  e->add_option("--steps", ercargs.steps, "reject-fraction grid steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  e->add_option("--out", ercargs.out, "ERC CSV (default stdout)");
  e->add_flag("--negate-scores", ercargs.negate, "scores are distances");

  SweepArgs sweep;
  auto* s = app.add_subcommand("sweep", "HTER/AUC over a misalignment grid");
  s->add_option("--baseline", sweep.baseline, "unperturbed records CSV")->required();
  s->add_option("--scores", sweep.scores, "perturbed score table")->required();
  s->add_option("--out", sweep.out, "sweep CSV (default stdout)");
  s->add_flag("--full-grid", sweep.full_grid,
              "evaluate the default 9x11x11 grid, reporting missing cells");
  s->add_flag("--negate-scores", sweep.negate, "scores are distances");

  IumArgs iumargs;
  auto* u = app.add_subcommand("ium", "Impostor-based uniqueness per subject");
  u->add_option("--records", iumargs.records, "records CSV")->required();
  u->add_option("--session-b", iumargs.session_b,
                "second session; prints the Pearson correlation");
  u->add_option("--out", iumargs.out, "IUM CSV");
  u->add_flag("--negate-scores", iumargs.negate, "scores are distances");

  SynthArgs synth;
  auto* y = app.add_subcommand("synth", "Synthesize a records CSV");
  y->add_option("--out", synth.out, "records CSV")->required();
  y->add_option("--seed", synth.seed, "random seed")->required();
  y->add_option("--n-subjects", synth.n_subjects)->capture_default_str();
  y->add_option("--scores-per-cell", synth.scores_per_cell)->capture_default_str();
  y->add_option("--dims", synth.dims, "quality dimensions")->capture_default_str();
  y->add_option("--grid-n", synth.grid_n, "anchors per axis")->capture_default_str();
  y->add_option("--lo", synth.lo)->capture_default_str();
  y->add_option("--hi", synth.hi)->capture_default_str();
  y->add_option("--jitter", synth.jitter, "quality jitter sd")->capture_default_str();
  y->add_option("--base", synth.base, "score model intercept")->capture_default_str();
  y->add_option("--slope", synth.slope, "score model slope per axis")->delimiter(',');
  y->add_option("--class-offset", synth.class_offset)->capture_default_str();
  y->add_option("--match-sd", synth.match_sd)->capture_default_str();
  y->add_option("--nonmatch-sd", synth.nonmatch_sd)->capture_default_str();

  CalibrateArgs calibrate;
  auto* c = app.add_subcommand("calibrate-iqa", "Least-squares IQA calibration");
  c->add_option("--rows", calibrate.rows, "CSV with q1,q2,gamma1,gamma2")->required();
  c->add_option("--out-json", calibrate.out_json, "calibration JSON (default stdout)");
  c->add_option("--out-csv", calibrate.out_csv, "calibrated rows CSV");

  EyeErrorArgs eye;
  auto* x = app.add_subcommand("eye-error", "Normalized-space eye detection error");
  x->add_option("--annotations", eye.annotations, "annotation CSV")->required();
  x->add_option("--manual", eye.manual, "reference source")->capture_default_str();
  x->add_option("--detected", eye.detected, "detector source")->required();
  x->add_option("--out", eye.out, "offsets CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kUsage;
  }

  try {
    if (*v) return cmd_validate(validate);
    if (*f) return cmd_fit(fit);
    if (*p) return cmd_predict(predict);
    if (*r) return cmd_roc(rocargs);
    if (*e) return cmd_erc(ercargs);
    if (*s) return cmd_sweep(sweep);
    if (*u) return cmd_ium(iumargs);
    if (*y) return cmd_synth(synth);
    if (*c) return cmd_calibrate(calibrate);
    if (*x) return cmd_eye_error(eye);
  } catch (const StageError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_code(err);
  } catch (const ParseError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kInvalidData;
  } catch (const InvalidArgument& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsage;
  } catch (const NumericError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kNumeric;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kInvalidData;
  }
  return kUsage;
}
