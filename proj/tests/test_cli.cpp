#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "perfpred/dataio.hpp"
#include "perfpred/metrics.hpp"
#include "perfpred/model_io.hpp"
#include "perfpred/pipeline.hpp"

namespace fs = std::filesystem;
using namespace perfpred;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "perfpred_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run cli(const std::string& args) {
  const auto out = workdir() / "stdout.txt";
  const auto err = workdir() / "stderr.txt";
  const std::string cmd = std::string(PERFPRED_CLI) + " " + args + " >" + out.string() +
                          " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path write(const std::string& name, const std::string& text) {
  const auto p = workdir() / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

std::string value_after(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string k, v;
  while (in >> k >> v) {
    if (k == key) return v;
  }
  return {};
}

const fs::path& synth_records() {
  static const fs::path p = [] {
    const auto path = workdir() / "synth.csv";
    const auto r = cli("synth --seed 17 --out " + path.string() +
                       " --grid-n 6 --scores-per-cell 30 --jitter 0.05 --slope 1,0.5");
    REQUIRE(r.code == 0);
    return path;
  }();
  return p;
}

}  // namespace

TEST_CASE("usage errors exit 2, help exits 0") {
  CHECK(cli("").code == 2);
  CHECK(cli("no-such-command").code == 2);
  CHECK(cli("fit --records x.csv").code == 2);
  CHECK(cli("--help").code == 0);
  CHECK(cli("fit --help").code == 0);
  CHECK(cli("erc --records a --predictions b --kind bogus").code == 2);
}

TEST_CASE("validate reports counts and rejects bad input with the line") {
  const auto good = write("good.csv",
                          "probe_id,ref_id,score,label,q1\n"
                          "a,a,0.9,match,0.1\n"
                          "a,b,0.2,nonmatch,0.1\n");
  const auto ok = cli("validate " + good.string());
  CHECK(ok.code == 0);
  CHECK(value_after(ok.out, "records") == "2");
  CHECK(value_after(ok.out, "match") == "1");

  const auto bad = write("bad.csv",
                         "probe_id,ref_id,score,label,q1\n"
                         "a,a,0.9,match,0.1\n"
                         "a,b,0.2,impostor,0.1\n");
  const auto r = cli("validate " + bad.string());
  CHECK(r.code == 1);
  CHECK(r.err.find("line 3") != std::string::npos);

  CHECK(cli("validate " + (workdir() / "missing.csv").string()).code == 1);
}

TEST_CASE("synth is deterministic for a seed") {
  const auto a = workdir() / "sa.csv";
  const auto b = workdir() / "sb.csv";
  const auto c = workdir() / "sc.csv";
  REQUIRE(cli("synth --seed 3 --grid-n 4 --scores-per-cell 5 --out " + a.string()).code == 0);
  REQUIRE(cli("synth --seed 3 --grid-n 4 --scores-per-cell 5 --out " + b.string()).code == 0);
  REQUIRE(cli("synth --seed 4 --grid-n 4 --scores-per-cell 5 --out " + c.string()).code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a) != slurp(c));
  CHECK(cli("synth --out " + a.string()).code == 2);  // seed is required
}

TEST_CASE("fit writes artifacts and predict matches the library") {
  const auto out = workdir() / "fit";
  const auto r = cli("fit --seed 5 --k-max 3 --fmr 0.05 --records " +
                     synth_records().string() + " --out-dir " + out.string());
  REQUIRE(r.code == 0);
  for (const char* f : {"model.json", "bic_table.csv", "qr_grid.csv",
                        "region_performance.csv", "regions.csv"}) {
    CHECK(fs::exists(out / f));
  }
  const auto model = load_model((out / "model.json").string());
  REQUIRE(model.operating_point);
  CHECK(model.operating_point->label == "FMR=5%");

  const auto quality = write("q.csv", "q1,q2\n0,0\n0.3,-0.4\n-0.5,0.5\n");
  const auto pred = workdir() / "pred.csv";
  REQUIRE(cli("predict --model " + (out / "model.json").string() + " --quality " +
              quality.string() + " --out " + pred.string())
              .code == 0);

  Eigen::MatrixXd q(3, 2);
  q << 0, 0, 0.3, -0.4, -0.5, 0.5;
  std::ostringstream want;
  write_predictions_csv(predict_batch(model, q), "FMR=5%", want);
  CHECK(slurp(pred) == want.str());

  CHECK(cli("fit --seed 5 --records " + synth_records().string() + " --out-dir " +
            out.string() + " --cov-models VVV,XYZ")
            .code == 2);
}

TEST_CASE("multiple FMR targets produce suffixed outputs") {
  const auto out = workdir() / "multi";
  REQUIRE(cli("fit --seed 5 --k-max 2 --cov-models VVV --fmr 0.05,0.1 --records " +
              synth_records().string() + " --out-dir " + out.string())
              .code == 0);
  CHECK(fs::exists(out / "model_fmr0.05.json"));
  CHECK(fs::exists(out / "model_fmr0.1.json"));
  const auto pred = workdir() / "multi_pred.csv";
  const auto quality = write("q1.csv", "q1,q2\n0,0\n");
  REQUIRE(cli("predict --model " + (out / "model_fmr0.05.json").string() + " --model " +
              (out / "model_fmr0.1.json").string() + " --quality " + quality.string() +
              " --out " + pred.string())
              .code == 0);
  const auto text = slurp(pred);
  CHECK(text.find("FMR=5%") != std::string::npos);
  CHECK(text.find("FMR=10%") != std::string::npos);
}

TEST_CASE("roc matches the library and the unperturbed sweep cell") {
  const auto set = read_records_file(synth_records().string());
  const auto m = set.scores(Label::kMatch);
  const auto nm = set.scores(Label::kNonMatch);
  const auto r = cli("roc --records " + synth_records().string());
  REQUIRE(r.code == 0);
  CHECK(value_after(r.out, "auc") == format_double(auc(m, nm)));
  const double t = select_hter_threshold(m, nm);
  CHECK(value_after(r.out, "hter") == format_double(hter(m, nm, t)));

  // Zero perturbation cell with the baseline scores reproduces roc.
  std::string table = "theta,tx,ty,score,label\n";
  for (const auto& rec : set.records) {
    table += "0,0,0," + format_double(rec.score) + "," + std::string(to_string(rec.label)) + "\n";
  }
  const auto scores = write("sweep_scores.csv", table);
  const auto sw = cli("sweep --baseline " + synth_records().string() + " --scores " +
                      scores.string());
  REQUIRE(sw.code == 0);
  std::istringstream in(sw.out);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "theta,tx,ty,hter,auc");
  CHECK(row == "0.0,0.0,0.0," + value_after(r.out, "hter") + "," + value_after(r.out, "auc"));
}

TEST_CASE("erc with an ideal predictor reaches zero at the baseline fraction") {
  std::string records = "probe_id,ref_id,score,label,q1\n";
  std::string preds = "row,predicted_error\n";
  for (int i = 0; i < 40; ++i) {
    const bool fails = i % 4 == 0;
    records += "p" + std::to_string(i) + ",p" + std::to_string(i) + "," +
               (fails ? "-1.0" : "1.0") + ",match,0.0\n";
    preds += std::to_string(i) + "," + (fails ? "1.0" : "0.0") + "\n";
  }
  for (int i = 0; i < 40; ++i) {
    records += "p" + std::to_string(i) + ",x,-2.0,nonmatch,0.0\n";
    preds += std::to_string(40 + i) + ",0.0\n";
  }
  const auto rec = write("erc_records.csv", records);
  const auto pr = write("erc_preds.csv", preds);
  const auto r = cli("erc --records " + rec.string() + " --predictions " + pr.string() +
                     " --threshold 0 --steps 4");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("0.25,0.0,0.0\n") != std::string::npos);
  CHECK(r.out.rfind("reject_fraction,residual_error,ideal_error\n0.0,0.25,0.25\n", 0) == 0);

  const auto short_preds = write("erc_short.csv", "row,predicted_error\n0,1\n");
  CHECK(cli("erc --records " + rec.string() + " --predictions " + short_preds.string() +
            " --threshold 0")
            .code == 2);
}

TEST_CASE("ium prints a cross-session correlation") {
  const auto b = workdir() / "session_b.csv";
  REQUIRE(cli("synth --seed 18 --out " + b.string() +
              " --grid-n 6 --scores-per-cell 30 --jitter 0.05 --slope 1,0.5")
              .code == 0);
  const auto r = cli("ium --records " + synth_records().string() + " --session-b " +
                     b.string() + " --out " + (workdir() / "ium.csv").string());
  REQUIRE(r.code == 0);
  CHECK(value_after(r.out, "joined") == "100");
  CHECK(slurp(workdir() / "ium.csv").rfind("subject_id,u,n_impostors\n", 0) == 0);
}

TEST_CASE("calibrate-iqa writes the fitted map and calibrated rows") {
  std::string rows = "q1,q2,gamma1,gamma2\n";
  int i = 0;
  for (double g1 : {-30.0, -15.0, 0.0, 15.0, 30.0}) {
    for (double g2 : {-36.0, 0.0, 36.0}) {
      for (int rep = 0; rep < 3; ++rep, ++i) {
        const double q1 = 0.05 * g1 + 0.01 * ((i * 7) % 5);
        const double q2 = 0.04 * g2 + 0.001 * g1 + 0.01 * ((i * 3) % 4);
        rows += format_double(q1) + "," + format_double(q2) + "," + format_double(g1) +
                "," + format_double(g2) + "\n";
      }
    }
  }
  const auto in = write("iqa.csv", rows);
  const auto csv = workdir() / "iqa_out.csv";
  const auto r = cli("calibrate-iqa --rows " + in.string() + " --out-csv " + csv.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\"residual_norm\"") != std::string::npos);
  CHECK(slurp(csv).rfind("q1,q2,gamma1,gamma2,q1_hat,q2_hat\n", 0) == 0);

  // q exactly proportional to gamma leaves the design rank deficient
  const auto flat = write("iqa_flat.csv",
                          "q1,q2,gamma1,gamma2\n-1,-1,-10,-18\n-1,1,-10,18\n"
                          "1,-1,10,-18\n1,1,10,18\n");
  CHECK(cli("calibrate-iqa --rows " + flat.string()).code == 3);
}

TEST_CASE("eye-error reports offsets in normalized space") {
  const auto ann = write("eyes.csv",
                         "image_id,lx,ly,rx,ry,source\n"
                         "img1,100,100,170,100,manual_a\n"
                         "img1,102,100,170,100,det\n");
  const auto r = cli("eye-error --annotations " + ann.string() + " --detected det");
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(row.rfind("img1,", 0) == 0);
  // 2 px in a 70 px inter-ocular frame is 2 * 33/70 px normalized
  const double dx = std::stod(row.substr(5, row.find(',', 5) - 5));
  CHECK(dx == doctest::Approx(2.0 * 33.0 / 70.0).epsilon(1e-12));
}
