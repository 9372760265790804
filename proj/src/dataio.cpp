#include "perfpred/dataio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "perfpred/error.hpp"
#include "perfpred/random.hpp"

namespace perfpred {

namespace {

constexpr std::string_view kFixedColumns[] = {"probe_id", "ref_id", "score",
                                              "label"};

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

bool numbered_column(std::string_view name, char prefix, std::size_t index) {
  if (name.empty() || name.front() != prefix) return false;
  return name.substr(1) == std::to_string(index);
}

void check_id(const std::string& id) {
  if (id.find_first_of(",\r\n") != std::string::npos) {
    throw InvalidArgument("identifier contains a separator: '" + id + "'");
  }
}

}  // namespace

std::string_view to_string(Label label) noexcept {
  return label == Label::kMatch ? "match" : "nonmatch";
}

std::size_t RecordSet::count(Label label) const noexcept {
  std::size_t n = 0;
  for (const auto& r : records) n += r.label == label;
  return n;
}

std::vector<double> RecordSet::scores(Label label) const {
  std::vector<double> out;
  for (const auto& r : records) {
    if (r.label == label) out.push_back(r.score);
  }
  return out;
}

void RecordSet::validate() const {
  if (quality_dim == 0) throw InvalidArgument("quality_dim must be positive");
  if (has_reference_quality && quality_dim % 2 != 0) {
    throw InvalidArgument("reference quality layout needs an even quality_dim");
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.quality.size() != quality_dim) {
      throw InvalidArgument("record " + std::to_string(i) + " has " +
                            std::to_string(r.quality.size()) +
                            " quality values, expected " +
                            std::to_string(quality_dim));
    }
    if (!std::isfinite(r.score)) {
      throw InvalidArgument("record " + std::to_string(i) +
                            " has a non-finite score");
    }
  }
}

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = first + text.size();
  if (*first == '+') ++first;  // from_chars rejects a leading '+'
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  std::string s(buf, res.ptr);
  if (std::isfinite(value) &&
      s.find_first_of(".e") == std::string::npos) {
    s += ".0";
  }
  return s;
}

RecordSet parse_records(std::istream& in) {
  RecordSet set;
  std::string line;
  std::size_t line_no = 0;

  auto next_line = [&](std::string& dst) -> bool {
    if (!std::getline(in, dst)) return false;
    ++line_no;
    if (!dst.empty() && dst.back() == '\r') dst.pop_back();
    return true;
  };

  if (!next_line(line) || line.empty()) {
    throw ParseError(ParseError::Kind::kMissingHeader, 1,
                     "missing header (expected probe_id,ref_id,score,label,q1,...)");
  }
  // Tolerate a UTF-8 byte order mark.
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);

  const auto header = split_commas(line);
  for (std::size_t i = 0; i < 4; ++i) {
    if (i >= header.size() || header[i] != kFixedColumns[i]) {
      throw ParseError(ParseError::Kind::kMissingHeader, 1,
                       "header must start with probe_id,ref_id,score,label");
    }
  }
  std::size_t n_q = 0;
  while (4 + n_q < header.size() && numbered_column(header[4 + n_q], 'q', n_q + 1)) {
    ++n_q;
  }
  std::size_t n_g = 0;
  while (4 + n_q + n_g < header.size() &&
         numbered_column(header[4 + n_q + n_g], 'g', n_g + 1)) {
    ++n_g;
  }
  if (n_q == 0) {
    throw ParseError(ParseError::Kind::kBadHeader, 1,
                     "header has no quality columns q1..qM");
  }
  if (4 + n_q + n_g != header.size()) {
    throw ParseError(ParseError::Kind::kBadHeader, 1,
                     "unexpected header column '" +
                         std::string(header[4 + n_q + n_g]) + "'");
  }
  if (n_g != 0 && n_g != n_q) {
    throw ParseError(ParseError::Kind::kBadHeader, 1,
                     "reference quality columns g1..gM must match q1..qM");
  }
  set.quality_dim = n_q + n_g;
  set.has_reference_quality = n_g != 0;
  const std::size_t n_cols = header.size();

  while (next_line(line)) {
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != n_cols) {
      throw ParseError(ParseError::Kind::kColumnCount, line_no,
                       "expected " + std::to_string(n_cols) + " columns, got " +
                           std::to_string(fields.size()));
    }
    VerificationRecord rec;
    rec.probe_id = std::string(fields[0]);
    rec.ref_id = std::string(fields[1]);
    if (!parse_double(fields[2], rec.score)) {
      throw ParseError(ParseError::Kind::kNonNumeric, line_no,
                       "non-numeric score '" + std::string(fields[2]) + "'");
    }
    if (!std::isfinite(rec.score)) {
      throw ParseError(ParseError::Kind::kNonFinite, line_no,
                       "score must be finite");
    }
    if (fields[3] == "match") {
      rec.label = Label::kMatch;
    } else if (fields[3] == "nonmatch") {
      rec.label = Label::kNonMatch;
    } else {
      throw ParseError(ParseError::Kind::kUnknownLabel, line_no,
                       "unknown label '" + std::string(fields[3]) + "'");
    }
    rec.quality.resize(set.quality_dim);
    for (std::size_t j = 0; j < set.quality_dim; ++j) {
      if (!parse_double(fields[4 + j], rec.quality[j])) {
        throw ParseError(ParseError::Kind::kNonNumeric, line_no,
                         "non-numeric quality value '" +
                             std::string(fields[4 + j]) + "' in column " +
                             std::string(header[4 + j]));
      }
      if (!std::isfinite(rec.quality[j])) {
        throw ParseError(ParseError::Kind::kNonFinite, line_no,
                         "quality value must be finite");
      }
    }
    set.records.push_back(std::move(rec));
  }
  if (in.bad()) throw ParseError(ParseError::Kind::kIo, 0, "read failure");
  return set;
}

RecordSet parse_records_string(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_records(in);
}

RecordSet read_records_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError(ParseError::Kind::kIo, 0, "cannot open '" + path + "'");
  }
  auto set = parse_records(in);
  set.meta["source"] = path;
  return set;
}

void write_records(const RecordSet& set, std::ostream& out) {
  set.validate();
  const std::size_t n_q =
      set.has_reference_quality ? set.quality_dim / 2 : set.quality_dim;
  out << "probe_id,ref_id,score,label";
  for (std::size_t j = 1; j <= n_q; ++j) out << ",q" << j;
  if (set.has_reference_quality) {
    for (std::size_t j = 1; j <= n_q; ++j) out << ",g" << j;
  }
  out << '\n';
  for (const auto& r : set.records) {
    check_id(r.probe_id);
    check_id(r.ref_id);
    out << r.probe_id << ',' << r.ref_id << ',' << format_double(r.score) << ','
        << to_string(r.label);
    for (double q : r.quality) out << ',' << format_double(q);
    out << '\n';
  }
  if (!out) throw Error("write_records: output stream failure");
}

std::string write_records_string(const RecordSet& set) {
  std::ostringstream out;
  write_records(set, out);
  return out.str();
}

void negate_scores(RecordSet& set) {
  for (auto& r : set.records) r.score = -r.score;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double ScoreModel::center(const std::vector<double>& quality) const {
  double c = base;
  for (std::size_t j = 0; j < slope.size() && j < quality.size(); ++j) {
    c += slope[j] * quality[j];
  }
  return c;
}

double ScoreModel::fnmr(const std::vector<double>& quality,
                        double threshold) const {
  return normal_cdf((threshold - match_mean(quality)) / match_sd);
}

double ScoreModel::fmr(const std::vector<double>& quality,
                       double threshold) const {
  return 1.0 - normal_cdf((threshold - nonmatch_mean(quality)) / nonmatch_sd);
}

std::vector<std::vector<double>> regular_grid(std::size_t dims, std::size_t n,
                                              double lo, double hi) {
  if (dims == 0 || n == 0) throw InvalidArgument("regular_grid: empty grid");
  std::vector<double> axis(n);
  for (std::size_t i = 0; i < n; ++i) {
    axis[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) /
                                     static_cast<double>(n - 1);
  }
  std::vector<std::vector<double>> out;
  std::vector<std::size_t> idx(dims, 0);
  for (;;) {
    std::vector<double> p(dims);
    for (std::size_t d = 0; d < dims; ++d) p[d] = axis[idx[d]];
    out.push_back(std::move(p));
    std::size_t d = 0;
    while (d < dims && ++idx[d] == n) idx[d++] = 0;
    if (d == dims) break;
  }
  return out;
}

RecordSet synthesize_dataset(const SynthConfig& config) {
  if (config.quality_grid.empty()) {
    throw InvalidArgument("synthesize_dataset: empty quality grid");
  }
  if (config.scores_per_cell < 1) {
    throw InvalidArgument("synthesize_dataset: scores_per_cell must be >= 1");
  }
  if (config.n_subjects < 2) {
    throw InvalidArgument("synthesize_dataset: need at least two subjects");
  }
  const auto& sm = config.score_model;
  if (!(sm.match_sd > 0.0) || !(sm.nonmatch_sd > 0.0)) {
    throw InvalidArgument("synthesize_dataset: score spreads must be positive");
  }
  if (config.quality_jitter < 0.0) {
    throw InvalidArgument("synthesize_dataset: negative quality jitter");
  }
  const std::size_t dim = config.quality_grid.front().size();
  if (dim == 0) throw InvalidArgument("synthesize_dataset: empty anchor");
  for (const auto& a : config.quality_grid) {
    if (a.size() != dim) {
      throw InvalidArgument("synthesize_dataset: anchors differ in dimension");
    }
  }

  RecordSet set;
  set.quality_dim = dim;
  set.meta["source"] = "synthetic";
  set.meta["seed"] = std::to_string(config.seed);
  set.records.reserve(2 * config.scores_per_cell * config.quality_grid.size());

  for (std::size_t cell = 0; cell < config.quality_grid.size(); ++cell) {
    Rng rng(derive_seed(config.seed, cell));
    const auto& anchor = config.quality_grid[cell];
    for (int cls = 0; cls < 2; ++cls) {
      const bool match = cls == 0;
      for (std::size_t k = 0; k < config.scores_per_cell; ++k) {
        VerificationRecord rec;
        rec.quality = anchor;
        for (auto& q : rec.quality) q += config.quality_jitter * rng.normal();
        const auto probe = rng.below(config.n_subjects);
        auto ref = probe;
        if (!match) ref = (probe + 1 + rng.below(config.n_subjects - 1)) %
                          config.n_subjects;
        rec.probe_id = "s" + std::to_string(probe);
        rec.ref_id = "s" + std::to_string(ref);
        rec.label = match ? Label::kMatch : Label::kNonMatch;
        rec.score = match ? rng.normal(sm.match_mean(rec.quality), sm.match_sd)
                          : rng.normal(sm.nonmatch_mean(rec.quality),
                                       sm.nonmatch_sd);
        set.records.push_back(std::move(rec));
      }
    }
  }
  return set;
}

}  // namespace perfpred
