#include "perfpred/quality_space.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "perfpred/error.hpp"

namespace perfpred {

namespace {

DiagonalGaussian gaussian_from_bounds(const QualityRegion& region,
                                      double variance_floor) {
  DiagonalGaussian g;
  g.mean = region.center;
  g.variance.resize(region.center.size());
  for (std::size_t d = 0; d < region.center.size(); ++d) {
    const double half_width = 0.25 * (region.upper[d] - region.lower[d]);
    g.variance[d] = std::max(half_width * half_width, variance_floor);
  }
  return g;
}

void fit_members(QualityRegion& region, const RecordSet& records,
                 std::size_t dims, const RegionOptions& options) {
  region.sparse = region.members.size() < options.min_members;
  if (region.members.size() < 2) {
    region.q_model = gaussian_from_bounds(region, options.variance_floor);
    region.q_model_from_bounds = true;
    return;
  }
  std::vector<std::vector<double>> samples;
  samples.reserve(region.members.size());
  for (auto idx : region.members) {
    const auto& q = records.records[idx].quality;
    samples.emplace_back(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(dims));
  }
  region.q_model = fit_region_gaussian(samples, options.variance_floor);
}

}  // namespace

std::size_t QuantileGrid::interior_count() const noexcept {
  if (n_qs < 3 || axes.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d = 0; d < axes.size(); ++d) n *= n_qs - 2;
  return n;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile p outside [0,1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

QuantileGrid quantile_grid(const RecordSet& records, std::size_t n_qs,
                           std::size_t dims) {
  if (n_qs < 3) throw InvalidArgument("quantile_grid: n_qs must be >= 3");
  if (records.empty()) throw InvalidArgument("quantile_grid: no records");
  if (dims == 0) dims = records.quality_dim;
  if (dims > records.quality_dim) {
    throw InvalidArgument("quantile_grid: more axes requested than available");
  }
  QuantileGrid grid;
  grid.n_qs = n_qs;
  grid.axes.resize(dims);
  std::vector<double> values(records.size());
  for (std::size_t d = 0; d < dims; ++d) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      values[i] = records.records[i].quality[d];
    }
    std::sort(values.begin(), values.end());
    if (values.front() == values.back()) {
      throw InvalidArgument("quantile_grid: quality axis " +
                            std::to_string(d + 1) +
                            " is constant (degenerate axis)");
    }
    auto& axis = grid.axes[d];
    axis.resize(n_qs);
    for (std::size_t k = 0; k < n_qs; ++k) {
      axis[k] = quantile_sorted(values, static_cast<double>(k) /
                                            static_cast<double>(n_qs - 1));
    }
  }
  return grid;
}

std::vector<QualityRegion> build_regions(const QuantileGrid& grid,
                                         const RecordSet& records,
                                         const RegionOptions& options) {
  const std::size_t dims = grid.dims();
  if (dims == 0 || grid.n_qs < 3) {
    throw InvalidArgument("build_regions: grid has no interior points");
  }
  if (dims > records.quality_dim) {
    throw InvalidArgument("build_regions: grid has more axes than the records");
  }
  const std::size_t per_axis = grid.n_qs - 2;
  std::vector<QualityRegion> regions;
  regions.reserve(grid.interior_count());

  std::vector<std::size_t> idx(dims, 0);  // 0-based over interior points
  for (;;) {
    QualityRegion region;
    region.id = regions.size();
    region.center.resize(dims);
    region.lower.resize(dims);
    region.upper.resize(dims);
    for (std::size_t d = 0; d < dims; ++d) {
      const auto k = idx[d] + 1;
      region.lower[d] = grid.axes[d][k - 1];
      region.center[d] = grid.axes[d][k];
      region.upper[d] = grid.axes[d][k + 1];
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& q = records.records[i].quality;
      bool inside = true;
      for (std::size_t d = 0; d < dims && inside; ++d) {
        inside = q[d] >= region.lower[d] && q[d] <= region.upper[d];
      }
      if (inside) region.members.push_back(i);
    }
    fit_members(region, records, dims, options);
    regions.push_back(std::move(region));

    std::size_t d = 0;
    while (d < dims && ++idx[d] == per_axis) idx[d++] = 0;
    if (d == dims) break;
  }
  return regions;
}

std::vector<QualityRegion> build_cluster_regions(
    const RecordSet& records, const std::vector<std::string>& keys,
    const RegionOptions& options) {
  if (keys.size() != records.size()) {
    throw InvalidArgument("build_cluster_regions: one key per record required");
  }
  const std::size_t dims = records.quality_dim;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < keys.size(); ++i) groups[keys[i]].push_back(i);

  std::vector<QualityRegion> regions;
  for (auto& [key, members] : groups) {
    QualityRegion region;
    region.id = regions.size();
    region.members = std::move(members);
    region.center.assign(dims, 0.0);
    region.lower.assign(dims, INFINITY);
    region.upper.assign(dims, -INFINITY);
    for (auto i : region.members) {
      const auto& q = records.records[i].quality;
      for (std::size_t d = 0; d < dims; ++d) {
        region.center[d] += q[d];
        region.lower[d] = std::min(region.lower[d], q[d]);
        region.upper[d] = std::max(region.upper[d], q[d]);
      }
    }
    for (auto& c : region.center) c /= static_cast<double>(region.members.size());
    fit_members(region, records, dims, options);
    regions.push_back(std::move(region));
  }
  return regions;
}

DiagonalGaussian fit_region_gaussian(
    const std::vector<std::vector<double>>& samples, double variance_floor) {
  if (samples.size() < 2) {
    throw InvalidArgument("fit_region_gaussian: need at least 2 samples, got " +
                          std::to_string(samples.size()));
  }
  if (!(variance_floor > 0.0)) {
    throw InvalidArgument("fit_region_gaussian: variance floor must be positive");
  }
  const std::size_t dims = samples.front().size();
  DiagonalGaussian g;
  g.mean.assign(dims, 0.0);
  g.variance.assign(dims, 0.0);
  for (const auto& s : samples) {
    if (s.size() != dims) {
      throw InvalidArgument("fit_region_gaussian: ragged samples");
    }
    for (std::size_t d = 0; d < dims; ++d) g.mean[d] += s[d];
  }
  const double n = static_cast<double>(samples.size());
  for (auto& m : g.mean) m /= n;
  for (const auto& s : samples) {
    for (std::size_t d = 0; d < dims; ++d) {
      const double e = s[d] - g.mean[d];
      g.variance[d] += e * e;
    }
  }
  for (auto& v : g.variance) v = std::max(v / (n - 1.0), variance_floor);
  return g;
}

void write_regions_csv(const std::vector<QualityRegion>& regions,
                       std::ostream& out) {
  out << "region_id,axis,lower,center,upper,n_members\n";
  for (const auto& r : regions) {
    for (std::size_t d = 0; d < r.center.size(); ++d) {
      out << r.id << ',' << d + 1 << ',' << format_double(r.lower[d]) << ','
          << format_double(r.center[d]) << ',' << format_double(r.upper[d])
          << ',' << r.members.size() << '\n';
    }
  }
}

// ---- IQA calibration --------------------------------------------------------

namespace {

using CellMeans = std::map<std::pair<double, double>, std::array<double, 2>>;

CellMeans compute_cell_means(const std::vector<IqaRow>& rows) {
  std::map<std::pair<double, double>, std::array<double, 3>> acc;
  for (const auto& r : rows) {
    auto& a = acc[{r.gamma1, r.gamma2}];
    a[0] += r.q1;
    a[1] += r.q2;
    a[2] += 1.0;
  }
  CellMeans means;
  for (const auto& [key, a] : acc) means[key] = {a[0] / a[2], a[1] / a[2]};
  return means;
}

Eigen::MatrixX2d targets_with(const std::vector<IqaRow>& rows,
                              const CellMeans& means, double a_scale,
                              double b_scale) {
  Eigen::MatrixX2d b(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& mu = means.at({r.gamma1, r.gamma2});
    const auto row = static_cast<Eigen::Index>(i);
    b(row, 0) = a_scale * r.gamma1 + (r.q1 - mu[0]);
    b(row, 1) = b_scale * r.gamma2 + (r.q2 - mu[1]);
  }
  return b;
}

}  // namespace

Eigen::MatrixX4d iqa_design(const std::vector<IqaRow>& rows) {
  Eigen::MatrixX4d a(static_cast<Eigen::Index>(rows.size()), 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    a.row(static_cast<Eigen::Index>(i)) << r.q1, r.q2, r.gamma1, r.gamma2;
  }
  return a;
}

Eigen::MatrixX2d iqa_targets(const std::vector<IqaRow>& rows, double a_scale,
                             double b_scale) {
  return targets_with(rows, compute_cell_means(rows), a_scale, b_scale);
}

Eigen::Matrix<double, 4, 2> solve_iqa_least_squares(const Eigen::MatrixX4d& a,
                                                    const Eigen::MatrixX2d& b) {
  if (a.rows() < 4) {
    throw InvalidArgument("IQA calibration needs at least 4 rows");
  }
  if (a.rows() != b.rows()) {
    throw InvalidArgument("IQA calibration: design/target row mismatch");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixX4d> qr(a);
  // Relative threshold on the R diagonal; the default is too lax for designs
  // with an exactly repeated column.
  qr.setThreshold(1e-10);
  if (qr.rank() < 4) {
    throw NumericError("IQA calibration: design matrix is rank deficient (rank " +
                       std::to_string(qr.rank()) + " < 4)");
  }
  return qr.solve(b);
}

IqaCalibration fit_iqa_calibration(const std::vector<IqaRow>& rows) {
  if (rows.size() < 4) {
    throw InvalidArgument("IQA calibration needs at least 4 rows");
  }
  IqaCalibration cal;
  cal.cell_means = compute_cell_means(rows);
  if (cal.cell_means.size() < 2) {
    throw InvalidArgument("IQA calibration needs rows from at least 2 distinct "
                          "(gamma1, gamma2) cells");
  }
  const auto a = iqa_design(rows);
  const auto b = targets_with(rows, cal.cell_means, cal.a_scale, cal.b_scale);
  cal.x = solve_iqa_least_squares(a, b);
  cal.residual_norm = (a * cal.x - b).norm();
  return cal;
}

std::array<double, 2> apply_iqa_calibration(const IqaCalibration& cal,
                                            const IqaRow& row) {
  const Eigen::RowVector4d v(row.q1, row.q2, row.gamma1, row.gamma2);
  const Eigen::RowVector2d out = v * cal.x;
  return {out(0), out(1)};
}

}  // namespace perfpred
