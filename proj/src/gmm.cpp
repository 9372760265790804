#include "perfpred/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "perfpred/error.hpp"
#include "perfpred/random.hpp"

namespace perfpred {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct Collapse {
  std::size_t component;
  double mass;
};

double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

// Geometric mean, i.e. det^(1/d) of a diagonal matrix.
double geometric_mean(const Eigen::VectorXd& v) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    acc += std::log(std::max(v(i), std::numeric_limits<double>::min()));
  }
  return std::exp(acc / static_cast<double>(v.size()));
}

// Weighted sufficient statistics of the current responsibilities.
struct Scatter {
  std::vector<double> mass;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> w;  // sum_i z_ik (x_i - mu_k)(x_i - mu_k)^T
};

Scatter compute_scatter(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                        double min_mass) {
  const auto k_count = static_cast<std::size_t>(z.cols());
  Scatter s;
  s.mass.resize(k_count);
  s.means.resize(k_count);
  s.w.resize(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double nk = z.col(kk).sum();
    if (!(nk >= min_mass)) throw Collapse{k, nk};
    s.mass[k] = nk;
    s.means[k] = (x.transpose() * z.col(kk)) / nk;
    const Eigen::MatrixXd centered = x.rowwise() - s.means[k].transpose();
    s.w[k] = centered.transpose() * z.col(kk).asDiagonal() * centered;
    s.w[k] = 0.5 * (s.w[k] + s.w[k].transpose());
  }
  return s;
}

// Eigen decomposition with eigenvalues in descending order.
struct EigenPair {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

EigenPair descending_eigen(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  EigenPair p;
  p.values = es.eigenvalues().reverse().cwiseMax(0.0);
  p.vectors = es.eigenvectors().rowwise().reverse();
  return p;
}

// Shape state carried between iterations for the coordinate-ascent updates,
// so each M-step starts from the previous solution and never lowers the
// expected complete-data log-likelihood.
struct ShapeState {
  Eigen::VectorXd shape;
};

std::vector<Eigen::MatrixXd> m_step_covariances(const Scatter& s, CovModel model,
                                                std::size_t inner_iter,
                                                ShapeState& state) {
  const std::size_t k_count = s.mass.size();
  const auto d = static_cast<Eigen::Index>(s.means.front().size());
  const double dd = static_cast<double>(d);
  double n = 0.0;
  for (double m : s.mass) n += m;
  std::vector<Eigen::MatrixXd> covs(k_count);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);

  switch (model) {
    case CovModel::EII: {
      double tr = 0.0;
      for (const auto& w : s.w) tr += w.trace();
      const double lambda = tr / (n * dd);
      for (auto& c : covs) c = lambda * eye;
      break;
    }
    case CovModel::VII: {
      for (std::size_t k = 0; k < k_count; ++k) {
        covs[k] = (s.w[k].trace() / (s.mass[k] * dd)) * eye;
      }
      break;
    }
    case CovModel::EEI: {
      Eigen::VectorXd diag = Eigen::VectorXd::Zero(d);
      for (const auto& w : s.w) diag += w.diagonal();
      const Eigen::MatrixXd c = (diag / n).asDiagonal();
      for (auto& cov : covs) cov = c;
      break;
    }
    case CovModel::VEI: {
      Eigen::VectorXd shape = state.shape.size() == d
                                  ? state.shape
                                  : Eigen::VectorXd::Ones(d);
      std::vector<double> lambda(k_count);
      auto update_lambda = [&] {
        for (std::size_t k = 0; k < k_count; ++k) {
          lambda[k] = (s.w[k].diagonal().array() / shape.array()).sum() /
                      (s.mass[k] * dd);
          lambda[k] = std::max(lambda[k], std::numeric_limits<double>::min());
        }
      };
      for (std::size_t it = 0; it < inner_iter; ++it) {
        update_lambda();
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
        for (std::size_t k = 0; k < k_count; ++k) {
          acc += s.w[k].diagonal() / lambda[k];
        }
        Eigen::VectorXd next = acc / geometric_mean(acc);
        next = next.cwiseMax(std::numeric_limits<double>::min());
        const double change = (next - shape).cwiseAbs().maxCoeff();
        shape = next;
        if (change < 1e-12) break;
      }
      update_lambda();
      state.shape = shape;
      for (std::size_t k = 0; k < k_count; ++k) {
        covs[k] = (lambda[k] * shape).asDiagonal();
      }
      break;
    }
    case CovModel::EVI: {
      double lambda_sum = 0.0;
      std::vector<double> geo(k_count);
      for (std::size_t k = 0; k < k_count; ++k) {
        geo[k] = geometric_mean(s.w[k].diagonal());
        lambda_sum += geo[k];
      }
      const double lambda = lambda_sum / n;
      for (std::size_t k = 0; k < k_count; ++k) {
        const Eigen::VectorXd shape =
            s.w[k].diagonal() / std::max(geo[k], std::numeric_limits<double>::min());
        covs[k] = (lambda * shape).asDiagonal();
      }
      break;
    }
    case CovModel::VVI: {
      for (std::size_t k = 0; k < k_count; ++k) {
        covs[k] = (s.w[k].diagonal() / s.mass[k]).asDiagonal();
      }
      break;
    }
    case CovModel::EEE: {
      Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
      for (const auto& wk : s.w) w += wk;
      w /= n;
      for (auto& c : covs) c = w;
      break;
    }
    case CovModel::EEV: {
      // lambda D_k A D_k^T: orientations from each W_k, one shared shape and
      // volume from the summed eigenvalues.
      std::vector<EigenPair> eig(k_count);
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
      for (std::size_t k = 0; k < k_count; ++k) {
        eig[k] = descending_eigen(s.w[k]);
        acc += eig[k].values;
      }
      const Eigen::VectorXd lambda_shape = acc / n;
      for (std::size_t k = 0; k < k_count; ++k) {
        covs[k] = eig[k].vectors * lambda_shape.asDiagonal() *
                  eig[k].vectors.transpose();
      }
      break;
    }
    case CovModel::VEV: {
      std::vector<EigenPair> eig(k_count);
      for (std::size_t k = 0; k < k_count; ++k) eig[k] = descending_eigen(s.w[k]);
      Eigen::VectorXd shape = state.shape.size() == d
                                  ? state.shape
                                  : Eigen::VectorXd::Ones(d);
      std::vector<double> lambda(k_count);
      auto update_lambda = [&] {
        for (std::size_t k = 0; k < k_count; ++k) {
          lambda[k] = (eig[k].values.array() / shape.array()).sum() /
                      (s.mass[k] * dd);
          lambda[k] = std::max(lambda[k], std::numeric_limits<double>::min());
        }
      };
      for (std::size_t it = 0; it < inner_iter; ++it) {
        update_lambda();
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
        for (std::size_t k = 0; k < k_count; ++k) acc += eig[k].values / lambda[k];
        Eigen::VectorXd next = acc / geometric_mean(acc);
        next = next.cwiseMax(std::numeric_limits<double>::min());
        const double change = (next - shape).cwiseAbs().maxCoeff();
        shape = next;
        if (change < 1e-12) break;
      }
      update_lambda();
      state.shape = shape;
      for (std::size_t k = 0; k < k_count; ++k) {
        covs[k] = lambda[k] * eig[k].vectors * shape.asDiagonal() *
                  eig[k].vectors.transpose();
      }
      break;
    }
    case CovModel::VVV: {
      for (std::size_t k = 0; k < k_count; ++k) covs[k] = s.w[k] / s.mass[k];
      break;
    }
  }
  for (auto& c : covs) c = 0.5 * (c + c.transpose());
  return covs;
}

bool all_positive_definite(const std::vector<Eigen::MatrixXd>& covs) {
  for (const auto& c : covs) {
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) return false;
    if ((llt.matrixL().toDenseMatrix().diagonal().array() <= 0.0).any()) {
      return false;
    }
  }
  return true;
}

// Adds the same ridge to every component (so equal-across-component and
// diagonal constraints survive) until all factorize. Returns the ridge used.
double regularize(std::vector<Eigen::MatrixXd>& covs) {
  if (all_positive_definite(covs)) return 0.0;
  const auto d = covs.front().rows();
  double max_trace = 0.0;
  for (const auto& c : covs) max_trace = std::max(max_trace, c.trace());
  double ridge = 1e-8 * max_trace / static_cast<double>(d);
  if (!(ridge > 0.0)) ridge = 1e-8;
  double total = 0.0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    for (auto& c : covs) c.diagonal().array() += ridge;
    total += ridge;
    if (all_positive_definite(covs)) return total;
    ridge *= 10.0;
  }
  throw NumericError("covariance matrices remain singular after ridge");
}

struct Params {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
};

// Responsibilities and total log-likelihood under params.
double e_step(const Eigen::MatrixXd& x, const Params& p, Eigen::MatrixXd& z) {
  const auto n = x.rows();
  const auto k_count = static_cast<Eigen::Index>(p.weights.size());
  z.resize(n, k_count);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    z.col(k) = log_gaussian_density(x, p.means[kk], p.covs[kk]).array() +
               std::log(p.weights[kk]);
  }
  double ll = 0.0;
  std::vector<double> row(static_cast<std::size_t>(k_count));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < k_count; ++k) {
      row[static_cast<std::size_t>(k)] = z(i, k);
    }
    const double lse = log_sum_exp(row.data(), row.size());
    ll += lse;
    z.row(i) = (z.row(i).array() - lse).exp();
  }
  return ll;
}

// k-means++ seeding on standardized data, then hard assignment.
Eigen::MatrixXd kmeanspp_assignment(const Eigen::MatrixXd& x, std::size_t k_count,
                                    Rng& rng) {
  const auto n = x.rows();
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::RowVectorXd sd =
      ((x.rowwise() - mean).array().square().colwise().sum() /
       std::max<double>(1.0, static_cast<double>(n - 1)))
          .sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    if (!(sd(j) > 0.0)) sd(j) = 1.0;
  }
  const Eigen::MatrixXd xs =
      (x.rowwise() - mean).array().rowwise() / sd.array();

  std::vector<Eigen::Index> centers;
  centers.push_back(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = (xs.rowwise() - xs.row(centers[0])).rowwise().squaredNorm();
  while (centers.size() < k_count) {
    const double total = d2.sum();
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (u < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centers.push_back(pick);
    d2 = d2.cwiseMin((xs.rowwise() - xs.row(pick)).rowwise().squaredNorm());
  }

  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(k_count));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < k_count; ++k) {
      const double dist = (xs.row(i) - xs.row(centers[k])).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = static_cast<Eigen::Index>(k);
      }
    }
    z(i, best) = 1.0;
  }
  return z;
}

Params m_step(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
              const EmOptions& opt, ShapeState& state, FitMeta& meta) {
  const Scatter s = compute_scatter(x, z, opt.min_component_mass);
  Params p;
  p.means = s.means;
  p.covs = m_step_covariances(s, opt.parametrization, opt.inner_iter, state);
  const double ridge = regularize(p.covs);
  if (ridge > 0.0) {
    ++meta.ridge_events;
    std::ostringstream msg;
    msg << "ridge " << ridge << " added to covariance diagonals";
    meta.notes.push_back(msg.str());
  }
  double n = 0.0;
  for (double m : s.mass) n += m;
  p.weights.resize(s.mass.size());
  for (std::size_t k = 0; k < s.mass.size(); ++k) p.weights[k] = s.mass[k] / n;
  // Exact normalization.
  double sum = 0.0;
  for (double w : p.weights) sum += w;
  for (auto& w : p.weights) w /= sum;
  return p;
}

MixtureModel run_em(const Eigen::MatrixXd& x, std::size_t d_q,
                    const EmOptions& opt, std::uint64_t seed, FitMeta meta) {
  Rng rng(seed);
  ShapeState state;
  Eigen::MatrixXd z = kmeanspp_assignment(x, opt.components, rng);
  Params params = m_step(x, z, opt, state, meta);

  double ll = 0.0;
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t it = 0;; ++it) {
    ll = e_step(x, params, z);
    if (!std::isfinite(ll)) {
      throw NumericError("EM: non-finite log-likelihood");
    }
    meta.loglik_trace.push_back(ll);
    if (it > 0) {
      const double gain = ll - prev;
      const double scale = std::max(std::fabs(ll), 1.0);
      if (gain < -1e-12 * scale) ++meta.monotonicity_violations;
      if (gain / scale < opt.tol) {
        meta.converged = true;
        break;
      }
    }
    if (it == opt.max_iter) break;
    params = m_step(x, z, opt, state, meta);
    meta.n_iter = it + 1;
    prev = ll;
  }

  MixtureModel model;
  model.d_q = d_q;
  model.d_r = static_cast<std::size_t>(x.cols()) - d_q;
  model.parametrization = opt.parametrization;
  model.weights = std::move(params.weights);
  model.means = std::move(params.means);
  model.covariances = std::move(params.covs);
  meta.loglik = ll;
  meta.seed = opt.seed;
  meta.bic = bic_value(ll, model.n_params(), static_cast<std::size_t>(x.rows()));
  model.fit_meta = std::move(meta);
  return model;
}

}  // namespace

std::string_view to_string(CovModel model) noexcept {
  switch (model) {
    case CovModel::EII: return "EII";
    case CovModel::VII: return "VII";
    case CovModel::EEI: return "EEI";
    case CovModel::VEI: return "VEI";
    case CovModel::EVI: return "EVI";
    case CovModel::VVI: return "VVI";
    case CovModel::EEE: return "EEE";
    case CovModel::EEV: return "EEV";
    case CovModel::VEV: return "VEV";
    case CovModel::VVV: return "VVV";
  }
  return "?";
}

CovModel parse_cov_model(std::string_view code) {
  for (auto m : kAllCovModels) {
    if (to_string(m) == code) return m;
  }
  throw InvalidArgument("unknown covariance parametrization '" +
                        std::string(code) + "'");
}

std::vector<CovModel> parse_cov_models(std::string_view list) {
  std::vector<CovModel> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    auto item = list.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) {
      throw InvalidArgument("empty entry in parametrization list '" +
                            std::string(list) + "'");
    }
    out.push_back(parse_cov_model(item));
    start = end + 1;
  }
  return out;
}

std::size_t covariance_params(CovModel model, std::size_t k, std::size_t d) {
  const std::size_t rot = d * (d - 1) / 2;
  switch (model) {
    case CovModel::EII: return 1;
    case CovModel::VII: return k;
    case CovModel::EEI: return d;
    case CovModel::VEI: return k + (d - 1);
    case CovModel::EVI: return 1 + k * (d - 1);
    case CovModel::VVI: return k * d;
    case CovModel::EEE: return d * (d + 1) / 2;
    case CovModel::EEV: return 1 + (d - 1) + k * rot;
    case CovModel::VEV: return k + (d - 1) + k * rot;
    case CovModel::VVV: return k * d * (d + 1) / 2;
  }
  return 0;
}

std::size_t mixture_params(CovModel model, std::size_t k, std::size_t d) {
  return (k - 1) + k * d + covariance_params(model, k, d);
}

void MixtureModel::validate() const {
  const std::size_t k = components();
  if (k == 0) throw InvalidArgument("mixture has no components");
  if (d_q == 0) throw InvalidArgument("mixture has no quality dimensions");
  if (means.size() != k || covariances.size() != k) {
    throw InvalidArgument("mixture component arrays differ in length");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw InvalidArgument("weight outside [0,1]");
    sum += w;
  }
  if (std::fabs(sum - 1.0) > 1e-12) {
    throw InvalidArgument("mixture weights do not sum to 1");
  }
  const auto d = static_cast<Eigen::Index>(dim());
  for (std::size_t i = 0; i < k; ++i) {
    if (means[i].size() != d || covariances[i].rows() != d ||
        covariances[i].cols() != d) {
      throw InvalidArgument("component " + std::to_string(i) +
                            " has wrong dimensions");
    }
    if (!means[i].allFinite() || !covariances[i].allFinite()) {
      throw InvalidArgument("component " + std::to_string(i) +
                            " has non-finite parameters");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(covariances[i]);
    if (llt.info() != Eigen::Success) {
      throw InvalidArgument("covariance " + std::to_string(i) +
                            " is not positive definite");
    }
  }
}

Eigen::VectorXd log_gaussian_density(const Eigen::MatrixXd& data,
                                     const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericError("covariance is not positive definite");
  }
  const Eigen::MatrixXd l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const double d = static_cast<double>(mean.size());
  const Eigen::MatrixXd centered = (data.rowwise() - mean.transpose()).transpose();
  const Eigen::MatrixXd sol = llt.matrixL().solve(centered);
  const Eigen::VectorXd maha = sol.colwise().squaredNorm().transpose();
  return (-0.5 * (d * kLog2Pi + log_det) - 0.5 * maha.array()).matrix();
}

double log_likelihood(const MixtureModel& model, const Eigen::MatrixXd& data) {
  const auto k_count = model.components();
  if (static_cast<std::size_t>(data.cols()) != model.dim()) {
    throw InvalidArgument("log_likelihood: data dimension mismatch");
  }
  Eigen::MatrixXd terms(data.rows(), static_cast<Eigen::Index>(k_count));
  for (std::size_t k = 0; k < k_count; ++k) {
    terms.col(static_cast<Eigen::Index>(k)) =
        log_gaussian_density(data, model.means[k], model.covariances[k])
            .array() +
        std::log(model.weights[k]);
  }
  double ll = 0.0;
  std::vector<double> row(k_count);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (std::size_t k = 0; k < k_count; ++k) {
      row[k] = terms(i, static_cast<Eigen::Index>(k));
    }
    ll += log_sum_exp(row.data(), k_count);
  }
  return ll;
}

double bic_value(double loglik, std::size_t n_params, std::size_t n_obs) {
  return 2.0 * loglik -
         static_cast<double>(n_params) * std::log(static_cast<double>(n_obs));
}

double bic(const MixtureModel& model, const Eigen::MatrixXd& data) {
  return bic_value(log_likelihood(model, data), model.n_params(),
                   static_cast<std::size_t>(data.rows()));
}

MixtureModel em_fit(const Eigen::MatrixXd& data, std::size_t d_q,
                    const EmOptions& options) {
  const auto n = static_cast<std::size_t>(data.rows());
  const auto d = static_cast<std::size_t>(data.cols());
  if (options.components == 0) throw InvalidArgument("em_fit: K must be >= 1");
  if (n < options.components) {
    throw InvalidArgument("em_fit: N (" + std::to_string(n) +
                          ") is smaller than K (" +
                          std::to_string(options.components) + ")");
  }
  if (d == 0 || d_q == 0 || d_q > d) {
    throw InvalidArgument("em_fit: invalid dimension split");
  }
  if (!(options.tol > 0.0)) throw InvalidArgument("em_fit: tol must be > 0");
  if (!data.allFinite()) throw InvalidArgument("em_fit: data must be finite");

  FitMeta meta;
  for (std::size_t attempt = 0; attempt <= options.max_restarts; ++attempt) {
    const auto seed =
        attempt == 0 ? options.seed : derive_seed(options.seed, attempt);
    try {
      meta.restarts = attempt;
      return run_em(data, d_q, options, seed, meta);
    } catch (const Collapse& c) {
      std::ostringstream msg;
      msg << "component " << c.component << " collapsed (mass " << c.mass
          << "), restarting";
      meta.notes.push_back(msg.str());
    }
  }
  throw NumericError("em_fit: components kept collapsing after " +
                     std::to_string(options.max_restarts) + " restarts (K=" +
                     std::to_string(options.components) + ", " +
                     std::string(to_string(options.parametrization)) + ")");
}

ModelSearchResult model_search(const Eigen::MatrixXd& data, std::size_t d_q,
                               const SearchOptions& options) {
  if (options.k_min == 0 || options.k_max < options.k_min) {
    throw InvalidArgument("model_search: invalid K range");
  }
  if (options.parametrizations.empty()) {
    throw InvalidArgument("model_search: no parametrizations");
  }
  ModelSearchResult result;
  std::optional<MixtureModel> best;
  const auto d = static_cast<std::size_t>(data.cols());
  for (std::size_t k = options.k_min; k <= options.k_max; ++k) {
    for (auto cov : options.parametrizations) {
      BicEntry entry;
      entry.components = k;
      entry.parametrization = cov;
      entry.n_params = mixture_params(cov, k, d);
      EmOptions em = options.em;
      em.components = k;
      em.parametrization = cov;
      try {
        MixtureModel m = em_fit(data, d_q, em);
        entry.ok = true;
        entry.loglik = m.fit_meta.loglik;
        entry.bic = m.fit_meta.bic;
        entry.n_iter = m.fit_meta.n_iter;
        const bool better =
            !best || entry.bic > best->fit_meta.bic ||
            (entry.bic == best->fit_meta.bic && entry.n_params < best->n_params());
        if (better) {
          best = std::move(m);
          result.best_index = result.table.size();
        }
      } catch (const Error& e) {
        entry.error = e.what();
      }
      result.table.push_back(std::move(entry));
    }
  }
  if (!best) throw NumericError("model_search: every (K, parametrization) failed");
  result.best = std::move(*best);
  return result;
}

// ---- conditioning -----------------------------------------------------------

Conditioner::Conditioner(const MixtureModel& model)
    : d_q_(model.d_q), d_r_(model.d_r) {
  if (d_q_ == 0 || d_r_ == 0) {
    throw InvalidArgument("condition: model needs quality and performance blocks");
  }
  const auto dq = static_cast<Eigen::Index>(d_q_);
  const auto dr = static_cast<Eigen::Index>(d_r_);
  components_.reserve(model.components());
  for (std::size_t k = 0; k < model.components(); ++k) {
    const auto& mu = model.means[k];
    const auto& cov = model.covariances[k];
    Component c;
    c.log_weight = std::log(model.weights[k]);
    c.mean_q = mu.head(dq);
    c.mean_r = mu.tail(dr);
    Eigen::MatrixXd cov_q = cov.topLeftCorner(dq, dq);
    const Eigen::MatrixXd cov_c = cov.topRightCorner(dq, dr);
    const Eigen::MatrixXd cov_r = cov.bottomRightCorner(dr, dr);
    c.chol_q.compute(cov_q);
    if (c.chol_q.info() != Eigen::Success) {
      double ridge = 1e-8 * std::max(cov_q.trace(), 1e-300) /
                     static_cast<double>(d_q_);
      for (int attempt = 0; attempt < 12; ++attempt) {
        cov_q.diagonal().array() += ridge;
        c.chol_q.compute(cov_q);
        if (c.chol_q.info() == Eigen::Success) break;
        ridge *= 10.0;
      }
      if (c.chol_q.info() != Eigen::Success) {
        throw NumericError("condition: quality block of component " +
                           std::to_string(k) + " is singular");
      }
      ridge_applied_ = true;
    }
    const Eigen::MatrixXd l = c.chol_q.matrixL();
    c.log_norm_q = -0.5 * (static_cast<double>(d_q_) * kLog2Pi +
                           2.0 * l.diagonal().array().log().sum());
    c.gain = c.chol_q.solve(cov_c).transpose();
    c.cov_r = cov_r - c.gain * cov_c;
    c.cov_r = 0.5 * (c.cov_r + c.cov_r.transpose());
    components_.push_back(std::move(c));
  }
}

std::vector<double> Conditioner::log_terms(const Eigen::VectorXd& q) const {
  if (static_cast<std::size_t>(q.size()) != d_q_) {
    throw InvalidArgument("condition: q has " + std::to_string(q.size()) +
                          " dimensions, model expects " + std::to_string(d_q_));
  }
  if (!q.allFinite()) throw InvalidArgument("condition: q must be finite");
  std::vector<double> t(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const Eigen::VectorXd sol = c.chol_q.matrixL().solve(q - c.mean_q);
    t[k] = c.log_weight + c.log_norm_q - 0.5 * sol.squaredNorm();
  }
  return t;
}

double Conditioner::log_marginal(const Eigen::VectorXd& q) const {
  const auto t = log_terms(q);
  return log_sum_exp(t.data(), t.size());
}

ConditionalPrediction Conditioner::condition(const Eigen::VectorXd& q) const {
  const auto t = log_terms(q);
  ConditionalPrediction out;
  out.ridge_applied = ridge_applied_;
  out.log_marginal = log_sum_exp(t.data(), t.size());
  out.psi.resize(t.size());
  // Normalize relative to the largest term so every psi is finite even when
  // all densities underflow.
  const double m = *std::max_element(t.begin(), t.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    out.psi[k] = std::exp(t[k] - m);
    sum += out.psi[k];
  }
  for (auto& p : out.psi) p /= sum;

  out.expectation = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d_r_));
  out.cond_means.reserve(components_.size());
  out.cond_covs.reserve(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    Eigen::VectorXd mu = c.mean_r + c.gain * (q - c.mean_q);
    out.expectation += out.psi[k] * mu;
    out.cond_means.push_back(std::move(mu));
    out.cond_covs.push_back(c.cov_r);
  }
  return out;
}

std::size_t ConditionalPrediction::top_component() const {
  return static_cast<std::size_t>(
      std::max_element(psi.begin(), psi.end()) - psi.begin());
}

ConditionalPrediction condition(const MixtureModel& model,
                                const Eigen::VectorXd& q) {
  return Conditioner(model).condition(q);
}

double marginal_q_density(const MixtureModel& model, const Eigen::VectorXd& q) {
  return std::exp(Conditioner(model).log_marginal(q));
}

RocPrediction clamp_prediction(const Eigen::VectorXd& expectation) {
  RocPrediction p;
  p.raw = expectation;
  p.clamped = expectation.cwiseMax(0.0).cwiseMin(1.0);
  p.clamp_flags.resize(static_cast<std::size_t>(expectation.size()));
  for (Eigen::Index i = 0; i < expectation.size(); ++i) {
    p.clamp_flags[static_cast<std::size_t>(i)] = p.clamped(i) != expectation(i);
  }
  return p;
}

std::vector<RocPrediction> predict_roc(const std::vector<MixtureModel>& models,
                                       const Eigen::VectorXd& q) {
  std::vector<RocPrediction> out;
  out.reserve(models.size());
  for (const auto& m : models) {
    if (m.d_q != models.front().d_q) {
      throw InvalidArgument("predict_roc: models disagree on d_q");
    }
    auto p = clamp_prediction(condition(m, q).expectation);
    if (m.operating_point) {
      p.label = m.operating_point->label;
      p.threshold = m.operating_point->threshold;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace perfpred
