#include "sxae/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "sxae/kernels.hpp"
#include "sxae/simplex.hpp"

namespace sxae {

namespace {

constexpr double kCollapseWeight = 1e-8;

Matrix cholesky_with_escalation(const Matrix& cov, double first_ridge) {
  const Eigen::Index n = cov.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  for (double ridge = first_ridge; ridge <= 1e-2 * (1 + 1e-9); ridge *= 10.0) {
    llt.compute(cov + ridge * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalFailure("gmm: covariance is not positive definite even with ridge 1e-2");
}

std::vector<kernels::GaussianTerm> make_terms(const GmmModel& model) {
  const double n = static_cast<double>(model.dim());
  std::vector<kernels::GaussianTerm> terms;
  terms.reserve(model.components());
  for (std::size_t c = 0; c < model.components(); ++c) {
    Matrix l = cholesky_with_escalation(model.covariances[c], 1e-10);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) log_det += 2.0 * std::log(l(i, i));
    const double w = model.weights[static_cast<Eigen::Index>(c)];
    const double log_w = w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
    terms.push_back({model.means[c], std::move(l),
                     log_w - 0.5 * (n * std::log(2.0 * std::numbers::pi) + log_det)});
  }
  return terms;
}

// Turns log-joint rows into responsibilities in place; returns the log-likelihood.
double normalize_rows(Matrix& log_joint) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < log_joint.rows(); ++i) {
    const double top = log_joint.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < log_joint.cols(); ++c) sum += std::exp(log_joint(i, c) - top);
    const double lse = top + std::log(sum);
    ll += lse;
    for (Eigen::Index c = 0; c < log_joint.cols(); ++c) log_joint(i, c) = std::exp(log_joint(i, c) - lse);
  }
  return ll;
}

Matrix sorted_rows(const Matrix& y) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(y.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      if (y(a, j) != y(b, j)) return y(a, j) < y(b, j);
    }
    return false;
  });
  Matrix out(y.rows(), y.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = y.row(order[i]);
  return out;
}

Matrix data_covariance(const Matrix& y, double ridge) {
  const Vector mean = y.colwise().mean().transpose();
  const Matrix centered = y.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(y.rows());
  cov.diagonal().array() += ridge;
  return cov;
}

// Closed-form M-step. Returns the number of re-seeded components.
int m_step(const Matrix& y, const Matrix& resp, const EmConfig& cfg, Rng& rng, GmmModel& model) {
  const Eigen::Index m = y.rows(), n = y.cols();
  const auto k = static_cast<Eigen::Index>(model.components());
  int collapses = 0;
  for (Eigen::Index c = 0; c < k; ++c) {
    const double nk = resp.col(c).sum();
    auto& mean = model.means[static_cast<std::size_t>(c)];
    auto& cov = model.covariances[static_cast<std::size_t>(c)];
    if (nk / static_cast<double>(m) < kCollapseWeight) {
      ++collapses;
      mean = y.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(m)))).transpose();
      cov = data_covariance(y, cfg.cov_ridge);
      model.weights[c] = 1.0 / static_cast<double>(m);
      continue;
    }
    mean = (resp.col(c).transpose() * y).transpose() / nk;
    cov = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Vector d = y.row(i).transpose() - mean;
      cov.noalias() += resp(i, c) * (d * d.transpose());
    }
    cov /= nk;
    cov = 0.5 * (cov + cov.transpose());
    cov.diagonal().array() += cfg.cov_ridge;
    model.weights[c] = nk / static_cast<double>(m);
  }
  model.weights /= model.weights.sum();
  return collapses;
}

// k-means++ centers, then a hard-assignment M-step.
GmmModel kmeanspp_init(const Matrix& y, std::size_t k, const EmConfig& cfg, Rng& rng) {
  const auto m = static_cast<std::size_t>(y.rows());
  std::vector<Eigen::Index> centers{static_cast<Eigen::Index>(rng.index(m))};
  std::vector<double> d2(m, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    const Vector last = y.row(centers.back()).transpose();
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      d2[i] = std::min(d2[i], (y.row(static_cast<Eigen::Index>(i)).transpose() - last).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = rng.index(m);
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < m; ++i) {
        u -= d2[i];
        if (u <= 0.0 && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(static_cast<Eigen::Index>(pick));
  }
  Matrix resp = Matrix::Zero(y.rows(), static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double d = (y.row(i) - y.row(centers[c])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    resp(i, static_cast<Eigen::Index>(best)) = 1.0;
  }
  GmmModel model;
  model.weights = Vector::Zero(static_cast<Eigen::Index>(k));
  model.means.assign(k, Vector::Zero(y.cols()));
  model.covariances.assign(k, Matrix::Identity(y.cols(), y.cols()));
  m_step(y, resp, cfg, rng, model);
  return model;
}

GmmFit run_em(const Matrix& y, std::size_t k, const EmConfig& cfg, Rng& rng) {
  GmmFit fit;
  fit.model = kmeanspp_init(y, k, cfg, rng);
  Matrix resp;
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < cfg.max_iters; ++it) {
    kernels::omp::gaussian_log_joint(y, make_terms(fit.model), resp);
    const double ll = normalize_rows(resp);
    if (!std::isfinite(ll)) throw NumericalFailure("gmm: non-finite log-likelihood at iteration " + std::to_string(it));
    fit.log_likelihood.push_back(ll);
    if (it > 0 && std::abs(ll - prev) <= cfg.rel_tol * std::abs(prev)) break;
    prev = ll;
    fit.collapse_events += m_step(y, resp, cfg, rng, fit.model);
  }
  return fit;
}

}  // namespace

void GmmModel::validate() const {
  const auto k = means.size();
  if (k == 0 || static_cast<std::size_t>(weights.size()) != k || covariances.size() != k) {
    throw InvalidInput("GmmModel: inconsistent component counts");
  }
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9) {
    throw InvalidInput("GmmModel: weights must be non-negative and sum to 1");
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (means[c].size() != dim() || covariances[c].rows() != dim() || covariances[c].cols() != dim()) {
      throw InvalidInput("GmmModel: component dimension mismatch");
    }
  }
}

void EmConfig::validate() const {
  if (max_iters < 1 || !(rel_tol > 0.0) || !(cov_ridge > 0.0) || n_init < 1) {
    throw InvalidInput("EmConfig: entries must be positive");
  }
}

GmmFit fit_gmm_em(const Matrix& y, std::size_t k, const EmConfig& cfg) {
  cfg.validate();
  if (k < 1) throw InvalidInput("fit_gmm_em: need at least one component");
  if (y.cols() < 1) throw InvalidInput("fit_gmm_em: data has no columns");
  if (static_cast<std::size_t>(y.rows()) < k) {
    throw InvalidInput("fit_gmm_em: fewer points (" + std::to_string(y.rows()) + ") than components (" +
                       std::to_string(k) + ")");
  }
  const Matrix sorted = sorted_rows(y);
  Rng rng(cfg.seed);
  GmmFit best;
  for (int r = 0; r < cfg.n_init; ++r) {
    GmmFit fit = run_em(sorted, k, cfg, rng);
    if (best.log_likelihood.empty() || fit.log_likelihood.back() > best.log_likelihood.back()) {
      best = std::move(fit);
    }
  }
  return best;
}

Matrix gmm_responsibilities(const GmmModel& model, const Matrix& y) {
  model.validate();
  Matrix resp;
  kernels::omp::gaussian_log_joint(y, make_terms(model), resp);
  normalize_rows(resp);
  return resp;
}

double gmm_log_likelihood(const GmmModel& model, const Matrix& y) {
  model.validate();
  Matrix resp;
  kernels::omp::gaussian_log_joint(y, make_terms(model), resp);
  return normalize_rows(resp);
}

Matrix gmm_sample(const GmmModel& model, std::size_t count, Rng& rng) {
  model.validate();
  std::vector<Matrix> factors;
  for (const auto& cov : model.covariances) factors.push_back(cholesky_with_escalation(cov, 1e-10));
  const Eigen::Index n = model.dim();
  Matrix out(static_cast<Eigen::Index>(count), n);
  Vector eps(n);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    double u = rng.uniform();
    std::size_t c = 0;
    while (c + 1 < model.components() && u >= model.weights[static_cast<Eigen::Index>(c)]) {
      u -= model.weights[static_cast<Eigen::Index>(c)];
      ++c;
    }
    for (Eigen::Index j = 0; j < n; ++j) eps[j] = rng.normal();
    out.row(r) = (model.means[c] + factors[c] * eps).transpose();
  }
  return out;
}

Matrix project_to_euclidean(const Matrix& z) {
  if (z.cols() < 2) throw InvalidInput("project_to_euclidean: need at least two coordinates");
  Matrix y(z.rows(), z.cols() - 1);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    simplex_to_logistic_into(std::span<const double>(z.row(r).data(), z.cols()),
                             std::span<double>(y.row(r).data(), y.cols()));
  }
  return y;
}

Matrix project_to_simplex(const Matrix& y) {
  Matrix z(y.rows(), y.cols() + 1);
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    logistic_to_simplex_into(std::span<const double>(y.row(r).data(), y.cols()),
                             std::span<double>(z.row(r).data(), z.cols()));
  }
  return z;
}

GmmFit fit_logistic_normal_mixture(const Matrix& z, std::size_t k, const EmConfig& cfg) {
  return fit_gmm_em(project_to_euclidean(z), k, cfg);
}

Matrix sample_logistic_normal_mixture(const GmmModel& model, std::size_t count, Rng& rng) {
  return project_to_simplex(gmm_sample(model, count, rng));
}

}  // namespace sxae
