#pragma once

#include <cstdint>
#include <vector>

#include "sxae/common.hpp"

namespace sxae {

/// Full-covariance Gaussian mixture. Mixture weights are unrelated to the
/// Dirichlet concentration used for training.
struct GmmModel {
  Vector weights;
  std::vector<Vector> means;
  std::vector<Matrix> covariances;

  std::size_t components() const { return means.size(); }
  Eigen::Index dim() const { return means.empty() ? 0 : means.front().size(); }
  void validate() const;
};

struct EmConfig {
  int max_iters = 200;
  double rel_tol = 1e-6;
  double cov_ridge = 1e-6;
  std::uint64_t seed = 0;
  int n_init = 3;

  void validate() const;
};

struct GmmFit {
  GmmModel model;
  std::vector<double> log_likelihood;  // one entry per EM iteration of the kept restart
  int collapse_events = 0;
};

/// EM with k-means++ seeding, best of cfg.n_init restarts. Rows are put in
/// lexicographic order first, so the result does not depend on input order.
GmmFit fit_gmm_em(const Matrix& y, std::size_t k, const EmConfig& cfg);

double gmm_log_likelihood(const GmmModel& model, const Matrix& y);

/// Posterior component probabilities, one row per sample.
Matrix gmm_responsibilities(const GmmModel& model, const Matrix& y);

/// Cholesky factors retry with ridge 1e-10, 1e-9, ... up to 1e-2 before
/// throwing NumericalFailure.
Matrix gmm_sample(const GmmModel& model, std::size_t count, Rng& rng);

/// Maps each simplex row through the inverse logistic transform, then fits.
GmmFit fit_logistic_normal_mixture(const Matrix& z, std::size_t k, const EmConfig& cfg);

/// Samples the mixture and maps each draw back onto the simplex.
Matrix sample_logistic_normal_mixture(const GmmModel& model, std::size_t count, Rng& rng);

/// Applies the inverse logistic transform to every row.
Matrix project_to_euclidean(const Matrix& z);
Matrix project_to_simplex(const Matrix& y);

}  // namespace sxae
