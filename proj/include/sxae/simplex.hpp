#pragma once

#include <span>
#include <vector>

#include "sxae/common.hpp"

namespace sxae {

/// Point on the n-simplex: n+1 non-negative coordinates summing to one.
class SimplexVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  /// Validates coordinates; throws InvalidInput when off the simplex.
  explicit SimplexVector(std::vector<double> coords);

  std::size_t size() const { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }
  std::span<const double> coords() const { return coords_; }
  const std::vector<double>& values() const { return coords_; }

  static bool is_valid(std::span<const double> coords, double tol = kSumTolerance);

 private:
  std::vector<double> coords_;
};

/// Strictly positive, finite concentration vector of a Dirichlet distribution.
class DirichletParams {
 public:
  explicit DirichletParams(std::vector<double> alpha);
  /// Scalar value broadcast over `dim` coordinates.
  static DirichletParams broadcast(double value, std::size_t dim);

  std::size_t size() const { return alpha_.size(); }
  double operator[](std::size_t i) const { return alpha_[i]; }
  std::span<const double> values() const { return alpha_; }
  double total() const;

 private:
  std::vector<double> alpha_;
};

/// Unconstrained coordinates of the logistic (additive log-ratio) chart.
class EuclideanVector {
 public:
  explicit EuclideanVector(std::vector<double> coords);

  std::size_t size() const { return coords_.size(); }
  double operator[](std::size_t i) const { return coords_[i]; }
  std::span<const double> coords() const { return coords_; }

 private:
  std::vector<double> coords_;
};

SimplexVector softmax(std::span<const double> logits);

/// Writes softmax(logits) into `out` without validation; used on hot paths.
void softmax_into(std::span<const double> logits, std::span<double> out);

/// ln B(alpha) = sum ln Gamma(alpha_i) - ln Gamma(sum alpha_i).
double log_beta(const DirichletParams& alpha);

double dirichlet_log_pdf(const DirichletParams& alpha, const SimplexVector& x);

/// Gamma(shape, 1) variate by Marsaglia-Tsang, boosted by u^(1/shape) below one.
double gamma_sample(double shape, Rng& rng);

SimplexVector dirichlet_sample(const DirichletParams& alpha, Rng& rng);

/// Fills row i of `out` with a Dirichlet draw, rows in order.
void dirichlet_sample_rows(const DirichletParams& alpha, Rng& rng, Matrix& out);

SimplexVector logistic_to_simplex(const EuclideanVector& y);
void logistic_to_simplex_into(std::span<const double> y, std::span<double> out);

/// Coordinates are clamped to at least this value before taking logs.
inline constexpr double kLogisticClamp = 1e-12;

EuclideanVector simplex_to_logistic(const SimplexVector& x);
void simplex_to_logistic_into(std::span<const double> x, std::span<double> out);

}  // namespace sxae
