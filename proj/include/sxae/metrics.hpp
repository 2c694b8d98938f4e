#pragma once

#include <vector>

#include "sxae/common.hpp"

namespace sxae {

/// Returned when the two inputs are identical.
inline constexpr double kPsnrCapDb = 200.0;

/// 10 log10(max_val^2 / MSE) over all entries.
double psnr(const Matrix& x, const Matrix& x_hat, double max_val);

/// Euclidean k-NN majority vote. A vote tie goes to the tied label whose
/// member is nearest; equal distances are ordered by training index.
double knn_accuracy(const Matrix& train_z, const std::vector<int>& train_y, const Matrix& test_z,
                    const std::vector<int>& test_y, std::size_t k);

std::vector<int> knn_predict(const Matrix& train_z, const std::vector<int>& train_y,
                             const Matrix& test_z, std::size_t k);

struct GaussianStats {
  Vector mean;
  Matrix covariance;
  std::size_t count = 0;
};

/// Sample mean and unbiased (m - 1) covariance, symmetrized.
GaussianStats gaussian_stats(const Matrix& features);

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), clamped at zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

}  // namespace sxae
