#pragma once

// Data-parallel inner loops. Each kernel exists twice: `reference` is the plain
// serial loop kept as the oracle for tests and benchmarks; `omp` distributes
// independent rows across threads. Both perform the same per-row arithmetic in
// the same order, so their outputs are bit-identical for any thread count.

#include <cstddef>
#include <vector>

#include "sxae/common.hpp"

namespace sxae::kernels {

struct GaussianTerm {
  Vector mean;
  Matrix chol_lower;  // L with L L^T = covariance
  double log_norm;    // ln weight - 0.5 (n ln 2pi + ln det covariance)
};

struct Neighbor {
  double dist2;
  std::size_t index;
};

namespace reference {

/// out(i, j) = |a_i - b_j|^2.
void sq_cost(const Matrix& a, const Matrix& b, Matrix& out);

/// out_i = -eps * LSE_j [ log_w_j + (pot_j - cost(i, j)) / eps ].
void softmin_rows(const Matrix& cost, const Vector& log_w, const Vector& pot, double eps,
                  Vector& out);

/// out(i, k) = ln w_k + ln N(y_i | mean_k, cov_k).
void gaussian_log_joint(const Matrix& y, const std::vector<GaussianTerm>& terms, Matrix& out);

/// k nearest rows of `train` to each row of `query`, sorted by (dist2, index).
void nearest(const Matrix& train, const Matrix& query, std::size_t k,
             std::vector<std::vector<Neighbor>>& out);

/// 2-D correlation of an H x W plane with a kernel under replicate padding.
/// The kernel is centered at (kh / 2, kw / 2).
void correlate_replicate(const Matrix& plane, const Matrix& kernel, Matrix& out);

}  // namespace reference

namespace omp {

void sq_cost(const Matrix& a, const Matrix& b, Matrix& out);
void softmin_rows(const Matrix& cost, const Vector& log_w, const Vector& pot, double eps,
                  Vector& out);
void gaussian_log_joint(const Matrix& y, const std::vector<GaussianTerm>& terms, Matrix& out);
void nearest(const Matrix& train, const Matrix& query, std::size_t k,
             std::vector<std::vector<Neighbor>>& out);
void correlate_replicate(const Matrix& plane, const Matrix& kernel, Matrix& out);

}  // namespace omp

}  // namespace sxae::kernels
