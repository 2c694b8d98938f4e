#pragma once

#include <optional>

#include "sxae/common.hpp"

namespace sxae {

/// Weighted point cloud. Weights are non-negative and sum to one.
struct EmpiricalMeasure {
  Matrix points;
  Vector weights;

  /// Uniform weights 1/m over the rows of `points`.
  static EmpiricalMeasure uniform(Matrix points);
  EmpiricalMeasure(Matrix pts, Vector w);

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
};

struct SinkhornConfig {
  /// Entropic regularization in squared-cost units. Unset means
  /// `epsilon_factor * mean(C)` of the cross cost matrix, resolved per call.
  std::optional<double> epsilon;
  double epsilon_factor = 0.05;
  int max_iters = 200;
  double tol = 1e-6;
  bool debiased = true;

  void validate() const;
};

struct SinkhornPotentials {
  Vector f;
  Vector g;
  int iters_used = 0;
  bool converged = false;
  double epsilon = 0.0;
};

Matrix pairwise_sq_cost(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

/// Resolves cfg.epsilon against a cost matrix.
double resolve_epsilon(const SinkhornConfig& cfg, const Matrix& cost);

/// Alternating log-domain updates
///   f_i <- -eps LSE_j [ln wb_j + (g_j - C_ij) / eps]
///   g_j <- -eps LSE_i [ln wa_i + (f_i - C_ij) / eps]
/// until the sup-norm change of both potentials drops below cfg.tol.
/// Throws NumericalFailure naming the iteration if a potential turns NaN.
SinkhornPotentials sinkhorn_potentials(const Matrix& cost, const Vector& wa, const Vector& wb,
                                       const SinkhornConfig& cfg);

/// Potential of OT_eps(a, a) by the averaged symmetric update
///   f <- (f + T(f)) / 2,  T(f)_i = -eps LSE_j [ln w_j + (f_j - C_ij) / eps],
/// which does not oscillate the way alternating updates do on self-transport.
/// Returns f in both `f` and `g`.
SinkhornPotentials sinkhorn_self_potentials(const Matrix& cost, const Vector& w,
                                            const SinkhornConfig& cfg);

/// P_ij = wa_i wb_j exp((f_i + g_j - C_ij) / eps).
Matrix transport_plan(const Matrix& cost, const Vector& wa, const Vector& wb,
                      const SinkhornPotentials& pot);

/// Regularized OT value <wa, f> + <wb, g> at the fixed point.
double dual_value(const Vector& wa, const Vector& wb, const SinkhornPotentials& pot);

/// Raw OT_eps(a, b), or OT_eps(a, b) - (OT_eps(a, a) + OT_eps(b, b)) / 2 when debiased.
double sinkhorn_divergence(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                           const SinkhornConfig& cfg);

struct SinkhornGradient {
  double value = 0.0;
  Matrix grad;  // d value / d a.points
  bool converged = true;
  double epsilon = 0.0;
};

/// Divergence and its envelope gradient with respect to a.points, holding the
/// potentials fixed. `converged` is false if any inner solve hit max_iters.
SinkhornGradient sinkhorn_value_and_grad(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                                         const SinkhornConfig& cfg);

inline Matrix sinkhorn_grad_points(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                                   const SinkhornConfig& cfg) {
  return sinkhorn_value_and_grad(a, b, cfg).grad;
}

}  // namespace sxae
