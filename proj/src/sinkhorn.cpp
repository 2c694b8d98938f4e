#include "sxae/sinkhorn.hpp"

#include <cmath>
#include <string>

#include "sxae/kernels.hpp"

namespace sxae {

namespace {

Vector log_weights(const Vector& w) {
  Vector out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) out[i] = std::log(w[i]);
  return out;
}

bool has_nan(const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) return true;
  }
  return false;
}

struct Solve {
  SinkhornPotentials pot;
  Matrix plan;
};

Solve solve_with_plan(const Matrix& cost, const Vector& wa, const Vector& wb,
                      const SinkhornConfig& cfg, double eps) {
  SinkhornConfig fixed = cfg;
  fixed.epsilon = eps;
  Solve s{sinkhorn_potentials(cost, wa, wb, fixed), {}};
  s.plan = transport_plan(cost, wa, wb, s.pot);
  return s;
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(Matrix pts, Vector w) : points(std::move(pts)), weights(std::move(w)) {
  if (points.rows() < 1) throw InvalidInput("EmpiricalMeasure: need at least one point");
  if (weights.size() != points.rows()) {
    throw InvalidInput("EmpiricalMeasure: weight count must equal point count");
  }
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12) {
    throw InvalidInput("EmpiricalMeasure: weights must be non-negative and sum to 1");
  }
}

EmpiricalMeasure EmpiricalMeasure::uniform(Matrix points) {
  const Eigen::Index m = points.rows();
  if (m < 1) throw InvalidInput("EmpiricalMeasure: need at least one point");
  return EmpiricalMeasure(std::move(points), Vector::Constant(m, 1.0 / static_cast<double>(m)));
}

void SinkhornConfig::validate() const {
  if (epsilon && !(*epsilon > 0.0)) throw InvalidInput("SinkhornConfig: epsilon must be > 0");
  if (!(epsilon_factor > 0.0)) throw InvalidInput("SinkhornConfig: epsilon_factor must be > 0");
  if (max_iters < 1) throw InvalidInput("SinkhornConfig: max_iters must be >= 1");
  if (!(tol > 0.0)) throw InvalidInput("SinkhornConfig: tol must be > 0");
}

Matrix pairwise_sq_cost(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.dim() != b.dim()) throw InvalidInput("pairwise_sq_cost: point dimension mismatch");
  Matrix out;
  kernels::omp::sq_cost(a.points, b.points, out);
  return out;
}

double resolve_epsilon(const SinkhornConfig& cfg, const Matrix& cost) {
  if (cfg.epsilon) return *cfg.epsilon;
  double mean = 0.0;
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.cols(); ++j) mean += cost(i, j);
  }
  mean /= static_cast<double>(cost.size());
  // Coincident clouds have zero cost; any positive scale gives the same answer there.
  return mean > 0.0 ? cfg.epsilon_factor * mean : cfg.epsilon_factor;
}

SinkhornPotentials sinkhorn_potentials(const Matrix& cost, const Vector& wa, const Vector& wb,
                                       const SinkhornConfig& cfg) {
  cfg.validate();
  if (cost.rows() != wa.size() || cost.cols() != wb.size()) {
    throw InvalidInput("sinkhorn_potentials: cost shape does not match weights");
  }
  const double eps = resolve_epsilon(cfg, cost);
  const Matrix cost_t = cost.transpose();
  const Vector log_wa = log_weights(wa);
  const Vector log_wb = log_weights(wb);

  SinkhornPotentials pot;
  pot.epsilon = eps;
  pot.f = Vector::Zero(cost.rows());
  pot.g = Vector::Zero(cost.cols());
  Vector f_next, g_next;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    kernels::omp::softmin_rows(cost, log_wb, pot.g, eps, f_next);
    kernels::omp::softmin_rows(cost_t, log_wa, f_next, eps, g_next);
    if (has_nan(f_next) || has_nan(g_next)) {
      throw NumericalFailure("sinkhorn: non-finite potential at iteration " + std::to_string(it));
    }
    const double change = std::max((f_next - pot.f).lpNorm<Eigen::Infinity>(),
                                   (g_next - pot.g).lpNorm<Eigen::Infinity>());
    pot.f.swap(f_next);
    pot.g.swap(g_next);
    pot.iters_used = it;
    if (change < cfg.tol) {
      pot.converged = true;
      break;
    }
  }
  return pot;
}

SinkhornPotentials sinkhorn_self_potentials(const Matrix& cost, const Vector& w,
                                            const SinkhornConfig& cfg) {
  cfg.validate();
  if (cost.rows() != w.size() || cost.cols() != w.size()) {
    throw InvalidInput("sinkhorn_self_potentials: cost must be square and match weights");
  }
  const double eps = resolve_epsilon(cfg, cost);
  const Vector log_w = log_weights(w);
  SinkhornPotentials pot;
  pot.epsilon = eps;
  pot.f = Vector::Zero(cost.rows());
  Vector t;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    kernels::omp::softmin_rows(cost, log_w, pot.f, eps, t);
    if (has_nan(t)) {
      throw NumericalFailure("sinkhorn: non-finite potential at iteration " + std::to_string(it));
    }
    t = 0.5 * (pot.f + t);
    const double change = (t - pot.f).lpNorm<Eigen::Infinity>();
    pot.f.swap(t);
    pot.iters_used = it;
    if (change < cfg.tol) {
      pot.converged = true;
      break;
    }
  }
  pot.g = pot.f;
  return pot;
}

Matrix transport_plan(const Matrix& cost, const Vector& wa, const Vector& wb,
                      const SinkhornPotentials& pot) {
  Matrix plan(cost.rows(), cost.cols());
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      plan(i, j) = wa[i] * wb[j] * std::exp((pot.f[i] + pot.g[j] - cost(i, j)) / pot.epsilon);
    }
  }
  return plan;
}

double dual_value(const Vector& wa, const Vector& wb, const SinkhornPotentials& pot) {
  return wa.dot(pot.f) + wb.dot(pot.g);
}

double sinkhorn_divergence(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                           const SinkhornConfig& cfg) {
  const Matrix cab = pairwise_sq_cost(a, b);
  const double eps = resolve_epsilon(cfg, cab);
  SinkhornConfig fixed = cfg;
  fixed.epsilon = eps;
  const double ab = dual_value(a.weights, b.weights, sinkhorn_potentials(cab, a.weights, b.weights, fixed));
  if (!cfg.debiased) return ab;
  const double aa = dual_value(a.weights, a.weights,
                               sinkhorn_self_potentials(pairwise_sq_cost(a, a), a.weights, fixed));
  const double bb = dual_value(b.weights, b.weights,
                               sinkhorn_self_potentials(pairwise_sq_cost(b, b), b.weights, fixed));
  return ab - 0.5 * (aa + bb);
}

SinkhornGradient sinkhorn_value_and_grad(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                                         const SinkhornConfig& cfg) {
  const Matrix cab = pairwise_sq_cost(a, b);
  const double eps = resolve_epsilon(cfg, cab);
  SinkhornGradient out;
  out.epsilon = eps;

  const Solve ab = solve_with_plan(cab, a.weights, b.weights, cfg, eps);
  out.converged = ab.pot.converged;
  out.value = dual_value(a.weights, b.weights, ab.pot);

  // d/da_i <P, C> = 2 (wa_i a_i - sum_j P_ij b_j), using row sums of P equal to wa.
  Matrix weighted_a = a.points.array().colwise() * a.weights.array();
  out.grad = 2.0 * (weighted_a - ab.plan * b.points);

  if (cfg.debiased) {
    SinkhornConfig fixed = cfg;
    fixed.epsilon = eps;
    const Matrix caa = pairwise_sq_cost(a, a);
    Solve aa{sinkhorn_self_potentials(caa, a.weights, fixed), {}};
    aa.plan = transport_plan(caa, a.weights, a.weights, aa.pot);
    const auto bb = sinkhorn_self_potentials(pairwise_sq_cost(b, b), b.weights, fixed);
    out.converged = out.converged && aa.pot.converged && bb.converged;
    out.value -= 0.5 * (dual_value(a.weights, a.weights, aa.pot) +
                        dual_value(b.weights, b.weights, bb));
    out.grad -= 2.0 * (weighted_a - aa.plan * a.points);
  }
  return out;
}

}  // namespace sxae
