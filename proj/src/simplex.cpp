#include "sxae/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sxae {

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

SimplexVector::SimplexVector(std::vector<double> coords) : coords_(std::move(coords)) {
  if (!is_valid(coords_)) {
    throw InvalidInput("SimplexVector: coordinates must be non-negative and sum to 1");
  }
}

bool SimplexVector::is_valid(std::span<const double> coords, double tol) {
  if (coords.empty()) return false;
  double sum = 0.0;
  for (double c : coords) {
    if (!std::isfinite(c) || c < 0.0) return false;
    sum += c;
  }
  return std::abs(sum - 1.0) <= tol;
}

DirichletParams::DirichletParams(std::vector<double> alpha) : alpha_(std::move(alpha)) {
  if (alpha_.empty()) throw InvalidInput("DirichletParams: empty alpha");
  for (double a : alpha_) {
    if (!std::isfinite(a) || a <= 0.0) {
      throw InvalidInput("DirichletParams: alpha entries must be finite and > 0");
    }
  }
}

DirichletParams DirichletParams::broadcast(double value, std::size_t dim) {
  return DirichletParams(std::vector<double>(dim, value));
}

double DirichletParams::total() const {
  return std::accumulate(alpha_.begin(), alpha_.end(), 0.0);
}

EuclideanVector::EuclideanVector(std::vector<double> coords) : coords_(std::move(coords)) {
  if (!all_finite(coords_)) throw InvalidInput("EuclideanVector: non-finite coordinate");
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
}

SimplexVector softmax(std::span<const double> logits) {
  if (logits.empty() || !all_finite(logits)) {
    throw InvalidInput("softmax: logits must be non-empty and finite");
  }
  std::vector<double> out(logits.size());
  softmax_into(logits, out);
  return SimplexVector(std::move(out));
}

double log_beta(const DirichletParams& alpha) {
  double acc = 0.0;
  for (double a : alpha.values()) acc += std::lgamma(a);
  return acc - std::lgamma(alpha.total());
}

double dirichlet_log_pdf(const DirichletParams& alpha, const SimplexVector& x) {
  if (alpha.size() != x.size()) throw InvalidInput("dirichlet_log_pdf: dimension mismatch");
  double acc = -log_beta(alpha);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = alpha[i] - 1.0;
    if (x[i] == 0.0) {
      if (e < 0.0) throw DensityUnbounded("dirichlet_log_pdf: x_i = 0 with alpha_i < 1");
      if (e > 0.0) return -std::numeric_limits<double>::infinity();
      continue;
    }
    acc += e * std::log(x[i]);
  }
  return acc;
}

double gamma_sample(double shape, Rng& rng) {
  if (shape < 1.0) {
    // G(a) = G(a + 1) * U^(1/a)
    const double u = rng.uniform();
    return gamma_sample(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

namespace {

void dirichlet_into(const DirichletParams& alpha, Rng& rng, double* out) {
  const std::size_t n = alpha.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = gamma_sample(alpha[i], rng);
    sum += out[i];
  }
  if (sum <= 0.0) {
    // Every gamma draw underflowed (tiny alpha): the mass sits on the largest log-draw.
    // Redraw in log space: ln G = ln G(a+1) + ln(U)/a.
    std::vector<double> logs(n);
    for (std::size_t i = 0; i < n; ++i) {
      logs[i] = std::log(gamma_sample(alpha[i] + 1.0, rng)) + std::log(rng.uniform()) / alpha[i];
    }
    softmax_into(logs, std::span<double>(out, n));
    return;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
}

}  // namespace

SimplexVector dirichlet_sample(const DirichletParams& alpha, Rng& rng) {
  std::vector<double> out(alpha.size());
  dirichlet_into(alpha, rng, out.data());
  return SimplexVector(std::move(out));
}

void dirichlet_sample_rows(const DirichletParams& alpha, Rng& rng, Matrix& out) {
  if (static_cast<std::size_t>(out.cols()) != alpha.size()) {
    throw InvalidInput("dirichlet_sample_rows: column count must equal alpha size");
  }
  for (Eigen::Index r = 0; r < out.rows(); ++r) dirichlet_into(alpha, rng, out.row(r).data());
}

void logistic_to_simplex_into(std::span<const double> y, std::span<double> out) {
  // Softmax of the augmented vector (y, 0).
  double top = 0.0;
  for (double v : y) top = std::max(top, v);
  const std::size_t n = y.size();
  double sum = std::exp(-top);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(y[i] - top);
    sum += out[i];
  }
  out[n] = std::exp(-top);
  for (std::size_t i = 0; i <= n; ++i) out[i] /= sum;
}

SimplexVector logistic_to_simplex(const EuclideanVector& y) {
  std::vector<double> out(y.size() + 1);
  logistic_to_simplex_into(y.coords(), out);
  return SimplexVector(std::move(out));
}

void simplex_to_logistic_into(std::span<const double> x, std::span<double> out) {
  const std::size_t n = x.size() - 1;
  const double last = std::log(std::max(x[n], kLogisticClamp));
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(std::max(x[i], kLogisticClamp)) - last;
}

EuclideanVector simplex_to_logistic(const SimplexVector& x) {
  if (x.size() < 2) throw InvalidInput("simplex_to_logistic: need at least two coordinates");
  std::vector<double> out(x.size() - 1);
  simplex_to_logistic_into(x.coords(), out);
  return EuclideanVector(std::move(out));
}

}  // namespace sxae
