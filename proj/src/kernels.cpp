#include "sxae/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sxae::kernels {

namespace {

// Below this many scalar operations a parallel region costs more than it saves.
constexpr std::ptrdiff_t kParallelWork = 1 << 14;

inline double sq_dist(const double* a, const double* b, Eigen::Index d) {
  double acc = 0.0;
  for (Eigen::Index t = 0; t < d; ++t) {
    const double diff = a[t] - b[t];
    acc += diff * diff;
  }
  return acc;
}

inline void sq_cost_row(const Matrix& a, const Matrix& b, Matrix& out, Eigen::Index i) {
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    out(i, j) = sq_dist(a.row(i).data(), b.row(j).data(), a.cols());
  }
}

inline double softmin_row(const Matrix& cost, const Vector& log_w, const Vector& pot, double eps,
                          Eigen::Index i, std::vector<double>& buf) {
  const Eigen::Index k = cost.cols();
  const double inv_eps = 1.0 / eps;
  buf.resize(static_cast<std::size_t>(k));
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < k; ++j) {
    const double v = log_w[j] + (pot[j] - cost(i, j)) * inv_eps;
    buf[static_cast<std::size_t>(j)] = v;
    top = std::max(top, v);
  }
  double sum = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) sum += std::exp(buf[static_cast<std::size_t>(j)] - top);
  return -eps * (top + std::log(sum));
}

inline void log_joint_row(const Matrix& y, const std::vector<GaussianTerm>& terms, Matrix& out,
                          Eigen::Index i, Vector& scratch) {
  for (std::size_t c = 0; c < terms.size(); ++c) {
    const auto& t = terms[c];
    scratch = y.row(i).transpose() - t.mean;
    // Forward substitution L u = (y - mu); Mahalanobis term is |u|^2.
    const Eigen::Index n = scratch.size();
    double maha = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
      double v = scratch[r];
      for (Eigen::Index s = 0; s < r; ++s) v -= t.chol_lower(r, s) * scratch[s];
      v /= t.chol_lower(r, r);
      scratch[r] = v;
      maha += v * v;
    }
    out(i, static_cast<Eigen::Index>(c)) = t.log_norm - 0.5 * maha;
  }
}

inline void nearest_row(const Matrix& train, const Matrix& query, std::size_t k,
                        std::vector<Neighbor>& row_out, Eigen::Index q) {
  std::vector<Neighbor> all(static_cast<std::size_t>(train.rows()));
  for (Eigen::Index i = 0; i < train.rows(); ++i) {
    all[static_cast<std::size_t>(i)] = {
        sq_dist(query.row(q).data(), train.row(i).data(), train.cols()),
        static_cast<std::size_t>(i)};
  }
  const auto by_dist = [](const Neighbor& l, const Neighbor& r) {
    return l.dist2 < r.dist2 || (l.dist2 == r.dist2 && l.index < r.index);
  };
  const std::size_t kk = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk), all.end(),
                    by_dist);
  all.resize(kk);
  row_out = std::move(all);
}

inline void correlate_row(const Matrix& plane, const Matrix& kernel, Matrix& out,
                          Eigen::Index r) {
  const Eigen::Index h = plane.rows(), w = plane.cols();
  const Eigen::Index kh = kernel.rows(), kw = kernel.cols();
  const Eigen::Index cy = kh / 2, cx = kw / 2;
  for (Eigen::Index c = 0; c < w; ++c) {
    double acc = 0.0;
    for (Eigen::Index u = 0; u < kh; ++u) {
      const Eigen::Index rr = std::clamp<Eigen::Index>(r + u - cy, 0, h - 1);
      for (Eigen::Index v = 0; v < kw; ++v) {
        const Eigen::Index cc = std::clamp<Eigen::Index>(c + v - cx, 0, w - 1);
        acc += kernel(u, v) * plane(rr, cc);
      }
    }
    out(r, c) = acc;
  }
}

}  // namespace

namespace reference {

void sq_cost(const Matrix& a, const Matrix& b, Matrix& out) {
  out.resize(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) sq_cost_row(a, b, out, i);
}

void softmin_rows(const Matrix& cost, const Vector& log_w, const Vector& pot, double eps,
                  Vector& out) {
  out.resize(cost.rows());
  std::vector<double> buf;
  for (Eigen::Index i = 0; i < cost.rows(); ++i) out[i] = softmin_row(cost, log_w, pot, eps, i, buf);
}

void gaussian_log_joint(const Matrix& y, const std::vector<GaussianTerm>& terms, Matrix& out) {
  out.resize(y.rows(), static_cast<Eigen::Index>(terms.size()));
  Vector scratch(y.cols());
  for (Eigen::Index i = 0; i < y.rows(); ++i) log_joint_row(y, terms, out, i, scratch);
}

void nearest(const Matrix& train, const Matrix& query, std::size_t k,
             std::vector<std::vector<Neighbor>>& out) {
  out.assign(static_cast<std::size_t>(query.rows()), {});
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    nearest_row(train, query, k, out[static_cast<std::size_t>(q)], q);
  }
}

void correlate_replicate(const Matrix& plane, const Matrix& kernel, Matrix& out) {
  out.resize(plane.rows(), plane.cols());
  for (Eigen::Index r = 0; r < plane.rows(); ++r) correlate_row(plane, kernel, out, r);
}

}  // namespace reference

namespace omp {

void sq_cost(const Matrix& a, const Matrix& b, Matrix& out) {
  out.resize(a.rows(), b.rows());
  const std::ptrdiff_t work = a.rows() * b.rows() * a.cols();
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (Eigen::Index i = 0; i < a.rows(); ++i) sq_cost_row(a, b, out, i);
}

void softmin_rows(const Matrix& cost, const Vector& log_w, const Vector& pot, double eps,
                  Vector& out) {
  out.resize(cost.rows());
  const std::ptrdiff_t work = cost.rows() * cost.cols() * 8;
#pragma omp parallel if (work > kParallelWork)
  {
    std::vector<double> buf;
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < cost.rows(); ++i) out[i] = softmin_row(cost, log_w, pot, eps, i, buf);
  }
}

void gaussian_log_joint(const Matrix& y, const std::vector<GaussianTerm>& terms, Matrix& out) {
  out.resize(y.rows(), static_cast<Eigen::Index>(terms.size()));
  const std::ptrdiff_t work =
      y.rows() * static_cast<std::ptrdiff_t>(terms.size()) * y.cols() * y.cols();
#pragma omp parallel if (work > kParallelWork)
  {
    Vector scratch(y.cols());
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < y.rows(); ++i) log_joint_row(y, terms, out, i, scratch);
  }
}

void nearest(const Matrix& train, const Matrix& query, std::size_t k,
             std::vector<std::vector<Neighbor>>& out) {
  out.assign(static_cast<std::size_t>(query.rows()), {});
  const std::ptrdiff_t work = query.rows() * train.rows() * train.cols();
#pragma omp parallel for schedule(dynamic, 16) if (work > kParallelWork)
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    nearest_row(train, query, k, out[static_cast<std::size_t>(q)], q);
  }
}

void correlate_replicate(const Matrix& plane, const Matrix& kernel, Matrix& out) {
  out.resize(plane.rows(), plane.cols());
  const std::ptrdiff_t work = plane.size() * kernel.size();
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (Eigen::Index r = 0; r < plane.rows(); ++r) correlate_row(plane, kernel, out, r);
}

}  // namespace omp

}  // namespace sxae::kernels
