#include "sxae/metrics.hpp"

#include <cmath>
#include <map>

#include "sxae/kernels.hpp"

namespace sxae {

double psnr(const Matrix& x, const Matrix& x_hat, double max_val) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) throw InvalidInput("psnr: shape mismatch");
  if (!(max_val > 0.0)) throw InvalidInput("psnr: max_val must be > 0");
  if (x.size() == 0) throw InvalidInput("psnr: empty input");
  const double mse = (x - x_hat).squaredNorm() / static_cast<double>(x.size());
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(max_val * max_val / mse));
}

std::vector<int> knn_predict(const Matrix& train_z, const std::vector<int>& train_y,
                             const Matrix& test_z, std::size_t k) {
  if (train_z.rows() == 0 || test_z.rows() == 0) throw InvalidInput("knn: empty train or test set");
  if (static_cast<std::size_t>(train_z.rows()) != train_y.size()) throw InvalidInput("knn: label count mismatch");
  if (train_z.cols() != test_z.cols()) throw InvalidInput("knn: dimension mismatch");
  if (k < 1 || k > train_y.size()) throw InvalidInput("knn: k must be in [1, |train|]");
  std::vector<std::vector<kernels::Neighbor>> nn;
  kernels::omp::nearest(train_z, test_z, k, nn);
  std::vector<int> out(nn.size());
  for (std::size_t q = 0; q < nn.size(); ++q) {
    std::map<int, std::size_t> votes;
    for (const auto& n : nn[q]) ++votes[train_y[n.index]];
    std::size_t best = 0;
    for (const auto& [label, v] : votes) best = std::max(best, v);
    // Neighbors are sorted, so the first one carrying a top-voted label wins.
    for (const auto& n : nn[q]) {
      if (votes[train_y[n.index]] == best) {
        out[q] = train_y[n.index];
        break;
      }
    }
  }
  return out;
}

double knn_accuracy(const Matrix& train_z, const std::vector<int>& train_y, const Matrix& test_z,
                    const std::vector<int>& test_y, std::size_t k) {
  if (static_cast<std::size_t>(test_z.rows()) != test_y.size()) throw InvalidInput("knn: test label count mismatch");
  const auto pred = knn_predict(train_z, train_y, test_z, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == test_y[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

GaussianStats gaussian_stats(const Matrix& features) {
  if (features.rows() < 2) throw InvalidInput("gaussian_stats: need at least two rows");
  GaussianStats s;
  s.count = static_cast<std::size_t>(features.rows());
  s.mean = features.colwise().mean().transpose();
  const Matrix centered = features.rowwise() - s.mean.transpose();
  s.covariance = centered.transpose() * centered / static_cast<double>(features.rows() - 1);
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose()).eval();
  return s;
}

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen_or_throw(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericalFailure("frechet_distance: eigensolver failed");
  return es;
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size()) throw InvalidInput("frechet_distance: dimension mismatch");
  const Eigen::MatrixXd sa = a.covariance, sb = b.covariance;
  const auto ea = eigen_or_throw(sa);
  const Eigen::VectorXd root = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sa_half = ea.eigenvectors() * root.asDiagonal() * ea.eigenvectors().transpose();
  Eigen::MatrixXd inner = sa_half * sb * sa_half;
  inner = 0.5 * (inner + inner.transpose()).eval();
  const auto ei = eigen_or_throw(inner);
  // Negative rounding noise is clamped; the tolerance scales with the spectrum.
  const double floor = -1e-8 * std::max(1.0, std::abs(ei.eigenvalues().maxCoeff()));
  double trace_sqrt = 0.0;
  for (Eigen::Index i = 0; i < ei.eigenvalues().size(); ++i) {
    const double lam = ei.eigenvalues()[i];
    if (lam < floor) throw NumericalFailure("frechet_distance: covariance product has a negative eigenvalue");
    trace_sqrt += std::sqrt(std::max(lam, 0.0));
  }
  const double d = (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() - 2.0 * trace_sqrt;
  return std::max(d, 0.0);
}

}  // namespace sxae
