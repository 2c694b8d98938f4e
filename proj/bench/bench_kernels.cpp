// Times each data-parallel kernel against its serial reference and checks the
// two agree bit for bit. Thread count follows OMP_NUM_THREADS.
#include <chrono>
#include <cstdio>
#include <functional>

#include <omp.h>

#include "sxae/kernels.hpp"
#include "sxae/mixture.hpp"

namespace {

using sxae::Matrix;
using sxae::Vector;
namespace k = sxae::kernels;

Matrix random_matrix(Eigen::Index r, Eigen::Index c, sxae::Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial, double parallel, bool same) {
  std::printf("%-22s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name, serial, parallel,
              serial / parallel, same ? "identical" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  sxae::Rng rng(7);

  {
    const Matrix a = random_matrix(1024, 16, rng), b = random_matrix(1024, 16, rng);
    Matrix s, p;
    const double ts = time_ms([&] { k::reference::sq_cost(a, b, s); }, 5);
    const double tp = time_ms([&] { k::omp::sq_cost(a, b, p); }, 5);
    report("sq_cost 1024x1024x16", ts, tp, s == p);
  }
  {
    Matrix cost = random_matrix(1024, 1024, rng).cwiseAbs();
    const Vector lw = Vector::Constant(1024, -std::log(1024.0)), pot = Vector::Zero(1024);
    Vector s, p;
    const double ts = time_ms([&] { k::reference::softmin_rows(cost, lw, pot, 0.05, s); }, 5);
    const double tp = time_ms([&] { k::omp::softmin_rows(cost, lw, pot, 0.05, p); }, 5);
    report("softmin 1024x1024", ts, tp, s == p);
  }
  {
    const Matrix y = random_matrix(20000, 8, rng);
    sxae::GmmModel model;
    model.weights = Vector::Constant(4, 0.25);
    std::vector<k::GaussianTerm> terms;
    for (int c = 0; c < 4; ++c) {
      terms.push_back({Vector::Constant(8, c), Matrix::Identity(8, 8), std::log(0.25)});
    }
    Matrix s, p;
    const double ts = time_ms([&] { k::reference::gaussian_log_joint(y, terms, s); }, 3);
    const double tp = time_ms([&] { k::omp::gaussian_log_joint(y, terms, p); }, 3);
    report("gmm log-joint 20000x4", ts, tp, s == p);
  }
  {
    const Matrix train = random_matrix(5000, 3, rng), query = random_matrix(1000, 3, rng);
    std::vector<std::vector<k::Neighbor>> s, p;
    const double ts = time_ms([&] { k::reference::nearest(train, query, 5, s); }, 2);
    const double tp = time_ms([&] { k::omp::nearest(train, query, 5, p); }, 2);
    bool same = s.size() == p.size();
    for (std::size_t i = 0; same && i < s.size(); ++i) {
      for (std::size_t j = 0; j < s[i].size(); ++j) same = same && s[i][j].index == p[i][j].index;
    }
    report("knn 5000 x 1000", ts, tp, same);
  }
  {
    const Matrix plane = random_matrix(512, 512, rng).cwiseAbs();
    const Matrix kern = Matrix::Constant(3, 3, 1.0 / 9.0);
    Matrix s, p;
    const double ts = time_ms([&] { k::reference::correlate_replicate(plane, kern, s); }, 5);
    const double tp = time_ms([&] { k::omp::correlate_replicate(plane, kern, p); }, 5);
    report("correlate 512x512 3x3", ts, tp, s == p);
  }
  return 0;
}
