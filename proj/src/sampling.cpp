#include "sxae/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace sxae {

Matrix uniform_sample(std::size_t dim, std::size_t count, Rng& rng) {
  if (dim < 2) throw InvalidInput("uniform_sample: dim must be >= 2");
  return alpha_sample(DirichletParams::broadcast(1.0, dim), count, rng);
}

Matrix alpha_sample(const DirichletParams& alpha, std::size_t count, Rng& rng) {
  Matrix out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(alpha.size()));
  dirichlet_sample_rows(alpha, rng, out);
  return out;
}

BinKey PmfIndex::key_of(std::span<const double> z) const {
  BinKey key(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double scaled = std::floor(std::clamp(z[i], 0.0, 1.0) * k_);
    key[i] = static_cast<std::uint16_t>(std::min<double>(scaled, k_ - 1));
  }
  return key;
}

PmfIndex PmfIndex::build(std::shared_ptr<const Matrix> points, std::uint32_t k) {
  if (k < 1 || k > 65535) throw InvalidInput("pmf_build: k must be in [1, 65535]");
  if (!points || points->rows() < 1) throw InvalidInput("pmf_build: need at least one point");
  PmfIndex idx;
  idx.k_ = k;
  idx.dim_ = static_cast<std::size_t>(points->cols());
  idx.points_ = std::move(points);
  const Matrix& z = *idx.points_;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    BinKey key = idx.key_of(std::span<const double>(z.row(r).data(), z.cols()));
    auto [it, inserted] = idx.lookup_.try_emplace(key, idx.bins_.size());
    if (inserted) idx.bins_.push_back({std::move(key), 0, {}});
    auto& bin = idx.bins_[it->second];
    ++bin.count;
    bin.members.push_back(static_cast<std::size_t>(r));
  }
  idx.total_ = static_cast<std::uint64_t>(z.rows());
  std::uint64_t acc = 0;
  for (const auto& b : idx.bins_) idx.cumulative_.push_back(acc += b.count);
  return idx;
}

PmfIndex pmf_build(const Matrix& z, std::uint32_t k) {
  return PmfIndex::build(std::make_shared<const Matrix>(z), k);
}

std::size_t PmfIndex::find(const BinKey& key) const {
  const auto it = lookup_.find(key);
  return it == lookup_.end() ? npos : it->second;
}

std::size_t PmfIndex::draw_bin(Rng& rng) const {
  const std::uint64_t u = std::uniform_int_distribution<std::uint64_t>(0, total_ - 1)(rng.engine());
  return static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) -
                                  cumulative_.begin());
}

Matrix pmf_sample(const PmfIndex& index, std::size_t count, Rng& rng, PmfSampleStats* stats) {
  if (index.occupied() == 0) throw InvalidInput("pmf_sample: empty index");
  const auto dim = static_cast<Eigen::Index>(index.dim());
  const double width = 1.0 / index.k();
  Matrix out(static_cast<Eigen::Index>(count), dim);
  std::vector<double> cand(index.dim());

  const auto box_draw = [&](const BinKey& key) {
    double sum = 0.0;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      cand[i] = (key[i] + rng.uniform()) * width;
      sum += cand[i];
    }
    for (double& c : cand) c /= sum;
  };

  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const std::size_t b = index.draw_bin(rng);
    const auto& bin = index.bins()[b];
    bool inside = false;
    for (int attempt = 0; attempt <= kPmfMaxRetries && !inside; ++attempt) {
      if (attempt > 0 && stats) ++stats->retries;
      box_draw(bin.key);
      inside = index.key_of(cand) == bin.key;
    }
    if (!inside) {
      const auto& pts = index.points();
      const auto member = static_cast<Eigen::Index>(bin.members[rng.index(bin.members.size())]);
      const double u = rng.uniform(0.8, 1.0);
      double sum = 0.0;
      for (Eigen::Index i = 0; i < dim; ++i) {
        cand[static_cast<std::size_t>(i)] = u * pts(member, i) + (1.0 - u) * cand[static_cast<std::size_t>(i)];
        sum += cand[static_cast<std::size_t>(i)];
      }
      for (double& c : cand) c /= sum;
      if (stats) {
        ++stats->fallbacks;
        if (index.key_of(cand) != bin.key) ++stats->outside_selected_bin;
      }
    }
    std::copy(cand.begin(), cand.end(), out.row(r).data());
    if (stats) {
      ++stats->draws;
      stats->selected.push_back(b);
    }
  }
  return out;
}

Matrix draw(const SamplerChoice& choice, std::size_t count, Rng& rng) {
  struct Visitor {
    std::size_t count;
    Rng& rng;
    Matrix operator()(const UniformSampler& s) const { return uniform_sample(s.dim, count, rng); }
    Matrix operator()(const AlphaSampler& s) const { return alpha_sample(s.alpha, count, rng); }
    Matrix operator()(const MixtureSampler& s) const {
      return sample_logistic_normal_mixture(s.model, count, rng);
    }
    Matrix operator()(const PmfSampler& s) const {
      if (!s.index) throw InvalidInput("draw: pmf sampler without an index");
      return pmf_sample(*s.index, count, rng);
    }
  };
  return std::visit(Visitor{count, rng}, choice);
}

}  // namespace sxae
