#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <variant>
#include <vector>

#include "sxae/common.hpp"
#include "sxae/mixture.hpp"
#include "sxae/simplex.hpp"

namespace sxae {

Matrix uniform_sample(std::size_t dim, std::size_t count, Rng& rng);
Matrix alpha_sample(const DirichletParams& alpha, std::size_t count, Rng& rng);

using BinKey = std::vector<std::uint16_t>;

/// Sparse histogram of latent points over a k-per-coordinate grid of [0, 1].
/// Only occupied bins are stored.
class PmfIndex {
 public:
  struct Bin {
    BinKey key;
    std::uint64_t count = 0;
    std::vector<std::size_t> members;
  };

  /// key_i = min(floor(z_i * k), k - 1) over every ambient coordinate.
  static PmfIndex build(std::shared_ptr<const Matrix> points, std::uint32_t k);

  std::uint32_t k() const { return k_; }
  std::size_t dim() const { return dim_; }
  std::uint64_t total_count() const { return total_; }
  std::size_t occupied() const { return bins_.size(); }
  const std::vector<Bin>& bins() const { return bins_; }
  const Matrix& points() const { return *points_; }

  BinKey key_of(std::span<const double> z) const;
  /// Index into bins(), or npos when the bin is empty.
  std::size_t find(const BinKey& key) const;
  /// Bin index drawn with probability count / total.
  std::size_t draw_bin(Rng& rng) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::uint32_t k_ = 1;
  std::size_t dim_ = 0;
  std::uint64_t total_ = 0;
  std::vector<Bin> bins_;
  std::map<BinKey, std::size_t> lookup_;
  std::vector<std::uint64_t> cumulative_;
  std::shared_ptr<const Matrix> points_;
};

PmfIndex pmf_build(const Matrix& z, std::uint32_t k);

struct PmfSampleStats {
  std::size_t draws = 0;
  std::size_t retries = 0;
  std::size_t fallbacks = 0;
  std::size_t outside_selected_bin = 0;
  std::vector<std::size_t> selected;  // bin index chosen for each draw
};

inline constexpr int kPmfMaxRetries = 32;

/// Weighted bin selection, then a uniform box draw renormalized onto the
/// simplex; after kPmfMaxRetries misses the draw is blended with a random
/// member of the bin (member weight u ~ U[0.8, 1]).
Matrix pmf_sample(const PmfIndex& index, std::size_t count, Rng& rng,
                  PmfSampleStats* stats = nullptr);

struct UniformSampler {
  std::size_t dim = 3;
};
struct AlphaSampler {
  DirichletParams alpha;
};
struct MixtureSampler {
  GmmModel model;
};
struct PmfSampler {
  std::shared_ptr<const PmfIndex> index;
};

using SamplerChoice = std::variant<UniformSampler, AlphaSampler, MixtureSampler, PmfSampler>;

/// Rows are simplex points of the choice's latent dimension.
Matrix draw(const SamplerChoice& choice, std::size_t count, Rng& rng);

}  // namespace sxae
