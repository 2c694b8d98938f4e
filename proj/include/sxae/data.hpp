#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sxae/common.hpp"

namespace sxae {

enum class Split : std::uint8_t { train = 0, validation = 1, test = 2 };

struct Dataset {
  Matrix features;
  std::vector<int> labels;
  std::vector<Split> splits;
  int n_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t count(Split s) const;
  /// Rows tagged `s`, in dataset order.
  Matrix features_of(Split s) const;
  std::vector<int> labels_of(Split s) const;
};

struct SynthConfig {
  std::size_t n_samples = 20000;
  std::size_t n_features = 20;
  std::size_t n_informative = 3;
  std::size_t n_redundant = 2;
  double class_sep = 5.0;
  int n_classes = 3;
  int clusters_per_class = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Gaussian clusters on hypercube vertices {+-class_sep/2}^n_informative with
/// unit within-class covariance, linear redundant features, N(0, 1) noise
/// features, shuffled columns and rows, split 1/2 : 1/4 : 1/4.
Dataset make_classification(const SynthConfig& cfg);

/// Sizes of the train/validation/test splits for `n` rows.
struct SplitSizes {
  std::size_t train, validation, test;
};
SplitSizes split_sizes(std::size_t n);

/// Parsed IDX file: big-endian header, unsigned-byte payload.
struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  /// One row per leading index; pixel values optionally scaled to [0, 1].
  Matrix to_matrix(bool normalize) const;
};

IdxTensor idx_parse(std::string_view bytes);
IdxTensor idx_read(const std::filesystem::path& path);

/// Dense f64 tensor in the SXTN container.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  static Tensor from_matrix(const Matrix& m);
  Matrix to_matrix() const;  // rank-1 becomes a column, rank-2 as stored
};

std::string tensor_serialize(const Tensor& t);
Tensor tensor_parse(std::string_view bytes);
void tensor_save(const std::filesystem::path& path, const Tensor& t);
Tensor tensor_load(const std::filesystem::path& path);

struct CsvTable {
  std::vector<std::string> headers;
  Matrix values;
};

std::string csv_format(const Matrix& m, const std::vector<std::string>& headers);
CsvTable csv_parse(std::string_view text);
void csv_export(const std::filesystem::path& path, const Matrix& m,
                const std::vector<std::string>& headers);
CsvTable csv_import(const std::filesystem::path& path);

}  // namespace sxae
