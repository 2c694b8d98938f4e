#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sxae/data.hpp"
#include "sxae/network.hpp"
#include "sxae/sampling.hpp"

namespace sxae {

/// Flat key=value run configuration. Unknown keys are rejected.
struct RunConfig {
  // model / training
  std::uint32_t dim = 3;
  double alpha = 30.0;
  double lambda = 100.0;
  double lr = 1e-4;
  int epochs = 20;
  int batch = 64;
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> hidden{10, 5};
  // sampling / evaluation
  std::string sampler = "uniform";
  std::string components;  // integer, "dim" or "classes"; empty means dim
  std::optional<std::uint32_t> k;
  std::size_t knn_k = 5;
  std::size_t count = 2000;
  std::string fit_split = "validation";  // latents that mm/pmf samplers are fitted on
  std::string export_split = "test";
  // dataset
  SynthConfig synth;
  std::string idx_images;
  std::string idx_labels;
  // paths
  std::filesystem::path out = ".";
  std::filesystem::path data_dir;
  std::filesystem::path checkpoint;

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  /// Applies one key=value pair.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  std::filesystem::path data_path() const { return data_dir.empty() ? out : data_dir; }
  std::filesystem::path checkpoint_path() const {
    return checkpoint.empty() ? out / "model.sxae" : checkpoint;
  }
  TrainConfig train_config() const;
  NetworkSpec network(std::uint32_t input_dim) const;
};

/// Split files written by gen-data: <split>_x.sxtn and <split>_y.sxtn.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds, std::uint64_t seed);
Matrix load_split_features(const std::filesystem::path& dir, Split s);
std::vector<int> load_split_labels(const std::filesystem::path& dir, Split s);
std::string split_name(Split s);
Split split_from_name(const std::string& name);

/// Sampler from its CLI name (uniform, alpha, mm, pmf), fitted to `latents`
/// where the strategy needs data.
SamplerChoice make_sampler(const std::string& name, const Matrix& latents, std::uint32_t dim,
                           double alpha, std::optional<std::size_t> components,
                           std::optional<std::uint32_t> k, std::uint64_t seed);

/// Report emitted by eval.
struct EvalReport {
  double psnr_db = 0.0;
  double knn_accuracy = 0.0;
  double frechet = 0.0;
  std::string sampler;
  std::size_t k = 0;
  std::uint32_t dim = 0;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

int cmd_gen_data(const RunConfig& cfg, std::ostream& out);
int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_sample(const RunConfig& cfg, std::ostream& out);
EvalReport evaluate(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg, std::ostream& out);
int cmd_latent_export(const RunConfig& cfg, const std::filesystem::path& csv, std::ostream& out);
int cmd_deconv(const std::filesystem::path& in, const std::filesystem::path& out_path, int iters,
               const std::string& psf, std::ostream& out);

/// Full command line (argv without the program name). Errors are reported on
/// `err` as one line `sxae: error[<kind>]: <message>`; returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sxae
