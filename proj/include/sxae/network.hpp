#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sxae/common.hpp"
#include "sxae/simplex.hpp"
#include "sxae/sinkhorn.hpp"

namespace sxae {

// Codes are part of the checkpoint format.
enum class Activation : std::uint8_t {
  relu = 0,
  silu = 1,
  softmax = 2,
  sigmoid = 3,
  identity = 4,
};

std::string to_string(Activation a);
Activation activation_from_code(std::uint8_t code);

struct LayerSpec {
  std::uint32_t in_dim = 0;
  std::uint32_t out_dim = 0;
  Activation activation = Activation::identity;

  bool operator==(const LayerSpec&) const = default;
};

/// Dense encoder/decoder pair. The encoder ends in a softmax head whose width
/// is the latent dimension (number of simplex coordinates).
struct NetworkSpec {
  std::vector<LayerSpec> encoder;
  std::vector<LayerSpec> decoder;

  bool operator==(const NetworkSpec&) const = default;

  void validate() const;
  std::uint32_t input_dim() const { return encoder.front().in_dim; }
  std::uint32_t latent_dim() const { return encoder.back().out_dim; }
  std::uint32_t output_dim() const { return decoder.back().out_dim; }
  std::size_t layer_count() const { return encoder.size() + decoder.size(); }
  const LayerSpec& layer(std::size_t i) const;

  /// input -> hidden... -> latent (softmax), latent -> reversed hidden... -> input.
  static NetworkSpec mlp(std::uint32_t input, const std::vector<std::uint32_t>& hidden,
                         std::uint32_t latent, Activation hidden_act = Activation::relu);
  /// 20 -> 10 -> 5 -> latent with relu; decoder latent -> 5 -> 10 -> 20.
  static NetworkSpec synthetic_default(std::uint32_t input = 20, std::uint32_t latent = 3);
};

struct DenseParams {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Trainable weights for every layer (encoder first), plus Adam state.
struct ParamStore {
  std::vector<DenseParams> layers;
  std::vector<DenseParams> first_moment;
  std::vector<DenseParams> second_moment;
  std::uint64_t step = 0;

  /// Glorot-uniform weights in +-sqrt(6 / (in + out)), zero biases.
  static ParamStore glorot(const NetworkSpec& spec, Rng& rng);
  static ParamStore zeros(const NetworkSpec& spec);

  /// Weights and biases only; optimizer state is ignored.
  bool same_weights(const ParamStore& other) const;
};

struct Gradients {
  std::vector<DenseParams> layers;
  static Gradients zeros_like(const ParamStore& params);
};

/// Batched forward pass; rows are samples. `acts[l]` is the input of layer l and
/// `acts.back()` the reconstruction; `pre[l]` holds pre-activation values.
struct ForwardPass {
  std::vector<Matrix> acts;
  std::vector<Matrix> pre;
  std::size_t encoder_layers = 0;

  const Matrix& logits() const { return pre[encoder_layers - 1]; }
  const Matrix& latent() const { return acts[encoder_layers]; }
  const Matrix& recon() const { return acts.back(); }
};

ForwardPass forward(const NetworkSpec& spec, const ParamStore& params, const Matrix& x);

struct SingleForward {
  std::vector<double> logits;
  SimplexVector latent;
  std::vector<double> recon;
};
SingleForward forward(const NetworkSpec& spec, const ParamStore& params,
                      std::span<const double> x);

Matrix encode(const NetworkSpec& spec, const ParamStore& params, const Matrix& x);
Matrix decode(const NetworkSpec& spec, const ParamStore& params, const Matrix& z);

/// Backpropagates loss gradients w.r.t. the reconstruction and (extra) w.r.t.
/// the latent codes through the whole network.
Gradients backward(const NetworkSpec& spec, const ParamStore& params, const ForwardPass& pass,
                   const Matrix& grad_recon, const Matrix& grad_latent);

struct LossValue {
  double total = 0.0;
  double recon = 0.0;
  double penalty = 0.0;
};

struct LossWithGrads {
  LossValue value;
  Matrix grad_recon;
  Matrix grad_latent;
  bool sinkhorn_converged = true;
};

/// total = mean_b |x_b - xhat_b|^2 + lambda * S(z, fresh Dir(alpha) sample of equal size).
/// The reference sample is drawn from `rng`.
LossWithGrads loss_with_grads(const Matrix& x, const Matrix& x_hat, const Matrix& z,
                              const DirichletParams& alpha, double lambda,
                              const SinkhornConfig& cfg, Rng& rng);

inline LossValue loss(const Matrix& x, const Matrix& x_hat, const Matrix& z,
                      const DirichletParams& alpha, double lambda, const SinkhornConfig& cfg,
                      Rng& rng) {
  return loss_with_grads(x, x_hat, z, alpha, lambda, cfg, rng).value;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(ParamStore& params, const Gradients& grads, const AdamConfig& cfg);

struct TrainConfig {
  double learning_rate = 1e-3;
  double lambda = 100.0;
  int epochs = 20;
  int batch_size = 64;
  DirichletParams alpha = DirichletParams::broadcast(1.0, 3);
  std::uint64_t seed = 0;
  SinkhornConfig sinkhorn;

  void validate(const NetworkSpec& spec) const;
};

struct EpochLoss {
  int epoch = 0;
  double recon = 0.0;
  double penalty = 0.0;
  double total = 0.0;
};

struct TrainResult {
  ParamStore params;
  std::vector<EpochLoss> trace;
  std::size_t unconverged_batches = 0;
};

/// Glorot init from cfg.seed, then epochs of shuffled minibatches. Batches
/// smaller than two rows (a ragged tail) are skipped.
TrainResult train(const NetworkSpec& spec, const TrainConfig& cfg, const Matrix& data);
TrainResult train(const NetworkSpec& spec, const TrainConfig& cfg, const Matrix& data,
                  ParamStore init);

void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec,
                     const ParamStore& params);
std::string serialize_checkpoint(const NetworkSpec& spec, const ParamStore& params);

struct Checkpoint {
  NetworkSpec spec;
  ParamStore params;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint parse_checkpoint(std::string_view bytes);

}  // namespace sxae
