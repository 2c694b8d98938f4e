#include "sxae/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sxae/binary_io.hpp"

namespace sxae {

namespace {

constexpr std::string_view kCheckpointMagic = "SXAE";
constexpr std::uint32_t kCheckpointVersion = 1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void apply_activation(Activation act, const Matrix& pre, Matrix& out) {
  out.resize(pre.rows(), pre.cols());
  switch (act) {
    case Activation::relu:
      out = pre.cwiseMax(0.0);
      break;
    case Activation::silu:
      out = pre.unaryExpr([](double x) { return x * sigmoid(x); });
      break;
    case Activation::sigmoid:
      out = pre.unaryExpr([](double x) { return sigmoid(x); });
      break;
    case Activation::identity:
      out = pre;
      break;
    case Activation::softmax:
      for (Eigen::Index r = 0; r < pre.rows(); ++r) {
        softmax_into(std::span<const double>(pre.row(r).data(), pre.cols()),
                     std::span<double>(out.row(r).data(), out.cols()));
      }
      break;
  }
}

// d loss / d pre given d loss / d out.
Matrix activation_backward(Activation act, const Matrix& pre, const Matrix& out,
                           const Matrix& grad_out) {
  switch (act) {
    case Activation::relu:
      return (pre.array() > 0.0).select(grad_out, 0.0);
    case Activation::silu: {
      Matrix d = pre.unaryExpr([](double x) {
        const double s = sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
      return grad_out.cwiseProduct(d);
    }
    case Activation::sigmoid:
      return grad_out.cwiseProduct(out.unaryExpr([](double s) { return s * (1.0 - s); }));
    case Activation::identity:
      return grad_out;
    case Activation::softmax: {
      // J = diag(z) - z z^T, applied row by row.
      Matrix g(out.rows(), out.cols());
      for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double inner = out.row(r).dot(grad_out.row(r));
        g.row(r) = out.row(r).array() * (grad_out.row(r).array() - inner);
      }
      return g;
    }
  }
  return grad_out;
}

DenseParams zeros_for(const LayerSpec& l) {
  return {Matrix::Zero(l.out_dim, l.in_dim), Vector::Zero(l.out_dim)};
}

void run_layers(const NetworkSpec& spec, const ParamStore& params, std::size_t first,
                std::size_t last, Matrix x, ForwardPass* pass, Matrix& result) {
  Matrix pre, out;
  for (std::size_t l = first; l < last; ++l) {
    const auto& p = params.layers[l];
    // Plain loops: each output row depends only on its input row, so a batch
    // and a single sample give bit-identical results.
    pre.resize(x.rows(), p.weight.rows());
    const Eigen::Index in = p.weight.cols();
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double* xi = x.row(i).data();
      for (Eigen::Index o = 0; o < p.weight.rows(); ++o) {
        const double* w = p.weight.row(o).data();
        double acc = 0.0;
        for (Eigen::Index k = 0; k < in; ++k) acc += xi[k] * w[k];
        pre(i, o) = acc + p.bias[o];
      }
    }
    apply_activation(spec.layer(l).activation, pre, out);
    if (pass) pass->pre.push_back(pre);
    x.swap(out);
    if (pass) pass->acts.push_back(x);
  }
  result = std::move(x);
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::silu: return "silu";
    case Activation::softmax: return "softmax";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "unknown";
}

Activation activation_from_code(std::uint8_t code) {
  if (code > static_cast<std::uint8_t>(Activation::identity)) {
    throw InvalidInput("unknown activation code " + std::to_string(code));
  }
  return static_cast<Activation>(code);
}

const LayerSpec& NetworkSpec::layer(std::size_t i) const {
  return i < encoder.size() ? encoder[i] : decoder[i - encoder.size()];
}

void NetworkSpec::validate() const {
  if (encoder.empty() || decoder.empty()) throw InvalidInput("NetworkSpec: empty encoder or decoder");
  const auto check_chain = [](const std::vector<LayerSpec>& ls, const char* which) {
    for (std::size_t i = 0; i < ls.size(); ++i) {
      if (ls[i].in_dim < 1 || ls[i].out_dim < 1) {
        throw InvalidInput(std::string("NetworkSpec: zero dimension in ") + which);
      }
      if (i > 0 && ls[i].in_dim != ls[i - 1].out_dim) {
        throw InvalidInput(std::string("NetworkSpec: shapes do not chain in ") + which);
      }
    }
  };
  check_chain(encoder, "encoder");
  check_chain(decoder, "decoder");
  if (encoder.back().activation != Activation::softmax) {
    throw InvalidInput("NetworkSpec: encoder must end in softmax");
  }
  for (std::size_t i = 0; i + 1 < encoder.size(); ++i) {
    if (encoder[i].activation == Activation::softmax) {
      throw InvalidInput("NetworkSpec: softmax only allowed as the final encoder activation");
    }
  }
  for (const auto& l : decoder) {
    if (l.activation == Activation::softmax) throw InvalidInput("NetworkSpec: softmax in decoder");
  }
  if (decoder.front().in_dim != latent_dim()) {
    throw InvalidInput("NetworkSpec: decoder input must equal latent dimension");
  }
  if (latent_dim() < 2) throw InvalidInput("NetworkSpec: latent dimension must be >= 2");
}

NetworkSpec NetworkSpec::mlp(std::uint32_t input, const std::vector<std::uint32_t>& hidden,
                             std::uint32_t latent, Activation hidden_act) {
  NetworkSpec s;
  std::uint32_t prev = input;
  for (auto h : hidden) {
    s.encoder.push_back({prev, h, hidden_act});
    prev = h;
  }
  s.encoder.push_back({prev, latent, Activation::softmax});
  prev = latent;
  for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) {
    s.decoder.push_back({prev, *it, hidden_act});
    prev = *it;
  }
  s.decoder.push_back({prev, input, Activation::identity});
  s.validate();
  return s;
}

NetworkSpec NetworkSpec::synthetic_default(std::uint32_t input, std::uint32_t latent) {
  return mlp(input, {10, 5}, latent, Activation::relu);
}

ParamStore ParamStore::zeros(const NetworkSpec& spec) {
  ParamStore p;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) p.layers.push_back(zeros_for(spec.layer(l)));
  p.first_moment = p.layers;
  p.second_moment = p.layers;
  return p;
}

ParamStore ParamStore::glorot(const NetworkSpec& spec, Rng& rng) {
  spec.validate();
  ParamStore p = zeros(spec);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const auto& ls = spec.layer(l);
    const double bound = std::sqrt(6.0 / static_cast<double>(ls.in_dim + ls.out_dim));
    auto& w = p.layers[l].weight;
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
    }
  }
  return p;
}

bool ParamStore::same_weights(const ParamStore& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weight != other.layers[l].weight || layers[l].bias != other.layers[l].bias) {
      return false;
    }
  }
  return true;
}

Gradients Gradients::zeros_like(const ParamStore& params) {
  Gradients g;
  for (const auto& l : params.layers) {
    g.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return g;
}

ForwardPass forward(const NetworkSpec& spec, const ParamStore& params, const Matrix& x) {
  if (x.cols() != static_cast<Eigen::Index>(spec.input_dim())) {
    throw InvalidInput("forward: input width " + std::to_string(x.cols()) + " != " +
                       std::to_string(spec.input_dim()));
  }
  if (params.layers.size() != spec.layer_count()) throw InvalidInput("forward: parameter count mismatch");
  ForwardPass pass;
  pass.encoder_layers = spec.encoder.size();
  pass.acts.push_back(x);
  Matrix out;
  run_layers(spec, params, 0, spec.layer_count(), x, &pass, out);
  return pass;
}

SingleForward forward(const NetworkSpec& spec, const ParamStore& params,
                      std::span<const double> x) {
  Matrix row(1, static_cast<Eigen::Index>(x.size()));
  std::copy(x.begin(), x.end(), row.data());
  const ForwardPass pass = forward(spec, params, row);
  const auto to_vec = [](const Matrix& m) { return std::vector<double>(m.data(), m.data() + m.size()); };
  return {to_vec(pass.logits()), SimplexVector(to_vec(pass.latent())), to_vec(pass.recon())};
}

Matrix encode(const NetworkSpec& spec, const ParamStore& params, const Matrix& x) {
  if (x.cols() != static_cast<Eigen::Index>(spec.input_dim())) throw InvalidInput("encode: input width mismatch");
  Matrix out;
  run_layers(spec, params, 0, spec.encoder.size(), x, nullptr, out);
  return out;
}

Matrix decode(const NetworkSpec& spec, const ParamStore& params, const Matrix& z) {
  if (z.cols() != static_cast<Eigen::Index>(spec.latent_dim())) throw InvalidInput("decode: latent width mismatch");
  Matrix out;
  run_layers(spec, params, spec.encoder.size(), spec.layer_count(), z, nullptr, out);
  return out;
}

Gradients backward(const NetworkSpec& spec, const ParamStore& params, const ForwardPass& pass,
                   const Matrix& grad_recon, const Matrix& grad_latent) {
  Gradients g = Gradients::zeros_like(params);
  Matrix grad = grad_recon;
  for (std::size_t l = spec.layer_count(); l-- > 0;) {
    if (l + 1 == spec.encoder.size()) grad += grad_latent;
    const Matrix d_pre = activation_backward(spec.layer(l).activation, pass.pre[l], pass.acts[l + 1], grad);
    g.layers[l].weight = d_pre.transpose() * pass.acts[l];
    g.layers[l].bias = d_pre.colwise().sum().transpose();
    if (l > 0) grad = d_pre * params.layers[l].weight;
  }
  return g;
}

LossWithGrads loss_with_grads(const Matrix& x, const Matrix& x_hat, const Matrix& z,
                              const DirichletParams& alpha, double lambda,
                              const SinkhornConfig& cfg, Rng& rng) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols() || z.rows() != x.rows()) {
    throw InvalidInput("loss: inconsistent batch shapes");
  }
  if (static_cast<std::size_t>(z.cols()) != alpha.size()) {
    throw InvalidInput("loss: alpha size must equal latent dimension");
  }
  const double b = static_cast<double>(x.rows());
  LossWithGrads out;
  const Matrix diff = x_hat - x;
  out.value.recon = diff.squaredNorm() / b;
  out.grad_recon = (2.0 / b) * diff;

  Matrix reference(z.rows(), z.cols());
  dirichlet_sample_rows(alpha, rng, reference);
  if (lambda != 0.0) {
    const auto sk = sinkhorn_value_and_grad(EmpiricalMeasure::uniform(z),
                                            EmpiricalMeasure::uniform(std::move(reference)), cfg);
    out.value.penalty = sk.value;
    out.grad_latent = lambda * sk.grad;
    out.sinkhorn_converged = sk.converged;
  } else {
    out.grad_latent = Matrix::Zero(z.rows(), z.cols());
  }
  out.value.total = out.value.recon + lambda * out.value.penalty;
  if (!std::isfinite(out.value.total)) throw NumericalFailure("loss: non-finite value");
  return out;
}

void adam_step(ParamStore& params, const Gradients& grads, const AdamConfig& cfg) {
  ++params.step;
  const double t = static_cast<double>(params.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    theta.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weight, grads.layers[l].weight, params.first_moment[l].weight,
           params.second_moment[l].weight);
    update(params.layers[l].bias, grads.layers[l].bias, params.first_moment[l].bias,
           params.second_moment[l].bias);
  }
}

void TrainConfig::validate(const NetworkSpec& spec) const {
  spec.validate();
  if (!(learning_rate >= 0.0) || !(lambda >= 0.0)) throw InvalidInput("TrainConfig: negative rate or lambda");
  if (epochs < 1) throw InvalidInput("TrainConfig: epochs must be >= 1");
  if (batch_size < 2) throw InvalidInput("TrainConfig: batch_size must be >= 2");
  if (alpha.size() != spec.latent_dim()) throw InvalidInput("TrainConfig: alpha size != latent dimension");
  sinkhorn.validate();
}

TrainResult train(const NetworkSpec& spec, const TrainConfig& cfg, const Matrix& data) {
  Rng init_rng(cfg.seed);
  return train(spec, cfg, data, ParamStore::glorot(spec, init_rng));
}

TrainResult train(const NetworkSpec& spec, const TrainConfig& cfg, const Matrix& data,
                  ParamStore init) {
  cfg.validate(spec);
  if (data.rows() < 1) throw InvalidInput("train: empty dataset");
  if (data.cols() != static_cast<Eigen::Index>(spec.input_dim())) throw InvalidInput("train: data width mismatch");

  TrainResult result{std::move(init), {}, 0};
  // Separate stream from the initializer so the two never alias.
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const AdamConfig adam{cfg.learning_rate};
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.rows()));
  std::iota(order.begin(), order.end(), 0);
  Matrix batch;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    EpochLoss acc{epoch};
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      if (end - start < 2) continue;
      batch.resize(static_cast<Eigen::Index>(end - start), data.cols());
      for (std::size_t r = start; r < end; ++r) batch.row(static_cast<Eigen::Index>(r - start)) = data.row(order[r]);
      try {
        const ForwardPass pass = forward(spec, result.params, batch);
        const auto l = loss_with_grads(batch, pass.recon(), pass.latent(), cfg.alpha, cfg.lambda,
                                       cfg.sinkhorn, rng);
        if (!l.sinkhorn_converged) ++result.unconverged_batches;
        adam_step(result.params, backward(spec, result.params, pass, l.grad_recon, l.grad_latent), adam);
        acc.recon += l.value.recon;
        acc.penalty += l.value.penalty;
        acc.total += l.value.total;
        ++batches;
      } catch (const NumericalFailure& e) {
        throw NumericalFailure("train: epoch " + std::to_string(epoch) + " batch " +
                               std::to_string(start / static_cast<std::size_t>(cfg.batch_size)) +
                               ": " + e.what());
      }
    }
    if (batches > 0) {
      acc.recon /= batches;
      acc.penalty /= batches;
      acc.total /= batches;
    }
    result.trace.push_back(acc);
  }
  return result;
}

std::string serialize_checkpoint(const NetworkSpec& spec, const ParamStore& params) {
  spec.validate();
  if (params.layers.size() != spec.layer_count()) throw InvalidInput("checkpoint: parameter count mismatch");
  std::string out(kCheckpointMagic);
  io::put_u32(out, kCheckpointVersion);
  for (const auto* block : {&spec.encoder, &spec.decoder}) {
    io::put_u32(out, static_cast<std::uint32_t>(block->size()));
    for (const auto& l : *block) {
      io::put_u32(out, l.in_dim);
      io::put_u32(out, l.out_dim);
      io::put_u8(out, static_cast<std::uint8_t>(l.activation));
    }
  }
  for (const auto& l : params.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) io::put_f64(out, l.weight.data()[i]);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) io::put_f64(out, l.bias[i]);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec,
                     const ParamStore& params) {
  io::write_file_atomic(path, serialize_checkpoint(spec, params));
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  io::Reader r(bytes, "checkpoint");
  r.expect_magic(kCheckpointMagic);
  const std::size_t version_at = r.offset();
  if (r.u32() != kCheckpointVersion) r.fail("unsupported version", version_at);
  Checkpoint ck;
  for (auto* block : {&ck.spec.encoder, &ck.spec.decoder}) {
    const std::size_t count_at = r.offset();
    const std::uint32_t count = r.u32();
    if (count == 0 || count > 4096) r.fail("implausible layer count", count_at);
    for (std::uint32_t i = 0; i < count; ++i) {
      LayerSpec l;
      l.in_dim = r.u32();
      l.out_dim = r.u32();
      const std::size_t act_at = r.offset();
      const std::uint8_t code = r.u8();
      if (code > static_cast<std::uint8_t>(Activation::identity)) r.fail("bad activation code", act_at);
      l.activation = static_cast<Activation>(code);
      block->push_back(l);
    }
  }
  const std::size_t spec_end = r.offset();
  try {
    ck.spec.validate();
  } catch (const InvalidInput& e) {
    r.fail(e.what(), spec_end);
  }
  std::uint64_t payload = 0;
  for (std::size_t l = 0; l < ck.spec.layer_count(); ++l) {
    const auto& ls = ck.spec.layer(l);
    payload += (std::uint64_t{ls.in_dim} * ls.out_dim + ls.out_dim) * 8;
  }
  if (payload != r.remaining()) {
    r.fail("payload size " + std::to_string(r.remaining()) + " != expected " + std::to_string(payload),
           spec_end);
  }
  ck.params = ParamStore::zeros(ck.spec);
  for (auto& l : ck.params.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = r.f64();
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = r.f64();
  }
  r.expect_end();
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_file(path));
}

}  // namespace sxae
