#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>

#include "sxae/data.hpp"
#include "sxae/network.hpp"

using namespace sxae;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

ParamStore random_params(const NetworkSpec& spec, Rng& rng) {
  auto p = ParamStore::glorot(spec, rng);
  // Non-zero biases so their gradients are exercised too.
  for (auto& l : p.layers) l.bias = Vector::NullaryExpr(l.bias.size(), [&] { return 0.3 * rng.normal(); });
  return p;
}

NetworkSpec toy(std::uint32_t in, std::uint32_t latent) {
  NetworkSpec s;
  s.encoder = {{in, latent, Activation::softmax}};
  s.decoder = {{latent, in, Activation::identity}};
  return s;
}

double& param_at(ParamStore& p, std::size_t layer, bool bias, Eigen::Index idx) {
  return bias ? p.layers[layer].bias[idx] : p.layers[layer].weight.data()[idx];
}

// Relative error of analytic gradients against central differences of `f`.
double gradient_error(const NetworkSpec& spec, ParamStore params, const Gradients& g,
                      const std::function<double(const ParamStore&)>& f, double h) {
  double diff2 = 0.0, ref2 = 0.0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    for (bool bias : {false, true}) {
      const Eigen::Index n = bias ? params.layers[l].bias.size() : params.layers[l].weight.size();
      for (Eigen::Index i = 0; i < n; ++i) {
        double& theta = param_at(params, l, bias, i);
        const double keep = theta;
        theta = keep + h;
        const double up = f(params);
        theta = keep - h;
        const double dn = f(params);
        theta = keep;
        const double fd = (up - dn) / (2 * h);
        const double an = bias ? g.layers[l].bias[i] : g.layers[l].weight.data()[i];
        diff2 += (an - fd) * (an - fd);
        ref2 += fd * fd;
      }
    }
  }
  return std::sqrt(diff2 / ref2);
}

double recon_loss(const NetworkSpec& spec, const ParamStore& p, const Matrix& x) {
  return (forward(spec, p, x).recon() - x).squaredNorm() / double(x.rows());
}

}  // namespace

TEST_CASE("spec validation and default architecture") {
  auto s = NetworkSpec::synthetic_default(20, 3);
  CHECK_NOTHROW(s.validate());
  CHECK(s.encoder.size() == 3);
  CHECK(s.encoder[0] == LayerSpec{20, 10, Activation::relu});
  CHECK(s.encoder[1] == LayerSpec{10, 5, Activation::relu});
  CHECK(s.encoder[2] == LayerSpec{5, 3, Activation::softmax});
  CHECK(s.decoder[0] == LayerSpec{3, 5, Activation::relu});
  CHECK(s.decoder[2] == LayerSpec{10, 20, Activation::identity});

  NetworkSpec bad = s;
  bad.encoder[1].activation = Activation::softmax;
  bad.encoder[2].activation = Activation::relu;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = s;
  bad.decoder[0].in_dim = 4;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = s;
  bad.encoder[1].in_dim = 9;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  CHECK_THROWS_AS(activation_from_code(9), InvalidInput);
}

TEST_CASE("zero network encodes to the barycenter and decodes to the bias image") {
  auto spec = NetworkSpec::mlp(6, {4}, 3);
  auto p = ParamStore::zeros(spec);
  p.layers.back().bias << 1, 2, 3, 4, 5, 6;
  Rng rng(1);
  auto pass = forward(spec, p, random_matrix(rng, 5, 6));
  for (Eigen::Index i = 0; i < 5; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(pass.latent()(i, j) == doctest::Approx(1.0 / 3));
    for (Eigen::Index j = 0; j < 6; ++j) CHECK(pass.recon()(i, j) == double(j + 1));
  }
}

TEST_CASE("single-sample forward equals the batched row") {
  auto spec = NetworkSpec::synthetic_default(20, 3);
  Rng rng(2);
  auto p = random_params(spec, rng);
  Matrix x = random_matrix(rng, 33, 20);
  auto pass = forward(spec, p, x);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> row(x.row(i).data(), x.row(i).data() + 20);
    auto one = forward(spec, p, row);
    for (int j = 0; j < 3; ++j) {
      CHECK(one.latent[j] == pass.latent()(i, j));
      CHECK(one.logits[j] == pass.logits()(i, j));
    }
    for (int j = 0; j < 20; ++j) CHECK(one.recon[j] == pass.recon()(i, j));
  }
  CHECK(encode(spec, p, x) == pass.latent());
  CHECK(decode(spec, p, pass.latent()) == pass.recon());
  CHECK_THROWS_AS(forward(spec, p, Matrix::Zero(2, 19)), InvalidInput);
}

TEST_CASE("latents stay on the simplex and keep the logit argmax") {
  NetworkSpec spec;
  spec.encoder = {{20, 10, Activation::relu}, {10, 5, Activation::silu}, {5, 4, Activation::softmax}};
  spec.decoder = {{4, 5, Activation::sigmoid}, {5, 20, Activation::identity}};
  Rng rng(3);
  auto p = random_params(spec, rng);
  Matrix x = random_matrix(rng, 1000, 20, 5.0);
  auto pass = forward(spec, p, x);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    REQUIRE(std::abs(pass.latent().row(i).sum() - 1.0) <= 1e-12);
    REQUIRE(pass.latent().row(i).minCoeff() >= 0.0);
    Eigen::Index a, b;
    pass.latent().row(i).maxCoeff(&a);
    pass.logits().row(i).maxCoeff(&b);
    REQUIRE(a == b);
  }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  auto spec = NetworkSpec::synthetic_default(20, 3);
  Rng rng(4);
  auto p = random_params(spec, rng);
  Matrix x = random_matrix(rng, 8, 20);
  auto pass = forward(spec, p, x);
  auto g = backward(spec, p, pass, Matrix::Zero(8, 20), Matrix::Zero(8, 3));
  for (const auto& l : g.layers) {
    CHECK(l.weight.isZero(0.0));
    CHECK(l.bias.isZero(0.0));
  }
}

TEST_CASE("reconstruction gradients match finite differences") {
  Rng rng(5);
  // The toy 3 -> 2 -> 3 net, then one net per hidden activation.
  std::vector<NetworkSpec> specs{toy(3, 2)};
  for (auto act : {Activation::relu, Activation::silu, Activation::sigmoid, Activation::identity})
    specs.push_back(NetworkSpec::mlp(4, {5}, 3, act));
  for (const auto& spec : specs) {
    auto p = random_params(spec, rng);
    Matrix x = random_matrix(rng, 6, spec.input_dim());
    auto pass = forward(spec, p, x);
    Matrix grad_recon = (2.0 / 6) * (pass.recon() - x);
    auto g = backward(spec, p, pass, grad_recon, Matrix::Zero(6, spec.latent_dim()));
    const double err = gradient_error(spec, p, g, [&](const ParamStore& q) { return recon_loss(spec, q, x); }, 1e-6);
    CHECK(err <= 1e-5);
  }
}

TEST_CASE("composite loss gradients match finite differences") {
  Rng rng(6);
  const auto spec = toy(5, 3);
  auto p = random_params(spec, rng);
  Matrix x = random_matrix(rng, 4, 5);
  const auto alpha = DirichletParams::broadcast(0.7, 3);
  SinkhornConfig cfg;
  cfg.epsilon = 0.05;  // fixed so the regularization does not move with the latents
  cfg.tol = 1e-12;
  cfg.max_iters = 100000;
  const Rng ref_rng(99);

  auto eval = [&](const ParamStore& q) {
    Rng r = ref_rng;
    auto pass = forward(spec, q, x);
    return loss(x, pass.recon(), pass.latent(), alpha, 1.0, cfg, r).total;
  };
  Rng r = ref_rng;
  auto pass = forward(spec, p, x);
  auto l = loss_with_grads(x, pass.recon(), pass.latent(), alpha, 1.0, cfg, r);
  REQUIRE(l.sinkhorn_converged);
  auto g = backward(spec, p, pass, l.grad_recon, l.grad_latent);
  CHECK(gradient_error(spec, p, g, eval, 1e-5) <= 2e-2);
}

TEST_CASE("loss examples") {
  Rng rng(7);
  const auto alpha = DirichletParams::broadcast(0.5, 3);
  Matrix x = random_matrix(rng, 16, 4);

  // Latents equal to the very reference sample the loss will draw.
  Rng stream(123);
  Rng copy = stream;
  Matrix z(16, 3);
  dirichlet_sample_rows(alpha, copy, z);
  auto v = loss(x, x, z, alpha, 100.0, SinkhornConfig{}, stream);
  CHECK(v.total <= 1e-6);

  Matrix xh = x.array() + 0.5;
  Rng s2(5);
  auto w = loss(x, xh, z, alpha, 0.0, SinkhornConfig{}, s2);
  CHECK(w.total == w.recon);
  CHECK(w.recon == doctest::Approx(4 * 0.25));
  CHECK_THROWS_AS(loss(x, xh, Matrix::Zero(15, 3), alpha, 1.0, SinkhornConfig{}, s2), InvalidInput);
}

TEST_CASE("loss golden value is reproducible across runs and thread counts") {
  auto spec = NetworkSpec::synthetic_default(20, 3);
  Rng init(2024);
  auto p = ParamStore::glorot(spec, init);
  Matrix x = random_matrix(init, 8, 20);
  const auto alpha = DirichletParams::broadcast(0.3, 3);
  double values[2];
  int threads[2] = {1, 4};
  for (int k = 0; k < 2; ++k) {
    omp_set_num_threads(threads[k]);
    Rng r(77);
    auto pass = forward(spec, p, x);
    values[k] = loss(x, pass.recon(), pass.latent(), alpha, 100.0, SinkhornConfig{}, r).total;
  }
  CHECK(std::memcmp(&values[0], &values[1], sizeof(double)) == 0);
  // Recorded at first build.
  CHECK(values[0] == 51.669798417079683);
}

TEST_CASE("adam properties") {
  NetworkSpec spec = toy(2, 2);
  Rng rng(8);
  auto p = random_params(spec, rng);
  const auto before = p;
  auto zero = Gradients::zeros_like(p);
  AdamConfig cfg;
  cfg.lr = 1e-3;
  for (int i = 0; i < 10; ++i) adam_step(p, zero, cfg);
  CHECK(p.same_weights(before));
  CHECK(p.step == 10);

  auto q = before;
  auto g = Gradients::zeros_like(q);
  g.layers[0].weight << 0.5, -2.0, 1e-3, -7.0;
  adam_step(q, g, cfg);
  Matrix delta = q.layers[0].weight - before.layers[0].weight;
  CHECK(delta(0, 0) == doctest::Approx(-cfg.lr).epsilon(1e-6));
  CHECK(delta(0, 1) == doctest::Approx(cfg.lr).epsilon(1e-6));
  CHECK(delta(1, 0) == doctest::Approx(-cfg.lr).epsilon(1e-4));
  CHECK(delta(1, 1) == doctest::Approx(cfg.lr).epsilon(1e-6));

  // A constant gradient keeps the step at lr however long it runs.
  auto r = before;
  g.layers[0].weight << 0.25, 0.25, 0.25, 0.25;
  Matrix last;
  for (int i = 0; i < 10000; ++i) {
    last = r.layers[0].weight;
    adam_step(r, g, cfg);
  }
  CHECK((last - r.layers[0].weight)(0, 0) == doctest::Approx(cfg.lr).epsilon(1e-6));
}

TEST_CASE("training") {
  SynthConfig sc;
  sc.n_samples = 2000;
  sc.seed = 3;
  auto ds = make_classification(sc);
  Matrix xtr = ds.features_of(Split::train);
  auto spec = NetworkSpec::synthetic_default(20, 3);

  TrainConfig cfg;
  cfg.alpha = DirichletParams::broadcast(0.3, 3);
  cfg.seed = 4;

  SUBCASE("zero learning rate leaves the initial weights") {
    cfg.learning_rate = 0.0;
    cfg.epochs = 1;
    Rng init(cfg.seed);
    auto start = ParamStore::glorot(spec, init);
    auto res = train(spec, cfg, xtr);
    CHECK(res.params.same_weights(start));
    REQUIRE(res.trace.size() == 1);
    CHECK(res.trace[0].epoch == 1);
    CHECK(std::isfinite(res.trace[0].total));
  }
  SUBCASE("loss improves and runs are bit-reproducible") {
    cfg.epochs = 6;
    auto a = train(spec, cfg, xtr);
    auto b = train(spec, cfg, xtr);
    REQUIRE(a.trace.size() == 6);
    CHECK(a.trace.back().recon < a.trace.front().recon);
    for (std::size_t e = 0; e < a.trace.size(); ++e) {
      CHECK(std::memcmp(&a.trace[e], &b.trace[e], sizeof(EpochLoss)) == 0);
      CHECK(a.trace[e].total == doctest::Approx(a.trace[e].recon + 100 * a.trace[e].penalty));
    }
    CHECK(serialize_checkpoint(spec, a.params) == serialize_checkpoint(spec, b.params));
  }
  SUBCASE("invalid configuration") {
    cfg.batch_size = 1;
    CHECK_THROWS_AS(train(spec, cfg, xtr), InvalidInput);
    cfg.batch_size = 64;
    cfg.alpha = DirichletParams::broadcast(1, 4);
    CHECK_THROWS_AS(train(spec, cfg, xtr), InvalidInput);
  }
}

TEST_CASE("checkpoint round trip") {
  auto spec = NetworkSpec::mlp(7, {6, 4}, 3, Activation::silu);
  Rng rng(9);
  auto p = random_params(spec, rng);
  const std::string bytes = serialize_checkpoint(spec, p);

  // magic + version + 2 counts + 6 layers * 9 bytes + parameters.
  std::size_t n_params = 0;
  for (const auto& l : p.layers) n_params += l.weight.size() + l.bias.size();
  CHECK(bytes.size() == 4 + 4 + 8 + 6 * 9 + 8 * n_params);
  CHECK(bytes.substr(0, 4) == "SXAE");

  auto ck = parse_checkpoint(bytes);
  CHECK(ck.spec == spec);
  CHECK(ck.params.same_weights(p));
  CHECK(serialize_checkpoint(ck.spec, ck.params) == bytes);

  auto dir = std::filesystem::temp_directory_path() / "sxae_test_network";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "m.sxae", spec, p);
  auto loaded = load_checkpoint(dir / "m.sxae");
  Matrix x = random_matrix(rng, 10, 7);
  CHECK(forward(spec, p, x).recon() == forward(loaded.spec, loaded.params, x).recon());
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupted checkpoints are rejected with an offset") {
  auto spec = toy(3, 2);
  Rng rng(10);
  const std::string bytes = serialize_checkpoint(spec, random_params(spec, rng));

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(parse_checkpoint(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  CHECK_THROWS_AS(parse_checkpoint(bad), FormatError);
  bad = bytes;
  bad[20] = 9;  // first activation code
  try {
    parse_checkpoint(bad);
    FAIL("bad activation accepted");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 20);
  }
  for (std::size_t cut = 0; cut < bytes.size(); cut += 7) {
    try {
      parse_checkpoint(bytes.substr(0, cut));
      FAIL("truncated checkpoint accepted at " << cut);
    } catch (const FormatError& e) {
      CHECK(e.offset() <= cut);
    }
  }
  CHECK_THROWS_AS(parse_checkpoint(bytes + "x"), FormatError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/m.sxae"), std::exception);
}
