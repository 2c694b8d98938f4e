#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sxae/binary_io.hpp"
#include "sxae/commands.hpp"
#include "sxae/deconvolution.hpp"

using namespace sxae;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("sxae_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) { return io::read_file(p); }

// A small but learnable synthetic set.
const std::vector<std::string> kSmallData = {"--set", "n_samples=400", "--set", "n_features=8",
                                             "--set", "n_redundant=1"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"bogus"}).code == 2);
  CHECK(cli({"train", "--no-such-flag"}).code == 2);
  auto r = cli({"gen-data", "--set", "nonsense=1"});
  CHECK(r.code == 1);
  CHECK(r.err.find("error[invalid-input]") != std::string::npos);
  CHECK(r.err.find("unknown key 'nonsense'") != std::string::npos);
  CHECK(cli({"gen-data", "--set", "noequals"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("gen-data") {
  TempDir a("gen_a"), b("gen_b");
  SUBCASE("same seed, same bytes") {
    REQUIRE(cli(with({"gen-data", "--seed", "4", "--out", a / ""}, kSmallData)).code == 0);
    REQUIRE(cli(with({"gen-data", "--seed", "4", "--out", b / ""}, kSmallData)).code == 0);
    for (const char* f : {"train_x.sxtn", "train_y.sxtn", "validation_x.sxtn", "test_x.sxtn", "manifest.json"})
      CHECK(slurp(a / f) == slurp(b / f));
    const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
    CHECK(manifest["n_train"] == 200);
    CHECK(manifest["n_validation"] == 100);
    CHECK(manifest["n_test"] == 100);
    CHECK(manifest["n_features"] == 8);
    CHECK(manifest["n_classes"] == 3);
    CHECK(load_split_features(a.path, Split::train).rows() == 200);
  }
  SUBCASE("too many classes for the informative dimensions") {
    auto r = cli({"gen-data", "--out", a / "", "--set", "n_classes=300"});
    CHECK(r.code == 1);
    CHECK(r.err.find("hypercube vertices") != std::string::npos);
  }
  SUBCASE("idx import") {
    std::string images{0, 0, 8, 3, 0, 0, 0, 8, 0, 0, 0, 1, 0, 0, 0, 2};
    std::string labels{0, 0, 8, 1, 0, 0, 0, 8};
    for (int i = 0; i < 8; ++i) {
      images += {char(i * 30), char(255 - i * 30)};
      labels += char(i % 2);
    }
    std::ofstream(a / "img.idx", std::ios::binary) << images;
    std::ofstream(a / "lab.idx", std::ios::binary) << labels;
    auto r = cli({"gen-data", "--out", b / "", "--set", "idx_images=" + (a / "img.idx"), "--set",
                  "idx_labels=" + (a / "lab.idx")});
    REQUIRE(r.code == 0);
    const Matrix x = load_split_features(b.path, Split::train);
    CHECK(x.rows() == 4);
    CHECK(x.cols() == 2);
    CHECK((x.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK(cli({"gen-data", "--out", b / "", "--set", "idx_images=" + (a / "img.idx")}).code == 1);
  }
}

TEST_CASE("train, sample, eval, latent-export") {
  TempDir d("pipeline");
  const std::string dir = d / "";
  REQUIRE(cli(with({"gen-data", "--seed", "2", "--out", dir}, kSmallData)).code == 0);

  SUBCASE("zero learning rate keeps the initial weights") {
    auto r = cli({"train", "--seed", "9", "--out", dir, "--set", "lr=0", "--set", "epochs=2"});
    REQUIRE(r.code == 0);
    const Checkpoint ck = load_checkpoint(d / "model.sxae");
    RunConfig cfg;
    cfg.seed = 9;
    Rng rng(9);
    const ParamStore init = ParamStore::glorot(cfg.network(8), rng);
    REQUIRE(init.layers.size() == ck.params.layers.size());
    for (std::size_t l = 0; l < init.layers.size(); ++l) {
      CHECK(ck.params.layers[l].weight == init.layers[l].weight);
      CHECK(ck.params.layers[l].bias == init.layers[l].bias);
    }
    const CsvTable trace = csv_import(d / "loss_trace.csv");
    CHECK(trace.headers == std::vector<std::string>{"epoch", "recon", "penalty", "total"});
    CHECK(trace.values.rows() == 2);
    CHECK(trace.values(1, 3) == doctest::Approx(trace.values(1, 1) + 100.0 * trace.values(1, 2)));
  }

  SUBCASE("downstream commands") {
    REQUIRE(cli({"train", "--seed", "3", "--out", dir, "--set", "epochs=1", "--set", "lr=1e-3"}).code == 0);

    auto r = cli({"sample", "--out", dir, "--set", "count=10", "--set", "sampler=alpha", "--set", "alpha=0.5"});
    REQUIRE(r.code == 0);
    const Tensor s = tensor_load(d / "samples.sxtn");
    CHECK(s.dims == std::vector<std::uint32_t>{10, 8});
    const CsvTable z = csv_import(d / "sample_latents.csv");
    CHECK(z.headers == std::vector<std::string>{"z0", "z1", "z2"});
    CHECK(z.values.rows() == 10);
    CHECK((z.values.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-9);

    for (const char* sampler : {"uniform", "mm", "pmf"}) {
      CAPTURE(sampler);
      CHECK(cli({"sample", "--out", dir, "--set", std::string("sampler=") + sampler, "--set", "k=8",
                 "--set", "components=classes"})
                .code == 0);
    }
    r = cli({"sample", "--out", dir, "--set", "sampler=pmf"});
    CHECK(r.code == 1);
    CHECK(r.err.find("requires k") != std::string::npos);

    auto e1 = cli({"eval", "--out", dir, "--set", "count=200"});
    auto e2 = cli({"eval", "--out", dir, "--set", "count=200"});
    REQUIRE(e1.code == 0);
    CHECK(e1.out == e2.out);
    const auto report = nlohmann::json::parse(slurp(d / "metrics.json"));
    CHECK(report.size() == 7);
    for (const char* key : {"psnr_db", "knn_accuracy", "frechet", "sampler", "k", "dim", "seed"})
      CHECK(report.contains(key));
    CHECK(report["sampler"] == "uniform");
    CHECK(report["dim"] == 3);
    CHECK(report["knn_accuracy"].get<double>() >= 0.0);
    CHECK(report["knn_accuracy"].get<double>() <= 1.0);
    CHECK(report["frechet"].get<double>() >= 0.0);

    REQUIRE(cli({"latent-export", d / "z.csv", "--out", dir}).code == 0);
    const CsvTable t = csv_import(d / "z.csv");
    CHECK(t.headers == std::vector<std::string>{"z0", "z1", "z2", "label"});
    CHECK(t.values.rows() == 100);
    const Checkpoint ck = load_checkpoint(d / "model.sxae");
    const Matrix x = load_split_features(d.path, Split::test);
    const Matrix enc = encode(ck.spec, ck.params, x);
    CHECK((t.values.leftCols(3) - enc).cwiseAbs().maxCoeff() <= 1e-14);
    const auto y = load_split_labels(d.path, Split::test);
    for (std::size_t i = 0; i < y.size(); ++i) REQUIRE(t.values(Eigen::Index(i), 3) == y[i]);
  }

  SUBCASE("missing checkpoint") {
    auto r = cli({"eval", "--out", dir, "--checkpoint", d / "nope.sxae"});
    CHECK(r.code == 1);
    CHECK(r.err.find("error[") != std::string::npos);
  }
}

TEST_CASE("deconv") {
  TempDir d("deconv");
  // Gray 5x5 scene; expected bytes after 30 flat-PSF iterations come from an
  // independent numpy implementation.
  const std::vector<int> in{10, 10, 10, 10, 10, 10, 200, 60, 10, 10, 10, 60, 250,
                            90, 10, 10, 10, 90, 120, 10, 10, 10, 10, 10, 10};
  const std::vector<int> want{0, 0, 0, 0, 21, 0, 98, 44, 1, 0, 0, 44, 255,
                              26, 0, 0, 1, 26, 104, 0, 21, 0, 0, 0, 0};
  std::string pgm = "P5\n5 5\n255\n", expect = pgm;
  for (int v : in) pgm += char(v);
  for (int v : want) expect += char(v);
  std::ofstream(d / "in.pgm", std::ios::binary) << pgm;

  REQUIRE(cli({"deconv", d / "in.pgm", d / "out.pgm"}).code == 0);
  CHECK(slurp(d / "out.pgm") == expect);

  REQUIRE(cli({"deconv", d / "in.pgm", d / "same.pgm", "--psf", "delta", "--iters", "7"}).code == 0);
  CHECK(slurp(d / "same.pgm") == pgm);

  Tensor t{{2, 3, 4}, std::vector<double>(24, 0.25)};
  tensor_save(d / "in.sxtn", t);
  REQUIRE(cli({"deconv", d / "in.sxtn", d / "out.sxtn"}).code == 0);
  const Tensor back = tensor_load(d / "out.sxtn");
  CHECK(back.dims == t.dims);
  for (double v : back.values) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  CHECK(cli({"deconv", d / "missing.pgm", d / "x.pgm"}).code == 1);
  CHECK(cli({"deconv", d / "in.pgm", d / "x.pgm", "--psf", "gauss"}).code == 1);
  CHECK(cli({"deconv", d / "in.pgm", d / "x.pgm", "--iters", "0"}).code == 1);
  CHECK(cli({"deconv", d / "in.pgm"}).code == 2);
}

TEST_CASE("installed binary") {
  TempDir d("binary");
  const std::string exe = SXAE_CLI_PATH;
  REQUIRE(fs::exists(exe));
  const auto run = [&](const std::string& args) {
    return std::system((exe + " " + args + " >" + (d / "log.txt") + " 2>&1").c_str());
  };
  CHECK(run("gen-data --seed 1 --out " + (d / "") + " --set n_samples=60") == 0);
  CHECK(fs::exists(d.path / "train_x.sxtn"));
  const int bad = run("gen-data --out " + (d / "") + " --set n_classes=300");
  CHECK(WEXITSTATUS(bad) == 1);
  CHECK(slurp(d / "log.txt").find("sxae: error[invalid-input]") != std::string::npos);
  CHECK(WEXITSTATUS(run("")) == 2);
}
