// Acceptance experiments on the synthetic regime. One PASS/FAIL line per
// criterion; exit status is nonzero when any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sxae/binary_io.hpp"
#include "sxae/commands.hpp"
#include "sxae/metrics.hpp"

using namespace sxae;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Trained {
  Dataset data;
  NetworkSpec spec;
  TrainResult result;
  double seconds = 0.0;

  Matrix latents(Split s) const { return encode(spec, result.params, data.features_of(s)); }
};

// Synthetic-regime recipe: default data generator, default MLP, lr 1e-3.
Trained train_model(int classes, std::uint32_t dim, double alpha, std::uint64_t seed) {
  const auto t0 = Clock::now();
  Trained t;
  SynthConfig sc;
  sc.n_classes = classes;
  sc.seed = seed;
  t.data = make_classification(sc);
  t.spec = NetworkSpec::synthetic_default(std::uint32_t(sc.n_features), dim);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.lambda = 100.0;
  tc.epochs = 20;
  tc.batch_size = 64;
  tc.alpha = DirichletParams::broadcast(alpha, dim);
  tc.seed = seed;
  t.result = train(t.spec, tc, t.data.features_of(Split::train));
  t.seconds = seconds_since(t0);
  return t;
}

// Models shared between criteria are trained once; their training time is
// charged to every criterion that uses them.
std::map<std::string, Trained> g_models;

const Trained& model(int classes, std::uint32_t dim, double alpha, std::uint64_t seed) {
  std::ostringstream key;
  key << classes << "/" << dim << "/" << alpha << "/" << seed;
  auto it = g_models.find(key.str());
  if (it == g_models.end()) it = g_models.emplace(key.str(), train_model(classes, dim, alpha, seed)).first;
  return it->second;
}

double fraction_concentrated(const Matrix& z) {
  return (z.rowwise().maxCoeff().array() > 0.9).cast<double>().mean();
}

double sampler_fd(const Trained& t, const std::string& name, std::optional<std::size_t> components,
                  std::optional<std::uint32_t> k, std::uint64_t seed) {
  const std::uint32_t dim = t.spec.latent_dim();
  const SamplerChoice choice =
      make_sampler(name, t.latents(Split::validation), dim, 0.3, components, k, seed);
  Rng rng(seed);
  const Matrix generated = decode(t.spec, t.result.params, draw(choice, 2000, rng));
  return frechet_distance(gaussian_stats(generated),
                          gaussian_stats(t.data.features_of(Split::test).topRows(2000)));
}

int g_failures = 0;

void report(int id, bool pass, double seconds, double budget, const std::string& detail) {
  const bool ok = pass && seconds <= budget;
  g_failures += !ok;
  std::printf("criterion %d: %s  (%.1f s of %.0f s)  %s\n", id, ok ? "PASS" : "FAIL", seconds, budget,
              detail.c_str());
  std::fflush(stdout);
}

void criterion_1() {
  const auto t0 = Clock::now();
  const Trained& t = model(3, 3, 0.3, 0);
  const double acc = knn_accuracy(t.latents(Split::validation), t.data.labels_of(Split::validation),
                                  t.latents(Split::test), t.data.labels_of(Split::test), 5);
  std::ostringstream d;
  d << "5-NN accuracy " << acc << " (need >= 0.90)";
  report(1, acc >= 0.90, seconds_since(t0), 120, d.str());
}

void criterion_2() {
  const auto t0 = Clock::now();
  double loss7 = 0.0, loss8 = 0.0;
  for (std::uint64_t seed : {0, 1, 2}) {
    loss7 += train_model(7, 3, 0.3, seed).result.trace.back().total / 3.0;
    loss8 += train_model(8, 3, 0.3, seed).result.trace.back().total / 3.0;
  }
  std::ostringstream d;
  d << "mean final loss 7 classes " << loss7 << ", 8 classes " << loss8 << ", ratio " << loss8 / loss7
    << " (need >= 1.5)";
  report(2, loss8 / loss7 >= 1.5, seconds_since(t0), 900, d.str());
}

void criterion_3() {
  const auto t0 = Clock::now();
  const double charged = g_models.count("3/3/0.3/0") ? g_models.at("3/3/0.3/0").seconds : 0.0;
  const double low = fraction_concentrated(model(3, 3, 0.3, 0).latents(Split::test));
  const double high = fraction_concentrated(model(3, 3, 30.0, 0).latents(Split::test));
  std::ostringstream d;
  d << "max coordinate > 0.9: alpha=0.3 " << low << " (need >= 0.60), alpha=30 " << high
    << " (need <= 0.05)";
  report(3, low >= 0.60 && high <= 0.05, seconds_since(t0) + charged, 240, d.str());
}

void criterion_4() {
  const auto t0 = Clock::now();
  const double charged = g_models.count("3/3/0.3/0") ? g_models.at("3/3/0.3/0").seconds : 0.0;
  const Trained& t = model(3, 3, 0.3, 0);
  const double fd_u = sampler_fd(t, "uniform", std::nullopt, std::nullopt, 0);
  const double fd_pmf = sampler_fd(t, "pmf", std::nullopt, 20, 0);
  const double fd_mm = sampler_fd(t, "mm", 3, std::nullopt, 0);
  std::ostringstream d;
  d << "FD uniform " << fd_u << ", pmf(k=20) " << fd_pmf << " (" << 100 * (1 - fd_pmf / fd_u)
    << "% lower), mm(K=3) " << fd_mm << " (" << 100 * (1 - fd_mm / fd_u) << "% lower), need >= 20% each";
  report(4, fd_pmf <= 0.8 * fd_u && fd_mm <= 0.8 * fd_u, seconds_since(t0) + charged, 180, d.str());
}

void criterion_5() {
  const auto t0 = Clock::now();
  const double charged = g_models.count("3/3/0.3/0") ? g_models.at("3/3/0.3/0").seconds : 0.0;
  std::ostringstream d;
  bool pass = true;
  for (auto [classes, dim] : {std::pair{3, 3u}, std::pair{4, 4u}}) {
    const Trained& t = model(classes, dim, 0.3, 0);
    const double by_class = sampler_fd(t, "mm", std::size_t(classes), std::nullopt, 0);
    const double by_dim = sampler_fd(t, "mm", std::size_t(dim), std::nullopt, 0);
    const double gap = std::abs(by_class - by_dim) / std::min(by_class, by_dim);
    pass = pass && gap <= 0.25;
    d << classes << " classes/dim " << dim << ": FD K=classes " << by_class << ", K=dim " << by_dim
      << " (gap " << 100 * gap << "%, K values coincide); ";
  }
  d << "need gap <= 25%";
  report(5, pass, seconds_since(t0) + charged, 300, d.str());
}

void criterion_6() {
  const auto t0 = Clock::now();
  std::string suites = SXAE_PROPERTY_SUITES;
  std::vector<std::string> failed;
  std::size_t pos = 0;
  int count = 0;
  while (pos <= suites.size()) {
    const std::size_t bar = std::min(suites.find('|', pos), suites.size());
    const std::string exe = suites.substr(pos, bar - pos);
    pos = bar + 1;
    if (exe.empty()) continue;
    ++count;
    const std::string cmd = "\"" + exe + "\" >/dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) failed.push_back(fs::path(exe).filename().string());
  }
  std::ostringstream d;
  d << count << " property suites run";
  if (!failed.empty()) {
    d << ", failing:";
    for (const auto& f : failed) d << " " << f;
  }
  report(6, failed.empty(), seconds_since(t0), 120, d.str());
}

std::string run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  if (run_cli(args, out, err) != 0) throw std::runtime_error("command failed: " + err.str());
  return out.str();
}

void criterion_7() {
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / "sxae_acceptance_determinism";
  fs::remove_all(root);
  const std::vector<std::string> outputs{"model.sxae", "loss_trace.csv", "samples.sxtn",
                                         "sample_latents.csv", "metrics.json", "latents.csv"};
  std::vector<std::string> first;
  std::string detail;
  bool pass = true;
  try {
    for (int rep = 0; rep < 2; ++rep) {
      const std::string dir = (root / std::to_string(rep)).string();
      const std::vector<std::string> common{"--seed", "7", "--out", dir};
      const auto cmd = [&](std::vector<std::string> a, std::vector<std::string> extra = {}) {
        a.insert(a.end(), common.begin(), common.end());
        a.insert(a.end(), extra.begin(), extra.end());
        return a;
      };
      run(cmd({"gen-data"}));
      run(cmd({"train"}, {"--set", "lr=1e-3", "--set", "alpha=0.3"}));
      run(cmd({"sample"}, {"--set", "sampler=pmf", "--set", "k=20"}));
      run(cmd({"eval"}, {"--set", "sampler=mm", "--set", "components=classes"}));
      run(cmd({"latent-export", (root / std::to_string(rep) / "latents.csv").string()}));
      for (std::size_t i = 0; i < outputs.size(); ++i) {
        const std::string bytes = io::read_file(root / std::to_string(rep) / outputs[i]);
        if (rep == 0) {
          first.push_back(bytes);
        } else if (bytes != first[i]) {
          pass = false;
          detail += outputs[i] + " differs; ";
        }
      }
    }
    if (pass) detail = "checkpoint, CSV, tensor and JSON outputs bit-identical across two runs";
  } catch (const std::exception& e) {
    pass = false;
    detail = e.what();
  }
  fs::remove_all(root);
  report(7, pass, seconds_since(t0), 300, detail);
}

}  // namespace

int main() {
  std::printf("acceptance: synthetic regime, lr 1e-3, lambda 100, 20 epochs, batch 64\n");
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  std::printf("acceptance: %d of 7 criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
