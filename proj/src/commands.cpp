#include "sxae/commands.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sxae/binary_io.hpp"
#include "sxae/deconvolution.hpp"
#include "sxae/metrics.hpp"
#include "sxae/mixture.hpp"

namespace sxae {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    T out{};
    if constexpr (std::is_floating_point_v<T>) {
      out = static_cast<T>(std::stod(value, &used));
    } else if constexpr (std::is_signed_v<T>) {
      out = static_cast<T>(std::stoll(value, &used));
    } else {
      if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
      out = static_cast<T>(std::stoull(value, &used));
    }
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw InvalidInput("config: bad value '" + value + "' for key '" + key + "'");
  }
}

std::vector<std::uint32_t> parse_list(const std::string& key, const std::string& value) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::uint32_t>(key, trim(item)));
  return out;
}

Matrix encode_all(const Checkpoint& ck, const Matrix& x) { return encode(ck.spec, ck.params, x); }

std::vector<std::string> latent_headers(std::uint32_t dim) {
  std::vector<std::string> h;
  for (std::uint32_t i = 0; i < dim; ++i) h.push_back("z" + std::to_string(i));
  return h;
}

std::optional<std::size_t> resolve_components(const RunConfig& cfg, std::uint32_t dim,
                                              const std::filesystem::path& data_dir) {
  if (cfg.components.empty() || cfg.components == "dim") return dim;
  if (cfg.components == "classes") {
    const json manifest = json::parse(io::read_file(data_dir / "manifest.json"));
    return manifest.at("n_classes").get<std::size_t>();
  }
  return parse_number<std::size_t>("components", cfg.components);
}

SamplerChoice sampler_for(const RunConfig& cfg, const Checkpoint& ck) {
  const std::uint32_t dim = ck.spec.latent_dim();
  Matrix latents;
  if (cfg.sampler == "mm" || cfg.sampler == "pmf") {
    latents = encode_all(ck, load_split_features(cfg.data_path(), split_from_name(cfg.fit_split)));
  }
  return make_sampler(cfg.sampler, latents, dim, cfg.alpha,
                      cfg.sampler == "mm" ? resolve_components(cfg, dim, cfg.data_path()) : std::nullopt,
                      cfg.k, cfg.seed);
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  std::stringstream ss{std::string(text)};
  std::string line;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidInput("config: line " + std::to_string(line_no) + " is not key=value");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "dim") dim = parse_number<std::uint32_t>(key, value);
  else if (key == "alpha") alpha = parse_number<double>(key, value);
  else if (key == "lambda") lambda = parse_number<double>(key, value);
  else if (key == "lr") lr = parse_number<double>(key, value);
  else if (key == "epochs") epochs = parse_number<int>(key, value);
  else if (key == "batch") batch = parse_number<int>(key, value);
  else if (key == "seed") seed = synth.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "hidden") hidden = parse_list(key, value);
  else if (key == "sampler") sampler = value;
  else if (key == "components") components = value;
  else if (key == "k") k = parse_number<std::uint32_t>(key, value);
  else if (key == "knn_k") knn_k = parse_number<std::size_t>(key, value);
  else if (key == "count") count = parse_number<std::size_t>(key, value);
  else if (key == "fit_split") fit_split = value;
  else if (key == "export_split") export_split = value;
  else if (key == "n_samples") synth.n_samples = parse_number<std::size_t>(key, value);
  else if (key == "n_features") synth.n_features = parse_number<std::size_t>(key, value);
  else if (key == "n_informative") synth.n_informative = parse_number<std::size_t>(key, value);
  else if (key == "n_redundant") synth.n_redundant = parse_number<std::size_t>(key, value);
  else if (key == "class_sep") synth.class_sep = parse_number<double>(key, value);
  else if (key == "n_classes") synth.n_classes = parse_number<int>(key, value);
  else if (key == "clusters_per_class") synth.clusters_per_class = parse_number<int>(key, value);
  else if (key == "idx_images") idx_images = value;
  else if (key == "idx_labels") idx_labels = value;
  else if (key == "out") out = value;
  else if (key == "data_dir") data_dir = value;
  else if (key == "checkpoint") checkpoint = value;
  else throw InvalidInput("config: unknown key '" + key + "'");
}

void RunConfig::validate() const {
  if (dim < 2) throw InvalidInput("config: dim must be >= 2");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidInput("config: alpha must be > 0");
  if (!(lambda >= 0.0)) throw InvalidInput("config: lambda must be >= 0");
  if (!(lr >= 0.0)) throw InvalidInput("config: lr must be >= 0");
  if (epochs < 1) throw InvalidInput("config: epochs must be >= 1");
  if (batch < 2) throw InvalidInput("config: batch must be >= 2");
  for (auto h : hidden) {
    if (h < 1) throw InvalidInput("config: hidden widths must be >= 1");
  }
  if (sampler != "uniform" && sampler != "alpha" && sampler != "mm" && sampler != "pmf") {
    throw InvalidInput("config: sampler must be one of uniform, alpha, mm, pmf");
  }
  if (sampler == "pmf" && !k) throw InvalidInput("config: sampler=pmf requires k (bins per coordinate)");
  if (k && (*k < 1 || *k > 65535)) throw InvalidInput("config: k must be in [1, 65535]");
  if (!components.empty() && components != "dim" && components != "classes" &&
      parse_number<std::size_t>("components", components) < 1) {
    throw InvalidInput("config: components must be >= 1");
  }
  if (knn_k < 1) throw InvalidInput("config: knn_k must be >= 1");
  if (count < 2) throw InvalidInput("config: count must be >= 2");
  split_from_name(fit_split);
  split_from_name(export_split);
  if (idx_images.empty() != idx_labels.empty()) {
    throw InvalidInput("config: idx_images and idx_labels must be given together");
  }
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.learning_rate = lr;
  t.lambda = lambda;
  t.epochs = epochs;
  t.batch_size = batch;
  t.alpha = DirichletParams::broadcast(alpha, dim);
  t.seed = seed;
  return t;
}

NetworkSpec RunConfig::network(std::uint32_t input_dim) const {
  return NetworkSpec::mlp(input_dim, hidden, dim, Activation::relu);
}

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  throw InvalidInput("unknown split '" + name + "'");
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  json manifest;
  for (Split s : {Split::train, Split::validation, Split::test}) {
    const auto name = split_name(s);
    tensor_save(dir / (name + "_x.sxtn"), Tensor::from_matrix(ds.features_of(s)));
    const auto labels = ds.labels_of(s);
    tensor_save(dir / (name + "_y.sxtn"),
                Tensor{{static_cast<std::uint32_t>(labels.size())}, std::vector<double>(labels.begin(), labels.end())});
    manifest["n_" + name] = labels.size();
  }
  manifest["n_features"] = ds.features.cols();
  manifest["n_classes"] = ds.n_classes;
  manifest["seed"] = seed;
  io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Matrix load_split_features(const std::filesystem::path& dir, Split s) {
  return tensor_load(dir / (split_name(s) + "_x.sxtn")).to_matrix();
}

std::vector<int> load_split_labels(const std::filesystem::path& dir, Split s) {
  const Tensor t = tensor_load(dir / (split_name(s) + "_y.sxtn"));
  std::vector<int> out;
  out.reserve(t.values.size());
  for (double v : t.values) out.push_back(static_cast<int>(v));
  return out;
}

SamplerChoice make_sampler(const std::string& name, const Matrix& latents, std::uint32_t dim,
                           double alpha, std::optional<std::size_t> components,
                           std::optional<std::uint32_t> k, std::uint64_t seed) {
  if (name == "uniform") return UniformSampler{dim};
  if (name == "alpha") return AlphaSampler{DirichletParams::broadcast(alpha, dim)};
  if (name == "mm") {
    EmConfig em;
    em.seed = seed;
    return MixtureSampler{fit_logistic_normal_mixture(latents, components.value_or(dim), em).model};
  }
  if (name == "pmf") {
    if (!k) throw InvalidInput("sampler=pmf requires k");
    return PmfSampler{std::make_shared<const PmfIndex>(
        PmfIndex::build(std::make_shared<const Matrix>(latents), *k))};
  }
  throw InvalidInput("unknown sampler '" + name + "'");
}

std::string EvalReport::to_json() const {
  json j;
  j["psnr_db"] = psnr_db;
  j["knn_accuracy"] = knn_accuracy;
  j["frechet"] = frechet;
  j["sampler"] = sampler;
  j["k"] = k;
  j["dim"] = dim;
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

int cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  Dataset ds;
  if (!cfg.idx_images.empty()) {
    const Matrix images = idx_read(cfg.idx_images).to_matrix(true);
    const Matrix labels = idx_read(cfg.idx_labels).to_matrix(false);
    if (labels.rows() != images.rows()) throw InvalidInput("gen-data: image and label counts differ");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(images.rows()));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(cfg.seed);
    std::shuffle(order.begin(), order.end(), rng.engine());
    const SplitSizes sizes = split_sizes(order.size());
    ds.features.resize(images.rows(), images.cols());
    for (std::size_t r = 0; r < order.size(); ++r) {
      ds.features.row(static_cast<Eigen::Index>(r)) = images.row(order[r]);
      const int label = static_cast<int>(labels(order[r], 0));
      ds.labels.push_back(label);
      ds.n_classes = std::max(ds.n_classes, label + 1);
      ds.splits.push_back(r < sizes.train ? Split::train
                          : r < sizes.train + sizes.validation ? Split::validation
                                                               : Split::test);
    }
  } else {
    SynthConfig synth = cfg.synth;
    synth.seed = cfg.seed;
    ds = make_classification(synth);
  }
  write_dataset(cfg.out, ds, cfg.seed);
  out << "gen-data: " << ds.count(Split::train) << "/" << ds.count(Split::validation) << "/"
      << ds.count(Split::test) << " rows, " << ds.features.cols() << " features, " << ds.n_classes
      << " classes -> " << cfg.out.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const Matrix x = load_split_features(cfg.data_path(), Split::train);
  const NetworkSpec spec = cfg.network(static_cast<std::uint32_t>(x.cols()));
  const TrainConfig tc = cfg.train_config();
  tc.validate(spec);
  const TrainResult result = train(spec, tc, x);

  Matrix trace(static_cast<Eigen::Index>(result.trace.size()), 4);
  for (std::size_t i = 0; i < result.trace.size(); ++i) {
    const auto& e = result.trace[i];
    trace.row(static_cast<Eigen::Index>(i)) << e.epoch, e.recon, e.penalty, e.total;
  }
  std::filesystem::create_directories(cfg.out);
  save_checkpoint(cfg.checkpoint_path(), spec, result.params);
  csv_export(cfg.out / "loss_trace.csv", trace, {"epoch", "recon", "penalty", "total"});
  const auto& last = result.trace.back();
  out << "train: " << result.trace.size() << " epochs, final recon " << last.recon << " penalty "
      << last.penalty << " total " << last.total << " -> " << cfg.checkpoint_path().string() << "\n";
  return 0;
}

int cmd_sample(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const Checkpoint ck = load_checkpoint(cfg.checkpoint_path());
  const SamplerChoice choice = sampler_for(cfg, ck);
  Rng rng(cfg.seed);
  const Matrix z = draw(choice, cfg.count, rng);
  const Matrix decoded = decode(ck.spec, ck.params, z);
  std::filesystem::create_directories(cfg.out);
  tensor_save(cfg.out / "samples.sxtn", Tensor::from_matrix(decoded));
  csv_export(cfg.out / "sample_latents.csv", z, latent_headers(ck.spec.latent_dim()));
  out << "sample: " << z.rows() << " draws with sampler " << cfg.sampler << " -> " << cfg.out.string() << "\n";
  return 0;
}

EvalReport evaluate(const RunConfig& cfg) {
  cfg.validate();
  const Checkpoint ck = load_checkpoint(cfg.checkpoint_path());
  const auto dir = cfg.data_path();
  const Matrix test_x = load_split_features(dir, Split::test);
  const auto test_y = load_split_labels(dir, Split::test);
  const Matrix val_x = load_split_features(dir, Split::validation);
  const auto val_y = load_split_labels(dir, Split::validation);

  EvalReport r;
  r.sampler = cfg.sampler;
  r.k = cfg.knn_k;
  r.dim = ck.spec.latent_dim();
  r.seed = cfg.seed;

  const Matrix test_z = encode_all(ck, test_x);
  const Matrix recon = decode(ck.spec, ck.params, test_z);
  const double range = test_x.maxCoeff() - test_x.minCoeff();
  r.psnr_db = psnr(test_x, recon, range > 0.0 ? range : 1.0);
  r.knn_accuracy = knn_accuracy(encode_all(ck, val_x), val_y, test_z, test_y, cfg.knn_k);

  const SamplerChoice choice = sampler_for(cfg, ck);
  Rng rng(cfg.seed);
  const Matrix generated = decode(ck.spec, ck.params, draw(choice, cfg.count, rng));
  const Eigen::Index reference_rows = std::min<Eigen::Index>(test_x.rows(), static_cast<Eigen::Index>(cfg.count));
  r.frechet = frechet_distance(gaussian_stats(generated), gaussian_stats(test_x.topRows(reference_rows)));
  return r;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  const EvalReport r = evaluate(cfg);
  std::filesystem::create_directories(cfg.out);
  const std::string text = r.to_json();
  io::write_file_atomic(cfg.out / "metrics.json", text);
  out << text;
  return 0;
}

int cmd_latent_export(const RunConfig& cfg, const std::filesystem::path& csv, std::ostream& out) {
  cfg.validate();
  const Checkpoint ck = load_checkpoint(cfg.checkpoint_path());
  const Split s = split_from_name(cfg.export_split);
  const Matrix z = encode_all(ck, load_split_features(cfg.data_path(), s));
  const auto labels = load_split_labels(cfg.data_path(), s);
  Matrix table(z.rows(), z.cols() + 1);
  table.leftCols(z.cols()) = z;
  for (Eigen::Index i = 0; i < z.rows(); ++i) table(i, z.cols()) = labels[static_cast<std::size_t>(i)];
  auto headers = latent_headers(ck.spec.latent_dim());
  headers.push_back("label");
  csv_export(csv, table, headers);
  out << "latent-export: " << z.rows() << " rows (" << split_name(s) << " split) -> " << csv.string() << "\n";
  return 0;
}

int cmd_deconv(const std::filesystem::path& in, const std::filesystem::path& out_path, int iters,
               const std::string& psf, std::ostream& out) {
  if (iters < 1) throw InvalidInput("deconv: iters must be >= 1");
  if (psf != "flat" && psf != "delta") throw InvalidInput("deconv: psf must be flat or delta");
  const Psf kernel = psf == "flat" ? Psf::flat(3, 3) : Psf::delta(3);
  const bool tensor = in.extension() == ".sxtn";
  if (tensor) {
    const Tensor t = tensor_load(in);
    if (t.dims.size() != 2 && t.dims.size() != 3) throw InvalidInput("deconv: tensor must be HxW or CxHxW");
    const std::uint32_t channels = t.dims.size() == 3 ? t.dims[0] : 1;
    const auto h = static_cast<Eigen::Index>(t.dims[t.dims.size() - 2]);
    const auto w = static_cast<Eigen::Index>(t.dims.back());
    Tensor result = t;
    for (std::uint32_t c = 0; c < channels; ++c) {
      Matrix plane(h, w);
      std::copy_n(t.values.begin() + static_cast<std::ptrdiff_t>(c * h * w), h * w, plane.data());
      const Matrix restored = richardson_lucy(plane, kernel, iters);
      std::copy_n(restored.data(), h * w, result.values.begin() + static_cast<std::ptrdiff_t>(c * h * w));
    }
    tensor_save(out_path, result);
  } else {
    write_pnm(out_path, richardson_lucy(read_pnm(in), kernel, iters));
  }
  out << "deconv: " << iters << " Richardson-Lucy iterations (" << psf << " psf) -> " << out_path.string() << "\n";
  return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simplex autoencoder toolkit: data generation, training, sampling, evaluation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--seed", seed, "seed override");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--set", overrides, "extra key=value override (repeatable)");
  };
  auto* gen = app.add_subcommand("gen-data", "generate or import a dataset and write its splits");
  auto* tr = app.add_subcommand("train", "train a simplex autoencoder");
  auto* sa = app.add_subcommand("sample", "draw latents with a sampler and decode them");
  auto* ev = app.add_subcommand("eval", "write a metrics report for a checkpoint");
  auto* le = app.add_subcommand("latent-export", "write encoded latents with labels as CSV");
  auto* dc = app.add_subcommand("deconv", "Richardson-Lucy deconvolution of a PGM/PPM or SXTN image");
  for (auto* sub : {gen, tr, sa, ev, le}) add_common(sub);
  for (auto* sub : {sa, ev, le}) sub->add_option("--checkpoint", checkpoint, "checkpoint path");

  std::string csv_path;
  le->add_option("csv", csv_path, "output CSV")->required();
  std::string dc_in, dc_out, dc_psf = "flat";
  int dc_iters = 30;
  dc->add_option("input", dc_in, "input image")->required();
  dc->add_option("output", dc_out, "output image")->required();
  dc->add_option("--iters", dc_iters, "iterations");
  dc->add_option("--psf", dc_psf, "flat (3x3, 1/9) or delta");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "sxae: error[usage]: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (dc->parsed()) return cmd_deconv(dc_in, dc_out, dc_iters, dc_psf, out);
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw InvalidInput("--set expects key=value, got '" + kv + "'");
      cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (seed) cfg.seed = cfg.synth.seed = *seed;
    if (!out_dir.empty()) cfg.out = out_dir;
    if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
    if (gen->parsed()) return cmd_gen_data(cfg, out);
    if (tr->parsed()) return cmd_train(cfg, out);
    if (sa->parsed()) return cmd_sample(cfg, out);
    if (ev->parsed()) return cmd_eval(cfg, out);
    if (le->parsed()) return cmd_latent_export(cfg, csv_path, out);
  } catch (const InvalidInput& e) {
    err << "sxae: error[invalid-input]: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    err << "sxae: error[format]: " << e.what() << "\n";
    return 1;
  } catch (const NumericalFailure& e) {
    err << "sxae: error[numerical-failure]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "sxae: error[io]: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace sxae
