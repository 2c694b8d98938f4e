#include "sxae/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "sxae/binary_io.hpp"

namespace sxae {

std::size_t Dataset::count(Split s) const {
  return static_cast<std::size_t>(std::count(splits.begin(), splits.end(), s));
}

Matrix Dataset::features_of(Split s) const {
  Matrix out(static_cast<Eigen::Index>(count(s)), features.cols());
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.row(r++) = features.row(static_cast<Eigen::Index>(i));
  }
  return out;
}

std::vector<int> Dataset::labels_of(Split s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(labels[i]);
  }
  return out;
}

void SynthConfig::validate() const {
  if (n_samples < 3) throw InvalidInput("SynthConfig: need at least 3 samples");
  if (n_informative < 1 || n_informative > 30) throw InvalidInput("SynthConfig: n_informative must be in [1, 30]");
  if (n_informative + n_redundant > n_features) {
    throw InvalidInput("SynthConfig: n_informative + n_redundant exceeds n_features");
  }
  if (n_classes < 1 || clusters_per_class < 1) throw InvalidInput("SynthConfig: class counts must be >= 1");
  if (!(class_sep > 0.0)) throw InvalidInput("SynthConfig: class_sep must be > 0");
  const std::uint64_t vertices = std::uint64_t{1} << n_informative;
  const auto clusters = static_cast<std::uint64_t>(n_classes) * static_cast<std::uint64_t>(clusters_per_class);
  if (vertices < clusters) {
    throw InvalidInput("SynthConfig: " + std::to_string(clusters) + " clusters need more than the " +
                       std::to_string(vertices) + " hypercube vertices of " +
                       std::to_string(n_informative) + " informative dimensions");
  }
}

SplitSizes split_sizes(std::size_t n) {
  const std::size_t train = n / 2;
  const std::size_t validation = n / 4;
  return {train, validation, n - train - validation};
}

Dataset make_classification(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t ni = cfg.n_informative, nr = cfg.n_redundant, nf = cfg.n_features;
  const std::size_t clusters = static_cast<std::size_t>(cfg.n_classes * cfg.clusters_per_class);

  std::vector<std::uint64_t> vertex_ids(std::size_t{1} << ni);
  std::iota(vertex_ids.begin(), vertex_ids.end(), 0);
  std::shuffle(vertex_ids.begin(), vertex_ids.end(), rng.engine());
  Matrix centroids(static_cast<Eigen::Index>(clusters), static_cast<Eigen::Index>(ni));
  for (std::size_t c = 0; c < clusters; ++c) {
    for (std::size_t j = 0; j < ni; ++j) {
      centroids(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) =
          ((vertex_ids[c] >> j) & 1U) ? cfg.class_sep / 2.0 : -cfg.class_sep / 2.0;
    }
  }

  Matrix mixing(static_cast<Eigen::Index>(ni), static_cast<Eigen::Index>(nr));
  for (Eigen::Index i = 0; i < mixing.size(); ++i) mixing.data()[i] = rng.normal();

  const auto m = static_cast<Eigen::Index>(cfg.n_samples);
  Matrix raw(m, static_cast<Eigen::Index>(nf));
  std::vector<int> labels(cfg.n_samples);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto cluster = static_cast<std::size_t>(i) % clusters;
    labels[static_cast<std::size_t>(i)] = static_cast<int>(cluster % static_cast<std::size_t>(cfg.n_classes));
    for (std::size_t j = 0; j < ni; ++j) {
      raw(i, static_cast<Eigen::Index>(j)) = centroids(static_cast<Eigen::Index>(cluster), static_cast<Eigen::Index>(j)) + rng.normal();
    }
  }
  if (nr > 0) {
    raw.middleCols(static_cast<Eigen::Index>(ni), static_cast<Eigen::Index>(nr)) =
        raw.leftCols(static_cast<Eigen::Index>(ni)) * mixing;
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    for (auto j = static_cast<Eigen::Index>(ni + nr); j < raw.cols(); ++j) raw(i, j) = rng.normal();
  }

  std::vector<Eigen::Index> cols(nf);
  std::iota(cols.begin(), cols.end(), 0);
  std::shuffle(cols.begin(), cols.end(), rng.engine());
  std::vector<Eigen::Index> rows(cfg.n_samples);
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng.engine());

  Dataset ds;
  ds.n_classes = cfg.n_classes;
  ds.features.resize(m, static_cast<Eigen::Index>(nf));
  ds.labels.resize(cfg.n_samples);
  ds.splits.resize(cfg.n_samples);
  const SplitSizes sizes = split_sizes(cfg.n_samples);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < nf; ++j) {
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = raw(rows[r], cols[j]);
    }
    ds.labels[r] = labels[static_cast<std::size_t>(rows[r])];
    ds.splits[r] = r < sizes.train ? Split::train
                   : r < sizes.train + sizes.validation ? Split::validation
                                                        : Split::test;
  }
  return ds;
}

IdxTensor idx_parse(std::string_view bytes) {
  io::Reader r(bytes, "idx");
  const std::uint32_t magic = r.u32_be();
  if (magic != 0x00000801 && magic != 0x00000803) {
    r.fail("unsupported magic", 0);
  }
  IdxTensor t;
  std::uint64_t total = 1;
  for (std::uint32_t i = 0; i < (magic & 0xFFU); ++i) {
    t.dims.push_back(r.u32_be());
    total *= t.dims.back();
  }
  if (total != r.remaining()) {
    r.fail("payload holds " + std::to_string(r.remaining()) + " bytes, header declares " +
               std::to_string(total),
           r.offset() + std::min<std::uint64_t>(total, r.remaining()));
  }
  const auto payload = r.take(static_cast<std::size_t>(total));
  t.data.assign(payload.begin(), payload.end());
  return t;
}

IdxTensor idx_read(const std::filesystem::path& path) { return idx_parse(io::read_file(path)); }

Matrix IdxTensor::to_matrix(bool normalize) const {
  const Eigen::Index rows = dims.empty() ? 0 : dims[0];
  const Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(data.size()) / rows;
  Matrix m(rows, cols);
  const double scale = normalize ? 1.0 / 255.0 : 1.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = data[static_cast<std::size_t>(i)] * scale;
  return m;
}

namespace {

constexpr std::string_view kTensorMagic = "SXTN";
constexpr std::uint32_t kTensorVersion = 1;

}  // namespace

Tensor Tensor::from_matrix(const Matrix& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.values.assign(m.data(), m.data() + m.size());
  return t;
}

Matrix Tensor::to_matrix() const {
  Eigen::Index rows = 0, cols = 0;
  if (dims.size() == 1) {
    rows = dims[0];
    cols = 1;
  } else if (dims.size() >= 2) {
    rows = dims[0];
    cols = rows == 0 ? 0 : static_cast<Eigen::Index>(values.size()) / rows;
  } else {
    rows = cols = 1;
  }
  Matrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

std::string tensor_serialize(const Tensor& t) {
  std::uint64_t total = 1;
  for (auto d : t.dims) total *= d;
  if (total != t.values.size()) throw InvalidInput("tensor: value count does not match dims");
  std::string out(kTensorMagic);
  io::put_u32(out, kTensorVersion);
  io::put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) io::put_u32(out, d);
  for (double v : t.values) io::put_f64(out, v);
  return out;
}

Tensor tensor_parse(std::string_view bytes) {
  io::Reader r(bytes, "tensor");
  r.expect_magic(kTensorMagic);
  if (r.u32() != kTensorVersion) r.fail("unsupported version", 4);
  const std::size_t rank_at = r.offset();
  const std::uint32_t rank = r.u32();
  if (rank > 32) r.fail("implausible rank", rank_at);
  Tensor t;
  std::uint64_t total = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    t.dims.push_back(r.u32());
    total *= t.dims.back();
  }
  if (total * 8 != r.remaining()) {
    r.fail("payload holds " + std::to_string(r.remaining()) + " bytes, header declares " +
               std::to_string(total * 8),
           r.offset());
  }
  t.values.resize(static_cast<std::size_t>(total));
  for (auto& v : t.values) v = r.f64();
  return t;
}

void tensor_save(const std::filesystem::path& path, const Tensor& t) {
  io::write_file_atomic(path, tensor_serialize(t));
}

Tensor tensor_load(const std::filesystem::path& path) { return tensor_parse(io::read_file(path)); }

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Splits one record; quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace

std::string csv_format(const Matrix& m, const std::vector<std::string>& headers) {
  if (static_cast<Eigen::Index>(headers.size()) != m.cols()) {
    throw InvalidInput("csv: header count does not match column count");
  }
  std::string out;
  for (std::size_t j = 0; j < headers.size(); ++j) {
    if (j) out += ',';
    out += csv_field(headers[j]);
  }
  out += "\r\n";
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      const int n = std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      out.append(buf, static_cast<std::size_t>(n));
    }
    out += "\r\n";
  }
  return out;
}

CsvTable csv_parse(std::string_view text) {
  CsvTable table;
  std::vector<double> values;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    const std::size_t line_start = pos;
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split_record(line);
    if (table.headers.empty()) {
      table.headers = std::move(fields);
      continue;
    }
    if (fields.size() != table.headers.size()) {
      throw FormatError("csv: line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(table.headers.size()),
                        line_start);
    }
    for (const auto& f : fields) {
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
        throw FormatError("csv: line " + std::to_string(line_no) + " has non-numeric field '" + f + "'",
                          line_start);
      }
      values.push_back(v);
    }
  }
  if (table.headers.empty()) throw FormatError("csv: missing header row", 0);
  const auto cols = static_cast<Eigen::Index>(table.headers.size());
  table.values.resize(static_cast<Eigen::Index>(values.size()) / cols, cols);
  std::copy(values.begin(), values.end(), table.values.data());
  return table;
}

void csv_export(const std::filesystem::path& path, const Matrix& m,
                const std::vector<std::string>& headers) {
  io::write_file_atomic(path, csv_format(m, headers));
}

CsvTable csv_import(const std::filesystem::path& path) { return csv_parse(io::read_file(path)); }

}  // namespace sxae
