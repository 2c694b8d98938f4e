#include "sxae/deconvolution.hpp"

#include <cctype>
#include <cmath>

#include "sxae/binary_io.hpp"
#include "sxae/kernels.hpp"

namespace sxae {

Psf::Psf(Matrix kernel) : kernel_(std::move(kernel)) {
  if (kernel_.size() == 0) throw InvalidInput("Psf: empty kernel");
  if ((kernel_.array() < 0.0).any() || !kernel_.allFinite()) {
    throw InvalidInput("Psf: entries must be finite and non-negative");
  }
  const double sum = kernel_.sum();
  if (!(sum > 0.0)) throw InvalidInput("Psf: kernel must have positive mass");
  kernel_ /= sum;
}

Psf Psf::flat(Eigen::Index h, Eigen::Index w) { return Psf(Matrix::Constant(h, w, 1.0)); }

Psf Psf::delta(Eigen::Index size) {
  if (size < 1 || size % 2 == 0) throw InvalidInput("Psf::delta: size must be odd");
  Matrix k = Matrix::Zero(size, size);
  k(size / 2, size / 2) = 1.0;
  return Psf(std::move(k));
}

Matrix blur(const Matrix& plane, const Psf& psf) {
  Matrix out;
  kernels::omp::correlate_replicate(plane, psf.flipped(), out);
  return out;
}

Matrix richardson_lucy(const Matrix& plane, const Psf& psf, int iters) {
  if (iters < 1) throw InvalidInput("richardson_lucy: iters must be >= 1");
  if ((plane.array() < 0.0).any()) throw InvalidInput("richardson_lucy: image must be non-negative");
  const Matrix flipped = psf.flipped();
  Matrix est = plane, blurred, ratio(plane.rows(), plane.cols()), correction;
  for (int it = 1; it <= iters; ++it) {
    kernels::omp::correlate_replicate(est, flipped, blurred);
    for (Eigen::Index i = 0; i < plane.size(); ++i) {
      ratio.data()[i] = plane.data()[i] / std::max(blurred.data()[i], kRlGuard);
    }
    kernels::omp::correlate_replicate(ratio, psf.kernel(), correction);
    est = est.cwiseProduct(correction);
    if (!est.allFinite()) {
      throw NumericalFailure("richardson_lucy: non-finite estimate at iteration " + std::to_string(it));
    }
  }
  return est;
}

Image richardson_lucy(const Image& img, const Psf& psf, int iters) {
  Image out = img;
  for (auto& p : out.planes) p = richardson_lucy(p, psf, iters);
  return out;
}

namespace {

// Reads one whitespace-delimited header integer, skipping '#' comments.
int header_int(std::string_view bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  long v = 0;
  while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
    v = v * 10 + (bytes[pos] - '0');
    if (v > 1'000'000) throw FormatError("pnm: header value too large", start);
    ++pos;
  }
  if (pos == start) throw FormatError("pnm: expected integer in header", start);
  return static_cast<int>(v);
}

}  // namespace

Image parse_pnm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("pnm: expected P5 or P6 magic", 0);
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  Image img;
  img.width = header_int(bytes, pos);
  img.height = header_int(bytes, pos);
  const std::size_t maxval_at = pos;
  if (header_int(bytes, pos) != 255) throw FormatError("pnm: only maxval 255 is supported", maxval_at);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("pnm: missing separator after header", pos);
  }
  ++pos;
  const std::size_t need = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) *
                           static_cast<std::size_t>(channels);
  if (bytes.size() - pos != need) throw FormatError("pnm: payload size mismatch", pos);
  img.planes.assign(static_cast<std::size_t>(channels), Matrix(img.height, img.width));
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      for (int ch = 0; ch < channels; ++ch) {
        img.planes[static_cast<std::size_t>(ch)](r, c) = static_cast<unsigned char>(bytes[pos++]) / 255.0;
      }
    }
  }
  return img;
}

Image read_pnm(const std::filesystem::path& path) { return parse_pnm(io::read_file(path)); }

std::string format_pnm(const Image& img) {
  const auto channels = img.planes.size();
  if (channels != 1 && channels != 3) throw InvalidInput("pnm: need 1 or 3 planes");
  std::string out = (channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      for (const auto& p : img.planes) {
        const double v = std::clamp(p(r, c), 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
  return out;
}

void write_pnm(const std::filesystem::path& path, const Image& img) {
  io::write_file_atomic(path, format_pnm(img));
}

}  // namespace sxae
