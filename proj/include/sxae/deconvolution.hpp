#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sxae/common.hpp"

namespace sxae {

/// Non-negative blur kernel, normalized to unit sum on construction.
class Psf {
 public:
  explicit Psf(Matrix kernel);

  static Psf flat(Eigen::Index h = 3, Eigen::Index w = 3);
  /// Odd-sized kernel with a single 1 at the center.
  static Psf delta(Eigen::Index size = 3);

  const Matrix& kernel() const { return kernel_; }
  Matrix flipped() const { return kernel_.reverse(); }

 private:
  Matrix kernel_;
};

inline constexpr double kRlGuard = 1e-12;

/// Richardson-Lucy iterations on one non-negative plane, starting from the
/// observation, with replicate boundary handling.
Matrix richardson_lucy(const Matrix& plane, const Psf& psf, int iters);

/// Blurs a plane with the PSF under the same boundary rule.
Matrix blur(const Matrix& plane, const Psf& psf);

/// Planar image with values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<Matrix> planes;  // 1 (gray) or 3 (RGB), each height x width
};

/// Binary PGM (P5) or PPM (P6) with maxval 255.
Image read_pnm(const std::filesystem::path& path);
Image parse_pnm(std::string_view bytes);
std::string format_pnm(const Image& img);
void write_pnm(const std::filesystem::path& path, const Image& img);

/// Deconvolves each channel separately.
Image richardson_lucy(const Image& img, const Psf& psf, int iters);

}  // namespace sxae
