#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <vector>

namespace obfloc {

struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 or 3
  std::vector<std::uint8_t> data;  // row-major, interleaved channels

  RasterImage() = default;
  RasterImage(int w, int h, int c, std::uint8_t fill = 0);

  std::uint8_t& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  // Throws Error(InvalidArgument) when the buffer does not match the header.
  void validate() const;

  friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> labels;  // 0 = unlabeled

  LabelMap() = default;
  LabelMap(int w, int h, std::int32_t fill = 0);

  std::int32_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::int32_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1

  BinaryMask() = default;
  BinaryMask(int w, int h, bool fill = false);

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

using Rgb = std::array<std::uint8_t, 3>;
using Palette = std::map<std::int32_t, Rgb>;

// Normalized 1-D Gaussian taps, length kernel_px.
std::vector<double> gaussian_kernel(int kernel_px, double sigma);

// Separable Gaussian with edge-replicate padding. Throws InvalidKernel for
// even or < 3 sizes, InvalidArgument for sigma <= 0.
RasterImage gaussian_blur(const RasterImage& img, int kernel_px, double sigma);

// Block mean over factor x factor cells (partial cells at the right and
// bottom average what they contain), painted back at full size.
RasterImage pixelate(const RasterImage& img, int factor);

struct ClaheParams {
  double clip_limit = 2.0;
  int tiles = 8;
};

// Clipped histogram of one tile, before the excess is redistributed.
struct ClaheTileAudit {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open pixel box
  double clip = 0;                      // per-bin ceiling in counts
  std::array<int, 256> clipped{};
};

RasterImage clahe(const RasterImage& gray, const ClaheParams& params = {});
std::vector<ClaheTileAudit> clahe_audit(const RasterImage& gray, const ClaheParams& params = {});

struct CannyParams {
  double low = 50;
  double high = 150;
};

// L1 Sobel magnitude of the 3x3-Gaussian-smoothed image.
std::vector<float> canny_gradient_magnitude(const RasterImage& gray);
BinaryMask canny(const RasterImage& gray, const CannyParams& params = {});

// Throws DimensionMismatch when sizes differ, InvalidArgument when the color
// has fewer entries than channels.
RasterImage mask_fill(const RasterImage& img, const BinaryMask& mask,
                      const std::vector<std::uint8_t>& color = {0, 0, 0});

// Diffusion infill (substitute for Telea inpainting): masked pixels are first
// seeded layer by layer from known 8-neighbours, then `iterations` Jacobi
// passes average the in-bounds 8-neighbourhood of each masked pixel.
RasterImage infill_diffusion(const RasterImage& img, const BinaryMask& mask, int iterations = 500);

RasterImage render_borders(const LabelMap& labels);
Rgb random_label_color(std::int32_t label, std::uint64_t seed);
RasterImage render_random_colors(const LabelMap& labels, std::uint64_t seed);
RasterImage render_semantic_colors(const LabelMap& labels, const Palette& palette);

// Single-threaded implementations kept for testing and benchmarking.
namespace reference {
RasterImage gaussian_blur(const RasterImage& img, int kernel_px, double sigma);
RasterImage pixelate(const RasterImage& img, int factor);
RasterImage clahe(const RasterImage& gray, const ClaheParams& params = {});
BinaryMask canny(const RasterImage& gray, const CannyParams& params = {});
RasterImage infill_diffusion(const RasterImage& img, const BinaryMask& mask, int iterations = 500);
RasterImage render_borders(const LabelMap& labels);
}  // namespace reference

}  // namespace obfloc
