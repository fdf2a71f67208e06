#include "obfloc/obfuscate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "obfloc/error.hpp"
#include "obfloc/random.hpp"

namespace obfloc {

RasterImage::RasterImage(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

void RasterImage::validate() const {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3))
    throw Error(ErrorCode::InvalidArgument, "bad raster header");
  if (data.size() != static_cast<std::size_t>(width) * height * channels)
    throw Error(ErrorCode::InvalidArgument, "raster buffer length does not match header");
}

LabelMap::LabelMap(int w, int h, std::int32_t fill)
    : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}

BinaryMask::BinaryMask(int w, int h, bool fill)
    : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

std::uint8_t saturate(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

void check_gray(const RasterImage& img, const char* op) {
  img.validate();
  if (img.channels != 1) throw Error(ErrorCode::InvalidArgument, std::string(op) + " needs a single-channel image");
}

void check_mask(const RasterImage& img, const BinaryMask& mask) {
  img.validate();
  if (mask.width != img.width || mask.height != img.height)
    throw Error(ErrorCode::DimensionMismatch, "mask is " + std::to_string(mask.width) + "x" +
                                                  std::to_string(mask.height) + ", image is " +
                                                  std::to_string(img.width) + "x" + std::to_string(img.height));
}

void check_blur_args(const RasterImage& img, int kernel_px, double sigma) {
  img.validate();
  if (kernel_px < 3 || kernel_px % 2 == 0)
    throw Error(ErrorCode::InvalidKernel, "kernel size must be odd and >= 3, got " + std::to_string(kernel_px));
  if (!(sigma > 0) || !std::isfinite(sigma)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
}

void check_factor(const RasterImage& img, int factor) {
  img.validate();
  if (factor < 2 || factor > std::min(img.width, img.height))
    throw Error(ErrorCode::InvalidFactor, "factor " + std::to_string(factor) + " outside [2, " +
                                              std::to_string(std::min(img.width, img.height)) + "]");
}

// ---- CLAHE -----------------------------------------------------------------

struct TileGrid {
  int tx = 1, ty = 1;
  int x_edge(int i, int w) const { return static_cast<int>(static_cast<long>(i) * w / tx); }
  int y_edge(int j, int h) const { return static_cast<int>(static_cast<long>(j) * h / ty); }
};

TileGrid tile_grid(const RasterImage& img, const ClaheParams& p) {
  if (p.tiles < 1) throw Error(ErrorCode::InvalidArgument, "tile count must be >= 1");
  if (!(p.clip_limit > 0)) throw Error(ErrorCode::InvalidArgument, "clip limit must be positive");
  return {std::max(1, std::min(p.tiles, img.width)), std::max(1, std::min(p.tiles, img.height))};
}

ClaheTileAudit clip_tile(const RasterImage& img, const ClaheParams& p, int x0, int y0, int x1, int y1,
                         std::array<int, 256>& hist) {
  hist.fill(0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) ++hist[img.at(x, y)];
  ClaheTileAudit audit{x0, y0, x1, y1, 0, {}};
  const int area = (x1 - x0) * (y1 - y0);
  const int clip = std::max(1, static_cast<int>(p.clip_limit * area / 256.0));
  audit.clip = clip;
  for (int v = 0; v < 256; ++v) audit.clipped[v] = std::min(hist[v], clip);
  return audit;
}

std::array<std::uint8_t, 256> tile_lut(const RasterImage& img, const ClaheParams& p, int x0, int y0, int x1,
                                       int y1) {
  std::array<int, 256> hist;
  const ClaheTileAudit audit = clip_tile(img, p, x0, y0, x1, y1, hist);
  std::array<std::uint8_t, 256> lut;
  int lo = 0, hi = 255;
  while (lo < 256 && hist[lo] == 0) ++lo;
  while (hi >= 0 && hist[hi] == 0) --hi;
  if (lo >= hi) {
    for (int v = 0; v < 256; ++v) lut[v] = static_cast<std::uint8_t>(v);
    return lut;
  }
  std::array<long, 256> h;
  long excess = 0;
  for (int v = 0; v < 256; ++v) {
    h[v] = audit.clipped[v];
    excess += hist[v] - audit.clipped[v];
  }
  const long share = excess / 256;
  const long rest = excess % 256;
  for (int v = 0; v < 256; ++v) h[v] += share;
  if (rest > 0) {
    const long step = std::max(256 / rest, 1L);
    long given = 0;
    for (int v = 0; v < 256 && given < rest; v += static_cast<int>(step), ++given) ++h[v];
  }
  std::array<long, 256> cdf;
  long acc = 0;
  for (int v = 0; v < 256; ++v) cdf[v] = (acc += h[v]);
  const double span = static_cast<double>(cdf[hi] - cdf[lo]);
  for (int v = 0; v < 256; ++v) lut[v] = saturate(255.0 * static_cast<double>(cdf[v] - cdf[lo]) / span);
  return lut;
}

// Bilinear blend position along one axis: lower tile, upper tile, weight of upper.
struct Blend {
  int a, b;
  double w;
};

Blend blend(int x, int size, int tiles) {
  const double f = (x + 0.5) * tiles / size - 0.5;
  if (f <= 0) return {0, 0, 0};
  if (f >= tiles - 1) return {tiles - 1, tiles - 1, 0};
  const int a = static_cast<int>(std::floor(f));
  return {a, a + 1, f - a};
}

// ---- Canny -----------------------------------------------------------------

// 16x the 3x3 Gaussian-smoothed image, edge-replicated.
std::vector<int> smooth16(const RasterImage& g) {
  const int w = g.width, h = g.height;
  std::vector<int> out(static_cast<std::size_t>(w) * h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int s = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          s += (2 - std::abs(dx)) * (2 - std::abs(dy)) * g.at(clampi(x + dx, 0, w - 1), clampi(y + dy, 0, h - 1));
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  return out;
}

struct Gradients {
  std::vector<int> gx, gy, mag;  // all scaled by 16
};

Gradients sobel16(const std::vector<int>& s, int w, int h) {
  Gradients g;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  g.gx.resize(n);
  g.gy.resize(n);
  g.mag.resize(n);
  auto at = [&](int x, int y) { return s[static_cast<std::size_t>(clampi(y, 0, h - 1)) * w + clampi(x, 0, w - 1)]; };
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1)) -
                     (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
      const int gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1)) -
                     (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      g.gx[i] = gx;
      g.gy[i] = gy;
      g.mag[i] = std::abs(gx) + std::abs(gy);
    }
  }
  return g;
}

// Offsets (dx, dy) of the "previous" neighbour along the quantized gradient.
void nms_direction(int gx, int gy, int& dx, int& dy) {
  constexpr double kTan22 = 0.41421356237309503;
  constexpr double kTan67 = 2.4142135623730949;
  const double ax = std::abs(gx), ay = std::abs(gy);
  if (ay <= kTan22 * ax) {
    dx = -1, dy = 0;
  } else if (ay > kTan67 * ax) {
    dx = 0, dy = -1;
  } else if ((gx > 0) == (gy > 0)) {
    dx = -1, dy = -1;
  } else {
    dx = 1, dy = -1;
  }
}

int mag_at(const std::vector<int>& mag, int w, int h, int x, int y) {
  if (x < 0 || y < 0 || x >= w || y >= h) return 0;
  return mag[static_cast<std::size_t>(y) * w + x];
}

BinaryMask hysteresis(const std::vector<std::uint8_t>& cls, int w, int h) {
  // cls: 0 none, 1 weak, 2 strong
  BinaryMask out(w, h);
  std::vector<int> stack;
  for (int i = 0; i < w * h; ++i) {
    if (cls[i] != 2 || out.bits[i]) continue;
    out.bits[i] = 1;
    stack.push_back(i);
    while (!stack.empty()) {
      const int j = stack.back();
      stack.pop_back();
      const int x = j % w, y = j / w;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int k = ny * w + nx;
          if (cls[k] != 0 && !out.bits[k]) {
            out.bits[k] = 1;
            stack.push_back(k);
          }
        }
    }
  }
  return out;
}

void check_canny(const RasterImage& gray, const CannyParams& p) {
  check_gray(gray, "canny");
  if (!(p.low >= 0) || !(p.low <= p.high)) throw Error(ErrorCode::InvalidArgument, "canny needs 0 <= low <= high");
}

// ---- infill ----------------------------------------------------------------

template <bool Parallel>
RasterImage infill_impl(const RasterImage& img, const BinaryMask& mask, int iterations) {
  check_mask(img, mask);
  if (iterations < 0) throw Error(ErrorCode::InvalidArgument, "iterations must be >= 0");
  const int w = img.width, h = img.height, c = img.channels;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<float> cur(img.data.begin(), img.data.end());
  std::vector<std::uint8_t> known(n);
  std::vector<int> masked;
  for (std::size_t i = 0; i < n; ++i) {
    known[i] = mask.bits[i] ? 0 : 1;
    if (mask.bits[i]) masked.push_back(static_cast<int>(i));
  }
  if (masked.empty()) return img;

  // Layered seeding from already-known neighbours.
  std::vector<int> pending = masked;
  std::vector<int> layer, rest;
  while (!pending.empty()) {
    layer.clear();
    rest.clear();
    for (int i : pending) {
      const int x = i % w, y = i / w;
      bool any = false;
      for (int dy = -1; dy <= 1 && !any; ++dy)
        for (int dx = -1; dx <= 1 && !any; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if ((dx || dy) && nx >= 0 && ny >= 0 && nx < w && ny < h && known[ny * w + nx]) any = true;
        }
      (any ? layer : rest).push_back(i);
    }
    if (layer.empty()) break;  // nothing known anywhere
    std::vector<float> vals(layer.size() * c);
    for (std::size_t k = 0; k < layer.size(); ++k) {
      const int x = layer[k] % w, y = layer[k] / w;
      int cnt = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if ((dx || dy) && nx >= 0 && ny >= 0 && nx < w && ny < h && known[ny * w + nx]) {
            ++cnt;
            for (int ch = 0; ch < c; ++ch) vals[k * c + ch] += cur[(static_cast<std::size_t>(ny) * w + nx) * c + ch];
          }
        }
      for (int ch = 0; ch < c; ++ch) vals[k * c + ch] /= static_cast<float>(cnt);
    }
    for (std::size_t k = 0; k < layer.size(); ++k) {
      known[layer[k]] = 1;
      for (int ch = 0; ch < c; ++ch) cur[static_cast<std::size_t>(layer[k]) * c + ch] = vals[k * c + ch];
    }
    pending.swap(rest);
  }

  std::vector<float> next = cur;
  const int m = static_cast<int>(masked.size());
  for (int it = 0; it < iterations; ++it) {
#pragma omp parallel for schedule(static) if (Parallel)
    for (int k = 0; k < m; ++k) {
      const int i = masked[k];
      const int x = i % w, y = i / w;
      int cnt = 0;
      float acc[3] = {0, 0, 0};
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if ((dx || dy) && nx >= 0 && ny >= 0 && nx < w && ny < h) {
            ++cnt;
            for (int ch = 0; ch < c; ++ch) acc[ch] += cur[(static_cast<std::size_t>(ny) * w + nx) * c + ch];
          }
        }
      for (int ch = 0; ch < c; ++ch)
        next[static_cast<std::size_t>(i) * c + ch] = cnt ? acc[ch] / static_cast<float>(cnt) : cur[static_cast<std::size_t>(i) * c + ch];
    }
    cur.swap(next);
  }

  RasterImage out = img;
  for (int i : masked)
    for (int ch = 0; ch < c; ++ch)
      out.data[static_cast<std::size_t>(i) * c + ch] = saturate(cur[static_cast<std::size_t>(i) * c + ch]);
  return out;
}

}  // namespace

std::vector<double> gaussian_kernel(int kernel_px, double sigma) {
  std::vector<double> k(kernel_px);
  const int r = kernel_px / 2;
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += (k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma)));
  for (double& v : k) v /= sum;
  return k;
}

RasterImage gaussian_blur(const RasterImage& img, int kernel_px, double sigma) {
  check_blur_args(img, kernel_px, sigma);
  const std::vector<double> k = gaussian_kernel(kernel_px, sigma);
  const int r = kernel_px / 2;
  const int w = img.width, h = img.height, c = img.channels;
  std::vector<double> tmp(img.data.size());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * img.at(clampi(x + i, 0, w - 1), y, ch);
        tmp[(static_cast<std::size_t>(y) * w + x) * c + ch] = s;
      }
  RasterImage out(w, h, c);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * tmp[(static_cast<std::size_t>(clampi(y + i, 0, h - 1)) * w + x) * c + ch];
        out.at(x, y, ch) = saturate(s);
      }
  return out;
}

RasterImage pixelate(const RasterImage& img, int factor) {
  check_factor(img, factor);
  const int w = img.width, h = img.height, c = img.channels;
  const int bw = (w + factor - 1) / factor, bh = (h + factor - 1) / factor;
  RasterImage out(w, h, c);
#pragma omp parallel for schedule(static)
  for (int by = 0; by < bh; ++by) {
    const int y0 = by * factor, y1 = std::min(h, y0 + factor);
    for (int bx = 0; bx < bw; ++bx) {
      const int x0 = bx * factor, x1 = std::min(w, x0 + factor);
      const long cnt = static_cast<long>(x1 - x0) * (y1 - y0);
      for (int ch = 0; ch < c; ++ch) {
        long sum = 0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) sum += img.at(x, y, ch);
        const auto mean = static_cast<std::uint8_t>((2 * sum + cnt) / (2 * cnt));
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) out.at(x, y, ch) = mean;
      }
    }
  }
  return out;
}

std::vector<ClaheTileAudit> clahe_audit(const RasterImage& gray, const ClaheParams& params) {
  check_gray(gray, "clahe");
  const TileGrid g = tile_grid(gray, params);
  std::vector<ClaheTileAudit> out;
  std::array<int, 256> hist;
  for (int j = 0; j < g.ty; ++j)
    for (int i = 0; i < g.tx; ++i)
      out.push_back(clip_tile(gray, params, g.x_edge(i, gray.width), g.y_edge(j, gray.height),
                              g.x_edge(i + 1, gray.width), g.y_edge(j + 1, gray.height), hist));
  return out;
}

RasterImage clahe(const RasterImage& gray, const ClaheParams& params) {
  check_gray(gray, "clahe");
  if (gray.width == 0 || gray.height == 0) return gray;
  const TileGrid g = tile_grid(gray, params);
  const int w = gray.width, h = gray.height;
  std::vector<std::array<std::uint8_t, 256>> luts(static_cast<std::size_t>(g.tx) * g.ty);
#pragma omp parallel for schedule(static)
  for (int t = 0; t < g.tx * g.ty; ++t) {
    const int i = t % g.tx, j = t / g.tx;
    luts[t] = tile_lut(gray, params, g.x_edge(i, w), g.y_edge(j, h), g.x_edge(i + 1, w), g.y_edge(j + 1, h));
  }
  std::vector<Blend> bx(w);
  for (int x = 0; x < w; ++x) bx[x] = blend(x, w, g.tx);
  RasterImage out(w, h, 1);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const Blend by = blend(y, h, g.ty);
    for (int x = 0; x < w; ++x) {
      const int v = gray.at(x, y);
      const Blend& b = bx[x];
      const double top = (1 - b.w) * luts[by.a * g.tx + b.a][v] + b.w * luts[by.a * g.tx + b.b][v];
      const double bot = (1 - b.w) * luts[by.b * g.tx + b.a][v] + b.w * luts[by.b * g.tx + b.b][v];
      out.at(x, y) = saturate((1 - by.w) * top + by.w * bot);
    }
  }
  return out;
}

std::vector<float> canny_gradient_magnitude(const RasterImage& gray) {
  check_gray(gray, "canny");
  const Gradients g = sobel16(smooth16(gray), gray.width, gray.height);
  std::vector<float> out(g.mag.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(g.mag[i] / 16.0);
  return out;
}

BinaryMask canny(const RasterImage& gray, const CannyParams& params) {
  check_canny(gray, params);
  const int w = gray.width, h = gray.height;
  const Gradients g = sobel16(smooth16(gray), w, h);
  const double low16 = params.low * 16, high16 = params.high * 16;
  std::vector<std::uint8_t> cls(static_cast<std::size_t>(w) * h, 0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const int m = g.mag[i];
      if (m == 0 || m < low16) continue;
      int dx, dy;
      nms_direction(g.gx[i], g.gy[i], dx, dy);
      if (m > mag_at(g.mag, w, h, x + dx, y + dy) && m >= mag_at(g.mag, w, h, x - dx, y - dy))
        cls[i] = m >= high16 ? 2 : 1;
    }
  }
  return hysteresis(cls, w, h);
}

RasterImage mask_fill(const RasterImage& img, const BinaryMask& mask, const std::vector<std::uint8_t>& color) {
  check_mask(img, mask);
  if (static_cast<int>(color.size()) < img.channels)
    throw Error(ErrorCode::InvalidArgument, "fill color has " + std::to_string(color.size()) + " entries for " +
                                                std::to_string(img.channels) + " channels");
  RasterImage out = img;
  const int n = img.width * img.height, c = img.channels;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    if (mask.bits[i])
      for (int ch = 0; ch < c; ++ch) out.data[static_cast<std::size_t>(i) * c + ch] = color[ch];
  return out;
}

RasterImage infill_diffusion(const RasterImage& img, const BinaryMask& mask, int iterations) {
  return infill_impl<true>(img, mask, iterations);
}

RasterImage render_borders(const LabelMap& labels) {
  const int w = labels.width, h = labels.height;
  RasterImage out(w, h, 1);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::int32_t l = labels.at(x, y);
      const bool border = (x > 0 && labels.at(x - 1, y) != l) || (x + 1 < w && labels.at(x + 1, y) != l) ||
                          (y > 0 && labels.at(x, y - 1) != l) || (y + 1 < h && labels.at(x, y + 1) != l);
      out.at(x, y) = border ? 255 : 0;
    }
  }
  return out;
}

Rgb random_label_color(std::int32_t label, std::uint64_t seed) {
  if (label == 0) return {0, 0, 0};
  const std::uint64_t z = CounterRng::mix(CounterRng::mix(seed) ^ static_cast<std::uint32_t>(label));
  return {static_cast<std::uint8_t>(z), static_cast<std::uint8_t>(z >> 8), static_cast<std::uint8_t>(z >> 16)};
}

RasterImage render_random_colors(const LabelMap& labels, std::uint64_t seed) {
  RasterImage out(labels.width, labels.height, 3);
  const int n = labels.width * labels.height;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const Rgb c = random_label_color(labels.labels[i], seed);
    std::copy(c.begin(), c.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i) * 3);
  }
  return out;
}

RasterImage render_semantic_colors(const LabelMap& labels, const Palette& palette) {
  RasterImage out(labels.width, labels.height, 3);
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    const std::int32_t l = labels.labels[i];
    const auto it = palette.find(l);
    if (it == palette.end())
      throw Error(ErrorCode::MissingPaletteEntry, "no palette entry for label " + std::to_string(l) + " at pixel (" +
                                                      std::to_string(i % labels.width) + ", " +
                                                      std::to_string(i / labels.width) + ")");
    std::copy(it->second.begin(), it->second.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i) * 3);
  }
  return out;
}

// ---- serial references -----------------------------------------------------

namespace reference {

RasterImage gaussian_blur(const RasterImage& img, int kernel_px, double sigma) {
  check_blur_args(img, kernel_px, sigma);
  const std::vector<double> k = gaussian_kernel(kernel_px, sigma);
  const int r = kernel_px / 2;
  RasterImage out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int ch = 0; ch < img.channels; ++ch) {
        double s = 0;
        for (int j = -r; j <= r; ++j)
          for (int i = -r; i <= r; ++i)
            s += k[i + r] * k[j + r] * img.at(clampi(x + i, 0, img.width - 1), clampi(y + j, 0, img.height - 1), ch);
        out.at(x, y, ch) = saturate(s);
      }
  return out;
}

RasterImage pixelate(const RasterImage& img, int factor) {
  check_factor(img, factor);
  RasterImage out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int x0 = x / factor * factor, y0 = y / factor * factor;
      const int x1 = std::min(img.width, x0 + factor), y1 = std::min(img.height, y0 + factor);
      for (int ch = 0; ch < img.channels; ++ch) {
        long sum = 0, cnt = 0;
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx, ++cnt) sum += img.at(xx, yy, ch);
        out.at(x, y, ch) = static_cast<std::uint8_t>((2 * sum + cnt) / (2 * cnt));
      }
    }
  return out;
}

RasterImage clahe(const RasterImage& gray, const ClaheParams& params) {
  check_gray(gray, "clahe");
  if (gray.width == 0 || gray.height == 0) return gray;
  const TileGrid g = tile_grid(gray, params);
  const int w = gray.width, h = gray.height;
  auto lut = [&](int i, int j) {
    return tile_lut(gray, params, g.x_edge(i, w), g.y_edge(j, h), g.x_edge(i + 1, w), g.y_edge(j + 1, h));
  };
  RasterImage out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    const Blend by = blend(y, h, g.ty);
    for (int x = 0; x < w; ++x) {
      const Blend bx = blend(x, w, g.tx);
      const int v = gray.at(x, y);
      const double top = (1 - bx.w) * lut(bx.a, by.a)[v] + bx.w * lut(bx.b, by.a)[v];
      const double bot = (1 - bx.w) * lut(bx.a, by.b)[v] + bx.w * lut(bx.b, by.b)[v];
      out.at(x, y) = saturate((1 - by.w) * top + by.w * bot);
    }
  }
  return out;
}

BinaryMask canny(const RasterImage& gray, const CannyParams& params) {
  check_canny(gray, params);
  const int w = gray.width, h = gray.height;
  auto px = [&](int x, int y) { return static_cast<int>(gray.at(clampi(x, 0, w - 1), clampi(y, 0, h - 1))); };
  auto smooth = [&](int x, int y) {
    x = clampi(x, 0, w - 1);
    y = clampi(y, 0, h - 1);
    return px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1) + 2 * px(x - 1, y) + 4 * px(x, y) +
           2 * px(x + 1, y) + px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1);
  };
  std::vector<int> gx(static_cast<std::size_t>(w) * h), gy(gx.size()), mag(gx.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      gx[i] = smooth(x + 1, y - 1) + 2 * smooth(x + 1, y) + smooth(x + 1, y + 1) - smooth(x - 1, y - 1) -
              2 * smooth(x - 1, y) - smooth(x - 1, y + 1);
      gy[i] = smooth(x - 1, y + 1) + 2 * smooth(x, y + 1) + smooth(x + 1, y + 1) - smooth(x - 1, y - 1) -
              2 * smooth(x, y - 1) - smooth(x + 1, y - 1);
      mag[i] = std::abs(gx[i]) + std::abs(gy[i]);
    }
  std::vector<std::uint8_t> cls(gx.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (mag[i] == 0 || mag[i] < params.low * 16) continue;
      int dx, dy;
      nms_direction(gx[i], gy[i], dx, dy);
      if (mag[i] > mag_at(mag, w, h, x + dx, y + dy) && mag[i] >= mag_at(mag, w, h, x - dx, y - dy))
        cls[i] = mag[i] >= params.high * 16 ? 2 : 1;
    }
  return hysteresis(cls, w, h);
}

RasterImage infill_diffusion(const RasterImage& img, const BinaryMask& mask, int iterations) {
  return infill_impl<false>(img, mask, iterations);
}

RasterImage render_borders(const LabelMap& labels) {
  RasterImage out(labels.width, labels.height, 1);
  const int nx[4] = {-1, 1, 0, 0}, ny[4] = {0, 0, -1, 1};
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x)
      for (int k = 0; k < 4; ++k) {
        const int xx = x + nx[k], yy = y + ny[k];
        if (xx < 0 || yy < 0 || xx >= labels.width || yy >= labels.height) continue;
        if (labels.at(xx, yy) != labels.at(x, y)) out.at(x, y) = 255;
      }
  return out;
}

}  // namespace reference

}  // namespace obfloc
