#pragma once

// Visual attention refinement.
//
// Question-to-visual attention becomes a per-patch salience grid, which is
// min-max normalized, inverted, upsampled to the image, blurred, and blended
// into the pixels:  out = alpha * pixel + beta * mask.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mmvu/analytics.hpp"
#include "mmvu/attention_dump.hpp"
#include "mmvu/error.hpp"
#include "mmvu/image.hpp"

namespace mmvu {

struct VarParams {
  double alpha = 0.85;
  double beta = 0.15;
  double sigma = 1.0;
  int kernel = 5;
  bool invert = true;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw UsageError("var: alpha and beta must be >= 0");
    if (!(sigma > 0.0)) throw UsageError("var: sigma must be > 0");
    if (kernel < 1 || kernel % 2 == 0) throw UsageError("var: kernel size must be a positive odd number");
  }
};

// Grid of per-patch values in [0,1], row-major.
struct HeatMask {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<double> values;

  double at(std::uint32_t r, std::uint32_t c) const { return values[std::size_t{r} * cols + c]; }
};

// Per-pixel mask at image resolution.
struct PixelMask {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<double> values;

  double at(std::uint32_t x, std::uint32_t y) const { return values[std::size_t{y} * width + x]; }
};

// Constant input maps to all zeros.
inline void min_max_normalize(std::vector<double>& v) {
  if (v.empty()) return;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double min = *lo, range = *hi - *lo;
  if (!(range > 0.0)) {
    std::fill(v.begin(), v.end(), 0.0);
    return;
  }
  for (auto& x : v) x = (x - min) / range;
}

inline HeatMask salience_from_attention(const Matrix& a, const SegmentLengths& seg) {
  if (a.size() != seg.total())
    throw ValidationError("salience: matrix size does not match segments");
  if (std::size_t{seg.grid_rows} * seg.grid_cols != seg.n_vis)
    throw ValidationError("salience: grid does not cover the visual tokens");
  HeatMask m{seg.grid_rows, seg.grid_cols, std::vector<double>(seg.n_vis)};
  const auto vis = seg.vis_begin(), q = seg.q_begin(), ans = seg.a_begin();
  for (std::size_t t = 0; t < seg.n_vis; ++t) {
    double best = a(q, vis + t);
    for (std::size_t r = q + 1; r < ans; ++r) best = std::max(best, a(r, vis + t));
    m.values[t] = best;
  }
  min_max_normalize(m.values);
  return m;
}

inline HeatMask invert_mask(HeatMask m) {
  for (auto& v : m.values) v = 1.0 - v;
  return m;
}

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  const int radius = size / 2;
  std::vector<double> k(static_cast<std::size_t>(size));
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - radius;
    sum += (k[i] = std::exp(-(d * d) / (2.0 * sigma * sigma)));
  }
  for (auto& w : k) w /= sum;
  return k;
}

// Bilinear upsampling with grid-cell centers on patch centers, then a
// separable Gaussian blur with edge clamping, then clamp to [0,1].
inline PixelMask spatialize_and_filter(const HeatMask& m, std::uint32_t width, std::uint32_t height,
                                       double sigma = 1.0, int kernel = 5) {
  if (width == 0 || height == 0) throw ValidationError("spatialize: image dimensions must be >= 1");
  if (m.rows == 0 || m.cols == 0 || m.values.size() != std::size_t{m.rows} * m.cols)
    throw ValidationError("spatialize: malformed mask");

  // Source coordinate and weight along one axis.
  struct Tap {
    std::uint32_t lo, hi;
    double t;
  };
  auto taps = [](std::uint32_t out_n, std::uint32_t in_n) {
    std::vector<Tap> v(out_n);
    for (std::uint32_t i = 0; i < out_n; ++i) {
      double g = (i + 0.5) * in_n / out_n - 0.5;
      g = std::clamp(g, 0.0, static_cast<double>(in_n - 1));
      const auto lo = static_cast<std::uint32_t>(std::floor(g));
      v[i] = {lo, std::min(lo + 1, in_n - 1), g - lo};
    }
    return v;
  };
  const auto xs = taps(width, m.cols), ys = taps(height, m.rows);

  PixelMask up{width, height, std::vector<double>(std::size_t{width} * height)};
  for (std::uint32_t y = 0; y < height; ++y) {
    const auto& ty = ys[y];
    for (std::uint32_t x = 0; x < width; ++x) {
      const auto& tx = xs[x];
      const double top = m.at(ty.lo, tx.lo) * (1 - tx.t) + m.at(ty.lo, tx.hi) * tx.t;
      const double bot = m.at(ty.hi, tx.lo) * (1 - tx.t) + m.at(ty.hi, tx.hi) * tx.t;
      up.values[std::size_t{y} * width + x] = top * (1 - ty.t) + bot * ty.t;
    }
  }

  const auto k = gaussian_kernel(kernel, sigma);
  const int radius = kernel / 2;
  auto clamp_idx = [](long i, std::uint32_t n) {
    return static_cast<std::uint32_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1));
  };

  std::vector<double> tmp(up.values.size());
  for (std::uint32_t y = 0; y < height; ++y)
    for (std::uint32_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kernel; ++i)
        acc += k[i] * up.at(clamp_idx(long{x} + i - radius, width), y);
      tmp[std::size_t{y} * width + x] = acc;
    }
  for (std::uint32_t y = 0; y < height; ++y)
    for (std::uint32_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kernel; ++i)
        acc += k[i] * tmp[std::size_t{clamp_idx(long{y} + i - radius, height)} * width + x];
      up.values[std::size_t{y} * width + x] = std::clamp(acc, 0.0, 1.0);
    }
  return up;
}

// One channel: pixel and mask in [0,1]; result quantized half away from zero.
inline std::uint8_t blend_channel(double pixel, double mask, double alpha = 0.85,
                                  double beta = 0.15) {
  const double v = std::clamp(alpha * pixel + beta * mask, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

inline RgbImage blend(const RgbImage& image, const PixelMask& mask, double alpha = 0.85,
                      double beta = 0.15) {
  if (mask.width != image.width || mask.height != image.height)
    throw ValidationError("blend: mask is " + std::to_string(mask.width) + "x" +
                          std::to_string(mask.height) + ", image is " +
                          std::to_string(image.width) + "x" + std::to_string(image.height));
  RgbImage out(image.width, image.height);
  for (std::size_t i = 0; i < mask.values.size(); ++i)
    for (int c = 0; c < 3; ++c)
      out.pixels[i * 3 + c] = blend_channel(image.pixels[i * 3 + c] / 255.0, mask.values[i], alpha, beta);
  return out;
}

inline RgbImage refine_image(const RgbImage& image, const AttentionDump& dump,
                             const VarParams& params = {}) {
  params.validate();
  auto heat = salience_from_attention(average_heads(dump), dump.segments);
  if (params.invert) heat = invert_mask(std::move(heat));
  const auto mask = spatialize_and_filter(heat, image.width, image.height, params.sigma, params.kernel);
  return blend(image, mask, params.alpha, params.beta);
}

}  // namespace mmvu
