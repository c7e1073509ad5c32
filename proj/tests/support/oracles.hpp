#pragma once

// Independent reference implementations used by the tests. Each one is
// written from the definition, without calling into the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "mmvu/attention_dump.hpp"

namespace oracle {

struct Rates {
  std::optional<double> ra;
  std::optional<double> mr;
};

// outcomes: 0 = UR, 1 = UF, 2 = NR, 3 = NF
inline Rates brute_rates(const std::vector<int>& outcomes) {
  long ur = 0, uf = 0;
  for (int o : outcomes) {
    if (o == 0) ++ur;
    if (o == 1) ++uf;
  }
  Rates r;
  if (!outcomes.empty()) r.ra = double(ur) / double(outcomes.size());
  if (ur + uf) r.mr = double(uf) / double(ur + uf);
  return r;
}

inline std::array<long double, 4> softmax_ld(const std::array<double, 4>& x) {
  std::array<long double, 4> e{};
  long double sum = 0;
  for (int i = 0; i < 4; ++i) sum += (e[i] = std::exp(static_cast<long double>(x[i])));
  for (auto& v : e) v /= sum;
  return e;
}

inline mmvu::AttentionDump random_dump(std::mt19937_64& rng, std::size_t max_tokens = 64,
                                       std::uint32_t max_heads = 8) {
  std::uniform_int_distribution<std::uint32_t> heads(1, max_heads), small(1, 6), grid(1, 5);
  for (;;) {
    mmvu::SegmentLengths s;
    s.heads = heads(rng);
    s.grid_rows = grid(rng);
    s.grid_cols = grid(rng);
    s.n_vis = s.grid_rows * s.grid_cols;
    s.n_sys = small(rng);
    s.n_q = small(rng) + small(rng);
    s.n_a = small(rng);
    if (s.total() > max_tokens) continue;
    mmvu::AttentionDump d{s, {}};
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    d.tensor.resize(std::size_t{s.heads} * s.total() * s.total());
    for (auto& v : d.tensor) v = u(rng);
    return d;
  }
}

inline std::vector<double> head_mean(const mmvu::AttentionDump& d) {
  const std::size_t n = d.segments.total();
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t h = 0; h < d.segments.heads; ++h) s += d.tensor[(h * n + i) * n + j];
      m[i * n + j] = s / d.segments.heads;
    }
  return m;
}

// Triple loop over rows, columns and heads for answer-row scores.
inline std::array<double, 3> answer_scores(const mmvu::AttentionDump& d) {
  const auto& s = d.segments;
  const std::size_t n = s.total();
  const std::size_t b[4] = {0, s.n_sys, std::size_t{s.n_sys} + s.n_vis, std::size_t{s.n_sys} + s.n_vis + s.n_q};
  std::array<double, 3> out{};
  for (std::size_t r = b[3]; r < n; ++r)
    for (int blk = 0; blk < 3; ++blk) {
      double best = -1;
      for (std::size_t c = b[blk]; c < b[blk + 1]; ++c) {
        double v = 0;
        for (std::size_t h = 0; h < s.heads; ++h) v += d.tensor[(h * n + r) * n + c];
        best = std::max(best, v / s.heads);
      }
      out[blk] += best;
    }
  for (auto& v : out) v /= s.n_a;
  return out;
}

inline std::array<double, 2> question_bound(const mmvu::AttentionDump& d) {
  const auto& s = d.segments;
  const std::size_t n = s.total();
  const std::size_t b[4] = {0, s.n_sys, std::size_t{s.n_sys} + s.n_vis, std::size_t{s.n_sys} + s.n_vis + s.n_q};
  std::array<double, 2> out{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (std::size_t r = b[2]; r < b[3]; ++r)
    for (int blk = 0; blk < 2; ++blk) {
      double best = -1;
      for (std::size_t c = b[blk]; c < b[blk + 1]; ++c) {
        double v = 0;
        for (std::size_t h = 0; h < s.heads; ++h) v += d.tensor[(h * n + r) * n + c];
        best = std::max(best, v / s.heads);
      }
      out[blk] = std::min(out[blk], best);
    }
  return out;
}

// Bilinear sample of a rows x cols grid at pixel (x, y) of a w x h image,
// grid cell centres aligned with patch centres.
inline double bilinear(const std::vector<double>& g, int rows, int cols, int w, int h, int x, int y) {
  auto coord = [](int i, int out_n, int in_n) {
    double c = (i + 0.5) * in_n / out_n - 0.5;
    return std::min(std::max(c, 0.0), double(in_n - 1));
  };
  const double gx = coord(x, w, cols), gy = coord(y, h, rows);
  const int x0 = int(std::floor(gx)), y0 = int(std::floor(gy));
  const int x1 = std::min(x0 + 1, cols - 1), y1 = std::min(y0 + 1, rows - 1);
  const double tx = gx - x0, ty = gy - y0;
  auto at = [&](int r, int c) { return g[std::size_t(r) * cols + c]; };
  return (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) + ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
}

// Upsample then a direct 2-D Gaussian convolution with clamped borders.
inline std::vector<double> spatialize(const std::vector<double>& g, int rows, int cols, int w, int h,
                                      double sigma, int k) {
  std::vector<double> up(std::size_t(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) up[std::size_t(y) * w + x] = bilinear(g, rows, cols, w, h, x, y);
  const int r = k / 2;
  double norm = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) norm += std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
  std::vector<double> out(up.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int sx = std::clamp(x + dx, 0, w - 1), sy = std::clamp(y + dy, 0, h - 1);
          acc += std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) * up[std::size_t(sy) * w + sx];
        }
      out[std::size_t(y) * w + x] = std::clamp(acc / norm, 0.0, 1.0);
    }
  return out;
}

}  // namespace oracle
