// Builds a synthetic attention dump, refines a gradient image with it and
// writes refined.png to the working directory.

#include <iostream>

#include "mmvu/var.hpp"

int main() {
  mmvu::SegmentLengths seg{1, 4, 2, 1, 1, 2, 2};  // sys, vis, q, a, heads, grid rows, cols
  auto dump = mmvu::AttentionDump::zeros(seg);
  // Question rows attend mostly to the top-left patch.
  for (std::uint32_t r = seg.q_begin(); r < seg.a_begin(); ++r) dump.at(0, r, seg.vis_begin()) = 0.9f;

  mmvu::RgbImage image(64, 64);
  for (std::uint32_t y = 0; y < image.height; ++y)
    for (std::uint32_t x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = static_cast<std::uint8_t>((x + y) * 2);

  const auto refined = mmvu::refine_image(image, dump);
  mmvu::write_png(refined, "refined.png");
  std::cout << "wrote refined.png (" << refined.width << "x" << refined.height << ")\n";
}
