#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pedgen/tensor.hpp"

namespace pedgen {

// 8-bit RGB image, row-major, 3 bytes per pixel.
struct Image8 {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;

  uint8_t& at(int y, int x, int c) { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  uint8_t at(int y, int x, int c) const {
    return rgb[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
};

// Binary PPM (P6). Lossless, dependency-free, byte-deterministic.
void write_ppm(const Image8& img, const std::string& path);
Image8 read_ppm(const std::string& path);

// (3,H,W) tensor in [-1,1] <-> 8-bit image. Conversion rounds to nearest and
// clamps, so tensor_to_image is total on any finite input.
Image8 tensor_to_image(const Tensor& chw);
Tensor image_to_tensor(const Image8& img);

// Box average by an integer factor; used to bring dataset images down to the
// lower stage resolutions.
Image8 downsample_box(const Image8& img, int factor);

// Nearest-neighbor upscale of a per-region weight vector (grid_h x grid_w,
// row-major) to an out_h x out_w grayscale image, normalized to the weight
// range. Presentation only.
Image8 heatmap_image(const std::vector<double>& weights, int grid_h, int grid_w, int out_h,
                     int out_w);

}  // namespace pedgen
