#include "pedgen/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pedgen/common.hpp"

namespace pedgen {

void write_ppm(const Image8& img, const std::string& path) {
  if (img.width <= 0 || img.height <= 0 ||
      img.rgb.size() != static_cast<size_t>(img.width) * img.height * 3)
    throw ContractError("write_ppm: malformed image");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_ppm: cannot open " + path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()),
           static_cast<std::streamsize>(img.rgb.size()));
  if (!os) throw IoError("write_ppm: short write to " + path);
}

Image8 read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("read_ppm: cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "P6") throw IoError("read_ppm: " + path + " is not a binary PPM");
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (!is || w <= 0 || h <= 0 || maxval != 255)
    throw IoError("read_ppm: unsupported header in " + path);
  is.get();  // single whitespace after header
  Image8 img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!is) throw IoError("read_ppm: truncated pixel data in " + path);
  return img;
}

Image8 tensor_to_image(const Tensor& chw) {
  if (chw.shape().size() != 3 || chw.dim(0) != 3)
    throw ContractError("tensor_to_image: (3,H,W) expected, got " + shape_str(chw.shape()));
  Image8 img;
  img.height = chw.dim(1);
  img.width = chw.dim(2);
  img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
  const int hw = img.height * img.width;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < hw; ++i) {
      double v = chw.values()[static_cast<size_t>(c) * hw + i];
      v = std::clamp((v + 1.0) * 0.5, 0.0, 1.0);
      img.rgb[static_cast<size_t>(i) * 3 + c] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
  return img;
}

Tensor image_to_tensor(const Image8& img) {
  const int hw = img.height * img.width;
  std::vector<double> vals(static_cast<size_t>(3) * hw);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < hw; ++i)
      vals[static_cast<size_t>(c) * hw + i] =
          static_cast<double>(img.rgb[static_cast<size_t>(i) * 3 + c]) / 255.0 * 2.0 - 1.0;
  return Tensor::leaf({3, img.height, img.width}, std::move(vals));
}

Image8 downsample_box(const Image8& img, int factor) {
  if (factor < 1 || img.width % factor || img.height % factor)
    throw ContractError("downsample_box: factor must divide both dimensions");
  if (factor == 1) return img;
  Image8 out;
  out.width = img.width / factor;
  out.height = img.height / factor;
  out.rgb.resize(static_cast<size_t>(out.width) * out.height * 3);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) acc += img.at(y * factor + dy, x * factor + dx, c);
        out.at(y, x, c) = static_cast<uint8_t>(std::lround(acc * inv));
      }
  return out;
}

Image8 heatmap_image(const std::vector<double>& weights, int grid_h, int grid_w, int out_h,
                     int out_w) {
  if (weights.size() != static_cast<size_t>(grid_h) * grid_w)
    throw ContractError("heatmap_image: weight count does not match the grid");
  double lo = weights[0], hi = weights[0];
  for (double w : weights) {
    lo = std::min(lo, w);
    hi = std::max(hi, w);
  }
  const double range = hi - lo > 1e-12 ? hi - lo : 1.0;
  Image8 img;
  img.width = out_w;
  img.height = out_h;
  img.rgb.resize(static_cast<size_t>(out_w) * out_h * 3);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const int gy = y * grid_h / out_h;
      const int gx = x * grid_w / out_w;
      const double v = (weights[static_cast<size_t>(gy) * grid_w + gx] - lo) / range;
      const uint8_t g = static_cast<uint8_t>(std::lround(v * 255.0));
      img.at(y, x, 0) = g;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = g;
    }
  return img;
}

}  // namespace pedgen
