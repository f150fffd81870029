#pragma once

#include <array>
#include <string>
#include <vector>

#include "pedgen/dataset.hpp"
#include "pedgen/image.hpp"

namespace pedgen {

// Procedural pedestrian stand-ins: four saturated color bands (head, torso,
// legs, feet) on a gray background, each filling its vertical quarter, with
// per-image width/offset jitter for pose-like variation. Captions name the
// four colors through two fixed templates.

struct SyntheticColor {
  const char* name;
  uint8_t r, g, b;
};

const std::vector<SyntheticColor>& synthetic_palette();

struct SyntheticSpec {
  int count = 64;
  int resolution = 32;  // must match the training profile's top resolution
  std::string out_dir;
  std::string split = "train";
};

// Band geometry and colors for image `index` under `seed`; exposed so tests
// can verify detector output against the generating layout.
struct SyntheticLayout {
  std::array<int, 4> color_index;            // into synthetic_palette()
  std::array<std::array<int, 4>, 4> band_xyxy;  // per band: x0, y0, x1, y1 (half-open)
};

SyntheticLayout synthetic_layout(int index, uint64_t seed, int resolution);
Image8 render_synthetic(const SyntheticLayout& layout, int resolution);
std::array<std::string, 2> synthetic_captions(const SyntheticLayout& layout);

// Writes `count` images plus manifest.json into out_dir and returns the
// ingested manifest. Identical (spec, seed) produce identical bytes.
DatasetManifest make_synthetic_dataset(const SyntheticSpec& spec, uint64_t seed);

}  // namespace pedgen
