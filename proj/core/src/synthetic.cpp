#include "pedgen/synthetic.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pedgen/common.hpp"
#include "pedgen/rng.hpp"

namespace fs = std::filesystem;

namespace pedgen {

const std::vector<SyntheticColor>& synthetic_palette() {
  static const std::vector<SyntheticColor> palette = {
      {"red", 200, 40, 40},    {"green", 40, 180, 40},  {"blue", 40, 40, 200},
      {"yellow", 220, 210, 40}, {"purple", 150, 40, 190}, {"orange", 230, 140, 30},
      {"cyan", 40, 190, 210},  {"brown", 130, 90, 40},
  };
  return palette;
}

SyntheticLayout synthetic_layout(int index, uint64_t seed, int resolution) {
  // One independent stream per image: layouts do not shift when count changes.
  Rng rng(seed * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(index) + 1);
  const auto& palette = synthetic_palette();
  SyntheticLayout layout;
  const double width_ratio = rng.uniform(0.40, 0.65);
  const double center = resolution * (0.5 + rng.uniform(-0.125, 0.125));
  for (int band = 0; band < 4; ++band) {
    layout.color_index[static_cast<size_t>(band)] =
        rng.uniform_int(static_cast<int>(palette.size()));
    const double jitter = resolution * rng.uniform(-0.0625, 0.0625);
    const double half_w = 0.5 * width_ratio * resolution;
    int x0 = static_cast<int>(std::lround(center + jitter - half_w));
    int x1 = static_cast<int>(std::lround(center + jitter + half_w));
    x0 = std::clamp(x0, 0, resolution - 2);
    x1 = std::clamp(x1, x0 + 2, resolution);
    const int y0 = band * resolution / 4;
    const int y1 = (band + 1) * resolution / 4;
    layout.band_xyxy[static_cast<size_t>(band)] = {x0, y0, x1, y1};
  }
  return layout;
}

Image8 render_synthetic(const SyntheticLayout& layout, int resolution) {
  Image8 img;
  img.width = resolution;
  img.height = resolution;
  img.rgb.assign(static_cast<size_t>(resolution) * resolution * 3, 210);  // gray background
  const auto& palette = synthetic_palette();
  for (int band = 0; band < 4; ++band) {
    const auto& box = layout.band_xyxy[static_cast<size_t>(band)];
    const SyntheticColor& c = palette[static_cast<size_t>(layout.color_index[static_cast<size_t>(band)])];
    for (int y = box[1]; y < box[3]; ++y)
      for (int x = box[0]; x < box[2]; ++x) {
        img.at(y, x, 0) = c.r;
        img.at(y, x, 1) = c.g;
        img.at(y, x, 2) = c.b;
      }
  }
  return img;
}

std::array<std::string, 2> synthetic_captions(const SyntheticLayout& layout) {
  const auto& palette = synthetic_palette();
  const std::string h = palette[static_cast<size_t>(layout.color_index[0])].name;
  const std::string to = palette[static_cast<size_t>(layout.color_index[1])].name;
  const std::string l = palette[static_cast<size_t>(layout.color_index[2])].name;
  const std::string f = palette[static_cast<size_t>(layout.color_index[3])].name;
  return {
      "a person with a " + h + " head a " + to + " torso " + l + " legs and " + f + " feet",
      "this pedestrian has a " + h + " head a " + to + " torso " + l + " legs and " + f + " feet",
  };
}

DatasetManifest make_synthetic_dataset(const SyntheticSpec& spec, uint64_t seed) {
  if (spec.count < 1) throw InputError("make_synthetic_dataset: count must be >= 1");
  if (spec.resolution < 8 || spec.resolution % 4 != 0)
    throw InputError("make_synthetic_dataset: resolution must be >= 8 and divisible by 4");
  fs::create_directories(spec.out_dir);

  nlohmann::json manifest = nlohmann::json::array();
  for (int i = 0; i < spec.count; ++i) {
    SyntheticLayout layout = synthetic_layout(i, seed, spec.resolution);
    Image8 img = render_synthetic(layout, spec.resolution);
    char name[64];
    std::snprintf(name, sizeof(name), "ped_%05d.ppm", i);
    write_ppm(img, (fs::path(spec.out_dir) / name).string());
    auto captions = synthetic_captions(layout);
    manifest.push_back({{"image", name},
                        {"captions", {captions[0], captions[1]}},
                        {"id", i},
                        {"split", spec.split}});
  }
  const std::string manifest_path = (fs::path(spec.out_dir) / "manifest.json").string();
  {
    std::ofstream os(manifest_path);
    if (!os) throw IoError("make_synthetic_dataset: cannot write " + manifest_path);
    os << manifest.dump(1) << "\n";
  }
  return ingest_dataset(manifest_path);
}

}  // namespace pedgen
