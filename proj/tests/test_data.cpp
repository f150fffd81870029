#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pedgen/dataset.hpp"
#include "pedgen/image.hpp"
#include "pedgen/rng.hpp"
#include "pedgen/synthetic.hpp"
#include "test_util.hpp"

using namespace pedgen;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("ppm round-trip preserves bytes") {
  Rng rng(3);
  Image8 img;
  img.width = 5;
  img.height = 4;
  img.rgb.resize(60);
  for (auto& b : img.rgb) b = static_cast<uint8_t>(rng.uniform_int(256));
  TempDir dir("pedgen_ppm_test");
  const std::string path = dir.str() + "/x.ppm";
  write_ppm(img, path);
  Image8 back = read_ppm(path);
  CHECK(back.width == 5);
  CHECK(back.height == 4);
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("tensor image conversion is inverse on 8-bit data") {
  Rng rng(5);
  Image8 img;
  img.width = 4;
  img.height = 4;
  img.rgb.resize(48);
  for (auto& b : img.rgb) b = static_cast<uint8_t>(rng.uniform_int(256));
  Tensor t = image_to_tensor(img);
  CHECK(t.shape() == Shape{3, 4, 4});
  Image8 back = tensor_to_image(t);
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("box downsample averages blocks") {
  Image8 img;
  img.width = 4;
  img.height = 2;
  img.rgb.assign(24, 0);
  img.at(0, 0, 0) = 100;
  img.at(0, 1, 0) = 200;
  img.at(1, 0, 0) = 0;
  img.at(1, 1, 0) = 100;
  Image8 half = downsample_box(img, 2);
  CHECK(half.width == 2);
  CHECK(half.height == 1);
  CHECK(half.at(0, 0, 0) == 100);  // (100+200+0+100)/4
  CHECK_THROWS_AS(downsample_box(img, 3), ContractError);
}

TEST_CASE("synthetic dataset is deterministic per seed") {
  TempDir a("pedgen_syn_a"), b("pedgen_syn_b");
  SyntheticSpec spec;
  spec.count = 8;
  spec.resolution = 32;
  spec.out_dir = a.str();
  make_synthetic_dataset(spec, 7);
  spec.out_dir = b.str();
  make_synthetic_dataset(spec, 7);
  for (int i = 0; i < 8; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "ped_%05d.ppm", i);
    std::ifstream fa(a.path / name, std::ios::binary), fb(b.path / name, std::ios::binary);
    std::string da((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string db((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(da == db);
    CHECK_FALSE(da.empty());
  }
  std::ifstream ma(a.path / "manifest.json"), mb(b.path / "manifest.json");
  std::string sa((std::istreambuf_iterator<char>(ma)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(mb)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("synthetic captions name the painted band colors") {
  SyntheticLayout layout = synthetic_layout(3, 99, 32);
  auto captions = synthetic_captions(layout);
  const auto& palette = synthetic_palette();
  for (int band = 0; band < 4; ++band) {
    const std::string color = palette[static_cast<size_t>(layout.color_index[static_cast<size_t>(band)])].name;
    CHECK(captions[0].find(color) != std::string::npos);
    CHECK(captions[1].find(color) != std::string::npos);
  }
  // the painted pixels really are that color
  Image8 img = render_synthetic(layout, 32);
  const auto& torso_box = layout.band_xyxy[1];
  const auto& c = palette[static_cast<size_t>(layout.color_index[1])];
  CHECK(img.at(torso_box[1], torso_box[0], 0) == c.r);
  CHECK(img.at(torso_box[1], torso_box[0], 1) == c.g);
  CHECK(img.at(torso_box[1], torso_box[0], 2) == c.b);
}

TEST_CASE("synthetic bands occupy exact vertical quarters") {
  SyntheticLayout layout = synthetic_layout(0, 5, 32);
  for (int band = 0; band < 4; ++band) {
    CHECK(layout.band_xyxy[static_cast<size_t>(band)][1] == band * 8);
    CHECK(layout.band_xyxy[static_cast<size_t>(band)][3] == (band + 1) * 8);
  }
}

TEST_CASE("ingest validates records and reports offenders") {
  TempDir dir("pedgen_ingest_test");

  SUBCASE("empty manifest") {
    std::ofstream(dir.path / "manifest.json") << "[]";
    CHECK_THROWS_AS(ingest_dataset((dir.path / "manifest.json").string()), InputError);
  }
  SUBCASE("missing manifest file") {
    CHECK_THROWS_AS(ingest_dataset((dir.path / "nope.json").string()), InputError);
  }
  SUBCASE("missing image is named in the error") {
    std::ofstream(dir.path / "manifest.json")
        << R"([{"image": "ghost.ppm", "captions": ["a person"], "id": 0, "split": "train"}])";
    try {
      ingest_dataset((dir.path / "manifest.json").string());
      CHECK(false);
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find("ghost.ppm") != std::string::npos);
    }
  }
  SUBCASE("empty caption list is rejected") {
    Image8 img;
    img.width = 8;
    img.height = 8;
    img.rgb.assign(192, 100);
    write_ppm(img, (dir.path / "ok.ppm").string());
    std::ofstream(dir.path / "manifest.json")
        << R"([{"image": "ok.ppm", "captions": [], "id": 0, "split": "train"}])";
    CHECK_THROWS_AS(ingest_dataset((dir.path / "manifest.json").string()), InputError);
  }
  SUBCASE("two captions become two pairs; duplicate image paths are fine") {
    Image8 img;
    img.width = 32;
    img.height = 32;
    img.rgb.assign(32 * 32 * 3, 100);
    write_ppm(img, (dir.path / "ok.ppm").string());
    std::ofstream(dir.path / "manifest.json") << R"([
      {"image": "ok.ppm", "captions": ["a red torso", "blue legs here"], "id": 0, "split": "train"},
      {"image": "ok.ppm", "captions": ["another view"], "id": 1, "split": "train"}
    ])";
    DatasetManifest m = ingest_dataset((dir.path / "manifest.json").string());
    CHECK(m.records.size() == 2);
    Vocabulary v = build_vocabulary(m);
    CHECK(v.contains("torso"));
    LoadedDataset data(m, v, tiny_profile());
    CHECK(data.size() == 3);  // 2 + 1 pairs
    CHECK(data.pair(0).stage_images.size() == 3);
    CHECK(data.pair(0).stage_images[0].shape() == Shape{3, 8, 8});
    CHECK(data.pair(2).record_index == 1);
  }
}

TEST_CASE("loaded synthetic dataset aligns bands with grid quarters") {
  TempDir dir("pedgen_loaded_syn");
  SyntheticSpec spec;
  spec.count = 4;
  spec.resolution = 32;
  spec.out_dir = dir.str();
  DatasetManifest m = make_synthetic_dataset(spec, 11);
  Vocabulary v = build_vocabulary(m);
  CHECK(v.contains("person"));
  CHECK(v.contains("feet"));
  LoadedDataset data(m, v, tiny_profile());
  CHECK(data.size() == 8);  // 4 images x 2 captions
  // every caption fits the tiny profile's max length
  for (size_t i = 0; i < data.size(); ++i) CHECK(data.pair(i).tokens.true_length == 14);
}
