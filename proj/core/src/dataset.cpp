#include "pedgen/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pedgen/common.hpp"

namespace fs = std::filesystem;

namespace pedgen {

std::string DatasetManifest::resolve(const std::string& image_path) const {
  fs::path p(image_path);
  if (p.is_absolute()) return p.string();
  return (fs::path(root) / p).string();
}

std::vector<const ManifestRecord*> DatasetManifest::split(const std::string& name) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records)
    if (r.split == name) out.push_back(&r);
  return out;
}

DatasetManifest ingest_dataset(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw InputError("ingest: manifest not found: " + manifest_path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("ingest: manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_array()) throw InputError("ingest: manifest must be a JSON array of records");
  if (j.empty()) throw InputError("ingest: manifest has no records");

  DatasetManifest m;
  m.root = fs::path(manifest_path).parent_path().string();

  std::vector<std::string> problems;
  int index = 0;
  for (const auto& rec : j) {
    ManifestRecord r;
    try {
      r.image = rec.at("image").get<std::string>();
      r.captions = rec.at("captions").get<std::vector<std::string>>();
      r.id = rec.at("id").get<int>();
      r.split = rec.value("split", std::string("train"));
    } catch (const nlohmann::json::exception& e) {
      problems.push_back("record " + std::to_string(index) + ": schema error (" + e.what() + ")");
      ++index;
      continue;
    }
    if (r.captions.empty())
      problems.push_back("record " + std::to_string(index) + " (" + r.image + "): no captions");
    for (const auto& c : r.captions)
      if (tokenize(c).empty())
        problems.push_back("record " + std::to_string(index) + " (" + r.image +
                           "): empty caption");
    if (!fs::exists(m.resolve(r.image)))
      problems.push_back("record " + std::to_string(index) + ": missing image " +
                         m.resolve(r.image));
    m.records.push_back(std::move(r));
    ++index;
  }
  if (!problems.empty()) {
    std::ostringstream os;
    os << "ingest: " << problems.size() << " problem(s):";
    for (const auto& p : problems) os << "\n  " << p;
    throw InputError(os.str());
  }
  return m;
}

Vocabulary build_vocabulary(const DatasetManifest& manifest, const std::string& split) {
  Vocabulary v;
  for (const auto* rec : manifest.split(split))
    for (const auto& caption : rec->captions)
      for (const auto& tok : tokenize(caption)) v.add(tok);
  return v;
}

LoadedDataset::LoadedDataset(const DatasetManifest& manifest, const Vocabulary& vocab,
                             const ModelProfile& profile, const std::string& split) {
  const int top = profile.resolutions.back();
  for (size_t ri = 0; ri < manifest.records.size(); ++ri) {
    const ManifestRecord& rec = manifest.records[ri];
    if (rec.split != split) continue;
    Image8 full = read_ppm(manifest.resolve(rec.image));
    if (full.width != top || full.height != top)
      throw InputError("dataset image " + rec.image + " is " + std::to_string(full.width) + "x" +
                       std::to_string(full.height) + ", profile needs " + std::to_string(top));
    std::vector<Tensor> stage_images;
    for (int r : profile.resolutions)
      stage_images.push_back(image_to_tensor(downsample_box(full, top / r)));
    for (size_t ci = 0; ci < rec.captions.size(); ++ci) {
      TrainingPair p;
      p.record_index = static_cast<int>(ri);
      p.caption_index = static_cast<int>(ci);
      p.tokens = make_sequence(tokenize(rec.captions[ci]), vocab, profile.t_max);
      p.stage_images = stage_images;
      pairs_.push_back(std::move(p));
    }
  }
  if (pairs_.empty()) throw InputError("LoadedDataset: split '" + split + "' has no pairs");
}

}  // namespace pedgen
