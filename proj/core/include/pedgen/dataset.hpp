#pragma once

#include <string>
#include <vector>

#include "pedgen/config.hpp"
#include "pedgen/image.hpp"
#include "pedgen/tensor.hpp"
#include "pedgen/text.hpp"

namespace pedgen {

struct ManifestRecord {
  std::string image;  // path, relative to the manifest directory unless absolute
  std::vector<std::string> captions;
  int id = 0;  // person identity
  std::string split = "train";
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::string root;  // directory the manifest was loaded from

  std::string resolve(const std::string& image_path) const;
  std::vector<const ManifestRecord*> split(const std::string& name) const;
};

// Loads and validates a manifest: JSON array of records, every image path
// resolvable, at least one caption per record. Errors list the offending
// records.
DatasetManifest ingest_dataset(const std::string& manifest_path);

// Vocabulary from the captions of one split (train by default), tokens in
// first-appearance order after <pad> and <unk>.
Vocabulary build_vocabulary(const DatasetManifest& manifest, const std::string& split = "train");

// One (image, caption) training pair with everything preloaded: the caption
// encoded against the vocabulary and the image box-downsampled to every stage
// resolution.
struct TrainingPair {
  int record_index = 0;
  int caption_index = 0;
  TokenSequence tokens;
  std::vector<Tensor> stage_images;  // (3, R_i, R_i) in [-1, 1], one per stage
};

class LoadedDataset {
 public:
  LoadedDataset() = default;
  LoadedDataset(const DatasetManifest& manifest, const Vocabulary& vocab,
                const ModelProfile& profile, const std::string& split = "train");

  size_t size() const { return pairs_.size(); }
  const TrainingPair& pair(size_t i) const { return pairs_.at(i); }

 private:
  std::vector<TrainingPair> pairs_;
};

}  // namespace pedgen
