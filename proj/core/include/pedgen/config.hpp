#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pedgen/losses.hpp"

namespace pedgen {

// Table-3 style switches. use_visa=false freezes the part discriminators'
// attention at uniform weights; the generator keeps its own attention either
// way. use_sca=false bypasses the global discriminator's self-cross block,
// which is exactly its gamma=0 path.
struct AblationFlags {
  bool use_hpd = true;
  bool use_visa = true;
  bool use_sca = true;
};

// Architecture dimensions for one named profile. The tiny profile exists so
// the full pipeline trains and tests in seconds on a CPU; the paper profile
// carries the real 64/128/256 resolution ladder.
struct ModelProfile {
  std::string name;
  int stages = 3;
  std::vector<int> resolutions;        // image edge per stage, doubling
  int word_dim = 0;                    // N_w
  int region_dim = 0;                  // N_r, discriminator feature channels
  int condition_dim = 0;               // N_s, augmented condition
  int latent_dim = 0;                  // D_z
  int t_max = 0;                       // max caption length
  int g_base_size = 4;                 // spatial edge entering the first generator
  int g_base_channels = 0;
  std::vector<int> g_hidden_channels;  // per-stage hidden grid channels

  void validate() const;
};

ModelProfile tiny_profile();
ModelProfile paper_profile();
ModelProfile profile_by_name(const std::string& name);

struct TrainConfig {
  std::string profile = "tiny";
  int batch_size = 16;
  int steps = 500;
  int pretrain_steps = 150;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  uint64_t seed = 0;
  double lambda1 = 1.0;
  double lambda2 = 5.0;
  AblationFlags ablation;
  DamsmParams damsm;

  ModelProfile model() const { return profile_by_name(profile); }
  void validate() const;

  std::string to_json() const;                       // canonical (sorted keys)
  static TrainConfig from_json(const std::string&);  // unknown keys rejected
  static TrainConfig load(const std::string& path);
  void save(const std::string& path) const;
};

// FNV-1a over the canonical JSON dump; checkpoints embed this to refuse
// incompatible resumes.
uint64_t config_hash(const TrainConfig& cfg);

}  // namespace pedgen
