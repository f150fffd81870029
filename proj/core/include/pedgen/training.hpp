#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pedgen/checkpoint.hpp"
#include "pedgen/config.hpp"
#include "pedgen/dataset.hpp"
#include "pedgen/discriminators.hpp"
#include "pedgen/generator.hpp"
#include "pedgen/losses.hpp"
#include "pedgen/nn.hpp"
#include "pedgen/text.hpp"

namespace pedgen {

// Image encoder for the cross-modal matching loss: strided conv stack whose
// final channels live in the shared word-feature dimension. Region features
// are the grid columns, the global feature their mean.
class MatchingEncoder {
 public:
  MatchingEncoder() = default;
  MatchingEncoder(int resolution, int common_dim, Rng& rng, ParamMap& params,
                  const std::string& name = "match");

  MatchFeatures features(const Tensor& image) const;
  std::vector<MatchFeatures> features_batch(const Tensor& images) const;

 private:
  StridedEncoder encoder_;
};

// All trainable components of one run, built deterministically from
// (profile, vocab size, seed). Parameter names carry family prefixes so the
// optimizers and the ablation switches can address them.
struct Model {
  ModelProfile profile;
  int vocab_size = 0;
  ParamMap params;
  TextEncoder text_encoder;
  ConditionAugmenter cond_aug;
  Generator generator;
  std::vector<PartDiscriminator> part_discs;      // one per stage
  std::vector<GlobalDiscriminator> global_discs;  // one per stage
  MatchingEncoder matching;

  Model(const ModelProfile& profile, int vocab_size, uint64_t init_seed);

  TextToImage pipeline() const { return TextToImage(&text_encoder, &cond_aug, &generator); }

  // Optimizer families. The discriminator family honors the ablation flags so
  // switched-off parameter groups never receive updates.
  std::vector<std::pair<std::string, Tensor>> family_generator() const;
  std::vector<std::pair<std::string, Tensor>> family_discriminator(const AblationFlags&) const;
  std::vector<std::pair<std::string, Tensor>> family_matching() const;
};

struct StepResult {
  LossBreakdown generator;
  std::vector<double> disc_global;  // per stage
  std::vector<double> disc_part;    // per stage; 0 with the part family off
  std::string to_json_line(int64_t step) const;
};

// Rank-based AUC of positives over negatives (ties counted half).
double binary_auc(const std::vector<double>& positives, const std::vector<double>& negatives);

// Model + vocabulary reconstructed from a checkpoint, enough to generate and
// inspect without a dataset.
struct LoadedModel {
  TrainConfig config;
  Vocabulary vocab;
  std::unique_ptr<Model> model;
  int64_t step = 0;
};
LoadedModel load_model(const std::string& checkpoint_path);

// Alternating optimization: one discriminator update (all stages) then one
// generator update per step. The text and matching encoders pretrain on the
// matching loss first and stay frozen afterwards.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const DatasetManifest& manifest);
  Trainer(const TrainConfig& cfg, const DatasetManifest& manifest,
          const std::string& checkpoint_path);

  StepResult train_step();
  void save(const std::string& path) const;

  int64_t step() const { return step_; }
  const Vocabulary& vocab() const { return vocab_; }
  const Model& model() const { return *model_; }
  Model& model() { return *model_; }
  const TrainConfig& config() const { return cfg_; }

  // Real-vs-fake AUC of the stage-0 global discriminator's unconditional
  // head over `count` samples. Uses its own stream so the training RNG is
  // untouched.
  double stage0_global_auc(int count, uint64_t eval_seed = 9999);

 private:
  struct Batch {
    std::vector<size_t> indices;
    std::vector<Tensor> words;      // detached, (word_dim, T)
    std::vector<Tensor> sentences;  // detached, (word_dim)
    std::vector<int> lengths;
    Tensor z;                       // (B, latent)
    std::vector<AugmentedCondition> conditions;
    Tensor condition_rows;          // (B, condition_dim)
    std::vector<Tensor> real_images_per_stage;  // (B,3,R,R) per stage
  };
  Batch sample_batch(int size, Rng& rng, bool frozen_text);
  void pretrain_matching();
  CheckpointPayload build_payload() const;

  TrainConfig cfg_;
  ModelProfile profile_;
  Vocabulary vocab_;
  LoadedDataset data_;
  std::unique_ptr<Model> model_;
  Adam gen_opt_, disc_opt_, match_opt_;
  Rng rng_;
  int64_t step_ = 0;
};

}  // namespace pedgen
