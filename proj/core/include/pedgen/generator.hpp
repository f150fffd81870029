#pragma once

#include <utility>
#include <vector>

#include "pedgen/attention.hpp"
#include "pedgen/config.hpp"
#include "pedgen/nn.hpp"
#include "pedgen/tensor.hpp"
#include "pedgen/text.hpp"

namespace pedgen {

// One resolution level of the synthesis pipeline.
struct StageBundle {
  RegionFeatureGrid hidden;  // spatial features at this stage's resolution
  Tensor image;              // (3, R, R), values in [-1, 1] (tanh output)
  int stage = 0;
};

// Batched counterpart used by the trainer.
struct StageBatch {
  Tensor hidden;                  // (B, C, H, W)
  Tensor images;                  // (B, 3, R, R)
  std::vector<Tensor> attention;  // per-sample (N, T) map; empty for stage 0
};

// Multi-stage generator. The first stage maps [z; c] through a dense layer to
// a low-resolution grid and upsamples; refinement stages inject word context
// through the words-regions attention before upsampling further.
class Generator {
 public:
  Generator() = default;
  Generator(const ModelProfile& profile, Rng& rng, ParamMap& params,
            const std::string& name = "gen");

  // Per-sample entry points.
  StageBundle g0_forward(const Tensor& z, const Tensor& condition) const;
  std::pair<StageBundle, Tensor> refine_forward(const StageBundle& prev,
                                                const Tensor& words) const;
  std::vector<StageBundle> generate_stages(const Tensor& z, const Tensor& condition,
                                           const Tensor& words,
                                           std::vector<Tensor>* attention_out = nullptr) const;

  // Batched forward for training. words has one (word_dim, T) entry per sample.
  std::vector<StageBatch> forward_batch(const Tensor& z, const Tensor& condition,
                                        const std::vector<Tensor>& words) const;

  int stages() const { return profile_.stages; }
  const ModelProfile& profile() const { return profile_; }

 private:
  Tensor stage0_hidden(const Tensor& z, const Tensor& condition) const;
  Tensor refine_hidden(int refine_index, const Tensor& hidden, const std::vector<Tensor>& words,
                       std::vector<Tensor>* maps_out) const;

  ModelProfile profile_;
  Linear fc_;
  std::vector<Conv2d> g0_blocks_;
  struct RefineStage {
    VisaParams visa;
    Conv2d conv_a, conv_b;
  };
  std::vector<RefineStage> refine_;
  std::vector<Conv2d> to_rgb_;
};

// Full text-to-image path: frozen text encoder -> conditioning augmentation ->
// generator. Deterministic given (tokens, z, ca noise).
struct GenerationResult {
  std::vector<StageBundle> bundles;
  std::vector<Tensor> attention;  // per refinement stage, (N, T)
  AugmentedCondition condition;
};

class TextToImage {
 public:
  TextToImage() = default;
  TextToImage(const TextEncoder* encoder, const ConditionAugmenter* augmenter,
              const Generator* generator)
      : encoder_(encoder), augmenter_(augmenter), generator_(generator) {}

  GenerationResult generate(const TokenSequence& tokens, const Tensor& z,
                            const Tensor& ca_noise) const;

 private:
  const TextEncoder* encoder_ = nullptr;
  const ConditionAugmenter* augmenter_ = nullptr;
  const Generator* generator_ = nullptr;
};

}  // namespace pedgen
