#pragma once

#include <array>
#include <string>
#include <vector>

#include "pedgen/attention.hpp"
#include "pedgen/config.hpp"
#include "pedgen/losses.hpp"
#include "pedgen/nn.hpp"

namespace pedgen {

// Vertical, equal, order-preserving split of an encoded grid into the four
// body bands. Concatenating the parts back reproduces the input bit-exactly.
struct PartSplit {
  std::array<RegionFeatureGrid, 4> parts;  // head, torso, legs, feet (top to bottom)
};

PartSplit split_parts(const RegionFeatureGrid& rho);

// Strided convolutional encoder shared by the discriminators of one stage.
// Halves the spatial edge per block until the grid reaches the stage's target
// size (4x4 for 64px and below, growing for larger inputs); the final height
// is always divisible by 4.
class StridedEncoder {
 public:
  StridedEncoder() = default;
  StridedEncoder(int resolution, int out_channels, Rng& rng, ParamMap& params,
                 const std::string& name);

  Tensor encode_batch(const Tensor& images) const;     // (B,3,R,R) -> (B,C,h,w)
  RegionFeatureGrid encode(const Tensor& image) const;  // (3,R,R) -> grid
  int resolution() const { return resolution_; }
  int grid_edge() const { return grid_edge_; }

 private:
  int resolution_ = 0;
  int grid_edge_ = 0;
  std::vector<Conv2d> blocks_;
};

// One word-conditioned part scorer: attention over the part's regions, mean
// pooling, then a small logistic head. Parameters are private to the part.
class PartHead {
 public:
  PartHead() = default;
  PartHead(int region_dim, int word_dim, Rng& rng, ParamMap& params, const std::string& name);

  // use_visa=false freezes attention at uniform weights (ablation path).
  Tensor score(const RegionFeatureGrid& part, const Tensor& words, bool use_visa) const;

 private:
  VisaParams visa_;
  Linear hidden_, out_;
};

// The per-stage local discriminator: a fine encoder plus four part heads.
class PartDiscriminator {
 public:
  PartDiscriminator() = default;
  PartDiscriminator(int resolution, int region_dim, int word_dim, Rng& rng, ParamMap& params,
                    const std::string& name);

  PartScores score(const Tensor& image, const Tensor& words, bool use_visa) const;
  // Batched: per-sample word matrices, images (B,3,R,R).
  std::vector<PartScores> score_batch(const Tensor& images, const std::vector<Tensor>& words,
                                      bool use_visa) const;

  const StridedEncoder& encoder() const { return encoder_; }
  PartScores score_grid(const RegionFeatureGrid& rho, const Tensor& words, bool use_visa) const;

 private:
  StridedEncoder encoder_;
  std::array<PartHead, 4> heads_;
};

// The per-stage global discriminator: encoder, self-cross attention over the
// grid with the sentence vector, then unconditional and sentence-conditional
// logistic heads.
class GlobalDiscriminator {
 public:
  GlobalDiscriminator() = default;
  GlobalDiscriminator(int resolution, int region_dim, int sentence_dim, Rng& rng, ParamMap& params,
                      const std::string& name);

  // use_sca=false bypasses the attention block entirely (the gamma = 0 path).
  GlobalScores score(const Tensor& image, const Tensor& sentence, bool use_sca) const;
  std::vector<GlobalScores> score_batch(const Tensor& images, const std::vector<Tensor>& sentences,
                                        bool use_sca) const;

  const StridedEncoder& encoder() const { return encoder_; }

 private:
  StridedEncoder encoder_;
  ScaParams sca_;
  Linear uncond_hidden_, uncond_out_;
  Linear cond_hidden_, cond_out_;
};

}  // namespace pedgen
