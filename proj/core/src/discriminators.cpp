#include "pedgen/discriminators.hpp"

#include <algorithm>
#include <cmath>

#include "pedgen/common.hpp"

namespace pedgen {

PartSplit split_parts(const RegionFeatureGrid& rho) {
  if (rho.height % 4 != 0)
    throw InputError("split_parts: grid height " + std::to_string(rho.height) +
                     " not divisible by 4");
  const int band_h = rho.height / 4;
  const int band_regions = band_h * rho.width;
  PartSplit out;
  for (int k = 0; k < 4; ++k) {
    RegionFeatureGrid part;
    part.height = band_h;
    part.width = rho.width;
    // regions are row-major, so a horizontal band is a contiguous column range
    part.values = slice(rho.values, 1, k * band_regions, (k + 1) * band_regions);
    out.parts[static_cast<size_t>(k)] = std::move(part);
  }
  return out;
}

namespace {
int ilog2(int v) {
  int k = 0;
  while ((1 << k) < v) ++k;
  if ((1 << k) != v) throw ContractError("StridedEncoder: resolution must be a power of two");
  return k;
}
}  // namespace

StridedEncoder::StridedEncoder(int resolution, int out_channels, Rng& rng, ParamMap& params,
                               const std::string& name)
    : resolution_(resolution) {
  const int n_blocks = std::clamp(ilog2(resolution) - 2, 1, 4);
  grid_edge_ = resolution >> n_blocks;
  int cin = 3;
  for (int k = 0; k < n_blocks; ++k) {
    const int cout = std::max(8, out_channels >> (n_blocks - 1 - k));
    blocks_.emplace_back(cin, k == n_blocks - 1 ? out_channels : cout, 4, 2, 1, rng, params,
                         name + ".conv" + std::to_string(k));
    cin = k == n_blocks - 1 ? out_channels : cout;
  }
}

Tensor StridedEncoder::encode_batch(const Tensor& images) const {
  if (images.shape().size() != 4 || images.dim(1) != 3)
    throw InputError("encode: images must be (B,3,R,R)");
  if (images.dim(2) != resolution_ || images.dim(3) != resolution_)
    throw InputError("encode: expected resolution " + std::to_string(resolution_) + ", got " +
                     std::to_string(images.dim(2)) + "x" + std::to_string(images.dim(3)));
  Tensor x = images;
  for (const auto& block : blocks_) x = leaky_relu(block.forward(x));
  return x;
}

RegionFeatureGrid StridedEncoder::encode(const Tensor& image) const {
  if (image.shape().size() != 3) throw InputError("encode: (3,R,R) expected");
  Tensor batched = encode_batch(stack0({image}));
  return grid_from_chw(select0(batched, 0));
}

PartHead::PartHead(int region_dim, int word_dim, Rng& rng, ParamMap& params,
                   const std::string& name) {
  visa_ = VisaParams(region_dim, word_dim, rng, params, name + ".visa");
  hidden_ = Linear(region_dim, std::max(4, region_dim / 2), rng, params, name + ".h");
  out_ = Linear(std::max(4, region_dim / 2), 1, rng, params, name + ".o");
}

Tensor PartHead::score(const RegionFeatureGrid& part, const Tensor& words, bool use_visa) const {
  VisaResult res =
      use_visa ? visa_attend(part, words, visa_) : visa_attend_uniform(part, words, visa_);
  Tensor pooled = mean_axis1(res.grid.values);  // (region_dim)
  Tensor h = leaky_relu(hidden_.forward_vec(pooled));
  return reshape(sigmoid(out_.forward_vec(h)), {1});
}

PartDiscriminator::PartDiscriminator(int resolution, int region_dim, int word_dim, Rng& rng,
                                     ParamMap& params, const std::string& name)
    : encoder_(resolution, region_dim, rng, params, name + ".fine") {
  static const char* part_names[4] = {"head", "torso", "legs", "feet"};
  for (int k = 0; k < 4; ++k)
    heads_[static_cast<size_t>(k)] =
        PartHead(region_dim, word_dim, rng, params, name + "." + part_names[k]);
}

PartScores PartDiscriminator::score_grid(const RegionFeatureGrid& rho, const Tensor& words,
                                         bool use_visa) const {
  PartSplit split = split_parts(rho);
  PartScores s;
  s.head = heads_[0].score(split.parts[0], words, use_visa);
  s.torso = heads_[1].score(split.parts[1], words, use_visa);
  s.legs = heads_[2].score(split.parts[2], words, use_visa);
  s.feet = heads_[3].score(split.parts[3], words, use_visa);
  return s;
}

PartScores PartDiscriminator::score(const Tensor& image, const Tensor& words,
                                    bool use_visa) const {
  return score_grid(encoder_.encode(image), words, use_visa);
}

std::vector<PartScores> PartDiscriminator::score_batch(const Tensor& images,
                                                       const std::vector<Tensor>& words,
                                                       bool use_visa) const {
  Tensor grids = encoder_.encode_batch(images);
  std::vector<PartScores> out;
  out.reserve(words.size());
  for (int b = 0; b < images.dim(0); ++b) {
    RegionFeatureGrid rho = grid_from_chw(select0(grids, b));
    out.push_back(score_grid(rho, words[static_cast<size_t>(b)], use_visa));
  }
  return out;
}

GlobalDiscriminator::GlobalDiscriminator(int resolution, int region_dim, int sentence_dim,
                                         Rng& rng, ParamMap& params, const std::string& name)
    : encoder_(resolution, region_dim, rng, params, name + ".coarse") {
  sca_ = ScaParams(region_dim, sentence_dim, rng, params, name + ".sca");
  const int half = std::max(4, region_dim / 2);
  uncond_hidden_ = Linear(region_dim, half, rng, params, name + ".u_h");
  uncond_out_ = Linear(half, 1, rng, params, name + ".u_o");
  cond_hidden_ = Linear(region_dim + sentence_dim, half, rng, params, name + ".c_h");
  cond_out_ = Linear(half, 1, rng, params, name + ".c_o");
}

GlobalScores GlobalDiscriminator::score(const Tensor& image, const Tensor& sentence,
                                        bool use_sca) const {
  RegionFeatureGrid rho = encoder_.encode(image);
  RegionFeatureGrid attended = use_sca ? sca_attend(rho, sentence, sca_).grid : rho;
  Tensor pooled = mean_axis1(attended.values);  // (region_dim)

  GlobalScores s;
  s.unconditional =
      reshape(sigmoid(uncond_out_.forward_vec(leaky_relu(uncond_hidden_.forward_vec(pooled)))), {1});
  Tensor joint = concat({pooled, sentence}, 0);
  s.conditional =
      reshape(sigmoid(cond_out_.forward_vec(leaky_relu(cond_hidden_.forward_vec(joint)))), {1});
  return s;
}

std::vector<GlobalScores> GlobalDiscriminator::score_batch(const Tensor& images,
                                                           const std::vector<Tensor>& sentences,
                                                           bool use_sca) const {
  Tensor grids = encoder_.encode_batch(images);
  std::vector<GlobalScores> out;
  out.reserve(sentences.size());
  for (int b = 0; b < images.dim(0); ++b) {
    RegionFeatureGrid rho = grid_from_chw(select0(grids, b));
    const Tensor& sentence = sentences[static_cast<size_t>(b)];
    RegionFeatureGrid attended = use_sca ? sca_attend(rho, sentence, sca_).grid : rho;
    Tensor pooled = mean_axis1(attended.values);
    GlobalScores s;
    s.unconditional = reshape(
        sigmoid(uncond_out_.forward_vec(leaky_relu(uncond_hidden_.forward_vec(pooled)))), {1});
    Tensor joint = concat({pooled, sentence}, 0);
    s.conditional = reshape(
        sigmoid(cond_out_.forward_vec(leaky_relu(cond_hidden_.forward_vec(joint)))), {1});
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pedgen
