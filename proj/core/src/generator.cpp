#include "pedgen/generator.hpp"

#include <cmath>

#include "pedgen/common.hpp"

namespace pedgen {

namespace {
int ilog2(int v) {
  int k = 0;
  while ((1 << k) < v) ++k;
  if ((1 << k) != v) throw ContractError("generator: sizes must be powers of two");
  return k;
}
}  // namespace

Generator::Generator(const ModelProfile& profile, Rng& rng, ParamMap& params,
                     const std::string& name)
    : profile_(profile) {
  profile_.validate();
  const int in_dim = profile_.latent_dim + profile_.condition_dim;
  const int base = profile_.g_base_size;
  fc_ = Linear(in_dim, profile_.g_base_channels * base * base, rng, params, name + ".fc");

  const int n_up = ilog2(profile_.resolutions[0]) - ilog2(base);
  if ((profile_.g_base_channels >> n_up) != profile_.g_hidden_channels[0])
    throw ContractError("generator: g_base_channels >> upsamples must equal stage-0 hidden width");
  int ch = profile_.g_base_channels;
  for (int k = 0; k < n_up; ++k) {
    g0_blocks_.emplace_back(ch, ch / 2, 3, 1, 1, rng, params,
                            name + ".g0.up" + std::to_string(k));
    ch /= 2;
  }

  for (int i = 1; i < profile_.stages; ++i) {
    RefineStage r;
    const int cin = profile_.g_hidden_channels[static_cast<size_t>(i - 1)];
    const int cout = profile_.g_hidden_channels[static_cast<size_t>(i)];
    r.visa = VisaParams(cin, profile_.word_dim, rng, params,
                        name + ".refine" + std::to_string(i) + ".visa");
    r.conv_a = Conv2d(cin, cin, 3, 1, 1, rng, params, name + ".refine" + std::to_string(i) + ".a");
    r.conv_b = Conv2d(cin, cout, 3, 1, 1, rng, params,
                      name + ".refine" + std::to_string(i) + ".b");
    refine_.push_back(std::move(r));
  }

  for (int i = 0; i < profile_.stages; ++i)
    to_rgb_.emplace_back(profile_.g_hidden_channels[static_cast<size_t>(i)], 3, 3, 1, 1, rng,
                         params, name + ".to_rgb" + std::to_string(i));
}

// stage-0 hidden grid for a batch: (B, ch0, R0, R0)
Tensor Generator::stage0_hidden(const Tensor& z, const Tensor& condition) const {
  if (z.shape().size() != 2 || z.dim(1) != profile_.latent_dim)
    throw ContractError("generator: z must be (B, latent_dim)");
  if (condition.shape().size() != 2 || condition.dim(1) != profile_.condition_dim)
    throw ContractError("generator: condition must be (B, condition_dim)");
  check_finite(z, "generator latent input");
  check_finite(condition, "generator condition input");
  const int batch = z.dim(0);
  const int base = profile_.g_base_size;
  Tensor x = leaky_relu(fc_.forward(concat({z, condition}, 1)));
  Tensor hidden = reshape(x, {batch, profile_.g_base_channels, base, base});
  for (const auto& block : g0_blocks_) hidden = leaky_relu(block.forward(upsample_nearest2(hidden)));
  check_finite(hidden, "generator stage 0 hidden");
  return hidden;
}

// one refinement: attention per sample, then convolve and upsample the batch
Tensor Generator::refine_hidden(int refine_index, const Tensor& hidden,
                                const std::vector<Tensor>& words,
                                std::vector<Tensor>* maps_out) const {
  const RefineStage& stage = refine_[static_cast<size_t>(refine_index)];
  const int batch = hidden.dim(0);
  std::vector<Tensor> attended;
  attended.reserve(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    RegionFeatureGrid grid = grid_from_chw(select0(hidden, b));
    VisaResult res = visa_attend(grid, words[static_cast<size_t>(b)], stage.visa);
    attended.push_back(grid_to_chw(res.grid));
    if (maps_out) maps_out->push_back(res.attention);
  }
  Tensor ctx = stack0(attended);
  Tensor up = upsample_nearest2(leaky_relu(stage.conv_a.forward(ctx)));
  Tensor next = leaky_relu(stage.conv_b.forward(up));
  check_finite(next, "generator stage " + std::to_string(refine_index + 1) + " hidden");
  return next;
}

std::vector<StageBatch> Generator::forward_batch(const Tensor& z, const Tensor& condition,
                                                 const std::vector<Tensor>& words) const {
  const int batch = z.shape().size() == 2 ? z.dim(0) : -1;
  if (profile_.stages > 1 && static_cast<int>(words.size()) != batch)
    throw ContractError("generator: one word matrix per sample required");

  std::vector<StageBatch> out;
  Tensor hidden = stage0_hidden(z, condition);
  StageBatch s0;
  s0.hidden = hidden;
  s0.images = tanh_t(to_rgb_[0].forward(hidden));
  out.push_back(std::move(s0));

  for (size_t i = 0; i < refine_.size(); ++i) {
    StageBatch sb;
    hidden = refine_hidden(static_cast<int>(i), hidden, words, &sb.attention);
    sb.hidden = hidden;
    sb.images = tanh_t(to_rgb_[i + 1].forward(hidden));
    out.push_back(std::move(sb));
  }
  return out;
}

StageBundle Generator::g0_forward(const Tensor& z, const Tensor& condition) const {
  if (z.shape().size() != 1 || condition.shape().size() != 1)
    throw ContractError("g0_forward: z and condition must be vectors");
  Tensor hidden = stage0_hidden(reshape(z, {1, z.dim(0)}), reshape(condition, {1, condition.dim(0)}));
  StageBundle bundle;
  bundle.stage = 0;
  bundle.hidden = grid_from_chw(select0(hidden, 0));
  bundle.image = select0(tanh_t(to_rgb_[0].forward(hidden)), 0);
  return bundle;
}

std::pair<StageBundle, Tensor> Generator::refine_forward(const StageBundle& prev,
                                                         const Tensor& words) const {
  if (prev.stage >= profile_.stages - 1)
    throw ContractError("refine_forward: stage " + std::to_string(prev.stage) +
                        " is final, nothing to refine");
  Tensor hidden_b = stack0({grid_to_chw(prev.hidden)});
  std::vector<Tensor> maps;
  Tensor next_hidden = refine_hidden(prev.stage, hidden_b, {words}, &maps);
  StageBundle next;
  next.stage = prev.stage + 1;
  next.hidden = grid_from_chw(select0(next_hidden, 0));
  next.image =
      select0(tanh_t(to_rgb_[static_cast<size_t>(prev.stage + 1)].forward(next_hidden)), 0);
  return {next, maps[0]};
}

std::vector<StageBundle> Generator::generate_stages(const Tensor& z, const Tensor& condition,
                                                    const Tensor& words,
                                                    std::vector<Tensor>* attention_out) const {
  std::vector<StageBundle> out;
  out.push_back(g0_forward(z, condition));
  for (int i = 1; i < profile_.stages; ++i) {
    auto [next, map] = refine_forward(out.back(), words);
    if (attention_out) attention_out->push_back(map);
    out.push_back(next);
  }
  return out;
}

GenerationResult TextToImage::generate(const TokenSequence& tokens, const Tensor& z,
                                       const Tensor& ca_noise) const {
  if (!encoder_ || !augmenter_ || !generator_)
    throw ContractError("TextToImage: pipeline components not wired");
  EncodedText text = encoder_->encode(tokens);
  // attention consumes the real words only; padding columns never take mass
  Tensor words = slice(text.words, 1, 0, tokens.true_length).detach();
  GenerationResult res;
  res.condition = augmenter_->augment(text.sentence.detach(), ca_noise);
  res.bundles = generator_->generate_stages(z, res.condition.sample, words, &res.attention);
  return res;
}

}  // namespace pedgen
