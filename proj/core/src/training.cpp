#include "pedgen/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pedgen/common.hpp"

namespace pedgen {

MatchingEncoder::MatchingEncoder(int resolution, int common_dim, Rng& rng, ParamMap& params,
                                 const std::string& name)
    : encoder_(resolution, common_dim, rng, params, name) {}

MatchFeatures MatchingEncoder::features(const Tensor& image) const {
  RegionFeatureGrid grid = encoder_.encode(image);
  MatchFeatures f;
  f.regions = grid.values;
  f.global = mean_axis1(grid.values);
  return f;
}

std::vector<MatchFeatures> MatchingEncoder::features_batch(const Tensor& images) const {
  Tensor grids = encoder_.encode_batch(images);
  std::vector<MatchFeatures> out;
  for (int b = 0; b < images.dim(0); ++b) {
    RegionFeatureGrid grid = grid_from_chw(select0(grids, b));
    MatchFeatures f;
    f.regions = grid.values;
    f.global = mean_axis1(grid.values);
    out.push_back(std::move(f));
  }
  return out;
}

Model::Model(const ModelProfile& profile_in, int vocab_size_in, uint64_t init_seed)
    : profile(profile_in), vocab_size(vocab_size_in) {
  profile.validate();
  Rng rng(init_seed);
  text_encoder = TextEncoder(vocab_size, profile.word_dim, rng, params, "text");
  cond_aug = ConditionAugmenter(profile.word_dim, profile.condition_dim, rng, params, "cond_aug");
  generator = Generator(profile, rng, params, "gen");
  for (int i = 0; i < profile.stages; ++i) {
    const int res = profile.resolutions[static_cast<size_t>(i)];
    part_discs.emplace_back(res, profile.region_dim, profile.word_dim, rng, params,
                            "d" + std::to_string(i) + ".local");
    global_discs.emplace_back(res, profile.region_dim, profile.word_dim, rng, params,
                              "d" + std::to_string(i) + ".global");
  }
  matching = MatchingEncoder(profile.resolutions.back(), profile.word_dim, rng, params, "match");
}

std::vector<std::pair<std::string, Tensor>> Model::family_generator() const {
  auto fam = params.with_prefix("gen.");
  auto ca = params.with_prefix("cond_aug.");
  fam.insert(fam.end(), ca.begin(), ca.end());
  return fam;
}

std::vector<std::pair<std::string, Tensor>> Model::family_discriminator(
    const AblationFlags& flags) const {
  std::vector<std::pair<std::string, Tensor>> fam;
  for (const auto& [name, t] : params.with_prefix("d")) {
    const bool local = name.find(".local.") != std::string::npos;
    if (!flags.use_hpd && local) continue;
    if (!flags.use_visa && local && name.find(".visa.") != std::string::npos) continue;
    if (!flags.use_sca && name.find(".sca.") != std::string::npos) continue;
    fam.emplace_back(name, t);
  }
  return fam;
}

std::vector<std::pair<std::string, Tensor>> Model::family_matching() const {
  auto fam = params.with_prefix("text.");
  auto me = params.with_prefix("match.");
  fam.insert(fam.end(), me.begin(), me.end());
  return fam;
}

std::string StepResult::to_json_line(int64_t step) const {
  nlohmann::json j = nlohmann::json::parse(generator.to_json_line(step));
  j["d_global"] = disc_global;
  j["d_part"] = disc_part;
  return j.dump();
}

double binary_auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
  if (positives.empty() || negatives.empty()) throw ContractError("binary_auc: empty class");
  double wins = 0.0;
  for (double p : positives)
    for (double n : negatives) {
      if (p > n)
        wins += 1.0;
      else if (p == n)
        wins += 0.5;
    }
  return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

LoadedModel load_model(const std::string& checkpoint_path) {
  CheckpointPayload payload = load_checkpoint(checkpoint_path);
  LoadedModel out;
  out.config = TrainConfig::from_json(payload.config_json);
  Vocabulary v;
  {
    // rebuild through the file codec to reuse its validation
    std::string tmp = checkpoint_path + ".vocab.tmp";
    std::ofstream os(tmp);
    for (const auto& t : payload.vocab_tokens) os << t << "\n";
    os.close();
    out.vocab = Vocabulary::load(tmp);
    std::remove(tmp.c_str());
  }
  out.model = std::make_unique<Model>(out.config.model(), out.vocab.size(), out.config.seed);
  for (const auto& [name, tensor] : payload.tensors) {
    Tensor& dst = out.model->params.get(name);
    if (dst.shape() != tensor.shape())
      throw IoError("checkpoint tensor " + name + " has shape " + shape_str(tensor.shape()) +
                    ", model expects " + shape_str(dst.shape()));
    dst.mutable_values() = tensor.values();
  }
  out.step = payload.step;
  return out;
}

Trainer::Trainer(const TrainConfig& cfg, const DatasetManifest& manifest)
    : cfg_(cfg),
      profile_(cfg.model()),
      vocab_(build_vocabulary(manifest)),
      data_(manifest, vocab_, profile_),
      gen_opt_(cfg.lr, cfg.beta1, cfg.beta2),
      disc_opt_(cfg.lr, cfg.beta1, cfg.beta2),
      match_opt_(cfg.lr, cfg.beta1, cfg.beta2),
      rng_(cfg.seed) {
  cfg_.validate();
  model_ = std::make_unique<Model>(profile_, vocab_.size(), cfg.seed);
  pretrain_matching();
}

Trainer::Trainer(const TrainConfig& cfg, const DatasetManifest& manifest,
                 const std::string& checkpoint_path)
    : cfg_(cfg),
      profile_(cfg.model()),
      gen_opt_(cfg.lr, cfg.beta1, cfg.beta2),
      disc_opt_(cfg.lr, cfg.beta1, cfg.beta2),
      match_opt_(cfg.lr, cfg.beta1, cfg.beta2),
      rng_(cfg.seed) {
  cfg_.validate();
  CheckpointPayload payload = load_checkpoint(checkpoint_path);
  if (payload.config_hash != config_hash(cfg_))
    throw InputError("checkpoint config hash mismatch: checkpoint was produced by a different "
                     "configuration");
  {
    std::string tmp = checkpoint_path + ".vocab.tmp";
    std::ofstream os(tmp);
    for (const auto& t : payload.vocab_tokens) os << t << "\n";
    os.close();
    vocab_ = Vocabulary::load(tmp);
    std::remove(tmp.c_str());
  }
  data_ = LoadedDataset(manifest, vocab_, profile_);
  model_ = std::make_unique<Model>(profile_, vocab_.size(), cfg.seed);
  for (const auto& [name, tensor] : payload.tensors)
    model_->params.get(name).mutable_values() = tensor.values();
  gen_opt_.set_t(payload.gen_opt.t);
  gen_opt_.slots() = payload.gen_opt.slots;
  disc_opt_.set_t(payload.disc_opt.t);
  disc_opt_.slots() = payload.disc_opt.slots;
  match_opt_.set_t(payload.match_opt.t);
  match_opt_.slots() = payload.match_opt.slots;
  step_ = payload.step;
  rng_.restore(payload.rng_state);
}

CheckpointPayload Trainer::build_payload() const {
  CheckpointPayload p;
  p.config_hash = config_hash(cfg_);
  p.config_json = cfg_.to_json();
  p.vocab_tokens = vocab_.tokens();
  for (const auto& [name, t] : model_->params.items()) p.tensors.emplace_back(name, t.detach());
  p.gen_opt.t = gen_opt_.t();
  p.gen_opt.slots = gen_opt_.slots();
  p.disc_opt.t = disc_opt_.t();
  p.disc_opt.slots = disc_opt_.slots();
  p.match_opt.t = match_opt_.t();
  p.match_opt.slots = match_opt_.slots();
  p.step = step_;
  p.rng_state = rng_.serialize();
  return p;
}

void Trainer::save(const std::string& path) const { save_checkpoint(build_payload(), path); }

Trainer::Batch Trainer::sample_batch(int size, Rng& rng, bool frozen_text) {
  Batch b;
  const int latent = profile_.latent_dim;
  const int cond = profile_.condition_dim;
  std::vector<double> zvals(static_cast<size_t>(size) * latent);

  for (int i = 0; i < size; ++i)
    b.indices.push_back(static_cast<size_t>(rng.uniform_int(static_cast<int>(data_.size()))));
  for (auto& v : zvals) v = rng.normal();
  b.z = Tensor::leaf({size, latent}, std::move(zvals));

  std::vector<Tensor> cond_rows;
  for (int i = 0; i < size; ++i) {
    const TrainingPair& pair = data_.pair(b.indices[static_cast<size_t>(i)]);
    EncodedText enc = model_->text_encoder.encode(pair.tokens);
    // padding columns never reach the attention modules
    Tensor words = slice(enc.words, 1, 0, pair.tokens.true_length);
    if (frozen_text) {
      b.words.push_back(words.detach());
      b.sentences.push_back(enc.sentence.detach());
    } else {
      b.words.push_back(words);
      b.sentences.push_back(enc.sentence);
    }
    b.lengths.push_back(pair.tokens.true_length);

    std::vector<double> noise(static_cast<size_t>(cond));
    for (auto& v : noise) v = rng.normal();
    AugmentedCondition ac = model_->cond_aug.augment(b.sentences.back(),
                                                     Tensor::leaf({cond}, std::move(noise)));
    cond_rows.push_back(ac.sample);
    b.conditions.push_back(std::move(ac));
  }
  b.condition_rows = stack0(cond_rows);

  for (int s = 0; s < profile_.stages; ++s) {
    std::vector<Tensor> imgs;
    for (int i = 0; i < size; ++i)
      imgs.push_back(data_.pair(b.indices[static_cast<size_t>(i)])
                         .stage_images[static_cast<size_t>(s)]);
    b.real_images_per_stage.push_back(stack0(imgs));
  }
  return b;
}

void Trainer::pretrain_matching() {
  auto family = model_->family_matching();
  for (int s = 0; s < cfg_.pretrain_steps; ++s) {
    Batch b = sample_batch(cfg_.batch_size, rng_, /*frozen_text=*/false);
    std::vector<MatchFeatures> feats =
        model_->matching.features_batch(b.real_images_per_stage.back());
    std::vector<EncodedText> caps;
    for (int i = 0; i < cfg_.batch_size; ++i)
      caps.push_back({b.words[static_cast<size_t>(i)], b.sentences[static_cast<size_t>(i)]});
    Tensor loss = damsm_loss(feats, caps, b.lengths, cfg_.damsm);
    if (!std::isfinite(loss.item()))
      throw NumericError("matching pretrain loss non-finite at step " + std::to_string(s));
    loss.backward();
    match_opt_.step(family);
    model_->params.zero_grads();
  }
}

StepResult Trainer::train_step() {
  const AblationFlags& flags = cfg_.ablation;
  StepResult result;

  Batch b = sample_batch(cfg_.batch_size, rng_, /*frozen_text=*/true);

  // One generator pass serves both phases: the discriminator phase scores the
  // detached images, the generator phase backpropagates through the originals
  // (after the discriminator update, per the alternating scheme).
  std::vector<StageBatch> stages = model_->generator.forward_batch(b.z, b.condition_rows, b.words);

  // ---- discriminator phase ----
  Tensor d_total;
  for (int s = 0; s < profile_.stages; ++s) {
    Tensor fake_detached = stages[static_cast<size_t>(s)].images.detach();
    auto real_global = model_->global_discs[static_cast<size_t>(s)].score_batch(
        b.real_images_per_stage[static_cast<size_t>(s)], b.sentences, flags.use_sca);
    auto fake_global = model_->global_discs[static_cast<size_t>(s)].score_batch(
        fake_detached, b.sentences, flags.use_sca);
    Tensor dg = global_disc_loss(real_global, fake_global);
    const double dgv = dg.item();
    if (!std::isfinite(dgv))
      throw NumericError("global discriminator loss non-finite at stage " + std::to_string(s) +
                         ", step " + std::to_string(step_));
    result.disc_global.push_back(dgv);
    d_total = d_total.defined() ? add(d_total, dg) : dg;

    if (flags.use_hpd) {
      auto real_parts = model_->part_discs[static_cast<size_t>(s)].score_batch(
          b.real_images_per_stage[static_cast<size_t>(s)], b.words, flags.use_visa);
      auto fake_parts = model_->part_discs[static_cast<size_t>(s)].score_batch(
          fake_detached, b.words, flags.use_visa);
      Tensor dp = part_disc_loss(real_parts, fake_parts);
      const double dpv = dp.item();
      if (!std::isfinite(dpv))
        throw NumericError("part discriminator loss non-finite at stage " + std::to_string(s) +
                           ", step " + std::to_string(step_));
      result.disc_part.push_back(dpv);
      d_total = add(d_total, dp);
    } else {
      result.disc_part.push_back(0.0);
    }
  }
  d_total.backward();
  disc_opt_.step(model_->family_discriminator(flags));
  model_->params.zero_grads();

  // ---- generator phase ----
  std::vector<Tensor> stage_losses;
  std::vector<StageAdvTerms> stage_terms;
  for (int s = 0; s < profile_.stages; ++s) {
    auto fake_global = model_->global_discs[static_cast<size_t>(s)].score_batch(
        stages[static_cast<size_t>(s)].images, b.sentences, flags.use_sca);
    std::vector<PartScores> fake_parts;
    if (flags.use_hpd)
      fake_parts = model_->part_discs[static_cast<size_t>(s)].score_batch(
          stages[static_cast<size_t>(s)].images, b.words, flags.use_visa);
    Tensor adv = generator_adv_loss(fake_global, fake_parts, flags.use_hpd);
    stage_terms.push_back(stage_adv_terms(fake_global, fake_parts, flags.use_hpd, adv.item()));
    stage_losses.push_back(std::move(adv));
  }

  std::vector<Tensor> kls;
  for (const auto& c : b.conditions) kls.push_back(ca_kl_loss(c.mean, c.log_variance));
  Tensor kl_mean = scale(kls.size() == 1 ? kls[0] : [&] {
    Tensor acc = kls[0];
    for (size_t i = 1; i < kls.size(); ++i) acc = add(acc, kls[i]);
    return acc;
  }(), 1.0 / static_cast<double>(kls.size()));

  Tensor damsm_term;
  if (cfg_.lambda2 != 0.0) {
    std::vector<MatchFeatures> feats = model_->matching.features_batch(stages.back().images);
    std::vector<EncodedText> caps;
    for (int i = 0; i < cfg_.batch_size; ++i)
      caps.push_back({b.words[static_cast<size_t>(i)], b.sentences[static_cast<size_t>(i)]});
    damsm_term = damsm_loss(feats, caps, b.lengths, cfg_.damsm);
  } else {
    damsm_term = Tensor::scalar(0.0);
  }

  LossBreakdown breakdown;
  try {
    breakdown = total_generator_loss(stage_losses, stage_terms, kl_mean, damsm_term, cfg_.lambda1,
                                     cfg_.lambda2);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " at step " + std::to_string(step_));
  }
  breakdown.total_tensor.backward();
  gen_opt_.step(model_->family_generator());
  model_->params.zero_grads();

  result.generator = std::move(breakdown);
  ++step_;
  return result;
}

double Trainer::stage0_global_auc(int count, uint64_t eval_seed) {
  Rng eval_rng(eval_seed);
  Batch b = sample_batch(count, eval_rng, /*frozen_text=*/true);
  std::vector<StageBatch> stages = model_->generator.forward_batch(b.z, b.condition_rows, b.words);
  auto real = model_->global_discs[0].score_batch(b.real_images_per_stage[0], b.sentences,
                                                  cfg_.ablation.use_sca);
  auto fake = model_->global_discs[0].score_batch(stages[0].images.detach(), b.sentences,
                                                  cfg_.ablation.use_sca);
  std::vector<double> pos, neg;
  for (const auto& s : real) pos.push_back(s.unconditional.item());
  for (const auto& s : fake) neg.push_back(s.unconditional.item());
  model_->params.zero_grads();
  return binary_auc(pos, neg);
}

}  // namespace pedgen
