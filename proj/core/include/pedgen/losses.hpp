#pragma once

#include <array>
#include <string>
#include <vector>

#include "pedgen/tensor.hpp"
#include "pedgen/text.hpp"

namespace pedgen {

// Discriminator outputs for one image. Each entry is a scalar tensor in (0,1).
struct GlobalScores {
  Tensor unconditional;
  Tensor conditional;
};

struct PartScores {
  Tensor head, torso, legs, feet;
  std::array<Tensor, 4> all() const { return {head, torso, legs, feet}; }
};

// log arguments are clamped to [kLogEps, 1-kLogEps] so losses stay finite for
// any score a sigmoid can emit, including exact 0/1 at double precision.
inline constexpr double kLogEps = 1e-7;

// Generator adversarial loss for one stage, averaged over the batch:
//   -(1/3)[ log Dg(I) + log Dg(I, s) + (1/4) sum_k log Dk(I, W) ]
// With the part family disabled the local term drops and the remaining two
// renormalize to -(1/2)[...].
Tensor generator_adv_loss(const std::vector<GlobalScores>& global_scores,
                          const std::vector<PartScores>& part_scores, bool use_hpd = true);

// Global discriminator loss, Eq. 11 shape:
//   -(1/2)[ E log Dg(real) + E log(1 - Dg(fake))
//         + E log Dg(real, s) + E log(1 - Dg(fake, s)) ]
Tensor global_disc_loss(const std::vector<GlobalScores>& real_scores,
                        const std::vector<GlobalScores>& fake_scores);

// Part discriminator loss, conditional only, averaged over the four parts:
//   mean_k [ -E log Dk(real, W) - E log(1 - Dk(fake, W)) ]
Tensor part_disc_loss(const std::vector<PartScores>& real_scores,
                      const std::vector<PartScores>& fake_scores);

// Features an image contributes to the cross-modal matching loss, already
// projected into the shared word-feature dimension.
struct MatchFeatures {
  Tensor regions;  // (dim, N)
  Tensor global;   // (dim)
};

struct DamsmParams {
  double gamma1 = 5.0;   // attention sharpening over regions
  double gamma2 = 5.0;   // word-score aggregation
  double gamma3 = 10.0;  // batch-softmax temperature
};

// Symmetric contrastive matching loss over a batch of aligned (image, text)
// pairs: mean of four negative log-likelihood terms (image->text and
// text->image, at sentence level and at attention-weighted word level).
// Needs at least two pairs to have negatives.
Tensor damsm_loss(const std::vector<MatchFeatures>& images,
                  const std::vector<EncodedText>& captions,
                  const std::vector<int>& caption_lengths, const DamsmParams& params = {});

struct StageAdvTerms {
  double unconditional = 0.0;
  double global_conditional = 0.0;
  double local_conditional = 0.0;
  double combined = 0.0;  // the stage's adversarial loss value
};

struct LossBreakdown {
  std::vector<StageAdvTerms> stages;
  double cond = 0.0;
  double damsm = 0.0;
  double lambda1 = 1.0;
  double lambda2 = 5.0;
  double total = 0.0;
  Tensor total_tensor;  // differentiable sum

  std::string to_json_line(int64_t step) const;
};

// Weighted total, Eq. 14: sum_i adv_i + lambda1 * cond + lambda2 * damsm.
// Per-term values are retained for logging. Throws NumericError naming the
// first non-finite term.
LossBreakdown total_generator_loss(const std::vector<Tensor>& stage_adv_losses,
                                   const std::vector<StageAdvTerms>& stage_terms,
                                   const Tensor& cond_loss, const Tensor& damsm_term,
                                   double lambda1, double lambda2);

// Logging helper: batch means of the raw score logs entering the generator
// adversarial loss (unconditional / global-conditional / local-conditional).
StageAdvTerms stage_adv_terms(const std::vector<GlobalScores>& global_scores,
                              const std::vector<PartScores>& part_scores, bool use_hpd,
                              double combined_value);

}  // namespace pedgen
