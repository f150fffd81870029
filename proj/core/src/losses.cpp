#include "pedgen/losses.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "pedgen/common.hpp"

namespace pedgen {

namespace {

void check_score(const Tensor& s, const char* what) {
  if (!s.defined() || s.size() != 1) throw ContractError(std::string(what) + ": score must be scalar");
  const double v = s.values()[0];
  if (!std::isfinite(v) || v < 0.0 || v > 1.0)
    throw ContractError(std::string(what) + ": score " + std::to_string(v) + " outside [0, 1]");
}

Tensor log_score(const Tensor& s) { return log_t(clamp(s, kLogEps, 1.0 - kLogEps)); }

Tensor log_one_minus(const Tensor& s) {
  return log_t(clamp(add_scalar(neg(s), 1.0), kLogEps, 1.0 - kLogEps));
}

Tensor mean_of(std::vector<Tensor> terms) {
  Tensor acc = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return scale(acc, 1.0 / static_cast<double>(terms.size()));
}

// Column-normalize a (D, N) matrix to unit L2 columns.
Tensor normalize_cols(const Tensor& x) {
  Tensor sq = sum_axis1(square(transpose(x)));            // (N)
  Tensor norms = sqrt_t(clamp_min(sq, 1e-24));            // (N)
  return div(x, transpose(broadcast_cols(norms, x.dim(0))));
}

Tensor cosine(const Tensor& a, const Tensor& b) {
  Tensor na = sqrt_t(clamp_min(dot(a, a), 1e-24));
  Tensor nb = sqrt_t(clamp_min(dot(b, b), 1e-24));
  return div(dot(a, b), mul(na, nb));
}

// mean_i of -log softmax_row(m)[i][i]
Tensor diagonal_nll(const Tensor& m) {
  const int n = m.dim(0);
  std::vector<double> eye(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) eye[static_cast<size_t>(i) * n + i] = 1.0;
  Tensor mask = Tensor::leaf({n, n}, std::move(eye));
  Tensor logp = log_t(clamp_min(softmax_rows(m), 1e-12));
  return neg(mean_all(sum_axis1(mul(logp, mask))));
}

}  // namespace

Tensor generator_adv_loss(const std::vector<GlobalScores>& global_scores,
                          const std::vector<PartScores>& part_scores, bool use_hpd) {
  if (global_scores.empty()) throw ContractError("generator_adv_loss: empty batch");
  if (use_hpd && part_scores.size() != global_scores.size())
    throw ContractError("generator_adv_loss: global/part batch size mismatch");

  std::vector<Tensor> per_sample;
  per_sample.reserve(global_scores.size());
  for (size_t i = 0; i < global_scores.size(); ++i) {
    check_score(global_scores[i].unconditional, "generator_adv_loss");
    check_score(global_scores[i].conditional, "generator_adv_loss");
    Tensor inner = add(log_score(global_scores[i].unconditional),
                       log_score(global_scores[i].conditional));
    if (use_hpd) {
      Tensor local;
      for (const Tensor& y : part_scores[i].all()) {
        check_score(y, "generator_adv_loss part");
        local = local.defined() ? add(local, log_score(y)) : log_score(y);
      }
      inner = add(inner, scale(local, 0.25));
      per_sample.push_back(scale(inner, -1.0 / 3.0));
    } else {
      per_sample.push_back(scale(inner, -0.5));
    }
  }
  return mean_of(std::move(per_sample));
}

Tensor global_disc_loss(const std::vector<GlobalScores>& real_scores,
                        const std::vector<GlobalScores>& fake_scores) {
  if (real_scores.empty() || fake_scores.empty())
    throw ContractError("global_disc_loss: empty batch");
  std::vector<Tensor> ru, rc, fu, fc;
  for (const auto& s : real_scores) {
    check_score(s.unconditional, "global_disc_loss real");
    check_score(s.conditional, "global_disc_loss real");
    ru.push_back(log_score(s.unconditional));
    rc.push_back(log_score(s.conditional));
  }
  for (const auto& s : fake_scores) {
    check_score(s.unconditional, "global_disc_loss fake");
    check_score(s.conditional, "global_disc_loss fake");
    fu.push_back(log_one_minus(s.unconditional));
    fc.push_back(log_one_minus(s.conditional));
  }
  Tensor sum = add(add(mean_of(std::move(ru)), mean_of(std::move(fu))),
                   add(mean_of(std::move(rc)), mean_of(std::move(fc))));
  return scale(sum, -0.5);
}

Tensor part_disc_loss(const std::vector<PartScores>& real_scores,
                      const std::vector<PartScores>& fake_scores) {
  if (real_scores.empty() || fake_scores.empty())
    throw ContractError("part_disc_loss: empty batch");
  Tensor acc;
  for (int k = 0; k < 4; ++k) {
    std::vector<Tensor> real_logs, fake_logs;
    for (const auto& s : real_scores) {
      const Tensor& y = s.all()[static_cast<size_t>(k)];
      check_score(y, "part_disc_loss real");
      real_logs.push_back(log_score(y));
    }
    for (const auto& s : fake_scores) {
      const Tensor& y = s.all()[static_cast<size_t>(k)];
      check_score(y, "part_disc_loss fake");
      fake_logs.push_back(log_one_minus(y));
    }
    Tensor term = neg(add(mean_of(std::move(real_logs)), mean_of(std::move(fake_logs))));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scale(acc, 0.25);
}

Tensor damsm_loss(const std::vector<MatchFeatures>& images,
                  const std::vector<EncodedText>& captions,
                  const std::vector<int>& caption_lengths, const DamsmParams& params) {
  const int b = static_cast<int>(images.size());
  if (b < 2) throw ContractError("damsm_loss: batch of " + std::to_string(b) +
                                 " has no negatives (need >= 2)");
  if (captions.size() != images.size() || caption_lengths.size() != images.size())
    throw ContractError("damsm_loss: batch size mismatch");

  // Sentence-level similarity matrix: rows are images, columns captions.
  std::vector<Tensor> sent_rows, word_rows;
  for (int i = 0; i < b; ++i) {
    std::vector<Tensor> srow, wrow;
    Tensor regions_norm = normalize_cols(images[static_cast<size_t>(i)].regions);
    for (int j = 0; j < b; ++j) {
      srow.push_back(scale(cosine(images[static_cast<size_t>(i)].global,
                                  captions[static_cast<size_t>(j)].sentence),
                           params.gamma3));

      // word level: attention of each word over the image's regions
      const int len = caption_lengths[static_cast<size_t>(j)];
      Tensor words = slice(captions[static_cast<size_t>(j)].words, 1, 0, len);  // (D, len)
      Tensor words_norm = normalize_cols(words);
      Tensor sim = matmul(transpose(words_norm), regions_norm);        // (len, N)
      Tensor attn = softmax_rows(scale(sim, params.gamma1));           // (len, N)
      Tensor context = matmul(images[static_cast<size_t>(i)].regions, transpose(attn));  // (D, len)
      // cosine between each context column and its word column
      Tensor cn = normalize_cols(context);
      Tensor wn = words_norm;
      Tensor col_cos = sum_axis1(transpose(mul(cn, wn)));              // (len)
      Tensor agg = scale(log_t(clamp_min(sum_all(exp_t(scale(col_cos, params.gamma2))), 1e-300)),
                         1.0 / params.gamma2);
      wrow.push_back(scale(agg, params.gamma3));
    }
    sent_rows.push_back(reshape(concat(srow, 0), {1, b}));
    word_rows.push_back(reshape(concat(wrow, 0), {1, b}));
  }
  Tensor sent = concat(sent_rows, 0);  // (b, b)
  Tensor word = concat(word_rows, 0);  // (b, b)

  Tensor loss = add(add(diagonal_nll(sent), diagonal_nll(transpose(sent))),
                    add(diagonal_nll(word), diagonal_nll(transpose(word))));
  return scale(loss, 0.25);
}

StageAdvTerms stage_adv_terms(const std::vector<GlobalScores>& global_scores,
                              const std::vector<PartScores>& part_scores, bool use_hpd,
                              double combined_value) {
  StageAdvTerms t;
  t.combined = combined_value;
  const double n = static_cast<double>(global_scores.size());
  for (size_t i = 0; i < global_scores.size(); ++i) {
    t.unconditional += std::log(std::clamp(global_scores[i].unconditional.values()[0], kLogEps,
                                           1.0 - kLogEps)) / n;
    t.global_conditional += std::log(std::clamp(global_scores[i].conditional.values()[0], kLogEps,
                                                1.0 - kLogEps)) / n;
    if (use_hpd) {
      for (const Tensor& y : part_scores[i].all())
        t.local_conditional +=
            0.25 * std::log(std::clamp(y.values()[0], kLogEps, 1.0 - kLogEps)) / n;
    }
  }
  return t;
}

LossBreakdown total_generator_loss(const std::vector<Tensor>& stage_adv_losses,
                                   const std::vector<StageAdvTerms>& stage_terms,
                                   const Tensor& cond_loss, const Tensor& damsm_term,
                                   double lambda1, double lambda2) {
  LossBreakdown out;
  out.lambda1 = lambda1;
  out.lambda2 = lambda2;
  out.stages = stage_terms;

  Tensor total;
  for (size_t i = 0; i < stage_adv_losses.size(); ++i) {
    const double v = stage_adv_losses[i].item();
    if (!std::isfinite(v))
      throw NumericError("total_generator_loss: stage " + std::to_string(i) +
                         " adversarial term is non-finite");
    total = total.defined() ? add(total, stage_adv_losses[i]) : stage_adv_losses[i];
  }
  if (!total.defined()) total = Tensor::scalar(0.0);

  out.cond = cond_loss.defined() ? cond_loss.item() : 0.0;
  if (!std::isfinite(out.cond)) throw NumericError("total_generator_loss: cond term is non-finite");
  out.damsm = damsm_term.defined() ? damsm_term.item() : 0.0;
  if (!std::isfinite(out.damsm))
    throw NumericError("total_generator_loss: damsm term is non-finite");

  if (cond_loss.defined() && lambda1 != 0.0) total = add(total, scale(cond_loss, lambda1));
  if (damsm_term.defined() && lambda2 != 0.0) total = add(total, scale(damsm_term, lambda2));

  out.total_tensor = total;
  out.total = total.item();
  if (!std::isfinite(out.total)) throw NumericError("total_generator_loss: total is non-finite");
  return out;
}

std::string LossBreakdown::to_json_line(int64_t step) const {
  nlohmann::json j;
  j["step"] = step;
  nlohmann::json stages_j = nlohmann::json::array();
  for (const auto& s : stages) {
    stages_j.push_back({{"adv", s.combined},
                        {"uncond", s.unconditional},
                        {"global_cond", s.global_conditional},
                        {"local_cond", s.local_conditional}});
  }
  j["stages"] = stages_j;
  j["cond"] = cond;
  j["damsm"] = damsm;
  j["lambda1"] = lambda1;
  j["lambda2"] = lambda2;
  j["total"] = total;
  return j.dump();
}

}  // namespace pedgen
