#pragma once

#include <string>
#include <vector>

#include "pedgen/nn.hpp"
#include "pedgen/rng.hpp"
#include "pedgen/tensor.hpp"

namespace pedgen {

// Token ids. Id 0 is always the pad token, id 1 the unknown token.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;

  Vocabulary();

  int add(const std::string& token);            // returns existing id if present
  int id_of(const std::string& token) const;    // kUnkId if unknown
  const std::string& token_of(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  // Token-per-line UTF-8 file; the line number is the id.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::pair<std::string, int>> index_;  // sorted for lookup
  void reindex();
};

// Lowercased whitespace tokenization, punctuation stripped.
std::vector<std::string> tokenize(const std::string& caption);

struct TokenSequence {
  std::vector<int> ids;  // length == capacity T, padded with kPadId
  int true_length = 0;

  int capacity() const { return static_cast<int>(ids.size()); }
  void validate(int vocab_size) const;
};

// Encodes `tokens` (adding unk for unseen words) into a padded sequence of
// capacity t_max. Counts unknown-token substitutions if `unk_count` given.
TokenSequence make_sequence(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                            int t_max, int* unk_count = nullptr);

struct EncodedText {
  Tensor words;     // (word_dim, T); columns past true_length are the pad embedding
  Tensor sentence;  // (word_dim)
};

namespace detail_text {
struct GruCell {
  Tensor wz, uz, bz, wr, ur, br, wh, uh, bh;
  GruCell() = default;
  GruCell(int dim, Rng& rng, ParamMap& params, const std::string& name);
  Tensor step(const Tensor& x, const Tensor& h) const;  // (1,dim) x (1,dim) -> (1,dim)
};
}  // namespace detail_text

// Reference text encoder: embedding lookup plus a bidirectional recurrent pass.
// Word feature t is the mean of the two directions' hidden states at t; the
// sentence feature is the mean of the two final states. Positions past
// true_length never enter the recurrence and come out as the pad embedding.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(int vocab_size, int word_dim, Rng& rng, ParamMap& params,
              const std::string& name = "text");

  EncodedText encode(const TokenSequence& tokens) const;
  int word_dim() const { return embedding_.defined() ? embedding_.dim(1) : 0; }
  int vocab_size() const { return embedding_.defined() ? embedding_.dim(0) : 0; }

 private:
  Tensor embedding_;  // (V, word_dim)
  detail_text::GruCell forward_, backward_;
};

struct AugmentedCondition {
  Tensor mean;          // (N_s)
  Tensor log_variance;  // (N_s)
  Tensor sample;        // mean + exp(0.5*log_variance) * noise
  Tensor noise;         // the draw used, kept for reproducibility
};

// Gaussian conditioning head: two affine maps estimate the mean and diagonal
// log-variance of the condition distribution; sampling is reparameterized.
class ConditionAugmenter {
 public:
  ConditionAugmenter() = default;
  ConditionAugmenter(int sentence_dim, int condition_dim, Rng& rng, ParamMap& params,
                     const std::string& name = "cond_aug");

  AugmentedCondition augment(const Tensor& sentence, const Tensor& noise) const;
  int condition_dim() const { return mean_.weight.defined() ? mean_.weight.dim(1) : 0; }

 private:
  Linear mean_, log_variance_;
};

// KL divergence of N(mu, diag(exp(lv))) from N(0, I):
//   0.5 * sum(mu^2 + exp(lv) - lv - 1)
Tensor ca_kl_loss(const Tensor& mu, const Tensor& log_variance);

}  // namespace pedgen
