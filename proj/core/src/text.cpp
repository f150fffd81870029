#include "pedgen/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "pedgen/common.hpp"

namespace pedgen {

Vocabulary::Vocabulary() {
  tokens_ = {"<pad>", "<unk>"};
  reindex();
}

void Vocabulary::reindex() {
  index_.clear();
  index_.reserve(tokens_.size());
  for (size_t i = 0; i < tokens_.size(); ++i)
    index_.emplace_back(tokens_[i], static_cast<int>(i));
  std::sort(index_.begin(), index_.end());
}

int Vocabulary::add(const std::string& token) {
  int existing = id_of(token);
  if (existing != kUnkId || token == "<unk>") return existing;
  tokens_.push_back(token);
  reindex();
  return static_cast<int>(tokens_.size()) - 1;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = std::lower_bound(index_.begin(), index_.end(), std::make_pair(token, 0));
  if (it != index_.end() && it->first == token) return it->second;
  return kUnkId;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) throw InputError("Vocabulary: id out of range");
  return tokens_[static_cast<size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  auto it = std::lower_bound(index_.begin(), index_.end(), std::make_pair(token, 0));
  return it != index_.end() && it->first == token;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("Vocabulary::save: cannot open " + path);
  for (const auto& t : tokens_) os << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("Vocabulary::load: cannot open " + path);
  Vocabulary v;
  v.tokens_.clear();
  std::string line;
  while (std::getline(is, line)) v.tokens_.push_back(line);
  if (v.tokens_.size() < 2 || v.tokens_[0] != "<pad>" || v.tokens_[1] != "<unk>")
    throw IoError("Vocabulary::load: file must start with <pad> and <unk> lines");
  v.reindex();
  return v;
}

std::vector<std::string> tokenize(const std::string& caption) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : caption) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void TokenSequence::validate(int vocab_size) const {
  if (true_length < 1 || true_length > capacity())
    throw InputError("TokenSequence: true_length " + std::to_string(true_length) +
                     " outside [1, " + std::to_string(capacity()) + "]");
  for (int i = 0; i < capacity(); ++i) {
    if (ids[static_cast<size_t>(i)] < 0 || ids[static_cast<size_t>(i)] >= vocab_size)
      throw InputError("TokenSequence: id out of vocabulary range at position " +
                       std::to_string(i));
    if (i >= true_length && ids[static_cast<size_t>(i)] != Vocabulary::kPadId)
      throw InputError("TokenSequence: non-pad id after true_length");
  }
}

TokenSequence make_sequence(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                            int t_max, int* unk_count) {
  if (t_max < 1) throw ContractError("make_sequence: t_max must be >= 1");
  TokenSequence seq;
  seq.ids.assign(static_cast<size_t>(t_max), Vocabulary::kPadId);
  int n = 0;
  for (const auto& tok : tokens) {
    if (n >= t_max) break;
    int id = vocab.id_of(tok);
    if (id == Vocabulary::kUnkId && unk_count && tok != "<unk>") ++*unk_count;
    seq.ids[static_cast<size_t>(n++)] = id;
  }
  if (n == 0) {
    // empty captions degrade to a single unk token so true_length >= 1 holds
    seq.ids[0] = Vocabulary::kUnkId;
    n = 1;
  }
  seq.true_length = n;
  return seq;
}

namespace detail_text {

GruCell::GruCell(int dim, Rng& rng, ParamMap& params, const std::string& name) {
  wz = params.add(name + ".wz", scaled_init({dim, dim}, dim, rng));
  uz = params.add(name + ".uz", scaled_init({dim, dim}, dim, rng));
  bz = params.add(name + ".bz", zeros_init({dim}));
  wr = params.add(name + ".wr", scaled_init({dim, dim}, dim, rng));
  ur = params.add(name + ".ur", scaled_init({dim, dim}, dim, rng));
  br = params.add(name + ".br", zeros_init({dim}));
  wh = params.add(name + ".wh", scaled_init({dim, dim}, dim, rng));
  uh = params.add(name + ".uh", scaled_init({dim, dim}, dim, rng));
  bh = params.add(name + ".bh", zeros_init({dim}));
}

Tensor GruCell::step(const Tensor& x, const Tensor& h) const {
  Tensor z = sigmoid(add_rowvec(add(matmul(x, wz), matmul(h, uz)), bz));
  Tensor r = sigmoid(add_rowvec(add(matmul(x, wr), matmul(h, ur)), br));
  Tensor cand = tanh_t(add_rowvec(add(matmul(x, wh), matmul(mul(r, h), uh)), bh));
  // h' = (1-z) * h + z * cand
  return add(mul(add_scalar(neg(z), 1.0), h), mul(z, cand));
}

}  // namespace detail_text

TextEncoder::TextEncoder(int vocab_size, int word_dim, Rng& rng, ParamMap& params,
                         const std::string& name) {
  embedding_ = params.add(name + ".embed", normal_init({vocab_size, word_dim}, 0.1, rng));
  forward_ = detail_text::GruCell(word_dim, rng, params, name + ".fw");
  backward_ = detail_text::GruCell(word_dim, rng, params, name + ".bw");
}

EncodedText TextEncoder::encode(const TokenSequence& tokens) const {
  // Only vocabulary validity is required here; everything past true_length is
  // masked out by construction, whatever it contains.
  if (tokens.true_length < 1 || tokens.true_length > tokens.capacity())
    throw InputError("encode: true_length outside [1, T]");
  for (int id : tokens.ids)
    if (id < 0 || id >= vocab_size())
      throw InputError("encode: token id " + std::to_string(id) + " out of vocabulary range");
  const int t_max = tokens.capacity();
  const int len = tokens.true_length;
  const int dim = word_dim();

  std::vector<int> live(tokens.ids.begin(), tokens.ids.begin() + len);
  Tensor embedded = embedding_rows(embedding_, live);  // (len, dim)

  std::vector<Tensor> fwd_states(static_cast<size_t>(len));
  Tensor h = Tensor::zeros({1, dim});
  for (int t = 0; t < len; ++t) {
    Tensor x = slice(embedded, 0, t, t + 1);  // (1, dim)
    h = forward_.step(x, h);
    fwd_states[static_cast<size_t>(t)] = h;
  }
  Tensor fwd_final = h;

  std::vector<Tensor> bwd_states(static_cast<size_t>(len));
  h = Tensor::zeros({1, dim});
  for (int t = len - 1; t >= 0; --t) {
    Tensor x = slice(embedded, 0, t, t + 1);
    h = backward_.step(x, h);
    bwd_states[static_cast<size_t>(t)] = h;
  }
  Tensor bwd_final = h;

  Tensor pad_col = embedding_rows(embedding_, {Vocabulary::kPadId});  // (1, dim)
  std::vector<Tensor> cols;
  cols.reserve(static_cast<size_t>(t_max));
  for (int t = 0; t < t_max; ++t) {
    if (t < len)
      cols.push_back(scale(add(fwd_states[static_cast<size_t>(t)],
                               bwd_states[static_cast<size_t>(t)]),
                           0.5));
    else
      cols.push_back(pad_col);
  }
  Tensor words_rows = concat(cols, 0);  // (T, dim), row t = word feature t

  EncodedText out;
  out.words = transpose(words_rows);  // (dim, T)
  out.sentence = reshape(scale(add(fwd_final, bwd_final), 0.5), {dim});
  return out;
}

ConditionAugmenter::ConditionAugmenter(int sentence_dim, int condition_dim, Rng& rng,
                                       ParamMap& params, const std::string& name) {
  mean_ = Linear(sentence_dim, condition_dim, rng, params, name + ".mean");
  log_variance_ = Linear(sentence_dim, condition_dim, rng, params, name + ".logvar");
}

AugmentedCondition ConditionAugmenter::augment(const Tensor& sentence, const Tensor& noise) const {
  check_finite(sentence, "condition_augment input");
  if (noise.shape().size() != 1 || noise.dim(0) != condition_dim())
    throw ContractError("condition_augment: noise must be 1-D of the condition dimension");
  AugmentedCondition out;
  out.mean = mean_.forward_vec(sentence);
  out.log_variance = log_variance_.forward_vec(sentence);
  check_finite(out.mean, "condition_augment mean");
  check_finite(out.log_variance, "condition_augment log-variance");
  out.noise = noise;
  out.sample = add(out.mean, mul(exp_t(scale(out.log_variance, 0.5)), noise));
  return out;
}

Tensor ca_kl_loss(const Tensor& mu, const Tensor& log_variance) {
  if (mu.shape().size() != 1 || log_variance.shape().size() != 1 ||
      mu.dim(0) != log_variance.dim(0))
    throw InputError("ca_kl_loss: mu and log_variance must be equal-length vectors");
  Tensor term = sub(add(square(mu), exp_t(log_variance)), add_scalar(log_variance, 1.0));
  return scale(sum_all(term), 0.5);
}

}  // namespace pedgen
