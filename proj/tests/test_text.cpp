#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "pedgen/nn.hpp"
#include "pedgen/text.hpp"
#include "test_util.hpp"

using namespace pedgen;
using testutil::grad_check;
using testutil::random_tensor;

TEST_CASE("vocabulary basics and file round-trip") {
  Vocabulary v;
  CHECK(v.size() == 2);
  CHECK(v.id_of("<pad>") == Vocabulary::kPadId);
  const int red = v.add("red");
  CHECK(v.add("red") == red);
  CHECK(v.id_of("red") == red);
  CHECK(v.id_of("nonexistent") == Vocabulary::kUnkId);
  v.add("torso");

  const std::string path = "vocab_test.txt";
  v.save(path);
  Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded.size() == v.size());
  CHECK(loaded.id_of("torso") == v.id_of("torso"));
  std::remove(path.c_str());
}

TEST_CASE("tokenize lowercases and strips punctuation") {
  auto toks = tokenize("A person, with a RED torso!");
  CHECK(toks == std::vector<std::string>{"a", "person", "with", "a", "red", "torso"});
}

TEST_CASE("make_sequence pads and counts unknowns") {
  Vocabulary v;
  v.add("red");
  v.add("torso");
  int unk = 0;
  TokenSequence seq = make_sequence({"red", "mystery", "torso"}, v, 6, &unk);
  CHECK(seq.true_length == 3);
  CHECK(unk == 1);
  CHECK(seq.ids[1] == Vocabulary::kUnkId);
  CHECK(seq.ids[3] == Vocabulary::kPadId);
  seq.validate(v.size());

  TokenSequence bad = seq;
  bad.ids[4] = 1;  // non-pad entry in the padding region
  CHECK_THROWS_AS(bad.validate(v.size()), InputError);
}

TEST_CASE("encoder: fixed output shape, pad columns equal the pad embedding") {
  Rng rng(7);
  ParamMap params;
  const int dim = 6, t_max = 5;
  TextEncoder enc(10, dim, rng, params);

  TokenSequence seq;
  seq.ids = {Vocabulary::kPadId, 0, 0, 0, 0};
  seq.true_length = 1;  // single pad-substitute token
  EncodedText out = enc.encode(seq);
  CHECK(out.words.shape() == Shape{dim, t_max});
  CHECK(out.sentence.shape() == Shape{dim});

  Tensor pad_embed = embedding_rows(params.get("text.embed"), {Vocabulary::kPadId});
  for (int t = 1; t < t_max; ++t)
    for (int c = 0; c < dim; ++c)
      CHECK(out.words.at({c, t}) == doctest::Approx(pad_embed.at({0, c})).epsilon(1e-15));
}

TEST_CASE("encoder: deterministic for identical inputs") {
  Rng rng(11);
  ParamMap params;
  TextEncoder enc(12, 4, rng, params);
  TokenSequence seq;
  seq.ids = {3, 5, 7, 0, 0, 0};
  seq.true_length = 3;
  EncodedText a = enc.encode(seq);
  EncodedText b = enc.encode(seq);
  CHECK(a.words.values() == b.words.values());
  CHECK(a.sentence.values() == b.sentence.values());
}

TEST_CASE("encoder: masking ignores the padding region entirely") {
  Rng rng(13);
  ParamMap params;
  TextEncoder enc(12, 4, rng, params);
  TokenSequence a;
  a.ids = {3, 5, 7, 0, 0, 0};
  a.true_length = 3;
  TokenSequence b;
  b.ids = {3, 5, 7, 9, 9, 9};  // junk past true_length, constructed directly
  b.true_length = 3;
  EncodedText ea = enc.encode(a);
  EncodedText eb = enc.encode(b);
  CHECK(ea.sentence.values() == eb.sentence.values());
  // word columns inside true_length also identical
  for (int t = 0; t < 3; ++t)
    for (int c = 0; c < 4; ++c) CHECK(ea.words.at({c, t}) == eb.words.at({c, t}));
}

TEST_CASE("encoder: id out of range raises input error") {
  Rng rng(17);
  ParamMap params;
  TextEncoder enc(8, 4, rng, params);
  TokenSequence seq;
  seq.ids = {9, 0, 0};
  seq.true_length = 1;
  CHECK_THROWS_AS(enc.encode(seq), InputError);
}

TEST_CASE("condition augment: reparameterization identities") {
  Rng rng(19);
  ParamMap params;
  const int sdim = 6, cdim = 4;
  ConditionAugmenter ca(sdim, cdim, rng, params);
  Tensor s = random_tensor({sdim}, rng);

  SUBCASE("zero noise returns the mean") {
    AugmentedCondition c = ca.augment(s, Tensor::zeros({cdim}));
    CHECK(c.sample.values() == c.mean.values());
  }
  SUBCASE("unit log-variance-zero noise shifts by the basis vector") {
    // force log_variance output to zero by zeroing its layer
    params.get("cond_aug.logvar.w").mutable_values().assign(
        params.get("cond_aug.logvar.w").size(), 0.0);
    Tensor e2 = Tensor::zeros({cdim});
    e2.mutable_values()[2] = 1.0;
    AugmentedCondition c = ca.augment(s, e2);
    for (int i = 0; i < cdim; ++i)
      CHECK(c.sample.values()[i] ==
            doctest::Approx(c.mean.values()[i] + (i == 2 ? 1.0 : 0.0)).epsilon(1e-15));
  }
  SUBCASE("same noise twice gives identical samples") {
    Tensor noise = random_tensor({cdim}, rng);
    AugmentedCondition c1 = ca.augment(s, noise);
    AugmentedCondition c2 = ca.augment(s, noise);
    CHECK(c1.sample.values() == c2.sample.values());
  }
}

TEST_CASE("kl loss: closed forms") {
  const int d = 7;
  CHECK(ca_kl_loss(Tensor::zeros({d}), Tensor::zeros({d})).item() == doctest::Approx(0.0));
  CHECK(ca_kl_loss(Tensor::full({d}, 1.0), Tensor::zeros({d})).item() ==
        doctest::Approx(0.5 * d).epsilon(1e-12));
  CHECK_THROWS_AS(ca_kl_loss(Tensor::zeros({3}), Tensor::zeros({4})), InputError);
}

TEST_CASE("kl loss: non-negative, zero only at the standard normal") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor mu = random_tensor({5}, rng, 2.0);
    Tensor lv = random_tensor({5}, rng, 2.0);
    CHECK(ca_kl_loss(mu, lv).item() >= 0.0);
  }
  Tensor mu = Tensor::zeros({5});
  Tensor lv = Tensor::zeros({5});
  lv.mutable_values()[2] = 0.3;
  CHECK(ca_kl_loss(mu, lv).item() > 0.0);
}

TEST_CASE("kl loss: matches a Monte-Carlo estimate within 2 percent") {
  Rng rng(29);
  const int d = 8;
  Tensor mu = random_tensor({d}, rng);
  Tensor lv = random_tensor({d}, rng);
  const double exact = ca_kl_loss(mu, lv).item();

  // MC oracle: KL = E_q[log q(x) - log p(x)], x ~ q = N(mu, exp(lv))
  Rng mc(12345);
  const int samples = 1000000;
  double acc = 0.0;
  for (int s = 0; s < samples; ++s) {
    for (int i = 0; i < d; ++i) {
      const double m = mu.values()[static_cast<size_t>(i)];
      const double l = lv.values()[static_cast<size_t>(i)];
      const double sigma = std::exp(0.5 * l);
      const double x = m + sigma * mc.normal();
      const double logq = -0.5 * l - 0.5 * (x - m) * (x - m) / (sigma * sigma);
      const double logp = -0.5 * x * x;
      acc += logq - logp;
    }
  }
  const double mc_est = acc / samples;
  CHECK(std::fabs(mc_est - exact) / std::fabs(exact) < 0.02);
}

TEST_CASE("kl loss: analytic gradients match the closed form") {
  Rng rng(31);
  Tensor mu = random_tensor({6}, rng, 1.0, true);
  Tensor lv = random_tensor({6}, rng, 1.0, true);
  Tensor loss = ca_kl_loss(mu, lv);
  loss.backward();
  for (int i = 0; i < 6; ++i) {
    CHECK(mu.grad()[static_cast<size_t>(i)] ==
          doctest::Approx(mu.values()[static_cast<size_t>(i)]).epsilon(1e-12));
    CHECK(lv.grad()[static_cast<size_t>(i)] ==
          doctest::Approx(0.5 * (std::exp(lv.values()[static_cast<size_t>(i)]) - 1.0))
              .epsilon(1e-12));
  }
  // and by finite differences
  auto loss_fn = [&] { return ca_kl_loss(mu, lv); };
  CHECK(grad_check(loss_fn, mu) < 1e-3);
  CHECK(grad_check(loss_fn, lv) < 1e-3);
}

TEST_CASE("encoder gradients flow through the recurrence") {
  Rng rng(37);
  ParamMap params;
  TextEncoder enc(8, 3, rng, params);
  TokenSequence seq;
  seq.ids = {2, 4, 0, 0};
  seq.true_length = 2;
  auto loss = [&] {
    EncodedText out = enc.encode(seq);
    return add(sum_all(tanh_t(out.words)), sum_all(square(out.sentence)));
  };
  CHECK(grad_check(loss, params.get("text.embed")) < 1e-3);
  CHECK(grad_check(loss, params.get("text.fw.wh")) < 1e-3);
  CHECK(grad_check(loss, params.get("text.bw.uz")) < 1e-3);
}
