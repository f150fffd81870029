#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pedgen/discriminators.hpp"
#include "pedgen/rng.hpp"
#include "test_util.hpp"

using namespace pedgen;
using testutil::grad_check;
using testutil::random_tensor;

TEST_CASE("split_parts: equal bands, lossless and order-preserving") {
  Rng rng(3);
  RegionFeatureGrid rho;
  rho.height = 8;
  rho.width = 2;
  rho.values = random_tensor({5, 16}, rng);
  PartSplit split = split_parts(rho);
  for (int k = 0; k < 4; ++k) {
    CHECK(split.parts[static_cast<size_t>(k)].height == 2);
    CHECK(split.parts[static_cast<size_t>(k)].width == 2);
    CHECK(split.parts[static_cast<size_t>(k)].values.dim(1) == 4);
  }
  Tensor rebuilt = concat({split.parts[0].values, split.parts[1].values, split.parts[2].values,
                           split.parts[3].values},
                          1);
  CHECK(rebuilt.values() == rho.values.values());  // bit-exact
}

TEST_CASE("split_parts: height one bands at the minimum grid") {
  Rng rng(5);
  RegionFeatureGrid rho;
  rho.height = 4;
  rho.width = 4;
  rho.values = random_tensor({3, 16}, rng);
  PartSplit split = split_parts(rho);
  CHECK(split.parts[0].height == 1);
}

TEST_CASE("split_parts: indivisible height is rejected") {
  Rng rng(7);
  RegionFeatureGrid rho;
  rho.height = 6;
  rho.width = 2;
  rho.values = random_tensor({3, 12}, rng);
  CHECK_THROWS_AS(split_parts(rho), InputError);
}

TEST_CASE("strided encoder: 64px input with four stride-2 blocks lands on 4x4") {
  ParamMap params;
  Rng rng(11);
  StridedEncoder enc(64, 32, rng, params, "ef");
  CHECK(enc.grid_edge() == 4);
  Tensor img = random_tensor({3, 64, 64}, rng);
  RegionFeatureGrid grid = enc.encode(img);
  CHECK(grid.height == 4);
  CHECK(grid.width == 4);
  CHECK(grid.values.dim(0) == 32);
  CHECK(grid.values.dim(1) == 16);

  RegionFeatureGrid again = enc.encode(img);
  CHECK(again.values.values() == grid.values.values());
}

TEST_CASE("strided encoder: wrong resolution is an input error") {
  ParamMap params;
  Rng rng(13);
  StridedEncoder enc(16, 8, rng, params, "ef");
  Tensor img = random_tensor({3, 8, 8}, rng);
  CHECK_THROWS_AS(enc.encode(img), InputError);
}

TEST_CASE("part head: zeroed scoring head gives one half") {
  ParamMap params;
  Rng rng(17);
  PartHead head(8, 6, rng, params, "p");
  for (const char* n : {"p.h.w", "p.h.b", "p.o.w", "p.o.b"})
    params.get(n).mutable_values().assign(params.get(n).size(), 0.0);
  RegionFeatureGrid part;
  part.height = 1;
  part.width = 4;
  part.values = random_tensor({8, 4}, rng);
  Tensor words = random_tensor({6, 3}, rng);
  CHECK(head.score(part, words, true).item() == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("part head: scores stay strictly inside the unit interval") {
  ParamMap params;
  Rng rng(19);
  PartHead head(8, 6, rng, params, "p");
  for (int trial = 0; trial < 1000; ++trial) {
    RegionFeatureGrid part;
    part.height = 1;
    part.width = 4;
    part.values = random_tensor({8, 4}, rng, 3.0);
    Tensor words = random_tensor({6, 3}, rng, 3.0);
    const double y = head.score(part, words, true).item();
    CHECK(y > 0.0);
    CHECK(y < 1.0);
  }
}

TEST_CASE("part discriminator: distinct per-part parameters produce distinct scores") {
  ParamMap params;
  Rng rng(23);
  PartDiscriminator disc(8, 16, 6, rng, params, "d0.local");
  Tensor img = random_tensor({3, 8, 8}, rng);
  Tensor words = random_tensor({6, 4}, rng);
  PartScores s = disc.score(img, words, true);
  // same encoded grid flows into all four heads with generic random weights
  CHECK(s.head.item() != s.torso.item());
  CHECK(s.torso.item() != s.legs.item());
  CHECK(s.legs.item() != s.feet.item());
}

TEST_CASE("part score gradients flow into the attention projection") {
  ParamMap params;
  Rng rng(29);
  PartHead head(8, 4, rng, params, "p");
  RegionFeatureGrid part;
  part.height = 1;
  part.width = 4;
  part.values = random_tensor({8, 4}, rng);
  Tensor words = random_tensor({4, 3}, rng);
  auto loss = [&] { return head.score(part, words, true); };
  CHECK(grad_check(loss, params.get("p.visa.proj")) < 1e-3);
  CHECK(grad_check(loss, params.get("p.h.w")) < 1e-3);
}

TEST_CASE("uniform-attention ablation path sends no gradient to the projection") {
  ParamMap params;
  Rng rng(31);
  PartHead head(8, 4, rng, params, "p");
  RegionFeatureGrid part;
  part.height = 1;
  part.width = 4;
  part.values = random_tensor({8, 4}, rng);
  Tensor words = random_tensor({4, 3}, rng);
  Tensor score = head.score(part, words, /*use_visa=*/false);
  score.backward();
  CHECK_FALSE(params.get("p.visa.proj").has_grad());
  params.zero_grads();
}

TEST_CASE("global discriminator: bypassing attention equals the gamma-zero path") {
  ParamMap params;
  Rng rng(37);
  GlobalDiscriminator disc(8, 16, 6, rng, params, "d0.global");
  Tensor img = random_tensor({3, 8, 8}, rng);
  Tensor s = random_tensor({6}, rng);
  // gamma initializes to zero, so the attended and bypassed paths agree
  GlobalScores with_sca = disc.score(img, s, true);
  GlobalScores without = disc.score(img, s, false);
  CHECK(with_sca.unconditional.item() == without.unconditional.item());
  CHECK(with_sca.conditional.item() == without.conditional.item());

  // a nonzero gamma separates them
  params.get("d0.global.sca.gamma").mutable_values()[0] = 0.5;
  GlobalScores changed = disc.score(img, s, true);
  CHECK(changed.unconditional.item() != without.unconditional.item());
}

TEST_CASE("global discriminator: conditional head reacts to the sentence, unconditional does not") {
  ParamMap params;
  Rng rng(41);
  GlobalDiscriminator disc(8, 16, 6, rng, params, "d0.global");
  Tensor img = random_tensor({3, 8, 8}, rng);
  Tensor s1 = random_tensor({6}, rng);
  Tensor s2 = random_tensor({6}, rng);
  GlobalScores a = disc.score(img, s1, true);
  GlobalScores bscore = disc.score(img, s2, true);
  CHECK(a.unconditional.item() == bscore.unconditional.item());
  CHECK(a.conditional.item() != bscore.conditional.item());
  CHECK(a.unconditional.item() > 0.0);
  CHECK(a.unconditional.item() < 1.0);
}

TEST_CASE("batched scoring matches per-sample scoring") {
  ParamMap params;
  Rng rng(43);
  PartDiscriminator disc(8, 16, 6, rng, params, "d0.local");
  GlobalDiscriminator gdisc(8, 16, 6, rng, params, "d0.global");
  Tensor img0 = random_tensor({3, 8, 8}, rng);
  Tensor img1 = random_tensor({3, 8, 8}, rng);
  Tensor w0 = random_tensor({6, 4}, rng);
  Tensor w1 = random_tensor({6, 4}, rng);
  Tensor s0 = random_tensor({6}, rng);
  Tensor s1 = random_tensor({6}, rng);

  Tensor batch = stack0({img0, img1});
  auto parts = disc.score_batch(batch, {w0, w1}, true);
  CHECK(parts[0].head.item() == doctest::Approx(disc.score(img0, w0, true).head.item()).epsilon(1e-12));
  CHECK(parts[1].feet.item() == doctest::Approx(disc.score(img1, w1, true).feet.item()).epsilon(1e-12));

  auto globals = gdisc.score_batch(batch, {s0, s1}, true);
  CHECK(globals[0].conditional.item() ==
        doctest::Approx(gdisc.score(img0, s0, true).conditional.item()).epsilon(1e-12));
  CHECK(globals[1].unconditional.item() ==
        doctest::Approx(gdisc.score(img1, s1, true).unconditional.item()).epsilon(1e-12));
}
