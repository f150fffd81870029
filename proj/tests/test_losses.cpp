#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pedgen/losses.hpp"
#include "pedgen/rng.hpp"
#include "test_util.hpp"

using namespace pedgen;
using testutil::random_tensor;

namespace {

GlobalScores gs(double u, double c) {
  return {Tensor::scalar(u), Tensor::scalar(c)};
}

PartScores ps(double h, double to, double l, double f) {
  return {Tensor::scalar(h), Tensor::scalar(to), Tensor::scalar(l), Tensor::scalar(f)};
}

constexpr double kLn2 = 0.6931471805599453;

}  // namespace

TEST_CASE("generator adversarial loss closed forms") {
  SUBCASE("all scores one half gives ln 2") {
    Tensor loss = generator_adv_loss({gs(0.5, 0.5)}, {ps(0.5, 0.5, 0.5, 0.5)});
    CHECK(loss.item() == doctest::Approx(kLn2).epsilon(1e-12));
  }
  SUBCASE("scores near one drive the loss to zero from above") {
    Tensor loss = generator_adv_loss({gs(0.999999, 0.999999)},
                                     {ps(0.999999, 0.999999, 0.999999, 0.999999)});
    CHECK(loss.item() > 0.0);
    CHECK(loss.item() < 1e-5);
  }
  SUBCASE("global one half, parts one quarter") {
    Tensor loss = generator_adv_loss({gs(0.5, 0.5)}, {ps(0.25, 0.25, 0.25, 0.25)});
    CHECK(loss.item() == doctest::Approx(4.0 / 3.0 * kLn2).epsilon(1e-12));
  }
  SUBCASE("hpd disabled renormalizes to one half") {
    Tensor loss = generator_adv_loss({gs(0.5, 0.5)}, {}, /*use_hpd=*/false);
    CHECK(loss.item() == doctest::Approx(kLn2).epsilon(1e-12));
  }
  SUBCASE("score outside the unit interval is a contract error") {
    CHECK_THROWS_AS(generator_adv_loss({gs(1.5, 0.5)}, {ps(0.5, 0.5, 0.5, 0.5)}), ContractError);
    CHECK_THROWS_AS(generator_adv_loss({gs(0.5, -0.1)}, {ps(0.5, 0.5, 0.5, 0.5)}), ContractError);
  }
}

TEST_CASE("generator adversarial loss matches a per-sample loop oracle") {
  Rng rng(5);
  const int batch = 6;
  std::vector<GlobalScores> g;
  std::vector<PartScores> p;
  std::vector<std::array<double, 6>> raw;
  for (int i = 0; i < batch; ++i) {
    std::array<double, 6> r{};
    for (auto& x : r) x = rng.uniform(0.05, 0.95);
    raw.push_back(r);
    g.push_back(gs(r[0], r[1]));
    p.push_back(ps(r[2], r[3], r[4], r[5]));
  }
  double expected = 0.0;
  for (const auto& r : raw) {
    double local = 0.0;
    for (int k = 2; k < 6; ++k) local += std::log(r[static_cast<size_t>(k)]);
    expected += -(std::log(r[0]) + std::log(r[1]) + 0.25 * local) / 3.0;
  }
  expected /= batch;
  CHECK(generator_adv_loss(g, p).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("generator adversarial loss is monotone decreasing in every score") {
  auto loss_at = [](double u) {
    return generator_adv_loss({gs(u, 0.5)}, {ps(0.5, 0.5, 0.5, 0.5)}).item();
  };
  CHECK(loss_at(0.3) > loss_at(0.5));
  CHECK(loss_at(0.5) > loss_at(0.8));
  auto loss_part = [](double y) {
    return generator_adv_loss({gs(0.5, 0.5)}, {ps(y, 0.5, 0.5, 0.5)}).item();
  };
  CHECK(loss_part(0.2) > loss_part(0.6));
}

TEST_CASE("global discriminator loss closed forms and oracle") {
  SUBCASE("all one half gives 2 ln 2") {
    Tensor loss = global_disc_loss({gs(0.5, 0.5)}, {gs(0.5, 0.5)});
    CHECK(loss.item() == doctest::Approx(2.0 * kLn2).epsilon(1e-12));
  }
  SUBCASE("perfect discrimination approaches zero") {
    Tensor loss = global_disc_loss({gs(0.999999, 0.999999)}, {gs(1e-6, 1e-6)});
    CHECK(loss.item() < 1e-5);
  }
  SUBCASE("random batch matches the scalar loop") {
    Rng rng(7);
    const int batch = 5;
    std::vector<GlobalScores> real, fake;
    double e_ru = 0, e_rc = 0, e_fu = 0, e_fc = 0;
    for (int i = 0; i < batch; ++i) {
      double ru = rng.uniform(0.05, 0.95), rc = rng.uniform(0.05, 0.95);
      double fu = rng.uniform(0.05, 0.95), fc = rng.uniform(0.05, 0.95);
      real.push_back(gs(ru, rc));
      fake.push_back(gs(fu, fc));
      e_ru += std::log(ru) / batch;
      e_rc += std::log(rc) / batch;
      e_fu += std::log(1 - fu) / batch;
      e_fc += std::log(1 - fc) / batch;
    }
    const double expected = -0.5 * (e_ru + e_fu + e_rc + e_fc);
    CHECK(global_disc_loss(real, fake).item() == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("part discriminator loss closed forms and oracle") {
  SUBCASE("all one half gives 2 ln 2 averaged over parts") {
    Tensor loss = part_disc_loss({ps(0.5, 0.5, 0.5, 0.5)}, {ps(0.5, 0.5, 0.5, 0.5)});
    CHECK(loss.item() == doctest::Approx(2.0 * kLn2).epsilon(1e-12));
  }
  SUBCASE("perfect part discrimination approaches zero") {
    Tensor loss = part_disc_loss({ps(0.999999, 0.999999, 0.999999, 0.999999)},
                                 {ps(1e-6, 1e-6, 1e-6, 1e-6)});
    CHECK(loss.item() < 1e-5);
  }
  SUBCASE("asymmetric scores match the loop oracle") {
    Rng rng(11);
    const int batch = 4;
    std::vector<PartScores> real, fake;
    std::vector<std::array<double, 4>> rv, fv;
    for (int i = 0; i < batch; ++i) {
      std::array<double, 4> r{}, f{};
      for (auto& x : r) x = rng.uniform(0.05, 0.95);
      for (auto& x : f) x = rng.uniform(0.05, 0.95);
      rv.push_back(r);
      fv.push_back(f);
      real.push_back(ps(r[0], r[1], r[2], r[3]));
      fake.push_back(ps(f[0], f[1], f[2], f[3]));
    }
    double expected = 0.0;
    for (int k = 0; k < 4; ++k) {
      double er = 0, ef = 0;
      for (int i = 0; i < batch; ++i) {
        er += std::log(rv[static_cast<size_t>(i)][static_cast<size_t>(k)]) / batch;
        ef += std::log(1 - fv[static_cast<size_t>(i)][static_cast<size_t>(k)]) / batch;
      }
      expected += -(er + ef) / 4.0;
    }
    CHECK(part_disc_loss(real, fake).item() == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("losses stay finite at clamped extremes") {
  Tensor loss = global_disc_loss({gs(1.0, 0.0)}, {gs(0.0, 1.0)});
  CHECK(std::isfinite(loss.item()));
  Tensor gen = generator_adv_loss({gs(0.0, 1.0)}, {ps(0.0, 1.0, 0.0, 1.0)});
  CHECK(std::isfinite(gen.item()));
}

TEST_CASE("damsm loss basics") {
  Rng rng(13);
  const int dim = 6, n_regions = 4, t = 3;

  auto make_pair = [&](Rng& r) {
    MatchFeatures img;
    img.regions = random_tensor({dim, n_regions}, r);
    img.global = random_tensor({dim}, r);
    EncodedText txt;
    txt.words = random_tensor({dim, t}, r);
    txt.sentence = random_tensor({dim}, r);
    return std::make_pair(img, txt);
  };

  SUBCASE("identical pairs give ln 2") {
    auto [img, txt] = make_pair(rng);
    Tensor loss = damsm_loss({img, img}, {txt, txt}, {t, t});
    CHECK(loss.item() == doctest::Approx(kLn2).epsilon(1e-9));
  }
  SUBCASE("batch of one is a contract error") {
    auto [img, txt] = make_pair(rng);
    CHECK_THROWS_AS(damsm_loss({img}, {txt}, {t}), ContractError);
  }
  SUBCASE("matched dominance drives the loss toward zero") {
    // two pairs with strongly aligned matched features and anti-aligned
    // mismatched features
    MatchFeatures img1, img2;
    img1.global = Tensor::leaf({2}, {100.0, 0.0});
    img2.global = Tensor::leaf({2}, {0.0, 100.0});
    img1.regions = Tensor::leaf({2, 2}, {100.0, 100.0, 0.0, 0.0});
    img2.regions = Tensor::leaf({2, 2}, {0.0, 0.0, 100.0, 100.0});
    EncodedText t1, t2;
    t1.sentence = Tensor::leaf({2}, {1.0, 0.0});
    t2.sentence = Tensor::leaf({2}, {0.0, 1.0});
    t1.words = Tensor::leaf({2, 1}, {1.0, 0.0});
    t2.words = Tensor::leaf({2, 1}, {0.0, 1.0});
    Tensor loss = damsm_loss({img1, img2}, {t1, t2}, {1, 1});
    CHECK(loss.item() < 0.01);
  }
  SUBCASE("random batch of four matches a full loop oracle") {
    std::vector<MatchFeatures> imgs;
    std::vector<EncodedText> txts;
    std::vector<int> lens;
    for (int i = 0; i < 4; ++i) {
      auto [img, txt] = make_pair(rng);
      imgs.push_back(img);
      txts.push_back(txt);
      lens.push_back(t);
    }
    const double got = damsm_loss(imgs, txts, lens).item();

    auto cosv = [](const std::vector<double>& a, const std::vector<double>& b) {
      double num = 0, na = 0, nb = 0;
      for (size_t i = 0; i < a.size(); ++i) {
        num += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      return num / (std::sqrt(na) * std::sqrt(nb));
    };
    auto column = [](const Tensor& m, int j) {
      std::vector<double> col;
      for (int r = 0; r < m.dim(0); ++r) col.push_back(m.at({r, j}));
      return col;
    };

    double sent[4][4], word[4][4];
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        sent[i][j] = 10.0 * cosv(imgs[static_cast<size_t>(i)].global.values(),
                                 txts[static_cast<size_t>(j)].sentence.values());

        // word level: per-word softmax attention over regions (gamma1 = 5),
        // region context, cosine to the word, log-sum-exp aggregate (gamma2 = 5)
        double agg = 0.0;
        for (int w = 0; w < t; ++w) {
          std::vector<double> wvec = column(txts[static_cast<size_t>(j)].words, w);
          std::vector<double> scores(n_regions);
          for (int u = 0; u < n_regions; ++u)
            scores[static_cast<size_t>(u)] =
                5.0 * cosv(wvec, column(imgs[static_cast<size_t>(i)].regions, u));
          double mx = *std::max_element(scores.begin(), scores.end());
          double denom = 0.0;
          for (double s : scores) denom += std::exp(s - mx);
          std::vector<double> ctx(static_cast<size_t>(dim), 0.0);
          for (int u = 0; u < n_regions; ++u) {
            const double a = std::exp(scores[static_cast<size_t>(u)] - mx) / denom;
            for (int d = 0; d < dim; ++d)
              ctx[static_cast<size_t>(d)] += a * imgs[static_cast<size_t>(i)].regions.at({d, u});
          }
          agg += std::exp(5.0 * cosv(ctx, wvec));
        }
        word[i][j] = 10.0 * std::log(agg) / 5.0;
      }
    }
    auto nll_pair = [](double m[4][4]) {
      double rows = 0, cols = 0;
      for (int i = 0; i < 4; ++i) {
        double denom_r = 0, denom_c = 0;
        for (int j = 0; j < 4; ++j) {
          denom_r += std::exp(m[i][j]);
          denom_c += std::exp(m[j][i]);
        }
        rows += -std::log(std::exp(m[i][i]) / denom_r) / 4.0;
        cols += -std::log(std::exp(m[i][i]) / denom_c) / 4.0;
      }
      return rows + cols;
    };
    const double expected = 0.25 * (nll_pair(sent) + nll_pair(word));
    CHECK(got == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("damsm loss is differentiable end to end") {
  Rng rng(17);
  const int dim = 4, n_regions = 4, t = 2;
  MatchFeatures img1, img2;
  img1.regions = random_tensor({dim, n_regions}, rng, 1.0, true);
  img1.global = random_tensor({dim}, rng);
  img2.regions = random_tensor({dim, n_regions}, rng);
  img2.global = random_tensor({dim}, rng);
  EncodedText t1, t2;
  t1.words = random_tensor({dim, t}, rng);
  t1.sentence = random_tensor({dim}, rng);
  t2.words = random_tensor({dim, t}, rng);
  t2.sentence = random_tensor({dim}, rng);
  auto loss = [&] { return damsm_loss({img1, img2}, {t1, t2}, {t, t}); };
  CHECK(testutil::grad_check(loss, img1.regions) < 1e-3);
}

TEST_CASE("total generator loss composes the weighted sum") {
  std::vector<Tensor> adv{Tensor::scalar(1.0), Tensor::scalar(1.0), Tensor::scalar(1.0)};
  std::vector<StageAdvTerms> terms(3);
  SUBCASE("weighted arithmetic") {
    LossBreakdown b = total_generator_loss(adv, terms, Tensor::scalar(0.5), Tensor::scalar(0.1),
                                           1.0, 5.0);
    CHECK(b.total == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(b.cond == doctest::Approx(0.5));
    CHECK(b.damsm == doctest::Approx(0.1));
  }
  SUBCASE("lambda2 zero excludes the matching term") {
    LossBreakdown b = total_generator_loss(adv, terms, Tensor::scalar(0.5), Tensor::scalar(123.0),
                                           1.0, 0.0);
    CHECK(b.total == doctest::Approx(3.5).epsilon(1e-12));
  }
  SUBCASE("all zero terms give zero") {
    std::vector<Tensor> z{Tensor::scalar(0.0)};
    LossBreakdown b = total_generator_loss(z, {StageAdvTerms{}}, Tensor::scalar(0.0),
                                           Tensor::scalar(0.0), 1.0, 5.0);
    CHECK(b.total == 0.0);
  }
  SUBCASE("non-finite term raises naming the term") {
    std::vector<Tensor> bad{Tensor::scalar(std::nan(""))};
    try {
      total_generator_loss(bad, {StageAdvTerms{}}, Tensor::scalar(0.0), Tensor::scalar(0.0), 1.0,
                           5.0);
      CHECK(false);
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("stage 0") != std::string::npos);
    }
  }
  SUBCASE("json line carries the breakdown") {
    LossBreakdown b = total_generator_loss(adv, terms, Tensor::scalar(0.5), Tensor::scalar(0.1),
                                           1.0, 5.0);
    const std::string line = b.to_json_line(17);
    CHECK(line.find("\"step\":17") != std::string::npos);
    CHECK(line.find("\"total\":4.0") != std::string::npos);
  }
}
