#include <doctest.h>

#include <cmath>
#include <random>

#include "fds/autograd.hpp"
#include "fds/error.hpp"
#include "fds/losses.hpp"
#include "fds/nn_ops.hpp"
#include "oracles.hpp"

using namespace fds;

namespace {

PredictedMask uniform_pred(int h, int w, double p) {
  return PredictedMask{h, w, std::vector<double>(static_cast<std::size_t>(h) * w, p)};
}

PredictedMask random_pred(std::mt19937_64& gen, int h, int w, double lo = 0.0, double hi = 1.0) {
  PredictedMask p{h, w, oracle::random_vector(gen, static_cast<std::size_t>(h) * w, lo, hi)};
  return p;
}

Tensor pack_pred(const std::vector<PredictedMask>& preds) {
  Tensor t(static_cast<int>(preds.size()), 1, preds[0].height, preds[0].width);
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t j = 0; j < preds[i].probs.size(); ++j) t.sample(static_cast<int>(i))[j] = preds[i].probs[j];
  return t;
}

}  // namespace

TEST_CASE("background_crop") {
  std::mt19937_64 gen(1);
  const FeatureMap f = oracle::random_feature_map(gen, 3, 4, 4, 8);

  SUBCASE("empty mask keeps the map") {
    CHECK(background_crop(f, Mask(32, 32)).values == f.values);
  }
  SUBCASE("full mask clears the map") {
    const FeatureMap out = background_crop(f, Mask(32, 32, 1));
    for (std::size_t i = 0; i < out.values.size(); ++i) CHECK(out.values[i] == 0.0);
  }
  SUBCASE("left half mask zeroes the left columns") {
    Mask m(32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 16; ++x) m.at(y, x) = 1;
    for (auto mode : {MaskDownsample::AreaThreshold, MaskDownsample::Nearest}) {
      const FeatureMap out = background_crop(f, m, mode);
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 4; ++y) {
          for (int x = 0; x < 4; ++x) {
            const double expected = x < 2 ? 0.0 : f.values.at(0, c, y, x);
            CHECK(out.values.at(0, c, y, x) == expected);
          }
        }
      }
    }
  }
  SUBCASE("stride mismatch") {
    CHECK_THROWS_AS(background_crop(f, Mask(30, 32)), ShapeError);
    CHECK_THROWS_AS(background_crop(f, Mask(64, 64)), ShapeError);
  }
  SUBCASE("complement sums to the map") {
    const Mask m = oracle::random_mask(gen, 32, 32, 0.5);
    Mask inv(32, 32);
    for (std::size_t i = 0; i < m.values.size(); ++i) inv.values[i] = 1 - m.values[i];
    const FeatureMap a = background_crop(f, m, MaskDownsample::Nearest);
    const FeatureMap b = background_crop(f, inv, MaskDownsample::Nearest);
    for (std::size_t i = 0; i < f.values.size(); ++i) CHECK(a.values[i] + b.values[i] == f.values[i]);
  }
}

TEST_CASE("area threshold keeps thin defects proportionally") {
  Tensor masks(1, 1, 64, 64);
  // Block (0,0) is 50% covered, block (0,1) is 25% covered.
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 16; ++x) masks.at(0, 0, y, x) = 1.0;
  for (int y = 0; y < 32; ++y)
    for (int x = 32; x < 40; ++x) masks.at(0, 0, y, x) = 1.0;
  const Tensor small = downsample_mask(masks, 2, 2, MaskDownsample::AreaThreshold);
  CHECK(small.at(0, 0, 0, 0) == 1.0);
  CHECK(small.at(0, 0, 0, 1) == 0.0);
  CHECK(small.at(0, 0, 1, 0) == 0.0);
}

TEST_CASE("gap") {
  SUBCASE("constant map") {
    FeatureMap f{Tensor(1, 4, 3, 5, 2.5), 1};
    for (double v : gap(f)) CHECK(v == 2.5);
  }
  SUBCASE("[[1,3]] pools to 2") {
    FeatureMap f{Tensor(1, 1, 1, 2), 1};
    f.values[0] = 1.0;
    f.values[1] = 3.0;
    CHECK(gap(f) == std::vector<double>{2.0});
  }
  SUBCASE("matches a loop mean") {
    std::mt19937_64 gen(2);
    const FeatureMap f = oracle::random_feature_map(gen, 7, 5, 6, 1);
    const auto got = gap(f), want = oracle::gap(f);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
  }
}

TEST_CASE("nbr_loss") {
  CHECK(nbr_loss(std::vector<double>{0.3, -2.0, 1.0}, std::vector<double>{0.3, -2.0, 1.0}) ==
        doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(nbr_loss(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 4.0}) == 0.0);
  CHECK(nbr_loss(std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 1.0}) ==
        doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-7));
  CHECK(nbr_loss(std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.0}) == 0.0);

  std::mt19937_64 gen(3);
  for (int t = 0; t < 20; ++t) {
    auto b = oracle::random_vector(gen, 9), f = oracle::random_vector(gen, 9);
    const double base = nbr_loss(b, f);
    CHECK(base == doctest::Approx(-oracle::cosine(b, f)).epsilon(1e-9));
    CHECK(base >= -1.0 - 1e-7);
    CHECK(base <= 1.0 + 1e-7);
    auto bs = b, fs = f;
    for (auto& v : bs) v *= 3.7;
    for (auto& v : fs) v *= 0.2;
    CHECK(nbr_loss(bs, fs) == doctest::Approx(base).epsilon(1e-7));
  }
}

TEST_CASE("nbr_loss_euclidean") {
  CHECK(nbr_loss_euclidean(std::vector<double>{1.5, 2.0}, std::vector<double>{1.5, 2.0}) == 0.0);
  CHECK(nbr_loss_euclidean(std::vector<double>{0.0, 0.0}, std::vector<double>{3.0, 4.0}) == 5.0);
  std::mt19937_64 gen(4);
  auto b = oracle::random_vector(gen, 16), f = oracle::random_vector(gen, 16);
  CHECK(nbr_loss_euclidean(b, f) == doctest::Approx(oracle::euclidean(b, f)).epsilon(1e-6));
}

TEST_CASE("cap_compose") {
  std::mt19937_64 gen(5);
  const Image d = oracle::random_image(gen, 32, 32), n = oracle::random_image(gen, 32, 32);
  CHECK(cap_compose(d, Mask(32, 32, 1), n) == d);
  CHECK(cap_compose(d, Mask(32, 32, 0), n) == n);

  Mask one(32, 32);
  one.at(7, 11) = 1;
  const Image out = cap_compose(d, one, n);
  int differing = 0;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if (out.at(y, x, 0) != n.at(y, x, 0) || out.at(y, x, 1) != n.at(y, x, 1) || out.at(y, x, 2) != n.at(y, x, 2))
        ++differing;
  CHECK(differing == 1);
  CHECK(out.at(7, 11, 2) == d.at(7, 11, 2));

  const Mask m = oracle::random_mask(gen, 32, 32);
  CHECK(cap_compose(d, m, d) == d);

  CHECK_THROWS_AS(cap_compose(d, Mask(16, 16), n), ShapeError);
  CHECK_THROWS_AS(cap_compose(d, m, oracle::random_image(gen, 32, 64)), ShapeError);
}

TEST_CASE("batched cap_compose matches the per-image form") {
  std::mt19937_64 gen(6);
  const Image d0 = oracle::random_image(gen, 32, 32), d1 = oracle::random_image(gen, 32, 32);
  const Image n0 = oracle::random_image(gen, 32, 32), n1 = oracle::random_image(gen, 32, 32);
  const Mask m0 = oracle::random_mask(gen, 32, 32), m1 = oracle::random_mask(gen, 32, 32);
  const Tensor out = cap_compose(images_to_tensor({&d0, &d1}), masks_to_tensor({&m0, &m1}),
                                 images_to_tensor({&n0, &n1}));
  const Image a = cap_compose(d0, m0, n0), b = cap_compose(d1, m1, n1);
  const Tensor want = images_to_tensor({&a, &b});
  CHECK(out == want);
}

TEST_CASE("realism_weight") {
  std::mt19937_64 gen(7);
  const FeatureMap f = oracle::random_feature_map(gen, 6, 2, 2, 32);
  CHECK(realism_weight(f, f) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(realism_weight_pooled(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 2.0}) == 0.0);
  CHECK(realism_weight_pooled(std::vector<double>{1.0, 0.0}, std::vector<double>{-1.0, 0.0}) ==
        doctest::Approx(1.0).epsilon(1e-7));
  CHECK(realism_weight_pooled(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 0.0}) == 0.0);
  for (int t = 0; t < 20; ++t) {
    const double l = realism_weight(oracle::random_feature_map(gen, 5, 2, 2, 32),
                                    oracle::random_feature_map(gen, 5, 2, 2, 32));
    CHECK(l >= 0.0);
    CHECK(l <= 1.0);
  }
  CHECK_THROWS_AS(realism_weight(f, oracle::random_feature_map(gen, 5, 2, 2, 32)), ShapeError);
}

TEST_CASE("weighted and plain BCE") {
  SUBCASE("single positive pixel at 0.5") {
    Mask m(1, 1, 1);
    CHECK(weighted_bce(m, uniform_pred(1, 1, 0.5), 1.0, BceReduction::Sum) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("lambda zero annihilates") {
    std::mt19937_64 gen(8);
    CHECK(weighted_bce(oracle::random_mask(gen, 8, 8), random_pred(gen, 8, 8), 0.0) == 0.0);
  }
  SUBCASE("uniform half gives HW log 2") {
    std::mt19937_64 gen(9);
    const Mask m = oracle::random_mask(gen, 6, 10);
    CHECK(plain_bce(m, uniform_pred(6, 10, 0.5), BceReduction::Sum) ==
          doctest::Approx(60.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(plain_bce(m, uniform_pred(6, 10, 0.5), BceReduction::Mean) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("perfect prediction hits the clamp floor") {
    std::mt19937_64 gen(10);
    const Mask m = oracle::random_mask(gen, 8, 8);
    PredictedMask p{8, 8, {}};
    for (auto v : m.values) p.probs.push_back(v ? 1.0 : 0.0);
    CHECK(plain_bce(m, p, BceReduction::Sum) <= 64.0 * -std::log(1.0 - kProbEpsilon) + 1e-12);
  }
  SUBCASE("loop oracle, both reductions, and the lambda = 1 identity") {
    std::mt19937_64 gen(11);
    for (int t = 0; t < 10; ++t) {
      const Mask m = oracle::random_mask(gen, 9, 7);
      const PredictedMask p = random_pred(gen, 9, 7);
      const double want = oracle::bce_sum(m, p);
      CHECK(plain_bce(m, p, BceReduction::Sum) == doctest::Approx(want).epsilon(1e-5));
      CHECK(plain_bce(m, p, BceReduction::Mean) == doctest::Approx(want / 63.0).epsilon(1e-5));
      for (auto r : {BceReduction::Sum, BceReduction::Mean}) {
        CHECK(weighted_bce(m, p, 1.0, r) == plain_bce(m, p, r));
        CHECK(weighted_bce(m, p, 0.3, r) >= 0.0);
      }
    }
  }
}

TEST_CASE("combine") {
  CHECK(combine(0.0, 0.0).total == 0.0);
  const LossBundle b = combine(-1.0, 2.0, Branch::Cap, 0.8);
  CHECK(b.total == 1.0);
  CHECK(b.branch == Branch::Cap);
  CHECK(*b.lambda_used == 0.8);
  CHECK_THROWS_AS(combine(std::nan(""), 1.0), NumericalError);
  CHECK_THROWS_AS(combine(0.0, INFINITY), NumericalError);
}

TEST_CASE("batched autograd losses accumulate per-sample terms") {
  std::mt19937_64 gen(12);
  const int m = 3, c = 5;
  Tensor pb(m, c, 1, 1), pn(m, c, 1, 1);
  for (std::size_t i = 0; i < pb.size(); ++i) {
    pb[i] = oracle::random_vector(gen, 1)[0];
    pn[i] = oracle::random_vector(gen, 1)[0];
  }
  double nbr_sum = 0.0, euc_sum = 0.0;
  for (int i = 0; i < m; ++i) {
    std::vector<double> b(pb.sample(i).begin(), pb.sample(i).end());
    std::vector<double> f(pn.sample(i).begin(), pn.sample(i).end());
    nbr_sum += -oracle::cosine(b, f);
    euc_sum += oracle::euclidean(b, f);
  }
  CHECK(ag::nbr_loss(ag::Var(pb), ag::Var(pn), NbrMetric::Cosine).value().item() ==
        doctest::Approx(nbr_sum).epsilon(1e-9));
  CHECK(ag::nbr_loss(ag::Var(pb), ag::Var(pn), NbrMetric::Euclidean).value().item() ==
        doctest::Approx(euc_sum).epsilon(1e-9));

  std::vector<PredictedMask> preds;
  std::vector<Mask> masks;
  std::vector<const Mask*> mptr;
  for (int i = 0; i < m; ++i) {
    preds.push_back(random_pred(gen, 8, 8));
    masks.push_back(oracle::random_mask(gen, 8, 8));
  }
  for (const auto& mk : masks) mptr.push_back(&mk);
  const Tensor probs = pack_pred(preds), mt = masks_to_tensor(mptr);
  const std::vector<double> lambdas{0.2, 1.0, 0.7};
  double seg_sum = 0.0, plain_sum = 0.0;
  for (int i = 0; i < m; ++i) {
    seg_sum += lambdas[i] * oracle::bce_sum(masks[i], preds[i]);
    plain_sum += oracle::bce_sum(masks[i], preds[i]);
  }
  const double seg = ag::weighted_bce(ag::Var(probs), mt, lambdas, BceReduction::Sum).value().item();
  CHECK(seg == doctest::Approx(seg_sum).epsilon(1e-9));
  CHECK(ag::plain_bce(ag::Var(probs), mt, BceReduction::Sum).value().item() ==
        doctest::Approx(plain_sum).epsilon(1e-9));
  CHECK(combine(nbr_sum, seg).total == doctest::Approx(nbr_sum + seg_sum).epsilon(1e-9));

  const std::vector<double> ones(m, 1.0);
  for (auto r : {BceReduction::Sum, BceReduction::Mean}) {
    CHECK(ag::weighted_bce(ag::Var(probs), mt, ones, r).value().item() ==
          ag::plain_bce(ag::Var(probs), mt, r).value().item());
  }
}

TEST_CASE("kernel gradients match central differences") {
  std::mt19937_64 gen(13);
  for (int t = 0; t < 5; ++t) {
    const auto b = oracle::random_vector(gen, 6), f = oracle::random_vector(gen, 6);
    const auto g = nbr_loss_gradient(b, f);
    CHECK(oracle::relative_error(g.d_first, oracle::numeric_gradient([&](const auto& x) { return nbr_loss(x, f); }, b)) < 1e-4);
    CHECK(oracle::relative_error(g.d_second, oracle::numeric_gradient([&](const auto& x) { return nbr_loss(b, x); }, f)) < 1e-4);
    const auto ge = nbr_loss_euclidean_gradient(b, f);
    CHECK(oracle::relative_error(ge.d_first, oracle::numeric_gradient([&](const auto& x) { return nbr_loss_euclidean(x, f); }, b)) < 1e-4);

    const auto gw = realism_weight_pooled_gradient(b, f);
    CHECK(oracle::relative_error(gw.d_second, oracle::numeric_gradient([&](const auto& x) { return realism_weight_pooled(b, x); }, f)) < 1e-4);
  }
}

TEST_CASE("autograd nbr backward matches kernel gradient") {
  std::mt19937_64 gen(14);
  Tensor pb(2, 4, 1, 1), pn(2, 4, 1, 1);
  for (std::size_t i = 0; i < pb.size(); ++i) {
    pb[i] = oracle::random_vector(gen, 1)[0];
    pn[i] = oracle::random_vector(gen, 1)[0];
  }
  ag::Var vb(pb, true), vn(pn, true);
  ag::backward(ag::nbr_loss(vb, vn, NbrMetric::Cosine));
  for (int i = 0; i < 2; ++i) {
    std::vector<double> b(pb.sample(i).begin(), pb.sample(i).end());
    std::vector<double> f(pn.sample(i).begin(), pn.sample(i).end());
    const auto g = nbr_loss_gradient(b, f);
    for (int k = 0; k < 4; ++k) {
      CHECK(vb.grad().sample(i)[k] == doctest::Approx(g.d_first[k]).epsilon(1e-12));
      CHECK(vn.grad().sample(i)[k] == doctest::Approx(g.d_second[k]).epsilon(1e-12));
    }
  }
}
