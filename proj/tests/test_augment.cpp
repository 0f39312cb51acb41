#include <gtest/gtest.h>

#include <cmath>

#include "embshift/augment.hpp"
#include "embshift/rng.hpp"
#include "embshift/tensor.hpp"
#include "embshift/varcal.hpp"

using namespace embshift;
using namespace embshift::augment;

namespace {

// Exact expected zero-area of the cutmix box: average over every integer
// center, with the same clipping rule.
double exact_cutmix_area(long h, long w, double lambda) {
  const long ch = std::lround(h * std::sqrt(1.0 - lambda));
  const long cw = std::lround(w * std::sqrt(1.0 - lambda));
  double total = 0;
  for (long cy = 0; cy < h; ++cy)
    for (long cx = 0; cx < w; ++cx) {
      const long y0 = std::max(0L, cy - ch / 2), y1 = std::min(h, cy - ch / 2 + ch);
      const long x0 = std::max(0L, cx - cw / 2), x1 = std::min(w, cx - cw / 2 + cw);
      total += static_cast<double>(std::max(0L, y1 - y0) * std::max(0L, x1 - x0));
    }
  return total / static_cast<double>(h * w);
}

double zero_count(const Tensor &mask) {
  double n = 0;
  for (double v : mask.values())
    n += v == 0.0;
  return n;
}

} // namespace

TEST(NormStats, NamedValues) {
  const auto d = NormStats::default_imagenet();
  EXPECT_DOUBLE_EQ(d.mean[0], 0.485);
  EXPECT_DOUBLE_EQ(d.std[2], 0.225);
  const auto i = NormStats::inception();
  EXPECT_DOUBLE_EQ(i.mean[1], 0.5);
  EXPECT_DOUBLE_EQ(i.std[1], 0.5);
  EXPECT_EQ(named_norm("default").name, NormName::default_imagenet);
  EXPECT_EQ(named_norm("identity").name, NormName::identity);
  EXPECT_THROW(named_norm("imagenet21k"), std::invalid_argument);
  EXPECT_THROW(NormStats::custom({0, 0, 0}, {1, 0, 1}), std::invalid_argument);
}

TEST(Mixup, VarianceFollowsLambdaSquares) {
  SeededRng rng(1, 0);
  const Tensor a = randn({100000}, rng), b = randn({100000}, rng);
  EXPECT_NEAR(stats(mixup(a, b, 0.5)).variance, 0.5, 0.02);
  EXPECT_NEAR(stats(mixup(a, b, 0.8)).variance, 0.68, 0.02);
}

TEST(Mixup, EqualInputsAreUnchanged) {
  SeededRng rng(2, 0);
  const Tensor a = randn({100}, rng);
  const Tensor out = mixup(a, a, 0.3);
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_NEAR(out[i], a[i], 1e-15);
}

TEST(Mixup, Errors) {
  const Tensor a = Tensor::zeros({4});
  EXPECT_THROW(mixup(a, a, 0.0), std::invalid_argument);
  EXPECT_THROW(mixup(a, a, 1.0), std::invalid_argument);
  EXPECT_THROW(mixup(a, Tensor::zeros({5}), 0.5), std::invalid_argument);
}

TEST(ExtendedMixup, MeanGrowsWhileVarianceHolds) {
  SeededRng rng(3, 0);
  const Tensor a = randn({100000}, 1.0, 1.0, rng), b = randn({100000}, 1.0, 1.0, rng);
  const double l = 1.0 / std::sqrt(2.0);
  const auto s = stats(extended_mixup(a, b, l, l));
  EXPECT_NEAR(s.variance / stats(a).variance, 1.0, 0.02);
  EXPECT_NEAR(s.mean, std::sqrt(2.0), 0.02);
}

TEST(ExtendedMixup, ReducesToMixupAndIdentity) {
  SeededRng rng(4, 0);
  const Tensor a = randn({64}, rng), b = randn({64}, rng);
  EXPECT_EQ(extended_mixup(a, b, 0.3, 0.7), mixup(a, b, 0.3));
  EXPECT_EQ(extended_mixup(a, b, 1.0, 0.0), a);
}

TEST(Cutmix, DegenerateMasks) {
  SeededRng rng(5, 0);
  const Tensor a = randn({8, 8, 3}, rng), b = randn({8, 8, 3}, rng);
  EXPECT_EQ(cutmix(a, b, Tensor::filled({8, 8}, 1.0)), a);
  EXPECT_EQ(cutmix(a, b, Tensor::zeros({8, 8})), b);
  Tensor bad = Tensor::filled({8, 8}, 1.0);
  bad[3] = 0.5;
  EXPECT_THROW(cutmix(a, b, bad), std::invalid_argument);
  EXPECT_THROW(cutmix(a, b, Tensor::zeros({4, 4})), std::invalid_argument);
}

TEST(Cutmix, ConservesStatsForRectangularMask) {
  // A fixed rectangle covering 37% of a 100x100 image.
  Tensor mask = Tensor::filled({100, 100}, 1.0);
  for (std::size_t y = 0; y < 37; ++y)
    for (std::size_t x = 0; x < 100; ++x)
      mask[y * 100 + x] = 0.0;
  double var = 0, mean = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    SeededRng rng(6, s);
    const Tensor a = randn({100, 100}, rng), b = randn({100, 100}, rng);
    const auto st = stats(cutmix(a, b, mask));
    var += st.variance;
    mean += st.mean;
  }
  EXPECT_NEAR(var / 1000, 1.0, 0.02);
  EXPECT_NEAR(mean / 1000, 0.0, 0.02);
}

TEST(CutmixMask, ExpectedAreaMatchesEnumeration) {
  SeededRng rng(7, 0);
  double zeros = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    zeros += zero_count(sample_cutmix_mask(32, 32, 0.5, rng));
  EXPECT_NEAR(zeros / draws, exact_cutmix_area(32, 32, 0.5), 0.02 * 512);
  // Before clipping the box is round(32 / sqrt(2))^2 = 529, close to 512.
  EXPECT_NEAR(std::pow(std::lround(32 * std::sqrt(0.5)), 2), 512.0, 0.05 * 512);
}

TEST(CutmixMask, NearOneLambdaGivesAlmostNoBox) {
  SeededRng rng(8, 0);
  EXPECT_LE(zero_count(sample_cutmix_mask(32, 32, 0.999, rng)), 1.0);
}

TEST(CutmixMask, Deterministic) {
  SeededRng a(9, 1), b(9, 1);
  EXPECT_EQ(sample_cutmix_mask(20, 30, 0.4, a), sample_cutmix_mask(20, 30, 0.4, b));
}

TEST(SampleLambda, BetaMoments) {
  SeededRng rng(10, 0);
  double m = 0, m2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double l = sample_lambda(0.8, rng);
    ASSERT_GT(l, 0.0);
    ASSERT_LT(l, 1.0);
    m += l;
    m2 += l * (1 - l);
  }
  EXPECT_NEAR(m / n, 0.5, 0.01);
  // E[l(1-l)] = alpha / (2 (2 alpha + 1)) for Beta(alpha, alpha).
  EXPECT_NEAR(m2 / n, 0.8 / (2 * 2.6), 0.005);
}

TEST(Erase, ZeroProbabilityIsIdentity) {
  SeededRng rng(11, 0);
  const Tensor t = randn({16, 16, 3}, rng);
  EraseParams p;
  p.probability = 0.0;
  const auto out = random_erase_traced(t, p, rng);
  EXPECT_EQ(out.image, t);
  EXPECT_FALSE(out.region);
}

TEST(Erase, InvalidRanges) {
  const Tensor t = Tensor::zeros({8, 8});
  SeededRng rng(12, 0);
  EraseParams p;
  p.area = {0.5, 0.2};
  EXPECT_THROW(random_erase(t, p, rng), std::invalid_argument);
  p = {};
  p.area = {0.0, 0.2};
  EXPECT_THROW(random_erase(t, p, rng), std::invalid_argument);
  p = {};
  p.aspect = {2.0, 1.0};
  EXPECT_THROW(random_erase(t, p, rng), std::invalid_argument);
  p = {};
  p.probability = 1.5;
  EXPECT_THROW(random_erase(t, p, rng), std::invalid_argument);
}

TEST(Erase, PixelModeConservesUnitStats) {
  EraseParams p;
  p.mode = EraseMode::pixel_mode;
  p.probability = 1.0;
  double var = 0, mean = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    SeededRng rng(13, s);
    const Tensor t = randn({32, 32, 3}, rng);
    const auto st = stats(random_erase(t, p, rng));
    var += st.variance;
    mean += st.mean;
  }
  EXPECT_NEAR(var / 1000, 1.0, 0.02);
  EXPECT_NEAR(mean / 1000, 0.0, 0.02);
}

TEST(Erase, ConstModeDropsVarianceByErasedFraction) {
  EraseParams p;
  p.mode = EraseMode::const_mode;
  p.probability = 1.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    SeededRng rng(14, s);
    const Tensor t = randn({64, 64}, rng);
    const auto out = random_erase_traced(t, p, rng);
    const double ratio = stats(out.image).variance / stats(t).variance;
    EXPECT_NEAR(ratio, 1.0 - out.erased_fraction, 0.02);
  }
}

TEST(Erase, RandModeUsesOneValue) {
  EraseParams p;
  p.mode = EraseMode::rand_mode;
  p.probability = 1.0;
  SeededRng rng(15, 0);
  const Tensor t = Tensor::filled({32, 32, 3}, 7.0);
  const auto out = random_erase_traced(t, p, rng);
  ASSERT_TRUE(out.region);
  const auto &r = *out.region;
  const double v = out.image[(r.top * 32 + r.left) * 3];
  for (std::size_t y = r.top; y < r.top + r.height; ++y)
    for (std::size_t x = r.left; x < r.left + r.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        EXPECT_EQ(out.image[(y * 32 + x) * 3 + c], v);
}

TEST(Erase, ExpectedFractionMatchesSampler) {
  EraseParams p;
  p.probability = 1.0;
  const auto moments = expected_erased_fraction(p, 32, 32);
  double f = 0, f2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    SeededRng rng(16, i);
    const auto out = random_erase_traced(Tensor::zeros({32, 32}), p, rng);
    f += out.erased_fraction;
    f2 += out.erased_fraction * out.erased_fraction;
  }
  EXPECT_NEAR(f / n, moments.mean, 0.003);
  EXPECT_NEAR(f2 / n, moments.mean_square, 0.003);
}

TEST(Normalize, IdentityAndInverse) {
  SeededRng rng(17, 0);
  const Tensor t = rand_uniform({8, 8, 3}, 0.0, 1.0, rng);
  EXPECT_EQ(normalize(t, NormStats::identity()), t);
  const Tensor back = denormalize(normalize(t, NormStats::default_imagenet()),
                                  NormStats::default_imagenet());
  for (std::size_t i = 0; i < t.size(); ++i)
    EXPECT_NEAR(back[i], t[i], 1e-12);
  EXPECT_THROW(normalize(Tensor::zeros({4, 4}), NormStats::identity()), std::invalid_argument);
}

TEST(Normalize, InceptionOnUniformInputIsNotUnit) {
  SeededRng rng(18, 0);
  const Tensor t = rand_uniform({256, 256, 3}, 0.0, 1.0, rng);
  const auto s = stats(normalize(t, NormStats::inception()));
  EXPECT_NEAR(s.mean, 0.0, 0.01);
  EXPECT_NEAR(s.variance, 1.0 / 3.0, 0.01);
  EXPECT_FALSE(is_unit_stats(s));
}

TEST(Normalize, MatchingDatasetStatsGiveUnitStats) {
  SeededRng rng(19, 0);
  // Inverse transform of N(0,1) noise through the default stats.
  const Tensor z = randn({128, 128, 3}, rng);
  const Tensor img = denormalize(z, NormStats::default_imagenet());
  const auto s = stats(normalize(img, NormStats::default_imagenet()));
  const auto ref = stats(z);
  EXPECT_NEAR(s.mean, ref.mean, 1e-9);
  EXPECT_NEAR(s.variance, ref.variance, 1e-9);
  // 49152 samples: standard error of the mean is about 0.0045.
  EXPECT_NEAR(s.mean, 0.0, 0.03);
  EXPECT_NEAR(s.variance, 1.0, 0.03);
  EXPECT_TRUE(is_unit_stats(s));
}

TEST(ResizeCrop, IdentityAtScaleOne) {
  SeededRng rng(20, 0);
  const Tensor t = randn({16, 16}, rng);
  EXPECT_EQ(random_resize_crop(t, {1.0, 1.0}, 16, 16, interp::Method::bicubic, rng), t);
  EXPECT_THROW(random_resize_crop(t, {1.0, 1.0}, 20, 20, interp::Method::bicubic, rng),
               std::invalid_argument);
  EXPECT_THROW(random_resize_crop(t, {0.5, 1.0}, 8, 8, interp::Method::bicubic, rng),
               std::invalid_argument);
}

TEST(ResizeCrop, VarianceRatioIsK) {
  SeededRng rng(21, 0);
  double bicubic = 0, nearest = 0;
  for (int i = 0; i < 40; ++i) {
    const Tensor t = randn({64, 64}, rng);
    const double v = stats(t).variance;
    const Tensor up = interp::upsample2d(t, interp::UpsampleSpec::two_d(interp::Method::bicubic, 128, 128));
    bicubic += stats(center_crop(up, 64, 64)).variance / v;
    const Tensor nn = interp::upsample2d(t, interp::UpsampleSpec::two_d(interp::Method::nearest, 128, 128));
    nearest += stats(center_crop(nn, 64, 64)).variance / v;
  }
  EXPECT_NEAR(bicubic / 40, varcal::published_k(interp::Method::bicubic, interp::Dims::two_d), 0.03);
  EXPECT_NEAR(nearest / 40, 1.0, 0.03);
}

TEST(Apply, OpsAreDeterministicPerSeed) {
  SeededRng src(22, 0);
  const Tensor a = randn({16, 16, 3}, src), b = randn({16, 16, 3}, src);
  const AugmentOp ops[] = {
      {ResizeOp{interp::Method::bilinear, interp::Dims::two_d, 2.0, true}, 1},
      {CutmixOp{std::nullopt, 1.0, 1.0}, 2},
      {MixupOp{0.3, std::nullopt, 1.0}, 3},
      {EraseOp{EraseParams{EraseMode::pixel_mode, 1.0}}, 4},
  };
  for (const auto &op : ops) {
    SeededRng r1(5, op.stream_id), r2(5, op.stream_id);
    const Tensor *partner = needs_partner(op) ? &b : nullptr;
    EXPECT_EQ(apply(op, a, partner, r1), apply(op, a, partner, r2)) << op_name(op);
    EXPECT_EQ(apply(op, a, partner, r1).shape(), a.shape());
  }
  SeededRng r(5, 0);
  EXPECT_THROW(apply(ops[1], a, nullptr, r), std::invalid_argument);
}

TEST(Apply, OneDimensionalResizeOnlyStretchesWidth) {
  SeededRng rng(23, 0);
  const Tensor t = randn({8, 8, 3}, rng);
  const AugmentOp op{ResizeOp{interp::Method::nearest, interp::Dims::one_d, 2.0, false}, 0};
  EXPECT_EQ(apply(op, t, nullptr, rng).shape(), (Shape{8, 16, 3}));
}
