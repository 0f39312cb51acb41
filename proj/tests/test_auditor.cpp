#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "embshift/auditor.hpp"
#include "embshift/augment.hpp"
#include "embshift/pipeline.hpp"

using namespace embshift;
using namespace embshift::auditor;
using pipeline::parse_op;
using pipeline::parse_pipeline;

namespace {

const KTable kTable = KTable::published();

// Train/test image mismatch left in kDeit once the PE is rescaled: the Mixup
// multiplier, plus the lift from pixel erase on the post-resize variance.
double deit_residual() {
  const double k = 0.7295;
  const double v = k * (0.5 * (1 - 0.8 / 2.6) + 0.5);
  const double f =
      augment::expected_erased_fraction(augment::EraseParams{}, kNominalSide, kNominalSide).mean;
  return (v + 0.25 * f * (1 - v)) / k;
}
const double kBicubic2d = 0.7295;

bool has_finding(const std::vector<std::string> &findings, const std::string &needle) {
  return std::any_of(findings.begin(), findings.end(),
                     [&](const std::string &f) { return f.find(needle) != std::string::npos; });
}

std::vector<augment::AugmentOp> ops(std::initializer_list<const char *> specs) {
  std::vector<augment::AugmentOp> out;
  for (const char *s : specs)
    out.push_back(parse_op(std::string_view(s)));
  return out;
}

const char *kDeit = R"({
  "scenario": "classification",
  "norm": "default_imagenet",
  "pe_upsample": {"method": "bicubic", "in_test": true},
  "train": [
    {"op": "resize_crop", "method": "bicubic"},
    {"op": "mixup", "alpha": 0.8, "prob": 0.5},
    {"op": "cutmix", "alpha": 1.0, "prob": 0.5},
    {"op": "erase", "mode": "pixel", "prob": 0.25}
  ],
  "test": [{"op": "resize_crop", "method": "bicubic"}]
})";

} // namespace

TEST(Schema, ParsesAndRoundTrips) {
  const auto cfg = parse_pipeline(std::string_view(kDeit));
  EXPECT_EQ(cfg.train.size(), 4u);
  EXPECT_TRUE(cfg.pe.in_test);
  EXPECT_EQ(cfg.pe.method, interp::Method::bicubic);
  const auto again = parse_pipeline(std::string_view(pipeline::to_json(cfg).dump()));
  EXPECT_EQ(pipeline::to_json(again), pipeline::to_json(cfg));
}

TEST(Schema, UnknownKeysAreListed) {
  const char *doc = R"({
    "scenario": "classification", "norm": "default_imagenet", "extra": 1,
    "pe_upsample": {"method": "bicubic", "in_test": false, "mode": "x"},
    "train": [{"op": "crop", "foo": 2}], "test": [{"op": "crop"}]
  })";
  try {
    parse_pipeline(std::string_view(doc));
    FAIL() << "expected a schema error";
  } catch (const pipeline::SchemaError &e) {
    EXPECT_TRUE(has_finding(e.problems(), "config.extra"));
    EXPECT_TRUE(has_finding(e.problems(), "config.pe_upsample.mode"));
    EXPECT_TRUE(has_finding(e.problems(), "train[0].foo"));
  }
}

TEST(Schema, InvalidValues) {
  EXPECT_THROW(parse_op(std::string_view(R"({"op":"mixup","lambda":1.0})")), pipeline::SchemaError);
  EXPECT_THROW(parse_op(std::string_view(R"({"op":"mixup"})")), pipeline::SchemaError);
  EXPECT_THROW(parse_op(std::string_view(R"({"op":"mixup","lambda":0.5,"alpha":1})")),
               pipeline::SchemaError);
  EXPECT_THROW(parse_op(std::string_view(R"({"op":"erase","mode":"pixel","prob":2})")),
               pipeline::SchemaError);
  EXPECT_THROW(parse_op(std::string_view(R"({"op":"erase","mode":"pixel","area":[0.5,0.1]})")),
               pipeline::SchemaError);
  EXPECT_THROW(parse_op(std::string_view(R"({"op":"resize","method":"lanczos"})")),
               pipeline::SchemaError);
  EXPECT_THROW(parse_op(std::string_view(R"({"op":"rotate"})")), pipeline::SchemaError);
  EXPECT_THROW(parse_op(std::string_view("{not json")), pipeline::SchemaError);
  EXPECT_THROW(parse_pipeline(std::string_view(R"({"scenario":"classification","norm":"default",
      "pe_upsample":{"method":"bicubic","in_test":false},"train":[],"test":[{"op":"crop"}]})")),
               pipeline::SchemaError);
}

TEST(Schema, NormObjectWithMeasuredStats) {
  const auto cfg = parse_pipeline(std::string_view(R"({
    "scenario": "segmentation",
    "norm": {"name": "inception", "measured": {"mean": 0.1, "var": 0.8}},
    "pe_upsample": {"method": "bicubic", "in_test": true, "dims": "1d"},
    "train": [{"op": "crop"}], "test": [{"op": "resize", "method": "bicubic"}]})"));
  EXPECT_EQ(cfg.norm.stats.name, augment::NormName::inception);
  ASSERT_TRUE(cfg.norm.input_stats());
  EXPECT_DOUBLE_EQ(cfg.norm.input_stats()->variance, 0.8);
  EXPECT_EQ(cfg.pe.dims, interp::Dims::one_d);
}

TEST(Propagate, ResizeThenCropIsK) {
  const auto p = propagate(ops({R"({"op":"resize","method":"bicubic"})", R"({"op":"crop"})"}),
                           kTable, pipeline::InputStats{});
  EXPECT_NEAR(p.var_multiplier, kBicubic2d, 1e-12);
}

TEST(Propagate, CutmixAndPixelEraseConserve) {
  const auto p = propagate(
      ops({R"({"op":"cutmix","lambda":0.3})", R"({"op":"erase","mode":"pixel","prob":0.5})"}),
      kTable, pipeline::InputStats{});
  EXPECT_NEAR(p.var_multiplier, 1.0, 1e-12);
}

TEST(Propagate, MixupMultiplier) {
  const auto p = propagate(ops({R"({"op":"mixup","lambda":0.8})"}), kTable, pipeline::InputStats{});
  EXPECT_NEAR(p.var_multiplier, 0.68, 1e-12);
  EXPECT_TRUE(has_finding(p.findings, "Mixup decreases variance"));
  const auto beta = propagate(ops({R"({"op":"mixup","alpha":1.0,"prob":0.5})"}), kTable,
                              pipeline::InputStats{});
  EXPECT_NEAR(beta.var_multiplier, 0.5 * (1.0 - 1.0 / 3.0) + 0.5, 1e-12);
}

TEST(Propagate, ConstEraseDropsByExpectedFraction) {
  const auto op = ops({R"({"op":"erase","mode":"const","prob":0.5})"});
  const auto f =
      augment::expected_erased_fraction(std::get<augment::EraseOp>(op[0].kind).params, 224, 224);
  const auto p = propagate(op, kTable, pipeline::InputStats{});
  EXPECT_NEAR(p.var_multiplier, 1.0 - 0.5 * f.mean, 1e-12);
}

TEST(Propagate, OrderOfConservingOpsDoesNotMatter) {
  const char *a = R"({"op":"crop"})";
  const char *b = R"({"op":"cutmix","lambda":0.4})";
  const char *c = R"({"op":"erase","mode":"pixel","prob":0.5})";
  const char *r = R"({"op":"resize","method":"bilinear"})";
  const pipeline::InputStats unit{};
  const double plain = propagate(ops({a, b, c}), kTable, unit).var_multiplier;
  EXPECT_NEAR(plain, 1.0, 1e-12);
  EXPECT_EQ(propagate(ops({c, b, a}), kTable, unit).var_multiplier, plain);
  EXPECT_EQ(propagate(ops({b, c, a}), kTable, unit).var_multiplier, plain);

  const double base = propagate(ops({r, a, b, c}), kTable, unit).var_multiplier;
  EXPECT_EQ(propagate(ops({r, c, b, a}), kTable, unit).var_multiplier, base);
  EXPECT_EQ(propagate(ops({r, b, c, a}), kTable, unit).var_multiplier, base);
}

TEST(Propagate, PixelEraseAfterResizeRefillsUnitVariance) {
  // After a resize the image variance is k < 1, so N(0,1) fill raises it.
  const auto before = propagate(ops({R"({"op":"erase","mode":"pixel","prob":1.0})",
                                     R"({"op":"resize","method":"bilinear"})"}),
                                kTable, pipeline::InputStats{});
  const auto after = propagate(ops({R"({"op":"resize","method":"bilinear"})",
                                    R"({"op":"erase","mode":"pixel","prob":1.0})"}),
                               kTable, pipeline::InputStats{});
  EXPECT_NEAR(before.var_multiplier, 0.3927, 1e-12);
  const double f = augment::expected_erased_fraction(augment::EraseParams{}, kNominalSide,
                                                     kNominalSide)
                       .mean;
  EXPECT_NEAR(after.var_multiplier, (1 - f) * 0.3927 + f, 1e-12);
}

TEST(Propagate, UnknownStatsStopErase) {
  try {
    propagate(ops({R"({"op":"erase","mode":"pixel"})"}), kTable, std::nullopt);
    FAIL();
  } catch (const AuditError &e) {
    EXPECT_TRUE(has_finding(e.findings(), "non-unit input stats break"));
  }
  EXPECT_THROW(propagate(ops({R"({"op":"normalize","stats":"inception"})"}), kTable, std::nullopt),
               AuditError);
  const auto p = propagate(ops({R"({"op":"normalize","stats":"inception","measured_multiplier":0.4})"}),
                           kTable, std::nullopt);
  EXPECT_NEAR(p.var_multiplier, 0.4, 1e-12);
  EXPECT_THROW(propagate(ops({R"({"op":"resize","method":"bicubic"})"}), KTable{},
                         pipeline::InputStats{}),
               AuditError);
}

TEST(Audit, TestTimePeUpsampleIsAShift) {
  const auto cfg = parse_pipeline(std::string_view(R"({
    "scenario": "classification", "norm": "default_imagenet",
    "pe_upsample": {"method": "bicubic", "in_test": true},
    "train": [{"op": "resize_crop", "method": "bicubic"}],
    "test": [{"op": "resize_crop", "method": "bicubic"}]})"));
  const auto r = audit(cfg, kTable);
  EXPECT_NEAR(r.ratio_train, kBicubic2d, 1e-12);
  EXPECT_NEAR(r.ratio_test, 1.0, 1e-12);
  EXPECT_FALSE(r.consistent);
  EXPECT_FALSE(r.pe_consistent);
  EXPECT_NEAR(r.recommended_rescale, 1.1708, 1e-4);
  EXPECT_DOUBLE_EQ(r.ratio_train, r.var_mult_img_train / r.var_mult_pe_train);
  EXPECT_DOUBLE_EQ(r.ratio_test, r.var_mult_img_test / r.var_mult_pe_test);
  EXPECT_NEAR(r.recommended_rescale, std::sqrt(r.var_mult_pe_train / r.var_mult_pe_test), 1e-12);
  EXPECT_TRUE(has_finding(r.findings, "PE upsampling"));
}

TEST(Audit, FixRestoresConsistency) {
  auto cfg = parse_pipeline(std::string_view(R"({
    "scenario": "classification", "norm": "default_imagenet",
    "pe_upsample": {"method": "bilinear", "in_test": true},
    "train": [{"op": "resize_crop", "method": "bilinear"}, {"op": "cutmix", "lambda": 0.5}],
    "test": [{"op": "resize_crop", "method": "bilinear"}]})"));
  const auto before = audit(cfg, kTable);
  EXPECT_FALSE(before.consistent);
  cfg.pe.rescale = before.recommended_rescale;
  const auto after = audit(cfg, kTable);
  EXPECT_NEAR(after.ratio_test, after.ratio_train, 1e-12);
  EXPECT_TRUE(after.consistent);
  EXPECT_NEAR(after.recommended_rescale, 1.0, 1e-12);
}

TEST(Audit, NativeTestSizeIsConsistent) {
  const auto r = audit(parse_pipeline(std::string_view(R"({
    "scenario": "classification", "norm": "default_imagenet",
    "pe_upsample": {"method": "bicubic", "in_test": false},
    "train": [{"op": "resize_crop", "method": "bicubic"}, {"op": "cutmix", "alpha": 1.0},
              {"op": "erase", "mode": "pixel", "prob": 0.25}],
    "test": [{"op": "resize", "method": "bicubic"}, {"op": "crop"}]})")),
                       kTable);
  EXPECT_TRUE(r.consistent);
  EXPECT_DOUBLE_EQ(r.recommended_rescale, 1.0);
  EXPECT_TRUE(has_finding(r.findings, "informational"));
}

TEST(Audit, MixupHalvesTrainVariance) {
  const auto r = audit(parse_pipeline(std::string_view(R"({
    "scenario": "classification", "norm": "default_imagenet",
    "pe_upsample": {"method": "bicubic", "in_test": false},
    "train": [{"op": "resize_crop", "method": "bicubic"}, {"op": "mixup", "lambda": 0.5}],
    "test": [{"op": "resize_crop", "method": "bicubic"}]})")),
                       kTable);
  EXPECT_NEAR(r.var_mult_img_train, 0.5 * kBicubic2d, 1e-12);
  EXPECT_FALSE(r.consistent);
  EXPECT_TRUE(has_finding(r.findings, "Mixup decreases variance"));
}

TEST(Audit, SegmentationOneDimensionalRescale) {
  const auto r = audit(parse_pipeline(std::string_view(R"({
    "scenario": "segmentation", "norm": "default_imagenet",
    "pe_upsample": {"method": "bicubic", "in_test": true, "dims": "1d"},
    "train": [{"op": "resize_crop", "method": "bicubic", "dims": "1d"}],
    "test": [{"op": "resize", "method": "bicubic", "dims": "1d"}]})")),
                       kTable);
  EXPECT_NEAR(r.recommended_rescale, 1.0820, 0.02);
  EXPECT_FALSE(r.consistent);
}

TEST(Audit, DeitStyleConfig) {
  auto cfg = parse_pipeline(std::string_view(kDeit));
  const auto r = audit(cfg, kTable);
  EXPECT_FALSE(r.consistent);
  EXPECT_TRUE(has_finding(r.findings, "Mixup"));
  EXPECT_TRUE(has_finding(r.findings, "PE upsampling"));
  EXPECT_NEAR(r.recommended_rescale, 1.1708, 1e-4);

  cfg.pe.rescale = r.recommended_rescale;
  const auto fixed = audit(cfg, kTable);
  EXPECT_TRUE(fixed.pe_consistent);
  EXPECT_NEAR(fixed.ratio_train / fixed.ratio_test, deit_residual(), 1e-12);
}

TEST(Audit, InceptionStatsWithErase) {
  const char *doc = R"({
    "scenario": "classification", "norm": "inception",
    "pe_upsample": {"method": "bicubic", "in_test": false},
    "train": [{"op": "erase", "mode": "pixel", "prob": 0.25}],
    "test": [{"op": "crop"}]})";
  try {
    audit(parse_pipeline(std::string_view(doc)), kTable);
    FAIL() << "expected an audit error";
  } catch (const AuditError &e) {
    EXPECT_TRUE(has_finding(e.findings(), "non-unit input stats break"));
  }

  const auto measured = audit(parse_pipeline(std::string_view(R"({
    "scenario": "classification",
    "norm": {"name": "inception", "measured": {"mean": 0.0, "var": 0.3333}},
    "pe_upsample": {"method": "bicubic", "in_test": false},
    "train": [{"op": "erase", "mode": "pixel", "prob": 1.0}],
    "test": [{"op": "crop"}]})")),
                              kTable);
  EXPECT_TRUE(has_finding(measured.findings, "non-unit input stats break"));
  EXPECT_GT(measured.var_mult_img_train, 1.0);
}

TEST(Verify, CutmixOnlyMatches) {
  const auto r = verify_empirically(parse_pipeline(std::string_view(R"({
    "scenario": "classification", "norm": "default_imagenet",
    "pe_upsample": {"method": "bicubic", "in_test": false},
    "train": [{"op": "cutmix", "alpha": 1.0}], "test": [{"op": "crop"}]})")),
                                    kTable, 1, 200);
  EXPECT_NEAR(r.measured.img_train, 1.0, 0.03);
  EXPECT_TRUE(r.divergences.empty());
}

TEST(Verify, MixupMatches) {
  const auto r = verify_empirically(parse_pipeline(std::string_view(R"({
    "scenario": "classification", "norm": "default_imagenet",
    "pe_upsample": {"method": "bicubic", "in_test": true},
    "train": [{"op": "mixup", "lambda": 0.2}], "test": [{"op": "crop"}]})")),
                                    kTable, 2, 200);
  EXPECT_NEAR(r.measured.img_train, 0.68, 0.03);
  EXPECT_NEAR(r.measured.pe_test, kBicubic2d, 0.03);
  EXPECT_TRUE(r.divergences.empty());
}

TEST(Verify, MixedPipelineAgrees) {
  const auto r = verify_empirically(parse_pipeline(std::string_view(R"({
    "scenario": "classification", "norm": "default_imagenet",
    "pe_upsample": {"method": "bilinear", "in_test": true},
    "train": [{"op": "resize_crop", "method": "bilinear"}, {"op": "mixup", "lambda": 0.7},
              {"op": "cutmix", "alpha": 1.0}, {"op": "erase", "mode": "const", "prob": 0.5}],
    "test": [{"op": "resize_crop", "method": "nearest"}, {"op": "crop"},
             {"op": "erase", "mode": "pixel", "prob": 1.0}]})")),
                                    kTable, 3, 200);
  for (const auto &d : r.divergences)
    ADD_FAILURE() << d.quantity << " analytic " << d.analytic << " measured " << d.measured;
}

TEST(Verify, RandEraseIsFlagged) {
  const auto r = verify_empirically(parse_pipeline(std::string_view(R"({
    "scenario": "classification", "norm": "default_imagenet",
    "pe_upsample": {"method": "bicubic", "in_test": false},
    "train": [{"op": "erase", "mode": "rand", "prob": 1.0, "area": [0.3, 0.6]}],
    "test": [{"op": "crop"}]})")),
                                    kTable, 4, 200);
  ASSERT_EQ(r.divergences.size(), 1u);
  EXPECT_EQ(r.divergences[0].quantity, "img_train");
  EXPECT_TRUE(has_finding(r.findings, "divergence"));
}

TEST(Verify, DeterministicAndValidated) {
  const auto cfg = parse_pipeline(std::string_view(kDeit));
  const auto a = verify_empirically(cfg, kTable, 5, 100);
  const auto b = verify_empirically(cfg, kTable, 5, 100);
  EXPECT_EQ(a.measured.img_train, b.measured.img_train);
  EXPECT_EQ(a.measured.pe_test, b.measured.pe_test);
  EXPECT_THROW(verify_empirically(cfg, kTable, 5, 50), std::invalid_argument);
}

TEST(KTableTest, MeasuredMatchesPublished) {
  const auto m = KTable::measured(0, 200);
  for (auto method : {interp::Method::nearest, interp::Method::bilinear, interp::Method::bicubic})
    for (auto d : {interp::Dims::one_d, interp::Dims::two_d})
      EXPECT_NEAR(m.at(method, d), kTable.at(method, d), 0.02);
}
