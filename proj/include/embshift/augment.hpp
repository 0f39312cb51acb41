#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include "embshift/interp.hpp"
#include "embshift/rng.hpp"
#include "embshift/tensor.hpp"

namespace embshift::augment {

// ---------------------------------------------------------------------------
// Normalization statistics
// ---------------------------------------------------------------------------

enum class NormName { default_imagenet, inception, identity, custom };

struct NormStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};
  NormName name = NormName::identity;

  static NormStats default_imagenet();
  static NormStats inception();
  static NormStats identity();
  /// Throws std::invalid_argument unless every std component is > 0.
  static NormStats custom(std::array<double, 3> mean, std::array<double, 3> std);
};

std::string to_string(NormName n);
/// "default_imagenet" (alias "default"), "inception", "identity".
NormStats named_norm(std::string_view name);

// ---------------------------------------------------------------------------
// Sample combination
// ---------------------------------------------------------------------------

/// lambda * a + (1 - lambda) * b. lambda must lie strictly inside (0, 1).
Tensor mixup(const Tensor &a, const Tensor &b, double lambda);

/// lambda_i * a + lambda_j * b with unconstrained weights.
Tensor extended_mixup(const Tensor &a, const Tensor &b, double lambda_i, double lambda_j);

/// mask * a + (1 - mask) * b. The mask is [H,W] and is broadcast across the
/// channel axis of [H,W,C] inputs, or has the inputs' exact shape.
Tensor cutmix(const Tensor &a, const Tensor &b, const Tensor &mask);

/// Binary [H,W] mask of ones with a zero rectangle of sides
/// round(sqrt(1 - lambda) * H) x round(sqrt(1 - lambda) * W), integer center
/// drawn uniformly over the image, clipped at the borders.
Tensor sample_cutmix_mask(std::size_t height, std::size_t width, double lambda, SeededRng &rng);

/// Beta(alpha, alpha) draw for alpha-configured mixup/cutmix.
double sample_lambda(double alpha, SeededRng &rng);

// ---------------------------------------------------------------------------
// Random erasing
// ---------------------------------------------------------------------------

enum class EraseMode { const_mode, rand_mode, pixel_mode };

std::string to_string(EraseMode m);
/// "const", "rand", "pixel".
EraseMode parse_erase_mode(std::string_view text);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct EraseParams {
  EraseMode mode = EraseMode::pixel_mode;
  double probability = 0.25;
  Range area{0.02, 1.0 / 3.0};
  Range aspect{0.3, 10.0 / 3.0};
  int max_attempts = 10;
};

struct Rect {
  std::size_t top = 0, left = 0, height = 0, width = 0;
  std::size_t area() const { return height * width; }
};

struct ErasedImage {
  Tensor image;
  std::optional<Rect> region;
  /// Erased pixels over all pixels; 0 when nothing was erased.
  double erased_fraction = 0.0;
};

/// With probability params.probability, replaces one rectangle of an [H,W]
/// or [H,W,C] image: zeros (const), one shared N(0,1) scalar (rand), or
/// i.i.d. N(0,1) per element (pixel). The rectangle's area fraction is
/// uniform in params.area and its aspect is log-uniform in params.aspect;
/// placement gives up after max_attempts rejected draws.
ErasedImage random_erase_traced(const Tensor &t, const EraseParams &params, SeededRng &rng);
Tensor random_erase(const Tensor &t, const EraseParams &params, SeededRng &rng);

struct ErasedFractionMoments {
  double mean = 0.0;
  double mean_square = 0.0;
};

/// Expected E[f] and E[f^2] of the erased fraction produced by
/// random_erase_traced on an image of the given size when an erase is
/// triggered. Deterministic midpoint quadrature of the rejection sampler.
ErasedFractionMoments expected_erased_fraction(const EraseParams &params, std::size_t height,
                                               std::size_t width);

// ---------------------------------------------------------------------------
// Geometry and normalization
// ---------------------------------------------------------------------------

/// Per-channel (x - mean) / std on [H,W,3].
Tensor normalize(const Tensor &t, const NormStats &stats);

/// Inverse of normalize.
Tensor denormalize(const Tensor &t, const NormStats &stats);

/// True if the stats are within tol of mean 0 / variance 1.
bool is_unit_stats(const Stats &s, double tol = 0.05);

/// Crop [out_h, out_w] from the center (rounding the offset down).
Tensor center_crop(const Tensor &t, std::size_t out_h, std::size_t out_w);

/// Upsample [H,W(,C)] by a side factor drawn uniformly from scale (each
/// >= 1), then crop [out_h, out_w] at a uniformly drawn position. Throws
/// std::invalid_argument if the resized image is smaller than the crop.
Tensor random_resize_crop(const Tensor &t, Range scale, std::size_t out_h, std::size_t out_w,
                          interp::Method method, SeededRng &rng);

// ---------------------------------------------------------------------------
// Declarative ops
// ---------------------------------------------------------------------------

/// Upsample by `factor` along both axes (two_d) or the width axis (one_d);
/// with `crop_back`, crop back to the input size at a random position.
struct ResizeOp {
  interp::Method method = interp::Method::bicubic;
  interp::Dims dims = interp::Dims::two_d;
  double factor = 2.0;
  bool crop_back = true;
};

/// Center crop keeping `fraction` of each side.
struct CropOp {
  double fraction = 0.875;
};

/// Either a fixed lambda or a Beta(alpha, alpha) draw; applied with `prob`.
struct MixupOp {
  std::optional<double> lambda;
  std::optional<double> alpha;
  double prob = 1.0;
};

struct ExtendedMixupOp {
  double lambda_i = 1.0;
  double lambda_j = 0.0;
};

struct CutmixOp {
  std::optional<double> lambda;
  std::optional<double> alpha;
  double prob = 1.0;
};

struct EraseOp {
  EraseParams params;
};

struct NormalizeOp {
  NormStats stats;
  /// Externally measured variance multiplier for non-default stats.
  std::optional<double> measured_multiplier;
};

struct AugmentOp {
  using Kind =
      std::variant<ResizeOp, CropOp, MixupOp, ExtendedMixupOp, CutmixOp, EraseOp, NormalizeOp>;
  Kind kind;
  std::uint64_t stream_id = 0;
};

std::string op_name(const AugmentOp &op);

/// True for ops that combine the sample with a partner sample.
bool needs_partner(const AugmentOp &op);

/// Applies one op. `partner` must be provided for mixup/cutmix-type ops and
/// have the same shape as `image`.
Tensor apply(const AugmentOp &op, const Tensor &image, const Tensor *partner, SeededRng &rng);

} // namespace embshift::augment
