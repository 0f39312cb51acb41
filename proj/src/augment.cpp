#include "embshift/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/random/beta_distribution.hpp>

namespace embshift::augment {

namespace {

struct Geometry {
  std::size_t height, width, channels;
};

Geometry geometry_of(const Tensor &t) {
  if (t.rank() == 2)
    return {t.dim(0), t.dim(1), 1};
  if (t.rank() == 3)
    return {t.dim(0), t.dim(1), t.dim(2)};
  throw std::invalid_argument("expected an [H,W] or [H,W,C] image, got " +
                              shape_to_string(t.shape()));
}

void require_same_shape(const Tensor &a, const Tensor &b, const char *what) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
}

void validate(const EraseParams &p) {
  if (!(p.probability >= 0.0 && p.probability <= 1.0))
    throw std::invalid_argument("erase probability must be in [0, 1]");
  if (!(p.area.lo > 0.0 && p.area.lo <= p.area.hi && p.area.hi < 1.0))
    throw std::invalid_argument("erase area range must be a non-empty subrange of (0, 1)");
  if (!(p.aspect.lo > 0.0 && p.aspect.lo <= p.aspect.hi))
    throw std::invalid_argument("erase aspect range must be non-empty and positive");
  if (p.max_attempts < 1)
    throw std::invalid_argument("erase needs at least one placement attempt");
}

struct RectSize {
  long height, width;
};

// Shared by the sampler and its quadrature so both round identically.
RectSize rect_for(double area_fraction, double log_aspect, std::size_t h, std::size_t w) {
  const double target = area_fraction * static_cast<double>(h * w);
  const double aspect = std::exp(log_aspect);
  return {std::lround(std::sqrt(target * aspect)), std::lround(std::sqrt(target / aspect))};
}

bool fits(RectSize r, std::size_t h, std::size_t w) {
  return r.height < static_cast<long>(h) && r.width < static_cast<long>(w);
}

} // namespace

NormStats NormStats::default_imagenet() {
  return {{0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}, NormName::default_imagenet};
}

NormStats NormStats::inception() { return {{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, NormName::inception}; }

NormStats NormStats::identity() { return {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, NormName::identity}; }

NormStats NormStats::custom(std::array<double, 3> mean, std::array<double, 3> std) {
  for (double s : std)
    if (!(s > 0.0))
      throw std::invalid_argument("normalization std components must be > 0");
  return {mean, std, NormName::custom};
}

std::string to_string(NormName n) {
  switch (n) {
  case NormName::default_imagenet: return "default_imagenet";
  case NormName::inception: return "inception";
  case NormName::identity: return "identity";
  case NormName::custom: return "custom";
  }
  return "?";
}

NormStats named_norm(std::string_view name) {
  if (name == "default_imagenet" || name == "default")
    return NormStats::default_imagenet();
  if (name == "inception")
    return NormStats::inception();
  if (name == "identity")
    return NormStats::identity();
  throw std::invalid_argument("unknown normalization '" + std::string(name) + "'");
}

Tensor mixup(const Tensor &a, const Tensor &b, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("mixup lambda must lie in (0, 1), got " + std::to_string(lambda));
  return extended_mixup(a, b, lambda, 1.0 - lambda);
}

Tensor extended_mixup(const Tensor &a, const Tensor &b, double lambda_i, double lambda_j) {
  require_same_shape(a, b, "mixup");
  Tensor out = a;
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = lambda_i * a[i] + lambda_j * b[i];
  return out;
}

Tensor cutmix(const Tensor &a, const Tensor &b, const Tensor &mask) {
  require_same_shape(a, b, "cutmix");
  for (double m : mask.data())
    if (m != 0.0 && m != 1.0)
      throw std::invalid_argument("cutmix mask must be binary");

  std::size_t repeat = 1;
  if (mask.shape() != a.shape()) {
    const bool broadcast = a.rank() == 3 && mask.rank() == 2 && mask.dim(0) == a.dim(0) &&
                           mask.dim(1) == a.dim(1);
    if (!broadcast)
      throw std::invalid_argument("cutmix mask " + shape_to_string(mask.shape()) +
                                  " does not match image " + shape_to_string(a.shape()));
    repeat = a.dim(2);
  }
  Tensor out = a;
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = mask[i / repeat] != 0.0 ? a[i] : b[i];
  return out;
}

Tensor sample_cutmix_mask(std::size_t height, std::size_t width, double lambda, SeededRng &rng) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("cutmix lambda must lie in (0, 1)");
  const double ratio = std::sqrt(1.0 - lambda);
  const long cut_h = std::lround(static_cast<double>(height) * ratio);
  const long cut_w = std::lround(static_cast<double>(width) * ratio);
  const auto cy = static_cast<long>(rng.below(height));
  const auto cx = static_cast<long>(rng.below(width));
  const auto h = static_cast<long>(height), w = static_cast<long>(width);
  const long y0 = std::clamp(cy - cut_h / 2, 0L, h), y1 = std::clamp(cy - cut_h / 2 + cut_h, 0L, h);
  const long x0 = std::clamp(cx - cut_w / 2, 0L, w), x1 = std::clamp(cx - cut_w / 2 + cut_w, 0L, w);

  Tensor mask = Tensor::filled({height, width}, 1.0);
  auto m = mask.mutable_data();
  for (long y = y0; y < y1; ++y)
    for (long x = x0; x < x1; ++x)
      m[static_cast<std::size_t>(y * w + x)] = 0.0;
  return mask;
}

double sample_lambda(double alpha, SeededRng &rng) {
  if (!(alpha > 0.0))
    throw std::invalid_argument("Beta alpha must be > 0");
  boost::random::beta_distribution<double> beta(alpha, alpha);
  // Beta draws can land on the closed endpoints in floating point.
  return std::clamp(beta(rng), 1e-12, 1.0 - 1e-12);
}

std::string to_string(EraseMode m) {
  switch (m) {
  case EraseMode::const_mode: return "const";
  case EraseMode::rand_mode: return "rand";
  case EraseMode::pixel_mode: return "pixel";
  }
  return "?";
}

EraseMode parse_erase_mode(std::string_view text) {
  if (text == "const") return EraseMode::const_mode;
  if (text == "rand") return EraseMode::rand_mode;
  if (text == "pixel") return EraseMode::pixel_mode;
  throw std::invalid_argument("unknown erase mode '" + std::string(text) + "'");
}

ErasedImage random_erase_traced(const Tensor &t, const EraseParams &params, SeededRng &rng) {
  validate(params);
  const Geometry g = geometry_of(t);
  ErasedImage result{t, std::nullopt, 0.0};
  if (params.probability == 0.0 || rng.uniform() >= params.probability)
    return result;

  const double log_lo = std::log(params.aspect.lo), log_hi = std::log(params.aspect.hi);
  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    const double area = rng.uniform(params.area.lo, params.area.hi);
    const double log_aspect = rng.uniform(log_lo, log_hi);
    const RectSize r = rect_for(area, log_aspect, g.height, g.width);
    if (!fits(r, g.height, g.width))
      continue;

    Rect rect;
    rect.height = static_cast<std::size_t>(r.height);
    rect.width = static_cast<std::size_t>(r.width);
    rect.top = rng.below(g.height - rect.height + 1);
    rect.left = rng.below(g.width - rect.width + 1);

    const double shared = params.mode == EraseMode::rand_mode ? rng.normal() : 0.0;
    auto dst = result.image.mutable_data();
    for (std::size_t y = rect.top; y < rect.top + rect.height; ++y) {
      for (std::size_t x = rect.left; x < rect.left + rect.width; ++x) {
        for (std::size_t c = 0; c < g.channels; ++c) {
          double &v = dst[(y * g.width + x) * g.channels + c];
          switch (params.mode) {
          case EraseMode::const_mode: v = 0.0; break;
          case EraseMode::rand_mode: v = shared; break;
          case EraseMode::pixel_mode: v = rng.normal(); break;
          }
        }
      }
    }
    result.region = rect;
    result.erased_fraction =
        static_cast<double>(rect.area()) / static_cast<double>(g.height * g.width);
    return result;
  }
  return result;
}

Tensor random_erase(const Tensor &t, const EraseParams &params, SeededRng &rng) {
  return random_erase_traced(t, params, rng).image;
}

ErasedFractionMoments expected_erased_fraction(const EraseParams &params, std::size_t height,
                                               std::size_t width) {
  validate(params);
  constexpr int kGrid = 600;
  const double log_lo = std::log(params.aspect.lo), log_hi = std::log(params.aspect.hi);
  const double total = static_cast<double>(height * width);

  double accepted = 0.0, sum_f = 0.0, sum_f2 = 0.0;
  for (int i = 0; i < kGrid; ++i) {
    const double area = params.area.lo + (params.area.hi - params.area.lo) * (i + 0.5) / kGrid;
    for (int j = 0; j < kGrid; ++j) {
      const double log_aspect = log_lo + (log_hi - log_lo) * (j + 0.5) / kGrid;
      const RectSize r = rect_for(area, log_aspect, height, width);
      if (!fits(r, height, width))
        continue;
      const double f = static_cast<double>(r.height * r.width) / total;
      accepted += 1.0;
      sum_f += f;
      sum_f2 += f * f;
    }
  }
  if (accepted == 0.0)
    return {};
  const double p_accept = accepted / (static_cast<double>(kGrid) * kGrid);
  const double p_success = 1.0 - std::pow(1.0 - p_accept, params.max_attempts);
  return {p_success * sum_f / accepted, p_success * sum_f2 / accepted};
}

Tensor normalize(const Tensor &t, const NormStats &stats) {
  if (t.rank() != 3 || t.dim(2) != 3)
    throw std::invalid_argument("normalize expects an [H,W,3] image, got " +
                                shape_to_string(t.shape()));
  Tensor out = t;
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = (dst[i] - stats.mean[i % 3]) / stats.std[i % 3];
  return out;
}

Tensor denormalize(const Tensor &t, const NormStats &stats) {
  if (t.rank() != 3 || t.dim(2) != 3)
    throw std::invalid_argument("denormalize expects an [H,W,3] image");
  Tensor out = t;
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = dst[i] * stats.std[i % 3] + stats.mean[i % 3];
  return out;
}

bool is_unit_stats(const Stats &s, double tol) {
  return std::abs(s.mean) <= tol && std::abs(s.variance - 1.0) <= tol;
}

Tensor center_crop(const Tensor &t, std::size_t out_h, std::size_t out_w) {
  const Geometry g = geometry_of(t);
  if (out_h > g.height || out_w > g.width || out_h == 0 || out_w == 0)
    throw std::invalid_argument("center crop larger than image");
  std::vector<std::size_t> offsets{(g.height - out_h) / 2, (g.width - out_w) / 2};
  std::vector<std::size_t> sizes{out_h, out_w};
  if (t.rank() == 3) {
    offsets.push_back(0);
    sizes.push_back(g.channels);
  }
  return crop(t, offsets, sizes);
}

namespace {

Tensor random_crop(const Tensor &t, std::size_t out_h, std::size_t out_w, SeededRng &rng) {
  const Geometry g = geometry_of(t);
  if (out_h > g.height || out_w > g.width)
    throw std::invalid_argument("crop larger than image");
  std::vector<std::size_t> offsets{rng.below(g.height - out_h + 1), rng.below(g.width - out_w + 1)};
  std::vector<std::size_t> sizes{out_h, out_w};
  if (t.rank() == 3) {
    offsets.push_back(0);
    sizes.push_back(g.channels);
  }
  return crop(t, offsets, sizes);
}

} // namespace

Tensor random_resize_crop(const Tensor &t, Range scale, std::size_t out_h, std::size_t out_w,
                          interp::Method method, SeededRng &rng) {
  if (!(scale.lo >= 1.0 && scale.lo <= scale.hi))
    throw std::invalid_argument("resize scale range must satisfy 1 <= lo <= hi");
  const Geometry g = geometry_of(t);
  const double s = scale.lo == scale.hi ? scale.lo : rng.uniform(scale.lo, scale.hi);
  const auto new_h = static_cast<std::size_t>(std::lround(static_cast<double>(g.height) * s));
  const auto new_w = static_cast<std::size_t>(std::lround(static_cast<double>(g.width) * s));
  if (new_h < out_h || new_w < out_w)
    throw std::invalid_argument("resized image " + std::to_string(new_h) + "x" +
                                std::to_string(new_w) + " is smaller than the crop");
  const Tensor resized = interp::upsample2d(t, interp::UpsampleSpec::two_d(method, new_h, new_w));
  return random_crop(resized, out_h, out_w, rng);
}

std::string op_name(const AugmentOp &op) {
  return std::visit(
      [](const auto &k) -> std::string {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, ResizeOp>)
          return k.crop_back ? "resize_crop" : "resize";
        else if constexpr (std::is_same_v<K, CropOp>)
          return "crop";
        else if constexpr (std::is_same_v<K, MixupOp>)
          return "mixup";
        else if constexpr (std::is_same_v<K, ExtendedMixupOp>)
          return "extended_mixup";
        else if constexpr (std::is_same_v<K, CutmixOp>)
          return "cutmix";
        else if constexpr (std::is_same_v<K, EraseOp>)
          return "erase";
        else
          return "normalize";
      },
      op.kind);
}

bool needs_partner(const AugmentOp &op) {
  return std::holds_alternative<MixupOp>(op.kind) ||
         std::holds_alternative<ExtendedMixupOp>(op.kind) ||
         std::holds_alternative<CutmixOp>(op.kind);
}

namespace {

double resolve_lambda(const std::optional<double> &lambda, const std::optional<double> &alpha,
                      SeededRng &rng) {
  if (lambda)
    return *lambda;
  if (alpha)
    return sample_lambda(*alpha, rng);
  throw std::invalid_argument("mixup/cutmix op needs either lambda or alpha");
}

const Tensor &require_partner(const Tensor *partner, const Tensor &image) {
  if (partner == nullptr)
    throw std::invalid_argument("op needs a partner sample");
  require_same_shape(image, *partner, "partner");
  return *partner;
}

} // namespace

Tensor apply(const AugmentOp &op, const Tensor &image, const Tensor *partner, SeededRng &rng) {
  return std::visit(
      [&](const auto &k) -> Tensor {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, ResizeOp>) {
          if (!(k.factor >= 1.0))
            throw std::invalid_argument("resize factor must be >= 1");
          const Geometry g = geometry_of(image);
          const auto scaled = [&](std::size_t n) {
            return static_cast<std::size_t>(std::lround(static_cast<double>(n) * k.factor));
          };
          const std::size_t new_h = k.dims == interp::Dims::two_d ? scaled(g.height) : g.height;
          const std::size_t new_w = scaled(g.width);
          Tensor resized =
              interp::upsample2d(image, interp::UpsampleSpec::two_d(k.method, new_h, new_w));
          return k.crop_back ? random_crop(resized, g.height, g.width, rng) : resized;
        } else if constexpr (std::is_same_v<K, CropOp>) {
          if (!(k.fraction > 0.0 && k.fraction <= 1.0))
            throw std::invalid_argument("crop fraction must be in (0, 1]");
          const Geometry g = geometry_of(image);
          const auto keep = [&](std::size_t n) {
            return std::max<std::size_t>(
                1, static_cast<std::size_t>(std::lround(static_cast<double>(n) * k.fraction)));
          };
          return center_crop(image, keep(g.height), keep(g.width));
        } else if constexpr (std::is_same_v<K, MixupOp>) {
          const Tensor &b = require_partner(partner, image);
          if (k.prob < 1.0 && rng.uniform() >= k.prob)
            return image;
          return mixup(image, b, resolve_lambda(k.lambda, k.alpha, rng));
        } else if constexpr (std::is_same_v<K, ExtendedMixupOp>) {
          return extended_mixup(image, require_partner(partner, image), k.lambda_i, k.lambda_j);
        } else if constexpr (std::is_same_v<K, CutmixOp>) {
          const Tensor &b = require_partner(partner, image);
          if (k.prob < 1.0 && rng.uniform() >= k.prob)
            return image;
          const Geometry g = geometry_of(image);
          const double lambda = resolve_lambda(k.lambda, k.alpha, rng);
          return cutmix(image, b, sample_cutmix_mask(g.height, g.width, lambda, rng));
        } else if constexpr (std::is_same_v<K, EraseOp>) {
          return random_erase(image, k.params, rng);
        } else {
          return normalize(image, k.stats);
        }
      },
      op.kind);
}

} // namespace embshift::augment
