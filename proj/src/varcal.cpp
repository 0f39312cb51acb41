#include "embshift/varcal.hpp"

#include <array>
#include <cmath>
#include <map>
#include <stdexcept>

namespace embshift::varcal {

using interp::Dims;
using interp::Method;

MeasureConfig MeasureConfig::canonical(Method method, Dims dims) {
  MeasureConfig c;
  c.method = method;
  c.dims = dims;
  c.scale_factor = 2.0;
  c.size = dims == Dims::one_d ? 4096 : 64;
  c.trials = 1000;
  c.seed = 0;
  return c;
}

MeasureConfig MeasureConfig::for_grid(Method method, std::size_t in_side, std::size_t out_side) {
  if (in_side == 0 || out_side <= in_side)
    throw std::invalid_argument("for_grid needs out_side > in_side > 0");
  MeasureConfig c = canonical(method, Dims::two_d);
  c.size = in_side;
  c.scale_factor = static_cast<double>(out_side) / static_cast<double>(in_side);
  c.channels = (1024 + in_side * in_side - 1) / (in_side * in_side);
  return c;
}

namespace {

void validate(const MeasureConfig &c) {
  if (!(c.scale_factor > 1.0))
    throw std::invalid_argument("scale factor must be > 1 (upsampling only)");
  if (c.channels == 0 || (c.dims == Dims::one_d && c.channels != 1))
    throw std::invalid_argument("channels must be 1 for 1D runs and >= 1 for 2D runs");
  const std::size_t elements = c.dims == Dims::one_d ? c.size : c.size * c.size * c.channels;
  if (elements < 1024)
    throw std::invalid_argument("measure_k needs at least 1024 elements per trial");
  if (c.trials < 100)
    throw std::invalid_argument("measure_k needs at least 100 trials");
}

struct TrialRatio {
  double k;
  double K;
};

TrialRatio run_trial(const MeasureConfig &c, std::size_t trial) {
  SeededRng rng(c.seed, trial);
  const std::size_t out = static_cast<std::size_t>(
      std::lround(static_cast<double>(c.size) * c.scale_factor));
  const Shape shape = c.dims == Dims::one_d    ? Shape{c.size}
                      : c.channels == 1        ? Shape{c.size, c.size}
                                               : Shape{c.size, c.size, c.channels};
  const interp::UpsampleSpec spec = c.dims == Dims::one_d
                                        ? interp::UpsampleSpec::one_d(c.method, out)
                                        : interp::UpsampleSpec::two_d(c.method, out, out);

  const Tensor v = randn(shape, rng);
  const Tensor shifted = add_scalar(v, 1.0);
  const Stats before = stats(v);
  const Stats after = stats(interp::upsample(v, spec));
  const Stats shifted_before = stats(shifted);
  const Stats shifted_after = stats(interp::upsample(shifted, spec));
  return {after.variance / before.variance, shifted_after.mean / shifted_before.mean};
}

RatioEstimate reduce(const MeasureConfig &c, const std::vector<TrialRatio> &per_trial) {
  std::vector<double> ks(per_trial.size()), Ks(per_trial.size());
  for (std::size_t i = 0; i < per_trial.size(); ++i) {
    ks[i] = per_trial[i].k;
    Ks[i] = per_trial[i].K;
  }
  const Stats sk = stats(ks), sK = stats(Ks);
  const double n = static_cast<double>(per_trial.size());

  RatioEstimate e;
  e.method = c.method;
  e.dims = c.dims;
  e.k = sk.mean;
  e.K = sK.mean;
  e.rescale = 1.0 / std::sqrt(e.k);
  e.trials = per_trial.size();
  e.scale_factor = c.scale_factor;
  e.size = c.size;
  e.std_error = std::sqrt(sk.variance * n / (n - 1.0) / n);
  e.mean_std_error = std::sqrt(sK.variance * n / (n - 1.0) / n);
  return e;
}

} // namespace

RatioEstimate measure_k(const MeasureConfig &config) {
  validate(config);
  std::vector<TrialRatio> per_trial(config.trials);
  // Upsampling inside a trial stays serial; parallelism is across trials.
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(config.trials); ++t)
    per_trial[static_cast<std::size_t>(t)] = run_trial(config, static_cast<std::size_t>(t));
  return reduce(config, per_trial);
}

RatioEstimate measure_k_serial(const MeasureConfig &config) {
  validate(config);
  std::vector<TrialRatio> per_trial(config.trials);
  for (std::size_t t = 0; t < config.trials; ++t)
    per_trial[t] = run_trial(config, t);
  return reduce(config, per_trial);
}

std::span<const PublishedRatio> published_table() {
  static constexpr std::array<PublishedRatio, 3> table{{
      {Method::bicubic, 0.7295, 0.8541},
      {Method::bilinear, 0.3927, 0.6267},
      {Method::nearest, 1.0000, 1.0000},
  }};
  return table;
}

double published_k(Method method, Dims dims) {
  for (const auto &row : published_table())
    if (row.method == method)
      return dims == Dims::two_d ? row.k_2d : row.k_1d;
  throw std::invalid_argument("no published ratio for method");
}

std::vector<SeparabilityReport> check_separability(std::span<const RatioEstimate> estimates) {
  std::map<Method, std::pair<const RatioEstimate *, const RatioEstimate *>> by_method;
  for (const auto &e : estimates) {
    auto &slot = by_method[e.method];
    (e.dims == Dims::one_d ? slot.first : slot.second) = &e;
  }
  std::vector<SeparabilityReport> out;
  for (const auto &[method, pair] : by_method) {
    if (!pair.first || !pair.second)
      throw std::invalid_argument("separability check for " + interp::to_string(method) +
                                  " needs both 1d and 2d estimates");
    SeparabilityReport r;
    r.method = method;
    r.k_1d = pair.first->k;
    r.k_2d = pair.second->k;
    r.k_1d_squared = r.k_1d * r.k_1d;
    r.gap = std::abs(r.k_2d - r.k_1d_squared);
    // d(k1^2) = 2 k1 dk1
    r.combined_std_error = std::hypot(pair.second->std_error, 2.0 * r.k_1d * pair.first->std_error);
    r.pass = r.gap <= kSeparabilityTolerance;
    out.push_back(r);
  }
  return out;
}

Tensor rescale_pe(const Tensor &pe, const interp::UpsampleSpec &spec, double k) {
  if (!(k > 0.0))
    throw std::invalid_argument("variance ratio k must be > 0");
  if (pe.rank() != 3)
    throw std::invalid_argument("rescale_pe expects an [H,W,D] embedding grid, got " +
                                shape_to_string(pe.shape()));
  if (spec.dims != Dims::two_d)
    throw std::invalid_argument("rescale_pe needs a two_d spec; keep one side fixed for 1D");
  return scale(interp::upsample2d(pe, spec), 1.0 / std::sqrt(k));
}

double empirical_k(const Tensor &pe, const interp::UpsampleSpec &spec) {
  const Stats before = stats(pe);
  if (before.variance == 0.0)
    throw std::invalid_argument("empirical k is undefined for a constant embedding");
  return stats(interp::upsample(pe, spec)).variance / before.variance;
}

SplitEmbedding split_cls_token(const Tensor &pe_flat, std::size_t grid_h, std::size_t grid_w,
                               std::size_t leading_tokens) {
  if (pe_flat.rank() != 2)
    throw std::invalid_argument("expected an [N, D] embedding table");
  if (leading_tokens > 1)
    throw std::invalid_argument("leading token count must be 0 or 1");
  const std::size_t n = pe_flat.dim(0), d = pe_flat.dim(1);
  if (n != leading_tokens + grid_h * grid_w)
    throw std::invalid_argument("token count " + std::to_string(n) + " != " +
                                std::to_string(leading_tokens) + " + " + std::to_string(grid_h) +
                                "x" + std::to_string(grid_w));
  const auto begin = pe_flat.data().begin();
  const auto split = begin + static_cast<std::ptrdiff_t>(leading_tokens * d);
  SplitEmbedding out{std::nullopt,
                     Tensor({grid_h, grid_w, d}, std::vector<double>(split, pe_flat.data().end()))};
  if (leading_tokens)
    out.cls = Tensor({leading_tokens, d}, std::vector<double>(begin, split));
  return out;
}

Tensor join_cls_token(const SplitEmbedding &parts) {
  const Tensor &g = parts.grid;
  if (g.rank() != 3)
    throw std::invalid_argument("grid must be [H, W, D]");
  const std::size_t d = g.dim(2);
  std::vector<double> values;
  std::size_t tokens = g.dim(0) * g.dim(1);
  if (parts.cls) {
    if (parts.cls->rank() != 2 || parts.cls->dim(1) != d)
      throw std::invalid_argument("class-token rows must be [T, D]");
    values = parts.cls->values();
    tokens += parts.cls->dim(0);
  }
  values.insert(values.end(), g.data().begin(), g.data().end());
  return Tensor({tokens, d}, std::move(values));
}

PeMeanReport pe_mean_report(const Tensor &pe) {
  PeMeanReport r;
  r.stats = stats(pe);
  r.threshold = 0.05 * r.stats.stddev();
  r.violates_zero_mean = std::abs(r.stats.mean) > r.threshold;
  return r;
}

} // namespace embshift::varcal
