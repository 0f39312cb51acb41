#include "embshift/vitfront.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace embshift::vitfront {

namespace {

void require_token(const Tensor &t, const char *what) {
  if (t.rank() != 1 || t.size() < 2)
    throw std::invalid_argument(std::string(what) + " must be a rank-1 token with D >= 2");
}

struct TokenMoments {
  double mean;
  double inv_std; // 1 / sqrt(var + eps)
};

TokenMoments token_moments(std::span<const double> z, double eps) {
  const Stats s = stats(z);
  return {s.mean, 1.0 / std::sqrt(s.variance + eps)};
}

} // namespace

PatchProjection PatchProjection::random(std::size_t patch_size, std::size_t channels,
                                        std::size_t dim, SeededRng &rng) {
  const double fan_in = static_cast<double>(patch_size * patch_size * channels);
  return {randn({patch_size, patch_size, channels, dim}, 0.0, 1.0 / std::sqrt(fan_in), rng),
          randn({dim}, 0.0, 0.02, rng), patch_size};
}

Tensor patch_project(const Tensor &image, const PatchProjection &proj) {
  if (image.rank() != 3)
    throw std::invalid_argument("patch_project expects an [H,W,C] image");
  const std::size_t ps = proj.patch_size;
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (ps == 0 || h % ps != 0 || w % ps != 0)
    throw std::invalid_argument("image " + shape_to_string(image.shape()) +
                                " is not divisible by patch size " + std::to_string(ps));
  const Shape &ks = proj.kernel.shape();
  if (ks.size() != 4 || ks[0] != ps || ks[1] != ps || ks[2] != c)
    throw std::invalid_argument("kernel must be [P,P,C,D] matching the image channels");
  const std::size_t d = ks[3];
  if (proj.bias.shape() != Shape{d})
    throw std::invalid_argument("bias must be [D]");

  const std::size_t gh = h / ps, gw = w / ps;
  std::vector<double> out(gh * gw * d);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t gi = 0; gi < static_cast<std::ptrdiff_t>(gh); ++gi) {
    for (std::size_t gj = 0; gj < gw; ++gj) {
      double *dst = &out[(static_cast<std::size_t>(gi) * gw + gj) * d];
      for (std::size_t k = 0; k < d; ++k)
        dst[k] = proj.bias[k];
      for (std::size_t py = 0; py < ps; ++py)
        for (std::size_t px = 0; px < ps; ++px)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double pixel =
                image[((static_cast<std::size_t>(gi) * ps + py) * w + gj * ps + px) * c + ch];
            const double *kr = &proj.kernel.data()[((py * ps + px) * c + ch) * d];
            for (std::size_t k = 0; k < d; ++k)
              dst[k] += kr[k] * pixel;
          }
    }
  }
  return Tensor({gh, gw, d}, std::move(out));
}

Tensor layer_norm(const Tensor &t, double eps) {
  const std::size_t d = t.shape().back();
  if (d < 2)
    throw std::invalid_argument("layer_norm needs a token length >= 2");
  Tensor out = t;
  auto dst = out.mutable_data();
  const std::size_t tokens = t.size() / d;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(tokens); ++i) {
    auto token = dst.subspan(static_cast<std::size_t>(i) * d, d);
    const TokenMoments m = token_moments(token, eps);
    for (double &v : token)
      v = (v - m.mean) * m.inv_std;
  }
  return out;
}

Tensor ln_jacobian_wrt_p(const Tensor &x, const Tensor &p, double eps) {
  require_token(x, "x");
  require_token(p, "p");
  const Tensor z = add(x, p);
  const std::size_t d = z.size();
  const TokenMoments m = token_moments(z.data(), eps);
  const double inv_d = 1.0 / static_cast<double>(d);
  const double inv_s3 = m.inv_std * m.inv_std * m.inv_std;

  Tensor jac = Tensor::zeros({d, d});
  auto j = jac.mutable_data();
  for (std::size_t r = 0; r < d; ++r) {
    const double cr = z[r] - m.mean;
    for (std::size_t c = 0; c < d; ++c) {
      const double cc = z[c] - m.mean;
      j[r * d + c] = ((r == c ? 1.0 : 0.0) - inv_d) * m.inv_std - cr * cc * inv_d * inv_s3;
    }
  }
  return jac;
}

Tensor ln_jvp_wrt_p(const Tensor &x, const Tensor &p, const Tensor &v, double eps) {
  require_token(x, "x");
  if (p.shape() != x.shape() || v.shape() != x.shape())
    throw std::invalid_argument("x, p and v must share a shape");
  const Tensor z = add(x, p);
  const std::size_t d = z.size();
  const TokenMoments m = token_moments(z.data(), eps);
  const double v_mean = stats(v).mean;
  double proj = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    proj += (z[i] - m.mean) * v[i];
  proj /= static_cast<double>(d);
  const double inv_s3 = m.inv_std * m.inv_std * m.inv_std;

  Tensor out = Tensor::zeros({d});
  for (std::size_t i = 0; i < d; ++i)
    out[i] = (v[i] - v_mean) * m.inv_std - (z[i] - m.mean) * proj * inv_s3;
  return out;
}

Tensor ln_jacobian_finite_difference(const Tensor &x, const Tensor &p, double eps, double step) {
  require_token(x, "x");
  require_token(p, "p");
  const std::size_t d = x.size();
  Tensor jac = Tensor::zeros({d, d});
  for (std::size_t c = 0; c < d; ++c) {
    Tensor plus = p, minus = p;
    plus[c] += step;
    minus[c] -= step;
    const Tensor yp = layer_norm(add(x, plus), eps);
    const Tensor ym = layer_norm(add(x, minus), eps);
    for (std::size_t r = 0; r < d; ++r)
      jac[r * d + c] = (yp[r] - ym[r]) / (2.0 * step);
  }
  return jac;
}

double frobenius_norm(const Tensor &t) {
  double sq = 0.0;
  for (double v : t.data())
    sq += v * v;
  return std::sqrt(sq);
}

double max_relative_error(const Tensor &a, const Tensor &b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("max_relative_error: shape mismatch");
  double diff = 0.0, scale_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale_b = std::max(scale_b, std::abs(b[i]));
  }
  return scale_b == 0.0 ? diff : diff / scale_b;
}

double contribution_ratio(const Tensor &x, const Tensor &p) {
  if (x.shape() != p.shape())
    throw std::invalid_argument("contribution_ratio: shape mismatch");
  const double var_p = stats(p).variance;
  if (var_p == 0.0)
    throw std::invalid_argument("contribution_ratio: Var[p] is zero");
  return stats(x).variance / var_p;
}

EmbeddingState embed_front(const Tensor &image, const PatchProjection &proj,
                           const Tensor &pos_embed, double eps) {
  Tensor x = patch_project(image, proj);
  if (x.shape() != pos_embed.shape())
    throw std::invalid_argument("positional embedding " + shape_to_string(pos_embed.shape()) +
                                " does not match patch embedding " + shape_to_string(x.shape()));
  Tensor sum = add(x, pos_embed);
  Tensor ln = layer_norm(sum, eps);
  return {std::move(x), pos_embed, std::move(sum), std::move(ln)};
}

Tensor init_pos_embed(std::size_t grid_h, std::size_t grid_w, std::size_t dim, SeededRng &rng) {
  return randn({grid_h, grid_w, dim}, 0.0, kPosEmbedInitStd, rng);
}

Tensor patch_dropout(const Tensor &tokens, double keep_fraction, SeededRng &rng) {
  if (tokens.rank() != 2)
    throw std::invalid_argument("patch_dropout expects an [N, D] token table");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw std::invalid_argument("keep fraction must lie in (0, 1]");
  const std::size_t n = tokens.dim(0), d = tokens.dim(1);
  const auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n)));

  // Partial Fisher-Yates picks `keep` distinct rows; sorting restores order.
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  for (std::size_t i = 0; i < keep; ++i)
    std::swap(rows[i], rows[i + rng.below(n - i)]);
  rows.resize(keep);
  std::sort(rows.begin(), rows.end());

  std::vector<double> out;
  out.reserve(keep * d);
  for (std::size_t r : rows) {
    const auto begin = tokens.data().begin() + static_cast<std::ptrdiff_t>(r * d);
    out.insert(out.end(), begin, begin + static_cast<std::ptrdiff_t>(d));
  }
  return Tensor({keep, d}, std::move(out));
}

Tensor inverted_dropout(const Tensor &t, double rate, SeededRng &rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout rate must lie in [0, 1)");
  Tensor out = t;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double &v : out.mutable_data())
    v = rng.uniform() < rate ? 0.0 : v * keep_scale;
  return out;
}

DropoutComparison dropout_sum_vs_single(const Tensor &x, const Tensor &p, double rate,
                                        SeededRng &rng, std::size_t trials) {
  if (!(rate > 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout rate must lie in (0, 1)");
  if (x.shape() != p.shape())
    throw std::invalid_argument("x and p must share a shape");
  if (trials == 0)
    throw std::invalid_argument("need at least one trial");

  DropoutComparison r;
  r.rate = rate;
  r.trials = trials;
  r.baseline_ratio = contribution_ratio(x, p);

  const double keep_scale = 1.0 / (1.0 - rate);
  double x_only = 0.0, joint = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    SeededRng trial = rng.split(t);
    // (a) dropout on x alone.
    x_only += contribution_ratio(inverted_dropout(x, rate, trial), p);
    // (b) dropout(x + p): one mask applied to both summands.
    Tensor xs = x, ps = p;
    auto xd = xs.mutable_data();
    auto pd = ps.mutable_data();
    for (std::size_t i = 0; i < xd.size(); ++i) {
      const bool drop = trial.uniform() < rate;
      xd[i] = drop ? 0.0 : xd[i] * keep_scale;
      pd[i] = drop ? 0.0 : pd[i] * keep_scale;
    }
    joint += contribution_ratio(xs, ps);
  }
  r.x_only_ratio = x_only / static_cast<double>(trials);
  r.sum_ratio = joint / static_cast<double>(trials);
  r.sum_preserves = std::abs(r.sum_ratio / r.baseline_ratio - 1.0) <= 0.05;
  r.x_only_preserves = std::abs(r.x_only_ratio / r.baseline_ratio - 1.0) <= 0.05;
  return r;
}

std::vector<PropertyCheck> run_simulation(const SimulationOptions &options) {
  std::vector<PropertyCheck> checks;
  SeededRng root(options.seed, 0);

  {
    PropertyCheck check{"ln_gradient_decay", true, {}};
    SeededRng rng = root.split(1);
    const Tensor x = randn({64}, rng);
    const Tensor p = randn({64}, 0.0, kPosEmbedInitStd, rng);
    const double base = frobenius_norm(ln_jacobian_finite_difference(x, p));
    for (double c : options.scale_factors) {
      if (!(c > 0.0))
        throw std::invalid_argument("scale factors must be positive");
      const double ratio = frobenius_norm(ln_jacobian_finite_difference(scale(x, c), p)) / base;
      const bool ok = ratio >= 0.95 / c && ratio <= 1.05 / c;
      check.passed = check.passed && ok;
      char label[32];
      std::snprintf(label, sizeof label, "ratio_c%g", c);
      check.values.emplace_back(label, ratio);
    }
    checks.push_back(std::move(check));
  }

  {
    PropertyCheck check{"ln_jacobian_finite_difference", true, {}};
    SeededRng rng = root.split(2);
    double worst = 0.0;
    for (std::size_t i = 0; i < options.fd_configs; ++i) {
      const std::size_t d = 2 + rng.below(63);
      const Tensor x = randn({d}, 0.0, rng.uniform(0.5, 2.0), rng);
      const Tensor p = randn({d}, 0.0, rng.uniform(0.02, 1.0), rng);
      worst = std::max(worst, max_relative_error(ln_jacobian_wrt_p(x, p),
                                                 ln_jacobian_finite_difference(x, p)));
    }
    check.passed = worst <= 1e-4;
    check.values.emplace_back("configs", static_cast<double>(options.fd_configs));
    check.values.emplace_back("max_relative_error", worst);
    checks.push_back(std::move(check));
  }

  {
    PropertyCheck check{"dropout_sum_vs_single", false, {}};
    SeededRng rng = root.split(3);
    const Tensor x = randn({4096}, rng);
    const Tensor p = randn({4096}, rng);
    constexpr double rate = 0.5;
    const DropoutComparison r = dropout_sum_vs_single(x, p, rate, rng, options.dropout_trials);
    const double expected_shift = 1.0 / (1.0 - rate);
    const double shift = r.x_only_ratio / r.baseline_ratio;
    check.passed = r.sum_preserves && std::abs(shift / expected_shift - 1.0) <= 0.10;
    check.values = {{"rate", rate},
                    {"baseline_ratio", r.baseline_ratio},
                    {"x_only_ratio", r.x_only_ratio},
                    {"sum_ratio", r.sum_ratio},
                    {"expected_x_only_shift", expected_shift}};
    checks.push_back(std::move(check));
  }

  {
    PropertyCheck check{"patch_dropout_conservation", false, {}};
    SeededRng rng = root.split(4);
    const Tensor tokens = randn({10000, 8}, rng);
    const Stats before = stats(tokens);
    double var_ratio = 0.0, mean_shift = 0.0;
    constexpr std::size_t kSeeds = 100;
    for (std::size_t s = 0; s < kSeeds; ++s) {
      SeededRng trial = rng.split(s);
      const Stats after = stats(patch_dropout(tokens, 0.5, trial));
      var_ratio += after.variance / before.variance;
      mean_shift += after.mean - before.mean;
    }
    var_ratio /= kSeeds;
    mean_shift /= kSeeds;
    check.passed = std::abs(var_ratio - 1.0) <= 0.05 && std::abs(mean_shift) <= 0.05;
    check.values = {{"keep_fraction", 0.5}, {"var_ratio", var_ratio}, {"mean_shift", mean_shift}};
    checks.push_back(std::move(check));
  }
  return checks;
}

} // namespace embshift::vitfront
