#pragma once

#include <string>
#include <vector>

#include "embshift/rng.hpp"
#include "embshift/tensor.hpp"

namespace embshift::vitfront {

inline constexpr double kLayerNormEps = 1e-6;
inline constexpr double kPosEmbedInitStd = 0.02;

/// Non-overlapping patch projection (stride == patch size).
struct PatchProjection {
  Tensor kernel; // [P, P, C_in, D]
  Tensor bias;   // [D]
  std::size_t patch_size = 16;

  static PatchProjection random(std::size_t patch_size, std::size_t channels, std::size_t dim,
                                SeededRng &rng);
};

/// [H, W, C] -> [H/P, W/P, D]. Throws std::invalid_argument if H or W is not
/// divisible by the patch size or the channel counts disagree.
Tensor patch_project(const Tensor &image, const PatchProjection &proj);

/// Standardizes each token (last axis) without affine parameters.
Tensor layer_norm(const Tensor &t, double eps = kLayerNormEps);

/// Analytic Jacobian d LN(x + p) / d p for one token of length D, returned
/// as [D, D] with row = output index.
Tensor ln_jacobian_wrt_p(const Tensor &x, const Tensor &p, double eps = kLayerNormEps);

/// Jacobian-vector product (d LN(x + p) / d p) v without forming the matrix.
Tensor ln_jvp_wrt_p(const Tensor &x, const Tensor &p, const Tensor &v, double eps = kLayerNormEps);

/// Central finite differences of layer_norm(x + p) in p.
Tensor ln_jacobian_finite_difference(const Tensor &x, const Tensor &p, double eps = kLayerNormEps,
                                     double step = 1e-5);

double frobenius_norm(const Tensor &t);
/// max |a - b| / max |b|.
double max_relative_error(const Tensor &a, const Tensor &b);

/// Var[x] / Var[p]. Throws std::invalid_argument if Var[p] == 0 or the shapes
/// differ.
double contribution_ratio(const Tensor &x, const Tensor &p);

struct EmbeddingState {
  Tensor patch_embed;
  Tensor pos_embed;
  Tensor sum;
  Tensor ln_out;
};

/// patch projection, positional addition and the first layer norm.
EmbeddingState embed_front(const Tensor &image, const PatchProjection &proj, const Tensor &pos_embed,
                           double eps = kLayerNormEps);

/// N(0, 0.02^2) positional embedding of shape [H, W, D].
Tensor init_pos_embed(std::size_t grid_h, std::size_t grid_w, std::size_t dim, SeededRng &rng);

/// Keeps ceil(keep_fraction * N) token rows of an [N, D] table, chosen
/// uniformly without replacement, in their original order. No rescaling.
Tensor patch_dropout(const Tensor &tokens, double keep_fraction, SeededRng &rng);

/// Zeroes each element with probability `rate` and scales survivors by
/// 1 / (1 - rate).
Tensor inverted_dropout(const Tensor &t, double rate, SeededRng &rng);

struct DropoutComparison {
  double baseline_ratio = 0.0; // Var[x] / Var[p]
  double x_only_ratio = 0.0;   // dropout applied to x alone
  double sum_ratio = 0.0;      // one mask applied to x + p
  double rate = 0.0;
  std::size_t trials = 0;
  bool sum_preserves = false;    // |sum/baseline - 1| <= 0.05
  bool x_only_preserves = false; // |x_only/baseline - 1| <= 0.05
};

/// Averages the contribution ratios over `trials` independent masks.
DropoutComparison dropout_sum_vs_single(const Tensor &x, const Tensor &p, double rate,
                                        SeededRng &rng, std::size_t trials = 1000);

// ---------------------------------------------------------------------------
// Bundled property checks
// ---------------------------------------------------------------------------

struct PropertyCheck {
  std::string name;
  bool passed = false;
  std::vector<std::pair<std::string, double>> values;
};

struct SimulationOptions {
  std::uint64_t seed = 0;
  std::vector<double> scale_factors{2.0, 5.0, 10.0};
  std::size_t fd_configs = 100;
  std::size_t dropout_trials = 1000;
};

/// LN gradient decay under x -> c x, analytic-vs-finite-difference Jacobian,
/// dropout on the sum vs on x alone, and patch-dropout conservation.
std::vector<PropertyCheck> run_simulation(const SimulationOptions &options);

} // namespace embshift::vitfront
