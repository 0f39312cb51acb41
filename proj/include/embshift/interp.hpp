#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "embshift/tensor.hpp"

namespace embshift::interp {

enum class Method { nearest, bilinear, bicubic };
enum class Dims { one_d, two_d };

std::string to_string(Method m);
std::string to_string(Dims d);
/// Accepts "nearest", "bilinear", "bicubic". Throws std::invalid_argument.
Method parse_method(std::string_view text);
/// Accepts "1d"/"2d" (also "one_d"/"two_d").
Dims parse_dims(std::string_view text);

/// Cubic-convolution coefficient shared with the common DL frameworks.
inline constexpr double kCubicA = -0.75;

/// Target of an upsampling call. out_size holds one entry for one_d and
/// {height, width} for two_d. Every target must be >= the source size.
struct UpsampleSpec {
  Method method = Method::bicubic;
  std::vector<std::size_t> out_size;
  Dims dims = Dims::two_d;

  static UpsampleSpec one_d(Method m, std::size_t length) { return {m, {length}, Dims::one_d}; }
  static UpsampleSpec two_d(Method m, std::size_t height, std::size_t width) {
    return {m, {height, width}, Dims::two_d};
  }
};

enum class PassOrder { rows_first, columns_first };

/// Half-pixel-center resampling of a rank-1 tensor. Border taps are clamped
/// to the edge sample. Throws std::invalid_argument on a downsampling request.
Tensor upsample1d(const Tensor &t, const UpsampleSpec &spec);

/// Separable resampling of [H,W] or [H,W,C]; channels are independent.
/// Output rows are computed in parallel; the result does not depend on the
/// thread count.
Tensor upsample2d(const Tensor &t, const UpsampleSpec &spec,
                  PassOrder order = PassOrder::rows_first);

/// Dispatches on spec.dims.
Tensor upsample(const Tensor &t, const UpsampleSpec &spec);

/// True iff `out` is, as a multiset, exactly s copies of `in`, where
/// s = |out| / |in|. Throws std::invalid_argument if s is not an integer.
bool duplication_decompose(const Tensor &in, const Tensor &out);

/// Per-axis resampling plan: for each output position, up to four source
/// indices (already clamped) and their weights.
struct AxisTaps {
  std::size_t taps_per_output = 0;
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

AxisTaps axis_taps(Method method, std::size_t in_size, std::size_t out_size);

double cubic_weight(double distance);

namespace reference {

// Serial, non-separable evaluation used as the independent route in tests
// and benchmarks. Every output sample is a direct sum over its support.
Tensor upsample1d(const Tensor &t, const UpsampleSpec &spec);
Tensor upsample2d(const Tensor &t, const UpsampleSpec &spec);

} // namespace reference

} // namespace embshift::interp
