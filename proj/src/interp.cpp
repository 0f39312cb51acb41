#include "embshift/interp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace embshift::interp {

std::string to_string(Method m) {
  switch (m) {
  case Method::nearest: return "nearest";
  case Method::bilinear: return "bilinear";
  case Method::bicubic: return "bicubic";
  }
  return "?";
}

std::string to_string(Dims d) { return d == Dims::one_d ? "1d" : "2d"; }

Method parse_method(std::string_view text) {
  if (text == "nearest") return Method::nearest;
  if (text == "bilinear") return Method::bilinear;
  if (text == "bicubic") return Method::bicubic;
  throw std::invalid_argument("unknown interpolation method '" + std::string(text) + "'");
}

Dims parse_dims(std::string_view text) {
  if (text == "1d" || text == "one_d" || text == "1D") return Dims::one_d;
  if (text == "2d" || text == "two_d" || text == "2D") return Dims::two_d;
  throw std::invalid_argument("unknown dims '" + std::string(text) + "' (expected 1d or 2d)");
}

double cubic_weight(double distance) {
  const double x = std::abs(distance);
  constexpr double a = kCubicA;
  if (x <= 1.0)
    return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0)
    return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

AxisTaps axis_taps(Method method, std::size_t in_size, std::size_t out_size) {
  if (in_size == 0 || out_size == 0)
    throw std::invalid_argument("axis sizes must be positive");
  if (out_size < in_size)
    throw std::invalid_argument("downsampling is not supported (" + std::to_string(in_size) +
                                " -> " + std::to_string(out_size) + ")");

  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  const auto last = static_cast<std::ptrdiff_t>(in_size) - 1;
  auto clamp_index = [last](std::ptrdiff_t i) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, last));
  };

  AxisTaps taps;
  switch (method) {
  case Method::nearest: taps.taps_per_output = 1; break;
  case Method::bilinear: taps.taps_per_output = 2; break;
  case Method::bicubic: taps.taps_per_output = 4; break;
  }
  taps.index.resize(out_size * taps.taps_per_output);
  taps.weight.resize(out_size * taps.taps_per_output);

  for (std::size_t o = 0; o < out_size; ++o) {
    std::size_t *idx = &taps.index[o * taps.taps_per_output];
    double *w = &taps.weight[o * taps.taps_per_output];
    const double center = (static_cast<double>(o) + 0.5) * scale;
    switch (method) {
    case Method::nearest:
      idx[0] = clamp_index(static_cast<std::ptrdiff_t>(std::floor(center)));
      w[0] = 1.0;
      break;
    case Method::bilinear: {
      const double src = std::max(center - 0.5, 0.0);
      const auto i0 = static_cast<std::ptrdiff_t>(std::floor(src));
      const double frac = src - static_cast<double>(i0);
      idx[0] = clamp_index(i0);
      idx[1] = clamp_index(i0 + 1);
      w[0] = 1.0 - frac;
      w[1] = frac;
      break;
    }
    case Method::bicubic: {
      const double src = center - 0.5;
      const auto i0 = static_cast<std::ptrdiff_t>(std::floor(src));
      const double t = src - static_cast<double>(i0);
      for (int k = 0; k < 4; ++k)
        idx[k] = clamp_index(i0 - 1 + k);
      w[0] = cubic_weight(t + 1.0);
      w[1] = cubic_weight(t);
      w[2] = cubic_weight(1.0 - t);
      w[3] = cubic_weight(2.0 - t);
      break;
    }
    }
  }
  return taps;
}

Tensor upsample1d(const Tensor &t, const UpsampleSpec &spec) {
  if (spec.dims != Dims::one_d || spec.out_size.size() != 1)
    throw std::invalid_argument("upsample1d needs a one_d spec with one target size");
  if (t.rank() != 1)
    throw std::invalid_argument("upsample1d needs a rank-1 tensor");

  const std::size_t in = t.size();
  const std::size_t out_n = spec.out_size[0];
  const AxisTaps taps = axis_taps(spec.method, in, out_n);
  const std::size_t nt = taps.taps_per_output;

  std::vector<double> out(out_n);
  const auto src = t.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(out_n); ++o) {
    double acc = 0.0;
    for (std::size_t k = 0; k < nt; ++k)
      acc += taps.weight[o * nt + k] * src[taps.index[o * nt + k]];
    out[o] = acc;
  }
  return Tensor::vector(std::move(out));
}

namespace {

struct ImageGeometry {
  std::size_t height, width, channels;
};

ImageGeometry image_geometry(const Tensor &t) {
  if (t.rank() == 2)
    return {t.dim(0), t.dim(1), 1};
  if (t.rank() == 3)
    return {t.dim(0), t.dim(1), t.dim(2)};
  throw std::invalid_argument("upsample2d needs a [H,W] or [H,W,C] tensor, got " +
                              shape_to_string(t.shape()));
}

// Resample along the width axis of an [H,W,C] buffer.
std::vector<double> resample_width(std::span<const double> src, ImageGeometry g,
                                   const AxisTaps &taps, std::size_t out_w) {
  const std::size_t nt = taps.taps_per_output;
  const std::size_t c = g.channels;
  std::vector<double> dst(g.height * out_w * c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(g.height); ++y) {
    const double *row = &src[static_cast<std::size_t>(y) * g.width * c];
    double *out_row = &dst[static_cast<std::size_t>(y) * out_w * c];
    for (std::size_t x = 0; x < out_w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t k = 0; k < nt; ++k)
          acc += taps.weight[x * nt + k] * row[taps.index[x * nt + k] * c + ch];
        out_row[x * c + ch] = acc;
      }
    }
  }
  return dst;
}

// Resample along the height axis of an [H,W,C] buffer.
std::vector<double> resample_height(std::span<const double> src, ImageGeometry g,
                                    const AxisTaps &taps, std::size_t out_h) {
  const std::size_t nt = taps.taps_per_output;
  const std::size_t row_len = g.width * g.channels;
  std::vector<double> dst(out_h * row_len);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(out_h); ++y) {
    double *out_row = &dst[static_cast<std::size_t>(y) * row_len];
    for (std::size_t i = 0; i < row_len; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < nt; ++k)
        acc += taps.weight[y * nt + k] * src[taps.index[y * nt + k] * row_len + i];
      out_row[i] = acc;
    }
  }
  return dst;
}

} // namespace

Tensor upsample2d(const Tensor &t, const UpsampleSpec &spec, PassOrder order) {
  if (spec.dims != Dims::two_d || spec.out_size.size() != 2)
    throw std::invalid_argument("upsample2d needs a two_d spec with {height, width}");
  const ImageGeometry g = image_geometry(t);
  const std::size_t out_h = spec.out_size[0], out_w = spec.out_size[1];
  const AxisTaps taps_h = axis_taps(spec.method, g.height, out_h);
  const AxisTaps taps_w = axis_taps(spec.method, g.width, out_w);

  std::vector<double> out;
  if (order == PassOrder::rows_first) {
    auto tmp = resample_width(t.data(), g, taps_w, out_w);
    out = resample_height(tmp, {g.height, out_w, g.channels}, taps_h, out_h);
  } else {
    auto tmp = resample_height(t.data(), g, taps_h, out_h);
    out = resample_width(tmp, {out_h, g.width, g.channels}, taps_w, out_w);
  }
  Shape shape = t.rank() == 2 ? Shape{out_h, out_w} : Shape{out_h, out_w, g.channels};
  return Tensor(std::move(shape), std::move(out));
}

Tensor upsample(const Tensor &t, const UpsampleSpec &spec) {
  return spec.dims == Dims::one_d ? upsample1d(t, spec) : upsample2d(t, spec);
}

bool duplication_decompose(const Tensor &in, const Tensor &out) {
  if (in.size() == 0 || out.size() % in.size() != 0)
    throw std::invalid_argument("output length " + std::to_string(out.size()) +
                                " is not an integer multiple of " + std::to_string(in.size()));
  const std::size_t copies = out.size() / in.size();
  std::vector<double> a(in.values()), b(out.values());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b[i] != a[i / copies])
      return false;
  return true;
}

} // namespace embshift::interp
