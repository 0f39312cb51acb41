#include "embshift/interp.hpp"

#include <cmath>
#include <stdexcept>

// Direct evaluation: each output sample sums kernel(src - j) * in[clamp(j)]
// over the kernel support, with no precomputed tap tables and no separable
// passes. Slow and serial on purpose.

namespace embshift::interp::reference {

namespace {

double triangle(double d) {
  const double x = std::fabs(d);
  return x < 1.0 ? 1.0 - x : 0.0;
}

double keys_cubic(double d) {
  const double x = std::fabs(d);
  const double a = kCubicA;
  if (x <= 1.0)
    return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
  if (x < 2.0)
    return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
  return 0.0;
}

struct Support {
  long first;
  int count;
  double src;
};

Support support_for(Method m, long o, long in_size, long out_size) {
  const double src =
      (static_cast<double>(o) + 0.5) * static_cast<double>(in_size) / static_cast<double>(out_size) -
      0.5;
  switch (m) {
  case Method::nearest: return {static_cast<long>(std::floor(src + 0.5)), 1, src};
  case Method::bilinear: {
    const double s = src < 0.0 ? 0.0 : src;
    return {static_cast<long>(std::floor(s)), 2, s};
  }
  case Method::bicubic: return {static_cast<long>(std::floor(src)) - 1, 4, src};
  }
  return {0, 0, 0.0};
}

double weight(Method m, double src, long j) {
  switch (m) {
  case Method::nearest: return 1.0;
  case Method::bilinear: return triangle(src - static_cast<double>(j));
  case Method::bicubic: return keys_cubic(src - static_cast<double>(j));
  }
  return 0.0;
}

long clamp_to(long j, long n) { return j < 0 ? 0 : (j >= n ? n - 1 : j); }

void check_target(std::size_t in, std::size_t out) {
  if (out < in)
    throw std::invalid_argument("downsampling is not supported");
}

} // namespace

Tensor upsample1d(const Tensor &t, const UpsampleSpec &spec) {
  if (t.rank() != 1 || spec.out_size.size() != 1)
    throw std::invalid_argument("reference::upsample1d needs rank-1 input and one target");
  const long in = static_cast<long>(t.size());
  const long out_n = static_cast<long>(spec.out_size[0]);
  check_target(t.size(), spec.out_size[0]);

  std::vector<double> out(static_cast<std::size_t>(out_n));
  for (long o = 0; o < out_n; ++o) {
    const Support s = support_for(spec.method, o, in, out_n);
    double acc = 0.0;
    for (int k = 0; k < s.count; ++k) {
      const long j = s.first + k;
      acc += weight(spec.method, s.src, j) * t[static_cast<std::size_t>(clamp_to(j, in))];
    }
    out[static_cast<std::size_t>(o)] = acc;
  }
  return Tensor::vector(std::move(out));
}

Tensor upsample2d(const Tensor &t, const UpsampleSpec &spec) {
  if ((t.rank() != 2 && t.rank() != 3) || spec.out_size.size() != 2)
    throw std::invalid_argument("reference::upsample2d needs [H,W(,C)] input and two targets");
  const long h = static_cast<long>(t.dim(0)), w = static_cast<long>(t.dim(1));
  const long c = t.rank() == 3 ? static_cast<long>(t.dim(2)) : 1;
  const long oh = static_cast<long>(spec.out_size[0]), ow = static_cast<long>(spec.out_size[1]);
  check_target(t.dim(0), spec.out_size[0]);
  check_target(t.dim(1), spec.out_size[1]);

  std::vector<double> out(static_cast<std::size_t>(oh * ow * c));
  for (long y = 0; y < oh; ++y) {
    const Support sy = support_for(spec.method, y, h, oh);
    for (long x = 0; x < ow; ++x) {
      const Support sx = support_for(spec.method, x, w, ow);
      for (long ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int ky = 0; ky < sy.count; ++ky) {
          const long jy = sy.first + ky;
          const double wy = weight(spec.method, sy.src, jy);
          for (int kx = 0; kx < sx.count; ++kx) {
            const long jx = sx.first + kx;
            const double wx = weight(spec.method, sx.src, jx);
            const long idx = (clamp_to(jy, h) * w + clamp_to(jx, w)) * c + ch;
            acc += wy * wx * t[static_cast<std::size_t>(idx)];
          }
        }
        out[static_cast<std::size_t>((y * ow + x) * c + ch)] = acc;
      }
    }
  }
  Shape shape = t.rank() == 2 ? Shape{spec.out_size[0], spec.out_size[1]}
                              : Shape{spec.out_size[0], spec.out_size[1], static_cast<std::size_t>(c)};
  return Tensor(std::move(shape), std::move(out));
}

} // namespace embshift::interp::reference
