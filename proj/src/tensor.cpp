#include "embshift/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace embshift {

namespace {

void validate_shape(const Shape &shape) {
  if (shape.empty() || shape.size() > kMaxRank)
    throw std::invalid_argument("tensor rank must be 1..4, got " + std::to_string(shape.size()));
  for (std::size_t d : shape)
    if (d == 0)
      throw std::invalid_argument("tensor dimensions must be >= 1: " + shape_to_string(shape));
}

std::vector<std::size_t> strides_of(const Shape &shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;)
    strides[i - 1] = strides[i] * shape[i];
  return strides;
}

} // namespace

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (element_count(shape_) != data_.size())
    throw std::invalid_argument("shape " + shape_to_string(shape_) + " needs " +
                                std::to_string(element_count(shape_)) + " values, got " +
                                std::to_string(data_.size()));
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  validate_shape(shape);
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return vector(std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

std::size_t element_count(const Shape &shape) {
  std::size_t n = 1;
  for (std::size_t d : shape)
    n *= d;
  return n;
}

std::string shape_to_string(const Shape &shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i)
      out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Shape parse_shape(const std::string &text) {
  Shape shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    if (part.empty() || !std::all_of(part.begin(), part.end(), ::isdigit))
      throw std::invalid_argument("bad shape '" + text + "'");
    shape.push_back(std::stoull(part));
  }
  validate_shape(shape);
  return shape;
}

double Stats::stddev() const { return std::sqrt(variance); }

Stats stats(std::span<const double> values) {
  if (values.empty())
    throw std::invalid_argument("stats of empty range");
  // Neumaier-compensated sum keeps the mean exact enough for 1e-12 checks.
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  const auto n = static_cast<double>(values.size());
  const double mean = (sum + comp) / n;

  double sq = 0.0, sq_comp = 0.0;
  for (double v : values) {
    const double d = (v - mean) * (v - mean);
    const double t = sq + d;
    sq_comp += sq >= d ? (sq - t) + d : (d - t) + sq;
    sq = t;
  }
  return Stats{mean, (sq + sq_comp) / n, values.size()};
}

Stats stats(const Tensor &t) { return stats(t.data()); }

Tensor concat(const Tensor &a, const Tensor &b) {
  if (a.rank() != 1 || b.rank() != 1)
    throw std::invalid_argument("concat requires rank-1 tensors");
  std::vector<double> out(a.values());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return Tensor::vector(std::move(out));
}

Tensor crop(const Tensor &t, std::span<const std::size_t> offsets,
            std::span<const std::size_t> sizes) {
  const std::size_t rank = t.rank();
  if (offsets.size() != rank || sizes.size() != rank)
    throw std::invalid_argument("crop needs one offset and size per dimension");
  for (std::size_t d = 0; d < rank; ++d) {
    if (sizes[d] == 0)
      throw std::invalid_argument("crop size must be >= 1");
    if (offsets[d] + sizes[d] > t.dim(d))
      throw std::out_of_range("crop exceeds dimension " + std::to_string(d));
  }

  Shape out_shape(sizes.begin(), sizes.end());
  const auto in_strides = strides_of(t.shape());
  std::vector<double> out;
  out.reserve(element_count(out_shape));

  // Odometer over all output coordinates except the innermost, which is copied
  // as one contiguous run.
  std::vector<std::size_t> idx(rank, 0);
  const std::size_t inner = sizes[rank - 1];
  while (true) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < rank; ++d)
      src += (offsets[d] + idx[d]) * in_strides[d];
    out.insert(out.end(), t.data().begin() + static_cast<std::ptrdiff_t>(src),
               t.data().begin() + static_cast<std::ptrdiff_t>(src + inner));
    std::size_t d = rank - 1;
    while (d-- > 0) {
      if (++idx[d] < sizes[d])
        break;
      idx[d] = 0;
    }
    if (d == static_cast<std::size_t>(-1))
      break;
  }
  return Tensor(std::move(out_shape), std::move(out));
}

Tensor shuffle(const Tensor &t, SeededRng &rng) {
  if (t.rank() != 1)
    throw std::invalid_argument("shuffle requires a rank-1 tensor");
  std::vector<double> out(t.values());
  for (std::size_t i = out.size(); i > 1; --i)
    std::swap(out[i - 1], out[rng.below(i)]);
  return Tensor::vector(std::move(out));
}

Tensor randn(Shape shape, SeededRng &rng) { return randn(std::move(shape), 0.0, 1.0, rng); }

Tensor randn(Shape shape, double mean, double stddev, SeededRng &rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double &v : t.mutable_data())
    v = mean + stddev * rng.normal();
  return t;
}

Tensor rand_uniform(Shape shape, double lo, double hi, SeededRng &rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double &v : t.mutable_data())
    v = rng.uniform(lo, hi);
  return t;
}

Tensor scale(const Tensor &t, double factor) {
  Tensor out = t;
  for (double &v : out.mutable_data())
    v *= factor;
  return out;
}

Tensor add(const Tensor &a, const Tensor &b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  Tensor out = a;
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] += b[i];
  return out;
}

Tensor add_scalar(const Tensor &t, double offset) {
  Tensor out = t;
  for (double &v : out.mutable_data())
    v += offset;
  return out;
}

} // namespace embshift
