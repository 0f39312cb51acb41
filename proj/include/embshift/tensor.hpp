#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "embshift/rng.hpp"

namespace embshift {

using Shape = std::vector<std::size_t>;

constexpr std::size_t kMaxRank = 4;

/// Dense row-major tensor of doubles, rank 1 to 4.
///
/// Values are never shared between tensors; copies are deep. Operations in
/// this library return new tensors and leave their inputs untouched.
class Tensor {
public:
  /// Throws std::invalid_argument if the shape is empty, has rank > 4, has a
  /// zero dimension, or disagrees with data.size().
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);

  const Shape &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }
  const std::vector<double> &values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double &operator[](std::size_t i) { return data_[i]; }

  /// Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor &other) const = default;

private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t element_count(const Shape &shape);
std::string shape_to_string(const Shape &shape);
/// Parses "64x64x3" or "4096". Throws std::invalid_argument.
Shape parse_shape(const std::string &text);

/// Population mean and variance (divide by n).
struct Stats {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t count = 0;

  double stddev() const;
};

/// Two-pass: compensated mean, then centered second moment.
Stats stats(std::span<const double> values);
Stats stats(const Tensor &t);

/// Rank-1 concatenation; a's elements first.
Tensor concat(const Tensor &a, const Tensor &b);

/// Contiguous sub-block. offsets/sizes have one entry per dimension.
Tensor crop(const Tensor &t, std::span<const std::size_t> offsets,
            std::span<const std::size_t> sizes);

/// Uniform random permutation of a rank-1 tensor (Fisher-Yates).
Tensor shuffle(const Tensor &t, SeededRng &rng);

Tensor randn(Shape shape, SeededRng &rng);
Tensor randn(Shape shape, double mean, double stddev, SeededRng &rng);
Tensor rand_uniform(Shape shape, double lo, double hi, SeededRng &rng);

Tensor scale(const Tensor &t, double factor);
Tensor add(const Tensor &a, const Tensor &b);
Tensor add_scalar(const Tensor &t, double offset);

} // namespace embshift
