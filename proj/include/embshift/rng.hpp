#pragma once

#include <cstdint>
#include <limits>

namespace embshift {

/// Counter-based generator keyed by (master_seed, stream_id).
///
/// The i-th draw of a stream is a pure function of the key and i, so two
/// instances built from the same pair produce identical sequences no matter
/// which thread consumes them. Independent work items (Monte-Carlo trials,
/// batch samples) should each own one stream.
///
/// Satisfies UniformRandomBitGenerator so it can drive standard and Boost
/// distributions where their output is platform-stable.
class SeededRng {
public:
  using result_type = std::uint64_t;

  SeededRng(std::uint64_t master_seed, std::uint64_t stream_id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal draw (Box-Muller; the paired value is cached).
  double normal();

  /// Child stream derived from this key; does not advance this generator.
  SeededRng split(std::uint64_t child_id) const;

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t position() const { return counter_; }

private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

} // namespace embshift
