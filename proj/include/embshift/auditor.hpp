#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "embshift/augment.hpp"
#include "embshift/interp.hpp"
#include "embshift/pipeline.hpp"

namespace embshift::auditor {

/// Variance ratio k per (method, dimensionality).
class KTable {
public:
  KTable() = default;

  /// Reported table values; nearest is 1.
  static KTable published();
  /// Canonical measure_k runs for every method and dimensionality.
  static KTable measured(std::uint64_t seed = 0, std::size_t trials = 1000);

  void set(interp::Method m, interp::Dims d, double k);
  bool contains(interp::Method m, interp::Dims d) const;
  /// Throws std::out_of_range if the entry is missing.
  double at(interp::Method m, interp::Dims d) const;

private:
  std::map<std::pair<interp::Method, interp::Dims>, double> table_;
};

/// An op whose multiplier cannot be derived. `findings` explains why.
class AuditError : public std::runtime_error {
public:
  explicit AuditError(std::vector<std::string> findings);
  const std::vector<std::string> &findings() const { return findings_; }

private:
  std::vector<std::string> findings_;
};

struct Propagation {
  double var_multiplier = 1.0;
  /// Output mean when the input mean is known.
  std::optional<double> mean;
  std::vector<std::string> findings;
};

/// Nominal image side used for erased-fraction expectations.
inline constexpr std::size_t kNominalSide = 224;

/// Product of per-op variance multipliers for inputs with the given stats
/// (nullopt: unknown). `label` prefixes findings, e.g. "train".
Propagation propagate(const std::vector<augment::AugmentOp> &ops, const KTable &ktable,
                      const std::optional<pipeline::InputStats> &input,
                      const std::string &label = "ops", std::size_t side = kNominalSide);

struct Divergence {
  std::string quantity;
  double analytic = 0.0;
  double measured = 0.0;
};

struct MeasuredMultipliers {
  double img_train = 1.0;
  double img_test = 1.0;
  double pe_train = 1.0;
  double pe_test = 1.0;
};

struct AuditReport {
  double var_mult_img_train = 1.0;
  double var_mult_img_test = 1.0;
  double var_mult_pe_train = 1.0;
  double var_mult_pe_test = 1.0;
  double ratio_train = 1.0;
  double ratio_test = 1.0;
  /// |log(ratio_train / ratio_test)| <= log(1.05).
  bool consistent = true;
  /// Same test restricted to the positional embedding.
  bool pe_consistent = true;
  /// Factor for UP(P) that restores the train-phase PE variance.
  double recommended_rescale = 1.0;
  std::vector<std::string> findings;

  bool empirical = false;
  std::size_t trials = 0;
  MeasuredMultipliers measured;
  std::vector<Divergence> divergences;
};

inline constexpr double kConsistencyTolerance = 1.05;
inline constexpr double kDivergenceTolerance = 0.03;

bool within_tolerance(double a, double b);

AuditReport audit(const pipeline::PipelineConfig &cfg, const KTable &ktable);

/// Runs the ops on synthetic [side, side, 3] images drawn with the config's
/// input stats and compares measured multipliers with the analytic ones
/// (computed for the same side). Trials run in parallel with one RNG stream
/// each. Throws std::invalid_argument for fewer than 100 trials.
AuditReport verify_empirically(const pipeline::PipelineConfig &cfg, const KTable &ktable,
                               std::uint64_t seed, std::size_t trials = 400,
                               std::size_t side = 32);

} // namespace embshift::auditor
