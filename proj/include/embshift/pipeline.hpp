#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "embshift/augment.hpp"
#include "embshift/interp.hpp"

namespace embshift::pipeline {

enum class Scenario { classification, segmentation };

std::string to_string(Scenario s);

/// Mean and variance of the normalized dataset, when they are known.
struct InputStats {
  double mean = 0.0;
  double variance = 1.0;
};

struct NormConfig {
  augment::NormStats stats = augment::NormStats::default_imagenet();
  std::optional<InputStats> measured;

  /// Dataset statistics are assumed to produce unit stats; other choices
  /// are only known through `measured`.
  std::optional<InputStats> input_stats() const;
};

struct PeUpsample {
  interp::Method method = interp::Method::bicubic;
  interp::Dims dims = interp::Dims::two_d;
  bool in_test = false;
  /// Factor already applied to UP(P) at test time (1 = plain upsampling).
  double rescale = 1.0;
};

struct PipelineConfig {
  Scenario scenario = Scenario::classification;
  NormConfig norm;
  PeUpsample pe;
  std::vector<augment::AugmentOp> train;
  std::vector<augment::AugmentOp> test;
};

/// Schema violation; `problems` names each offending key or value.
class SchemaError : public std::runtime_error {
public:
  explicit SchemaError(std::vector<std::string> problems);
  const std::vector<std::string> &problems() const { return problems_; }

private:
  std::vector<std::string> problems_;
};

PipelineConfig parse_pipeline(const nlohmann::json &doc);
PipelineConfig parse_pipeline(std::string_view text);
PipelineConfig load_pipeline(const std::filesystem::path &path);

/// One op object, e.g. {"op":"mixup","lambda":0.8}. `where` prefixes error
/// messages.
augment::AugmentOp parse_op(const nlohmann::json &obj, const std::string &where = "op");
augment::AugmentOp parse_op(std::string_view text);

nlohmann::ordered_json to_json(const augment::AugmentOp &op);
nlohmann::ordered_json to_json(const PipelineConfig &cfg);

} // namespace embshift::pipeline
