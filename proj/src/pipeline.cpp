#include "embshift/pipeline.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace embshift::pipeline {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string> &items) {
  std::string out;
  for (const auto &s : items)
    out += (out.empty() ? "" : "; ") + s;
  return out;
}

// Collects problems instead of stopping at the first one so a single run
// reports every offending key.
class Problems {
public:
  void add(std::string msg) { list_.push_back(std::move(msg)); }
  bool empty() const { return list_.empty(); }
  std::vector<std::string> take() { return std::move(list_); }

  void reject_unknown(const json &obj, const std::set<std::string> &allowed,
                      const std::string &where) {
    for (const auto &item : obj.items())
      if (!allowed.count(item.key()))
        add(where + "." + item.key() + ": unknown key");
  }

  std::optional<double> number(const json &obj, const char *key, const std::string &where,
                               bool required) {
    if (!obj.contains(key)) {
      if (required)
        add(where + "." + key + ": required");
      return std::nullopt;
    }
    const json &v = obj.at(key);
    if (!v.is_number()) {
      add(where + "." + key + ": expected a number");
      return std::nullopt;
    }
    return v.get<double>();
  }

  std::optional<std::string> string(const json &obj, const char *key, const std::string &where,
                                    bool required) {
    if (!obj.contains(key)) {
      if (required)
        add(where + "." + key + ": required");
      return std::nullopt;
    }
    const json &v = obj.at(key);
    if (!v.is_string()) {
      add(where + "." + key + ": expected a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

  std::optional<augment::Range> range(const json &obj, const char *key, const std::string &where) {
    if (!obj.contains(key))
      return std::nullopt;
    const json &v = obj.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      add(where + "." + key + ": expected [lo, hi]");
      return std::nullopt;
    }
    return augment::Range{v[0].get<double>(), v[1].get<double>()};
  }

  template <typename F> void guarded(const std::string &where, F &&fn) {
    try {
      fn();
    } catch (const std::invalid_argument &e) {
      add(where + ": " + e.what());
    }
  }

private:
  std::vector<std::string> list_;
};

augment::NormStats parse_norm_stats(const json &v, const std::string &where, Problems &problems,
                                    std::optional<InputStats> *measured) {
  if (v.is_string()) {
    augment::NormStats s;
    problems.guarded(where, [&] { s = augment::named_norm(v.get<std::string>()); });
    return s;
  }
  if (!v.is_object()) {
    problems.add(where + ": expected a name or an object");
    return {};
  }
  std::set<std::string> allowed{"name", "mean", "std"};
  if (measured)
    allowed.insert("measured");
  problems.reject_unknown(v, allowed, where);

  augment::NormStats s;
  const auto name = problems.string(v, "name", where, true).value_or("default_imagenet");
  if (name == "custom") {
    auto triple = [&](const char *key) {
      std::array<double, 3> out{};
      if (!v.contains(key) || !v.at(key).is_array() || v.at(key).size() != 3) {
        problems.add(where + "." + key + ": custom stats need 3 numbers");
        return out;
      }
      for (std::size_t i = 0; i < 3; ++i) {
        if (!v.at(key)[i].is_number())
          problems.add(where + "." + key + ": expected numbers");
        else
          out[i] = v.at(key)[i].get<double>();
      }
      return out;
    };
    const auto mean = triple("mean"), std = triple("std");
    problems.guarded(where, [&] { s = augment::NormStats::custom(mean, std); });
  } else {
    if (v.contains("mean") || v.contains("std"))
      problems.add(where + ": mean/std are only accepted for name \"custom\"");
    problems.guarded(where, [&] { s = augment::named_norm(name); });
  }

  if (measured && v.contains("measured")) {
    const json &m = v.at("measured");
    const std::string mw = where + ".measured";
    if (!m.is_object()) {
      problems.add(mw + ": expected {\"mean\": .., \"var\": ..}");
    } else {
      problems.reject_unknown(m, {"mean", "var"}, mw);
      const auto mean = problems.number(m, "mean", mw, true);
      const auto var = problems.number(m, "var", mw, true);
      if (var && !(*var > 0.0))
        problems.add(mw + ".var: must be > 0");
      if (mean && var)
        *measured = InputStats{*mean, *var};
    }
  }
  return s;
}

void check_unit_interval(Problems &p, const std::optional<double> &v, const std::string &where,
                         bool open) {
  if (!v)
    return;
  const bool ok = open ? (*v > 0.0 && *v < 1.0) : (*v >= 0.0 && *v <= 1.0);
  if (!ok)
    p.add(where + (open ? ": must lie in (0, 1)" : ": must lie in [0, 1]"));
}

augment::AugmentOp parse_op_into(const json &obj, const std::string &where, Problems &problems) {
  augment::AugmentOp op{augment::CropOp{}, 0};
  if (!obj.is_object()) {
    problems.add(where + ": expected an object");
    return op;
  }
  const auto kind = problems.string(obj, "op", where, true);
  if (!kind)
    return op;
  if (auto stream = problems.number(obj, "stream", where, false))
    op.stream_id = static_cast<std::uint64_t>(*stream);

  if (*kind == "resize" || *kind == "resize_crop") {
    problems.reject_unknown(obj, {"op", "stream", "method", "dims", "factor"}, where);
    augment::ResizeOp r;
    r.crop_back = *kind == "resize_crop";
    if (auto m = problems.string(obj, "method", where, true))
      problems.guarded(where + ".method", [&] { r.method = interp::parse_method(*m); });
    if (auto d = problems.string(obj, "dims", where, false))
      problems.guarded(where + ".dims", [&] { r.dims = interp::parse_dims(*d); });
    if (auto f = problems.number(obj, "factor", where, false)) {
      if (!(*f > 1.0))
        problems.add(where + ".factor: must be > 1 (upsampling only)");
      r.factor = *f;
    }
    op.kind = r;
  } else if (*kind == "crop") {
    problems.reject_unknown(obj, {"op", "stream", "fraction"}, where);
    augment::CropOp c;
    if (auto f = problems.number(obj, "fraction", where, false)) {
      if (!(*f > 0.0 && *f <= 1.0))
        problems.add(where + ".fraction: must lie in (0, 1]");
      c.fraction = *f;
    }
    op.kind = c;
  } else if (*kind == "mixup" || *kind == "cutmix") {
    problems.reject_unknown(obj, {"op", "stream", "lambda", "alpha", "prob"}, where);
    const auto lambda = problems.number(obj, "lambda", where, false);
    const auto alpha = problems.number(obj, "alpha", where, false);
    const auto prob = problems.number(obj, "prob", where, false);
    if (lambda.has_value() == alpha.has_value())
      problems.add(where + ": exactly one of lambda or alpha is required");
    check_unit_interval(problems, lambda, where + ".lambda", true);
    check_unit_interval(problems, prob, where + ".prob", false);
    if (alpha && !(*alpha > 0.0))
      problems.add(where + ".alpha: must be > 0");
    if (*kind == "mixup")
      op.kind = augment::MixupOp{lambda, alpha, prob.value_or(1.0)};
    else
      op.kind = augment::CutmixOp{lambda, alpha, prob.value_or(1.0)};
  } else if (*kind == "extended_mixup") {
    problems.reject_unknown(obj, {"op", "stream", "lambda_i", "lambda_j"}, where);
    augment::ExtendedMixupOp e;
    e.lambda_i = problems.number(obj, "lambda_i", where, true).value_or(1.0);
    e.lambda_j = problems.number(obj, "lambda_j", where, true).value_or(0.0);
    op.kind = e;
  } else if (*kind == "erase") {
    problems.reject_unknown(obj, {"op", "stream", "mode", "prob", "area", "aspect", "max_attempts"},
                            where);
    augment::EraseParams p;
    if (auto m = problems.string(obj, "mode", where, true))
      problems.guarded(where + ".mode", [&] { p.mode = augment::parse_erase_mode(*m); });
    if (auto prob = problems.number(obj, "prob", where, false)) {
      check_unit_interval(problems, prob, where + ".prob", false);
      p.probability = *prob;
    }
    if (auto a = problems.range(obj, "area", where)) {
      if (!(a->lo > 0.0 && a->lo <= a->hi && a->hi < 1.0))
        problems.add(where + ".area: must be a non-empty subrange of (0, 1)");
      p.area = *a;
    }
    if (auto a = problems.range(obj, "aspect", where)) {
      if (!(a->lo > 0.0 && a->lo <= a->hi))
        problems.add(where + ".aspect: must be a non-empty positive range");
      p.aspect = *a;
    }
    if (auto n = problems.number(obj, "max_attempts", where, false)) {
      if (!(*n >= 1.0))
        problems.add(where + ".max_attempts: must be >= 1");
      p.max_attempts = static_cast<int>(*n);
    }
    op.kind = augment::EraseOp{p};
  } else if (*kind == "normalize") {
    problems.reject_unknown(obj, {"op", "stream", "stats", "measured_multiplier"}, where);
    augment::NormalizeOp n;
    if (!obj.contains("stats"))
      problems.add(where + ".stats: required");
    else
      n.stats = parse_norm_stats(obj.at("stats"), where + ".stats", problems, nullptr);
    if (auto m = problems.number(obj, "measured_multiplier", where, false)) {
      if (!(*m > 0.0))
        problems.add(where + ".measured_multiplier: must be > 0");
      n.measured_multiplier = *m;
    }
    op.kind = n;
  } else {
    problems.add(where + ".op: unknown op '" + *kind + "'");
  }
  return op;
}

std::vector<augment::AugmentOp> parse_ops(const json &doc, const char *key, Problems &problems) {
  std::vector<augment::AugmentOp> ops;
  if (!doc.contains(key)) {
    problems.add(std::string(key) + ": required");
    return ops;
  }
  const json &arr = doc.at(key);
  if (!arr.is_array() || arr.empty()) {
    problems.add(std::string(key) + ": expected a non-empty array of ops");
    return ops;
  }
  for (std::size_t i = 0; i < arr.size(); ++i)
    ops.push_back(parse_op_into(arr[i], std::string(key) + "[" + std::to_string(i) + "]", problems));
  return ops;
}

json parse_text(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error &e) {
    throw SchemaError({std::string("invalid JSON: ") + e.what()});
  }
}

json range_json(augment::Range r) { return json::array({r.lo, r.hi}); }

nlohmann::ordered_json norm_json(const augment::NormStats &s) {
  if (s.name != augment::NormName::custom)
    return augment::to_string(s.name);
  nlohmann::ordered_json j;
  j["name"] = "custom";
  j["mean"] = s.mean;
  j["std"] = s.std;
  return j;
}

} // namespace

std::string to_string(Scenario s) {
  return s == Scenario::classification ? "classification" : "segmentation";
}

std::optional<InputStats> NormConfig::input_stats() const {
  if (measured)
    return measured;
  if (stats.name == augment::NormName::default_imagenet)
    return InputStats{0.0, 1.0};
  return std::nullopt;
}

SchemaError::SchemaError(std::vector<std::string> problems)
    : std::runtime_error("pipeline config schema violation: " + join(problems)),
      problems_(std::move(problems)) {}

PipelineConfig parse_pipeline(const json &doc) {
  Problems problems;
  PipelineConfig cfg;
  if (!doc.is_object())
    throw SchemaError({"top level: expected an object"});
  problems.reject_unknown(doc, {"scenario", "norm", "pe_upsample", "train", "test"}, "config");

  if (auto s = problems.string(doc, "scenario", "config", true)) {
    if (*s == "classification")
      cfg.scenario = Scenario::classification;
    else if (*s == "segmentation")
      cfg.scenario = Scenario::segmentation;
    else
      problems.add("config.scenario: expected classification or segmentation");
  }

  if (!doc.contains("norm"))
    problems.add("config.norm: required");
  else
    cfg.norm.stats = parse_norm_stats(doc.at("norm"), "config.norm", problems, &cfg.norm.measured);

  if (!doc.contains("pe_upsample")) {
    problems.add("config.pe_upsample: required");
  } else if (const json &pe = doc.at("pe_upsample"); !pe.is_object()) {
    problems.add("config.pe_upsample: expected an object");
  } else {
    const std::string w = "config.pe_upsample";
    problems.reject_unknown(pe, {"method", "in_test", "dims", "rescale"}, w);
    if (auto m = problems.string(pe, "method", w, true))
      problems.guarded(w + ".method", [&] { cfg.pe.method = interp::parse_method(*m); });
    if (!pe.contains("in_test") || !pe.at("in_test").is_boolean())
      problems.add(w + ".in_test: required boolean");
    else
      cfg.pe.in_test = pe.at("in_test").get<bool>();
    if (auto d = problems.string(pe, "dims", w, false))
      problems.guarded(w + ".dims", [&] { cfg.pe.dims = interp::parse_dims(*d); });
    if (auto r = problems.number(pe, "rescale", w, false)) {
      if (!(*r > 0.0))
        problems.add(w + ".rescale: must be > 0");
      cfg.pe.rescale = *r;
    }
  }

  cfg.train = parse_ops(doc, "train", problems);
  cfg.test = parse_ops(doc, "test", problems);
  for (std::size_t i = 0; i < cfg.train.size(); ++i)
    cfg.train[i].stream_id += 1000 * (i + 1);
  for (std::size_t i = 0; i < cfg.test.size(); ++i)
    cfg.test[i].stream_id += 1000 * (i + 1) + 500;

  if (!problems.empty())
    throw SchemaError(problems.take());
  return cfg;
}

PipelineConfig parse_pipeline(std::string_view text) { return parse_pipeline(parse_text(text)); }

PipelineConfig load_pipeline(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_pipeline(std::string_view(ss.str()));
}

augment::AugmentOp parse_op(const json &obj, const std::string &where) {
  Problems problems;
  auto op = parse_op_into(obj, where, problems);
  if (!problems.empty())
    throw SchemaError(problems.take());
  return op;
}

augment::AugmentOp parse_op(std::string_view text) { return parse_op(parse_text(text)); }

nlohmann::ordered_json to_json(const augment::AugmentOp &op) {
  nlohmann::ordered_json j;
  j["op"] = augment::op_name(op);
  std::visit(
      [&](const auto &k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, augment::ResizeOp>) {
          j["method"] = interp::to_string(k.method);
          j["dims"] = interp::to_string(k.dims);
          j["factor"] = k.factor;
        } else if constexpr (std::is_same_v<K, augment::CropOp>) {
          j["fraction"] = k.fraction;
        } else if constexpr (std::is_same_v<K, augment::MixupOp> ||
                             std::is_same_v<K, augment::CutmixOp>) {
          if (k.lambda)
            j["lambda"] = *k.lambda;
          if (k.alpha)
            j["alpha"] = *k.alpha;
          j["prob"] = k.prob;
        } else if constexpr (std::is_same_v<K, augment::ExtendedMixupOp>) {
          j["lambda_i"] = k.lambda_i;
          j["lambda_j"] = k.lambda_j;
        } else if constexpr (std::is_same_v<K, augment::EraseOp>) {
          j["mode"] = augment::to_string(k.params.mode);
          j["prob"] = k.params.probability;
          j["area"] = range_json(k.params.area);
          j["aspect"] = range_json(k.params.aspect);
          j["max_attempts"] = k.params.max_attempts;
        } else {
          j["stats"] = norm_json(k.stats);
          if (k.measured_multiplier)
            j["measured_multiplier"] = *k.measured_multiplier;
        }
      },
      op.kind);
  return j;
}

nlohmann::ordered_json to_json(const PipelineConfig &cfg) {
  nlohmann::ordered_json j;
  j["scenario"] = to_string(cfg.scenario);
  auto norm = norm_json(cfg.norm.stats);
  if (cfg.norm.measured) {
    nlohmann::ordered_json obj;
    if (norm.is_string())
      obj["name"] = norm;
    else
      obj = norm;
    obj["measured"] = {{"mean", cfg.norm.measured->mean}, {"var", cfg.norm.measured->variance}};
    norm = obj;
  }
  j["norm"] = norm;
  j["pe_upsample"] = {{"method", interp::to_string(cfg.pe.method)},
                      {"in_test", cfg.pe.in_test},
                      {"dims", interp::to_string(cfg.pe.dims)},
                      {"rescale", cfg.pe.rescale}};
  j["train"] = nlohmann::ordered_json::array();
  for (const auto &op : cfg.train)
    j["train"].push_back(to_json(op));
  j["test"] = nlohmann::ordered_json::array();
  for (const auto &op : cfg.test)
    j["test"].push_back(to_json(op));
  return j;
}

} // namespace embshift::pipeline
