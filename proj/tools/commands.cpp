#include "commands.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"
#include "embshift/auditor.hpp"
#include "embshift/augment.hpp"
#include "embshift/pipeline.hpp"
#include "embshift/rng.hpp"
#include "embshift/tensor.hpp"
#include "embshift/varcal.hpp"
#include "embshift/vitfront.hpp"
#include "embshift/vspe.hpp"
#include "report.hpp"

namespace embshift::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Data problems (bad file contents, shape mismatches): exit 1.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Outcome {
  ReportRecord report;
  int code = exit_ok;
};

void apply_thread_cap() {
  if (const char *env = std::getenv("EMBSHIFT_THREADS")) {
    char *end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0)
      omp_set_num_threads(static_cast<int>(n));
  }
}

template <typename F> auto usage_guard(F &&fn) {
  try {
    return fn();
  } catch (const std::invalid_argument &e) {
    throw UsageError(e.what());
  }
}

std::pair<std::size_t, std::size_t> parse_hw(const std::string &text, const char *flag) {
  Shape s;
  try {
    s = parse_shape(text);
  } catch (const std::invalid_argument &) {
    throw UsageError(std::string(flag) + " expects HxW, got '" + text + "'");
  }
  if (s.size() != 2)
    throw UsageError(std::string(flag) + " expects HxW, got '" + text + "'");
  return {s[0], s[1]};
}

Tensor load_tensor(const std::string &path) {
  try {
    return vspe::load(path);
  } catch (const vspe::FormatError &e) {
    throw DataError(path + ": " + e.what());
  }
}

void add_stats(ReportRecord &r, const std::string &prefix, const Stats &s) {
  r.add(prefix + "mean", s.mean);
  r.add(prefix + "var", s.variance);
}

// ---------------------------------------------------------------------------

struct MeasureArgs {
  std::string method = "bicubic";
  std::string dims = "2d";
  double scale = 2.0;
  std::size_t size = 0;
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
};

Outcome measure_k_cmd(const MeasureArgs &a) {
  auto cfg = usage_guard([&] {
    return varcal::MeasureConfig::canonical(interp::parse_method(a.method),
                                            interp::parse_dims(a.dims));
  });
  cfg.scale_factor = a.scale;
  if (a.size > 0)
    cfg.size = a.size;
  cfg.trials = a.trials;
  cfg.seed = a.seed;
  const auto est = usage_guard([&] { return varcal::measure_k(cfg); });

  Outcome o;
  auto &r = o.report;
  r.command = "measure-k";
  r.seed = a.seed;
  r.inputs = {{"method", interp::to_string(cfg.method)},
              {"dims", interp::to_string(cfg.dims)},
              {"scale", cfg.scale_factor},
              {"size", cfg.size},
              {"trials", cfg.trials}};
  r.add("k", est.k);
  r.add("K", est.K);
  r.add("rescale", est.rescale);
  r.add("std_error", est.std_error);
  r.add("mean_std_error", est.mean_std_error);
  if (cfg.scale_factor == 2.0)
    r.add("published_k", varcal::published_k(cfg.method, cfg.dims));
  return o;
}

// ---------------------------------------------------------------------------

struct RescaleArgs {
  std::string in, out;
  std::string method = "bicubic";
  std::string grid, target;
  std::string k = "auto";
  std::optional<std::size_t> cls_tokens;
  std::uint64_t seed = 0;
};

Outcome rescale_pe_cmd(const RescaleArgs &a) {
  const auto method = usage_guard([&] { return interp::parse_method(a.method); });
  const auto [th, tw] = parse_hw(a.target, "--target");
  const Tensor pe = load_tensor(a.in);

  std::size_t gh = 0, gw = 0, cls = 0;
  const bool flat = pe.rank() == 2;
  if (flat) {
    if (a.grid.empty())
      throw UsageError("--grid is required for [N, D] inputs");
    std::tie(gh, gw) = parse_hw(a.grid, "--grid");
    const std::size_t n = pe.dim(0), cells = gh * gw;
    if (n < cells || n - cells > 1)
      throw DataError("token count " + std::to_string(n) + " does not match grid " + a.grid +
                      " plus 0 or 1 leading tokens");
    cls = a.cls_tokens.value_or(n - cells);
    if (cls + cells != n)
      throw DataError("token count " + std::to_string(n) + " != " + std::to_string(cls) +
                      " + " + std::to_string(cells));
  } else if (pe.rank() == 3) {
    gh = pe.dim(0);
    gw = pe.dim(1);
    if (!a.grid.empty() && parse_hw(a.grid, "--grid") != std::pair{gh, gw})
      throw DataError("--grid does not match the [H, W, D] input");
    if (a.cls_tokens.value_or(0) != 0)
      throw DataError("[H, W, D] inputs carry no leading tokens");
  } else {
    throw DataError("expected an [N, D] or [H, W, D] embedding, got " +
                    shape_to_string(pe.shape()));
  }
  if (th < gh || tw < gw)
    throw UsageError("target grid must not be smaller than the source grid");

  varcal::SplitEmbedding parts =
      flat ? varcal::split_cls_token(pe, gh, gw, cls) : varcal::SplitEmbedding{std::nullopt, pe};
  const auto spec = interp::UpsampleSpec::two_d(method, th, tw);

  Outcome o;
  auto &r = o.report;
  r.command = "rescale-pe";
  r.seed = a.seed;
  r.inputs = {{"in", a.in},         {"out", a.out},           {"method", interp::to_string(method)},
              {"grid", std::to_string(gh) + "x" + std::to_string(gw)},
              {"target", a.target}, {"k", a.k},               {"cls_tokens", cls}};

  double k = 1.0;
  Tensor grid_out = parts.grid;
  if (th == gh && tw == gw) {
    r.findings.push_back("target equals the source grid; embedding copied unchanged");
  } else {
    if (a.k == "auto") {
      // Square grids are measured on their own geometry; otherwise fall
      // back to the canonical protocol.
      const bool square = gh == gw && th == tw && th > gh;
      auto cfg = square ? varcal::MeasureConfig::for_grid(method, gh, th)
                        : varcal::MeasureConfig::canonical(method, interp::Dims::two_d);
      cfg.seed = a.seed;
      k = varcal::measure_k(cfg).k;
      if (!square)
        r.findings.push_back("grid is not a square upsample: k measured with the canonical 64x64 protocol");
    } else if (a.k == "empirical") {
      k = varcal::empirical_k(parts.grid, spec);
    } else {
      try {
        std::size_t used = 0;
        k = std::stod(a.k, &used);
        if (used != a.k.size())
          throw std::invalid_argument(a.k);
      } catch (const std::exception &) {
        throw UsageError("--k expects auto, empirical or a number, got '" + a.k + "'");
      }
      if (!(k > 0.0))
        throw UsageError("--k must be > 0");
    }
    grid_out = varcal::rescale_pe(parts.grid, spec, k);
  }

  const Stats before = stats(parts.grid), after = stats(grid_out);
  const Tensor result = flat ? varcal::join_cls_token({parts.cls, grid_out}) : grid_out;
  try {
    vspe::save(a.out, result);
  } catch (const std::exception &e) {
    throw DataError(e.what());
  }

  r.add("k", k);
  r.add("factor", 1.0 / std::sqrt(k));
  add_stats(r, "input_", before);
  add_stats(r, "output_", after);
  r.add("var_ratio", before.variance > 0.0 ? after.variance / before.variance : 1.0);
  const auto mean_check = varcal::pe_mean_report(parts.grid);
  if (mean_check.violates_zero_mean)
    r.findings.push_back("embedding mean is far from zero; rescaling also scales the mean");
  return o;
}

// ---------------------------------------------------------------------------

struct AuditArgs {
  std::string config;
  bool empirical = false;
  std::size_t trials = 400;
  std::uint64_t seed = 0;
  std::string k_table = "published";
};

Outcome audit_cmd(const AuditArgs &a) {
  if (!std::filesystem::exists(a.config))
    throw DataError("cannot open config " + a.config);
  const auto cfg = pipeline::load_pipeline(a.config);
  auditor::KTable table;
  if (a.k_table == "published")
    table = auditor::KTable::published();
  else if (a.k_table == "measured")
    table = auditor::KTable::measured(a.seed);
  else
    throw UsageError("--k-table expects published or measured");

  Outcome o;
  auto &r = o.report;
  r.command = "audit";
  r.seed = a.seed;
  r.inputs = {{"config", a.config}, {"k_table", a.k_table}, {"empirical", a.empirical}};
  if (a.empirical)
    r.inputs["trials"] = a.trials;

  auditor::AuditReport rep;
  try {
    if (a.empirical) {
      if (a.trials < 100)
        throw UsageError("--trials must be >= 100");
      rep = auditor::verify_empirically(cfg, table, a.seed, a.trials);
    } else {
      rep = auditor::audit(cfg, table);
    }
  } catch (const auditor::AuditError &e) {
    r.findings = e.findings();
    r.add("consistent", 0.0);
    o.code = exit_shift;
    return o;
  }

  r.add("var_mult_img_train", rep.var_mult_img_train);
  r.add("var_mult_img_test", rep.var_mult_img_test);
  r.add("var_mult_pe_train", rep.var_mult_pe_train);
  r.add("var_mult_pe_test", rep.var_mult_pe_test);
  r.add("ratio_train", rep.ratio_train);
  r.add("ratio_test", rep.ratio_test);
  r.add("consistent", rep.consistent ? 1.0 : 0.0);
  r.add("pe_consistent", rep.pe_consistent ? 1.0 : 0.0);
  r.add("recommended_rescale", rep.recommended_rescale);
  if (rep.empirical) {
    r.add("measured_img_train", rep.measured.img_train);
    r.add("measured_img_test", rep.measured.img_test);
    r.add("measured_pe_test", rep.measured.pe_test);
    r.add("divergences", static_cast<double>(rep.divergences.size()));
  }
  r.findings = rep.findings;
  r.findings.push_back(rep.consistent ? "verdict: consistent" : "verdict: shift detected");
  o.code = rep.consistent ? exit_ok : exit_shift;
  return o;
}

// ---------------------------------------------------------------------------

struct AugmentArgs {
  std::string in, with, op, out;
  std::uint64_t seed = 0;
};

Outcome augment_cmd(const AugmentArgs &a) {
  const auto op = pipeline::parse_op(std::string_view(a.op));
  const Tensor image = load_tensor(a.in);
  std::optional<Tensor> partner;
  if (!a.with.empty())
    partner = load_tensor(a.with);
  if (augment::needs_partner(op) && !partner)
    throw UsageError(augment::op_name(op) + " needs a partner tensor (--with)");

  SeededRng rng(a.seed, op.stream_id);
  Tensor result = image;
  std::optional<double> erased;
  try {
    if (const auto *e = std::get_if<augment::EraseOp>(&op.kind)) {
      auto traced = augment::random_erase_traced(image, e->params, rng);
      erased = traced.erased_fraction;
      result = std::move(traced.image);
    } else {
      result = augment::apply(op, image, partner ? &*partner : nullptr, rng);
    }
  } catch (const std::invalid_argument &e) {
    throw DataError(e.what());
  }
  try {
    vspe::save(a.out, result);
  } catch (const std::exception &e) {
    throw DataError(e.what());
  }

  Outcome o;
  auto &r = o.report;
  r.command = "augment";
  r.seed = a.seed;
  r.inputs = {{"in", a.in}, {"op", pipeline::to_json(op)}, {"out", a.out}};
  if (partner)
    r.inputs["with"] = a.with;
  const Stats pre = stats(image), post = stats(result);
  add_stats(r, "pre_", pre);
  add_stats(r, "post_", post);
  const double ratio = pre.variance > 0.0 ? post.variance / pre.variance : 1.0;
  r.add("var_ratio", ratio);
  r.add("var_drop", 1.0 - ratio);
  if (erased)
    r.add("erased_fraction", *erased);
  if (std::abs(ratio - 1.0) > 0.02)
    r.findings.push_back(augment::op_name(op) + " changed the variance by factor " +
                         std::to_string(ratio));
  return o;
}

// ---------------------------------------------------------------------------

Outcome simulate_cmd(std::uint64_t seed, const std::vector<double> &factors) {
  vitfront::SimulationOptions opts;
  opts.seed = seed;
  if (!factors.empty())
    opts.scale_factors = factors;
  for (double c : opts.scale_factors)
    if (!(c > 1.0))
      throw UsageError("--scale-factors must all be > 1");

  Outcome o;
  auto &r = o.report;
  r.command = "simulate";
  r.seed = seed;
  r.inputs = {{"scale_factors", opts.scale_factors}};
  bool all = true;
  for (const auto &check : vitfront::run_simulation(opts)) {
    for (const auto &[k, v] : check.values)
      r.add(check.name + "." + k, v);
    r.add(check.name + ".passed", check.passed ? 1.0 : 0.0);
    r.findings.push_back((check.passed ? "PASS " : "FAIL ") + check.name);
    all = all && check.passed;
  }
  o.code = all ? exit_ok : exit_property_failure;
  return o;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string shape, dist, out;
  std::vector<double> params;
  std::uint64_t seed = 0;
};

Outcome gen_cmd(const GenArgs &a) {
  Shape shape;
  try {
    shape = parse_shape(a.shape);
  } catch (const std::invalid_argument &e) {
    throw UsageError(e.what());
  }
  const auto &p = a.params;
  auto param = [&](std::size_t i, double fallback) { return i < p.size() ? p[i] : fallback; };
  SeededRng rng(a.seed, 0);
  Tensor t = Tensor::zeros({1});
  if (a.dist == "normal") {
    if (p.size() > 2 || !(param(1, 1.0) >= 0.0))
      throw UsageError("normal takes [mean [stddev >= 0]]");
    t = randn(shape, param(0, 0.0), param(1, 1.0), rng);
  } else if (a.dist == "uniform") {
    if (p.size() > 2 || !(param(0, 0.0) < param(1, 1.0)))
      throw UsageError("uniform takes [lo [hi]] with lo < hi");
    t = rand_uniform(shape, param(0, 0.0), param(1, 1.0), rng);
  } else if (a.dist == "constant") {
    if (p.size() != 1)
      throw UsageError("constant takes exactly one value");
    t = Tensor::filled(shape, p[0]);
  } else {
    throw UsageError("unknown distribution '" + a.dist + "' (normal, uniform, constant)");
  }
  try {
    vspe::save(a.out, t);
  } catch (const std::exception &e) {
    throw DataError(e.what());
  }

  Outcome o;
  auto &r = o.report;
  r.command = "gen";
  r.seed = a.seed;
  r.inputs = {{"shape", shape_to_string(shape)}, {"dist", a.dist}, {"params", p}, {"out", a.out}};
  const Stats s = stats(t);
  add_stats(r, "", s);
  r.add("count", static_cast<double>(s.count));
  return o;
}

Outcome stats_cmd(const std::string &path) {
  const Tensor t = load_tensor(path);
  Outcome o;
  auto &r = o.report;
  r.command = "stats";
  r.inputs = {{"file", path}, {"shape", shape_to_string(t.shape())}};
  const Stats s = stats(t);
  add_stats(r, "", s);
  r.add("std", s.stddev());
  r.add("count", static_cast<double>(s.count));
  return o;
}

} // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  apply_thread_cap();

  CLI::App app{"Positional-embedding variance shift toolkit", "embshift"};
  app.require_subcommand(1);
  bool json_output = false;
  app.add_flag("--json", json_output, "Print the report as JSON");

  MeasureArgs measure;
  auto *m = app.add_subcommand("measure-k", "Monte-Carlo variance ratio k of an upsampler");
  m->add_option("--method", measure.method, "nearest, bilinear or bicubic")->capture_default_str();
  m->add_option("--dims", measure.dims, "1d or 2d")->capture_default_str();
  m->add_option("--scale", measure.scale, "Upsampling factor (> 1)")->capture_default_str();
  m->add_option("--size", measure.size, "Per-side input length (default 4096 in 1d, 64 in 2d)");
  m->add_option("--trials", measure.trials)->capture_default_str();
  m->add_option("--seed", measure.seed)->capture_default_str();

  RescaleArgs rescale;
  auto *rp = app.add_subcommand("rescale-pe", "Upsample a positional embedding and divide by sqrt(k)");
  rp->add_option("--in", rescale.in)->required();
  rp->add_option("--out", rescale.out)->required();
  rp->add_option("--method", rescale.method)->capture_default_str();
  rp->add_option("--grid", rescale.grid, "Source grid HxW ([N, D] inputs)");
  rp->add_option("--target", rescale.target, "Target grid HxW")->required();
  rp->add_option("--k", rescale.k, "auto, empirical or a value")->capture_default_str();
  rp->add_option("--cls-tokens", rescale.cls_tokens, "Leading non-grid tokens (0 or 1)")
      ->check(CLI::Range(0, 1));
  rp->add_option("--seed", rescale.seed)->capture_default_str();

  AuditArgs audit;
  auto *au = app.add_subcommand("audit", "Audit a train/test pipeline config for variance shift");
  au->add_option("config", audit.config)->required();
  au->add_flag("--empirical", audit.empirical, "Cross-check with Monte-Carlo runs");
  au->add_option("--trials", audit.trials)->capture_default_str();
  au->add_option("--seed", audit.seed)->capture_default_str();
  au->add_option("--k-table", audit.k_table, "published or measured")->capture_default_str();

  AugmentArgs aug;
  auto *ag = app.add_subcommand("augment", "Apply one augmentation op to a tensor file");
  ag->add_option("--in", aug.in)->required();
  ag->add_option("--with", aug.with, "Partner tensor for mixup/cutmix");
  ag->add_option("--op", aug.op, "Op as JSON, e.g. {\"op\":\"mixup\",\"lambda\":0.3}")->required();
  ag->add_option("--seed", aug.seed)->capture_default_str();
  ag->add_option("--out", aug.out)->required();

  std::uint64_t sim_seed = 0;
  std::vector<double> factors;
  auto *sim = app.add_subcommand("simulate", "Run the ViT front-end property checks");
  sim->add_option("--seed", sim_seed)->capture_default_str();
  sim->add_option("--scale-factors", factors, "Comma-separated input scale factors")
      ->delimiter(',');

  GenArgs gen;
  auto *g = app.add_subcommand("gen", "Write a random tensor file");
  g->add_option("shape", gen.shape, "e.g. 4096 or 64x64x3")->required();
  g->add_option("dist", gen.dist, "normal, uniform or constant")->required();
  g->add_option("params", gen.params, "Distribution parameters");
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--out", gen.out)->required();

  std::string stats_path;
  auto *st = app.add_subcommand("stats", "Print mean and variance of a tensor file");
  st->add_option("file", stats_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }

  Outcome outcome;
  try {
    if (*m)
      outcome = measure_k_cmd(measure);
    else if (*rp)
      outcome = rescale_pe_cmd(rescale);
    else if (*au)
      outcome = audit_cmd(audit);
    else if (*ag)
      outcome = augment_cmd(aug);
    else if (*sim)
      outcome = simulate_cmd(sim_seed, factors);
    else if (*g)
      outcome = gen_cmd(gen);
    else
      outcome = stats_cmd(stats_path);
  } catch (const UsageError &e) {
    err << "usage error: " << e.what() << '\n';
    return exit_usage;
  } catch (const pipeline::SchemaError &e) {
    err << "schema error:\n";
    for (const auto &p : e.problems())
      err << "  " << p << '\n';
    return exit_usage;
  } catch (const DataError &e) {
    err << "error: " << e.what() << '\n';
    return exit_data_error;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return exit_data_error;
  }

  if (json_output)
    out << to_json(outcome.report).dump(2) << '\n';
  else
    out << to_text(outcome.report);
  return outcome.code;
}

} // namespace embshift::cli
