#include "embshift/auditor.hpp"

#include <cmath>
#include <cstdio>

#include "embshift/rng.hpp"
#include "embshift/tensor.hpp"
#include "embshift/varcal.hpp"

namespace embshift::auditor {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string describe(interp::Method m, interp::Dims d) {
  return interp::to_string(m) + " " + interp::to_string(d);
}

bool near_unit(const pipeline::InputStats &s) {
  return std::abs(s.mean) <= 0.05 && std::abs(s.variance - 1.0) <= 0.05;
}

double mix_multiplier(const std::optional<double> &lambda, const std::optional<double> &alpha,
                      double prob) {
  double m = 1.0;
  if (lambda)
    m = (*lambda) * (*lambda) + (1.0 - *lambda) * (1.0 - *lambda);
  else if (alpha)
    m = 1.0 - *alpha / (2.0 * *alpha + 1.0); // E over Beta(alpha, alpha)
  return prob * m + (1.0 - prob);
}

} // namespace

KTable KTable::published() {
  KTable t;
  for (const auto &row : varcal::published_table()) {
    t.set(row.method, interp::Dims::two_d, row.k_2d);
    t.set(row.method, interp::Dims::one_d, row.k_1d);
  }
  return t;
}

KTable KTable::measured(std::uint64_t seed, std::size_t trials) {
  KTable t;
  for (auto m : {interp::Method::nearest, interp::Method::bilinear, interp::Method::bicubic}) {
    for (auto d : {interp::Dims::one_d, interp::Dims::two_d}) {
      auto cfg = varcal::MeasureConfig::canonical(m, d);
      cfg.seed = seed;
      cfg.trials = trials;
      t.set(m, d, varcal::measure_k(cfg).k);
    }
  }
  return t;
}

void KTable::set(interp::Method m, interp::Dims d, double k) { table_[{m, d}] = k; }

bool KTable::contains(interp::Method m, interp::Dims d) const { return table_.count({m, d}) > 0; }

double KTable::at(interp::Method m, interp::Dims d) const {
  auto it = table_.find({m, d});
  if (it == table_.end())
    throw std::out_of_range("k table has no entry for " + describe(m, d));
  return it->second;
}

AuditError::AuditError(std::vector<std::string> findings)
    : std::runtime_error(findings.empty() ? std::string("audit failed") : findings.back()),
      findings_(std::move(findings)) {}

Propagation propagate(const std::vector<augment::AugmentOp> &ops, const KTable &ktable,
                      const std::optional<pipeline::InputStats> &input, const std::string &label,
                      std::size_t side) {
  Propagation out;
  std::optional<double> mean, var;
  if (input) {
    mean = input->mean;
    var = input->variance;
  }
  auto fail = [&](std::string msg) {
    out.findings.push_back(std::move(msg));
    throw AuditError(out.findings);
  };

  for (std::size_t i = 0; i < ops.size(); ++i) {
    const auto &op = ops[i];
    const std::string where = label + "[" + std::to_string(i) + "] " + augment::op_name(op);
    double m = 1.0;
    std::visit(
        [&](const auto &k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, augment::ResizeOp>) {
            if (!ktable.contains(k.method, k.dims))
              fail(where + ": no k for " + describe(k.method, k.dims));
            m = ktable.at(k.method, k.dims);
          } else if constexpr (std::is_same_v<K, augment::MixupOp>) {
            m = mix_multiplier(k.lambda, k.alpha, k.prob);
            out.findings.push_back("Mixup decreases variance: " + where +
                                   " multiplies the image variance by " + num(m));
          } else if constexpr (std::is_same_v<K, augment::ExtendedMixupOp>) {
            m = k.lambda_i * k.lambda_i + k.lambda_j * k.lambda_j;
            const double mean_factor = k.lambda_i + k.lambda_j;
            if (mean)
              *mean *= mean_factor;
            if (std::abs(m - 1.0) > 0.02 || std::abs(mean_factor - 1.0) > 0.02)
              out.findings.push_back(where + " scales the mean by " + num(mean_factor) +
                                     " and the variance by " + num(m));
          } else if constexpr (std::is_same_v<K, augment::EraseOp>) {
            if (!mean || !var)
              fail("non-unit input stats break pixel-mode erase variance conservation: " + where +
                   " needs measured input stats (norm.measured)");
            double fill_mean = 0.0, fill_var = 1.0;
            if (k.params.mode == augment::EraseMode::const_mode) {
              fill_var = 0.0;
            } else if (k.params.mode == augment::EraseMode::rand_mode) {
              out.findings.push_back(where +
                                     ": rand mode fills each region with one shared value; the "
                                     "multiplier assumes pixel mode");
            }
            const auto f = augment::expected_erased_fraction(k.params, side, side);
            const double d = *mean - fill_mean;
            const double erased = (1.0 - f.mean) * *var + f.mean * fill_var +
                                  (f.mean - f.mean_square) * d * d;
            const double rho = k.params.probability;
            const double v = rho * erased + (1.0 - rho) * *var;
            m = *var > 0.0 ? v / *var : 1.0;
            *mean = *mean * (1.0 - rho * f.mean) + rho * f.mean * fill_mean;
            if (k.params.mode == augment::EraseMode::pixel_mode && input && !near_unit(*input))
              out.findings.push_back(
                  "non-unit input stats break pixel-mode erase variance conservation: " + where +
                  " multiplies the image variance by " + num(m));
            else if (k.params.mode == augment::EraseMode::const_mode && std::abs(m - 1.0) > 0.005)
              out.findings.push_back(where + ": const mode lowers the image variance by factor " +
                                     num(m));
          } else if constexpr (std::is_same_v<K, augment::NormalizeOp>) {
            if (k.stats.name != augment::NormName::default_imagenet) {
              if (!k.measured_multiplier)
                fail(where + ": " + augment::to_string(k.stats.name) +
                     " stats have no analytic multiplier; set measured_multiplier");
              m = *k.measured_multiplier;
              mean.reset();
              out.findings.push_back(where + ": using measured multiplier " + num(m));
            }
          }
          // Crop and cutmix keep the variance.
        },
        op.kind);
    out.var_multiplier *= m;
    if (var)
      *var *= m;
  }
  out.mean = mean;
  return out;
}

bool within_tolerance(double a, double b) {
  return std::abs(std::log(a / b)) <= std::log(kConsistencyTolerance);
}

namespace {

bool crops(const augment::AugmentOp &op) {
  if (std::holds_alternative<augment::CropOp>(op.kind))
    return true;
  if (const auto *r = std::get_if<augment::ResizeOp>(&op.kind))
    return r->crop_back;
  return false;
}

AuditReport analytic(const pipeline::PipelineConfig &cfg, const KTable &ktable, std::size_t side) {
  AuditReport r;
  const auto input = cfg.norm.input_stats();
  std::vector<std::string> norm_findings;
  if (cfg.norm.stats.name != augment::NormName::default_imagenet) {
    const std::string name = augment::to_string(cfg.norm.stats.name);
    if (!input)
      norm_findings.push_back("non-unit input stats: " + name +
                              " normalization gives unknown mean and variance");
    else if (!near_unit(*input))
      norm_findings.push_back("non-unit input stats: " + name + " normalization gives mean " +
                              num(input->mean) + ", variance " + num(input->variance) +
                              "; mean and variance consistency are not guaranteed");
  }

  Propagation train, test;
  try {
    train = propagate(cfg.train, ktable, input, "train", side);
    test = propagate(cfg.test, ktable, input, "test", side);
  } catch (const AuditError &e) {
    auto all = norm_findings;
    all.insert(all.end(), e.findings().begin(), e.findings().end());
    throw AuditError(std::move(all));
  }

  r.findings = norm_findings;
  r.findings.insert(r.findings.end(), train.findings.begin(), train.findings.end());
  r.findings.insert(r.findings.end(), test.findings.begin(), test.findings.end());

  r.var_mult_img_train = train.var_multiplier;
  r.var_mult_img_test = test.var_multiplier;
  r.var_mult_pe_train = 1.0;
  const double k_pe = cfg.pe.in_test ? ktable.at(cfg.pe.method, cfg.pe.dims) : 1.0;
  r.var_mult_pe_test = k_pe * cfg.pe.rescale * cfg.pe.rescale;
  r.ratio_train = r.var_mult_img_train / r.var_mult_pe_train;
  r.ratio_test = r.var_mult_img_test / r.var_mult_pe_test;
  r.consistent = within_tolerance(r.ratio_train, r.ratio_test);
  r.pe_consistent = within_tolerance(r.var_mult_pe_test, r.var_mult_pe_train);
  r.recommended_rescale = std::sqrt(r.var_mult_pe_train / r.var_mult_pe_test);

  if (cfg.pe.in_test) {
    const std::string what = "PE upsampling in test (" + describe(cfg.pe.method, cfg.pe.dims) +
                             ") scales Var[P] by k = " + num(k_pe);
    if (r.pe_consistent && cfg.pe.rescale != 1.0)
      r.findings.push_back(what + "; compensated by rescale " + num(cfg.pe.rescale));
    else if (!r.pe_consistent)
      r.findings.push_back(what + "; rescale UP(P) by " + num(r.recommended_rescale));
  } else if (!r.pe_consistent) {
    r.findings.push_back("PE rescale " + num(cfg.pe.rescale) +
                         " applied without upsampling changes Var[P]");
  }

  for (std::size_t i = 0; i < cfg.test.size(); ++i) {
    if (!crops(cfg.test[i]))
      continue;
    if (cfg.scenario == pipeline::Scenario::segmentation)
      r.findings.push_back("test[" + std::to_string(i) +
                           "] crops in a segmentation test pipeline; treated as "
                           "variance-neutral (informational)");
    else
      r.findings.push_back("test[" + std::to_string(i) +
                           "] crops; treated as variance-neutral (informational)");
  }

  if (!r.consistent)
    r.findings.push_back("variance shift: Var[I]/Var[P] multiplier is " + num(r.ratio_train) +
                         " in train and " + num(r.ratio_test) + " in test");
  return r;
}

Tensor fresh_image(std::size_t side, const pipeline::InputStats &in, SeededRng &rng) {
  return randn({side, side, 3}, in.mean, std::sqrt(in.variance), rng);
}

// Runs ops[0, count) on a fresh image. Mix-type ops draw their partner by
// running the same prefix on an independent image.
struct Chain {
  const std::vector<augment::AugmentOp> &ops;
  std::size_t side;
  pipeline::InputStats input;

  std::pair<Tensor, Tensor> run(std::size_t count, const SeededRng &rng) const {
    SeededRng image_rng = rng.split(0);
    Tensor start = fresh_image(side, input, image_rng);
    Tensor x = start;
    for (std::size_t i = 0; i < count; ++i) {
      const auto &op = ops[i];
      SeededRng op_rng = rng.split(op.stream_id + 1);
      if (const auto *n = std::get_if<augment::NormalizeOp>(&op.kind)) {
        if (n->measured_multiplier)
          x = scale(x, std::sqrt(*n->measured_multiplier));
        continue;
      }
      if (augment::needs_partner(op)) {
        const Tensor partner = run(i, rng.split(0x9e37 + 7919 * (i + 1))).second;
        x = augment::apply(op, x, &partner, op_rng);
      } else {
        x = augment::apply(op, x, nullptr, op_rng);
      }
    }
    return {std::move(start), std::move(x)};
  }
};

double pe_trial(const pipeline::PeUpsample &pe, SeededRng &rng) {
  Tensor p = randn({16, 16, 8}, rng);
  Tensor q = p;
  if (pe.in_test) {
    const std::size_t h = pe.dims == interp::Dims::two_d ? 32 : 16;
    q = interp::upsample2d(p, interp::UpsampleSpec::two_d(pe.method, h, 32));
  }
  q = scale(q, pe.rescale);
  return stats(q).variance / stats(p).variance;
}

} // namespace

AuditReport audit(const pipeline::PipelineConfig &cfg, const KTable &ktable) {
  return analytic(cfg, ktable, kNominalSide);
}

AuditReport verify_empirically(const pipeline::PipelineConfig &cfg, const KTable &ktable,
                               std::uint64_t seed, std::size_t trials, std::size_t side) {
  if (trials < 100)
    throw std::invalid_argument("empirical verification needs at least 100 trials");
  AuditReport r = analytic(cfg, ktable, side);
  r.empirical = true;
  r.trials = trials;

  pipeline::InputStats input{0.0, 1.0};
  if (auto known = cfg.norm.input_stats())
    input = *known;
  else
    r.findings.push_back("synthetic images use unit stats; input stats are unknown");

  const Chain train{cfg.train, side, input};
  const Chain test{cfg.test, side, input};
  std::vector<double> in_tr(trials), out_tr(trials), in_te(trials), out_te(trials), pe(trials);
  const auto n = static_cast<std::ptrdiff_t>(trials);

#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const SeededRng trial(seed, static_cast<std::uint64_t>(t));
    auto [a, b] = train.run(cfg.train.size(), trial.split(1));
    in_tr[t] = stats(a).variance;
    out_tr[t] = stats(b).variance;
    auto [c, d] = test.run(cfg.test.size(), trial.split(2));
    in_te[t] = stats(c).variance;
    out_te[t] = stats(d).variance;
    SeededRng pe_rng = trial.split(3);
    pe[t] = pe_trial(cfg.pe, pe_rng);
  }

  double s_in_tr = 0, s_out_tr = 0, s_in_te = 0, s_out_te = 0, s_pe = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    s_in_tr += in_tr[t];
    s_out_tr += out_tr[t];
    s_in_te += in_te[t];
    s_out_te += out_te[t];
    s_pe += pe[t];
  }
  r.measured.img_train = s_out_tr / s_in_tr;
  r.measured.img_test = s_out_te / s_in_te;
  r.measured.pe_train = 1.0;
  r.measured.pe_test = s_pe / static_cast<double>(trials);

  auto compare = [&](const char *name, double a, double m) {
    if (std::abs(a - m) <= kDivergenceTolerance)
      return;
    r.divergences.push_back({name, a, m});
    r.findings.push_back(std::string("model/implementation divergence: ") + name +
                         " multiplier analytic " + num(a) + ", measured " + num(m));
  };
  compare("img_train", r.var_mult_img_train, r.measured.img_train);
  compare("img_test", r.var_mult_img_test, r.measured.img_test);
  compare("pe_test", r.var_mult_pe_test, r.measured.pe_test);
  return r;
}

} // namespace embshift::auditor
