#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "metaassist/auxiliary.hpp"
#include "metaassist/data.hpp"
#include "metaassist/metrics.hpp"
#include "metaassist/model.hpp"
#include "metaassist/optim.hpp"
#include "metaassist/weighting.hpp"

namespace metaassist {

struct SchemeSpec {
  SchemeKind kind = SchemeKind::S2;
  double alpha = 0.4;  // FixedAlpha only
  int hidden = kDefaultWeightingHidden;
  double init_scale = 0.01;
  /// Prior-knowledge start for S1: every alpha_s begins here.
  std::optional<double> init_alpha;

  bool operator==(const SchemeSpec&) const = default;
};

/// Parses "fixed:<alpha>", "s1", "s2", "s3" or "s3d".
inline SchemeSpec parse_scheme_spec(std::string_view text, SchemeSpec base = {}) {
  if (text.rfind("fixed:", 0) == 0) {
    base.kind = SchemeKind::FixedAlpha;
    try {
      std::size_t used = 0;
      base.alpha = std::stod(std::string(text.substr(6)), &used);
      if (used != text.size() - 6) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("bad fixed alpha in scheme '" + std::string(text) + "'");
    }
    if (!(base.alpha >= 0.0 && base.alpha <= 1.0)) throw ConfigError("fixed alpha must lie in [0,1]");
    return base;
  }
  if (text == "fixed") throw ConfigError("scheme 'fixed' needs a value, e.g. fixed:0.4");
  base.kind = parse_scheme_kind(text);
  return base;
}

inline std::string format_scheme_spec(const SchemeSpec& s) {
  if (s.kind != SchemeKind::FixedAlpha) return scheme_name(s.kind);
  char buf[32];
  std::snprintf(buf, sizeof buf, "fixed:%.2f", s.alpha);
  return buf;
}

inline WeightingScheme make_scheme(const SchemeSpec& spec, std::size_t num_slots, std::uint64_t seed) {
  switch (spec.kind) {
    case SchemeKind::FixedAlpha: return WeightingScheme::fixed_alpha(spec.alpha);
    case SchemeKind::S1: return WeightingScheme::slotwise(num_slots, spec.init_alpha.value_or(0.5));
    default: return WeightingScheme::instance_wise(spec.kind, num_slots, spec.hidden, seed, spec.init_scale);
  }
}

enum class AuxSource { Clean, Validation };

struct TrainConfig {
  SchemeSpec scheme;
  Architecture architecture = Architecture::Linear;
  int hidden_width = 32;
  double init_scale = 0.01;
  std::size_t batch_train = 32;  // m
  std::size_t batch_meta = 8;    // k
  std::size_t epochs = 10;
  /// Total primary steps; overrides epochs when set.
  std::optional<std::size_t> steps;
  /// Step size of the interim update, always plain descent.
  double inner_lr = 2.0;
  OptimizerSpec primary_optimizer{OptimizerKind::Momentum, 2.0};
  double warmup_fraction = 0.1;
  OptimizerSpec meta_optimizer{OptimizerKind::Adam, 0.005};
  AuxConfig aux;
  AuxSource aux_source = AuxSource::Validation;
  std::uint64_t seed = 0;
  bool evaluate_epochs = true;

  void validate() const {
    if (batch_train < 1 || batch_meta < 1) throw ConfigError("batch sizes must be >= 1");
    if (!(inner_lr >= 0.0)) throw ConfigError("inner_lr must be >= 0");
    if (!(primary_optimizer.learning_rate >= 0.0)) throw ConfigError("primary learning rate must be >= 0");
    if (!(meta_optimizer.learning_rate >= 0.0)) throw ConfigError("meta learning rate must be >= 0");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup_fraction must lie in [0,1)");
    if (aux.batch_size < 1) throw ConfigError("aux batch size must be >= 1");
  }

  bool operator==(const TrainConfig&) const = default;
};

// --- per-batch machinery ---

/// Forward passes, losses, loss features and weights of one training batch,
/// all under a single parameter setting. Indexed [i * |S| + s].
struct BatchEvaluation {
  std::vector<ForwardPass> passes;
  std::vector<double> l_vanilla;
  std::vector<double> l_pseudo;
  std::vector<LossFeatures> features;
  std::vector<WeightPair> weights;
};

inline BatchEvaluation evaluate_batch(const PrimaryModel& model, const Batch& batch, const WeightingScheme& scheme) {
  const auto slots = model.shape().num_slots();
  BatchEvaluation ev;
  ev.passes.reserve(batch.size());
  ev.l_vanilla.reserve(batch.size() * slots);
  ev.l_pseudo.reserve(batch.size() * slots);
  ev.features.reserve(batch.size() * slots);
  ev.weights.reserve(batch.size() * slots);
  for (const Sample* smp : batch) {
    detail::require_pseudo(*smp);
    ev.passes.push_back(forward_pass(model, smp->context));
    const auto& probs = ev.passes.back().probs;
    for (std::size_t s = 0; s < slots; ++s) {
      const double lv = slot_loss(probs[s], smp->vanilla_labels[s]);
      const double lp = slot_loss(probs[s], (*smp->pseudo_labels)[s]);
      if (!std::isfinite(lv) || !std::isfinite(lp))
        throw DivergenceError("per-slot loss is non-finite (sample " + std::to_string(smp->sample_id) + ", slot " +
                              std::to_string(s) + ")");
      ev.l_vanilla.push_back(lv);
      ev.l_pseudo.push_back(lp);
      ev.features.push_back(loss_features(lv, lp));
      ev.weights.push_back(compute_weights(scheme, ev.features.back(), s));
    }
  }
  return ev;
}

/// Weighted loss and its gradient from cached passes; weights are constants.
inline std::pair<double, ParameterVector> weighted_loss_and_grad(const PrimaryModel& model, const Batch& batch,
                                                                 const std::vector<ForwardPass>& passes,
                                                                 std::span<const WeightPair> weights) {
  const auto slots = model.shape().num_slots();
  ParameterVector grad(model.num_parameters(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size() * slots);
  double total = 0.0;
  std::vector<double> residual;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& smp = *batch[i];
    const ForwardPass& fp = passes[i];
    for (std::size_t s = 0; s < slots; ++s) {
      const WeightPair& w = weights[i * slots + s];
      const int pseudo = (*smp.pseudo_labels)[s];
      total += w.pseudo * slot_loss(fp.probs[s], pseudo) + w.vanilla * slot_loss(fp.probs[s], smp.vanilla_labels[s]);
      residual.assign(fp.probs[s].size(), 0.0);
      add_label_residual(fp.probs[s], pseudo, w.pseudo, residual);
      add_label_residual(fp.probs[s], smp.vanilla_labels[s], w.vanilla, residual);
      accumulate_slot_gradient(model, fp, s, residual, scale, grad);
    }
  }
  return {total * scale, std::move(grad)};
}

inline void check_finite_loss(double loss, const char* what, std::size_t step) {
  if (!std::isfinite(loss))
    throw DivergenceError(std::string(what) + " is non-finite at step " + std::to_string(step));
}

/// One plain-descent step of size eta from theta; theta is untouched.
inline PrimaryModel interim_step(const PrimaryModel& theta, const Batch& batch, const WeightingScheme& scheme,
                                 double eta) {
  const auto ev = evaluate_batch(theta, batch, scheme);
  auto [loss, grad] = weighted_loss_and_grad(theta, batch, ev.passes, ev.weights);
  check_finite_loss(loss, "interim training loss", 0);
  PrimaryModel out = theta;
  auto p = out.parameters();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= eta * grad[i];
  return out;
}

struct HypergradientResult {
  ParameterVector grad;      // d L_val(theta_hat(w)) / dw
  double meta_loss = 0.0;    // L_val at theta_hat
  double train_loss = 0.0;   // weighted loss at theta (interim objective)
  PrimaryModel interim;      // theta_hat
};

/// Exact gradient of w -> L_val(theta - eta * grad_theta L_train(theta; w)).
///
/// With loss features held fixed, L_train is linear in the weights, so
///   dL_val/dw = -eta/(m|S|) sum_{i,s} [ <g_val, grad l_pseudo> da_pseudo/dw
///                                      + <g_val, grad l_vanilla> da_vanilla/dw ]
/// where g_val is the validation gradient at theta_hat. The inner products
/// use slot_sensitivity, so no Hessian or per-example gradient is formed.
inline HypergradientResult hypergradient(const PrimaryModel& theta, const Batch& batch_train, const Batch& batch_meta,
                                         const WeightingScheme& scheme, double eta) {
  HypergradientResult r;
  const auto slots = theta.shape().num_slots();
  const auto ev = evaluate_batch(theta, batch_train, scheme);
  auto [train_loss, grad] = weighted_loss_and_grad(theta, batch_train, ev.passes, ev.weights);
  check_finite_loss(train_loss, "interim training loss", 0);
  r.train_loss = train_loss;
  r.interim = theta;
  {
    auto p = r.interim.parameters();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= eta * grad[i];
  }
  auto [meta_loss, g_val] = hard_label_loss_and_grad(r.interim, batch_meta, LabelSource::Vanilla);
  check_finite_loss(meta_loss, "meta loss", 0);
  r.meta_loss = meta_loss;

  r.grad.assign(scheme.num_parameters(), 0.0);
  if (scheme.num_parameters() == 0 || eta == 0.0) return r;
  const double coef = -eta / static_cast<double>(batch_train.size() * slots);
  std::vector<double> residual;
  for (std::size_t i = 0; i < batch_train.size(); ++i) {
    const Sample& smp = *batch_train[i];
    const ForwardPass& fp = ev.passes[i];
    for (std::size_t s = 0; s < slots; ++s) {
      const auto u = slot_sensitivity(theta, fp, s, g_val);
      auto dot_residual = [&](int label) {
        residual.assign(fp.probs[s].size(), 0.0);
        add_label_residual(fp.probs[s], label, 1.0, residual);
        double c = 0.0;
        for (std::size_t v = 0; v < u.size(); ++v) c += residual[v] * u[v];
        return c;
      };
      const double c_pseudo = dot_residual((*smp.pseudo_labels)[s]);
      const double c_vanilla = dot_residual(smp.vanilla_labels[s]);
      scheme.accumulate_vjp(ev.features[i * slots + s], s, coef * c_pseudo, coef * c_vanilla, r.grad);
    }
  }
  return r;
}

/// One optimizer step on the scheme parameters.
inline void meta_update(WeightingScheme& scheme, std::span<const double> hypergrad, Optimizer& optimizer) {
  if (hypergrad.size() != scheme.num_parameters()) throw ConfigError("meta_update: gradient shape mismatch");
  if (scheme.num_parameters() == 0) return;
  optimizer.step(scheme.parameters(), hypergrad);
}

struct PrimaryUpdateResult {
  double train_loss = 0.0;
  std::vector<WeightPair> weights;
};

/// Recompute losses, features and weights under theta with the
/// (already updated) scheme, then take one primary-optimizer step from theta.
inline PrimaryUpdateResult primary_update(PrimaryModel& theta, const Batch& batch, const WeightingScheme& scheme,
                                          Optimizer& optimizer, double lr) {
  auto ev = evaluate_batch(theta, batch, scheme);
  auto [loss, grad] = weighted_loss_and_grad(theta, batch, ev.passes, ev.weights);
  check_finite_loss(loss, "training loss", 0);
  optimizer.step(theta.parameters(), grad, lr);
  return {loss, std::move(ev.weights)};
}

// --- run log ---

struct StepRecord {
  std::size_t step = 0;
  double train_loss = 0.0;
  std::optional<double> meta_loss;
  std::vector<double> mean_pseudo_weight;  // per slot
  std::vector<double> min_pseudo_weight;
  std::vector<double> max_pseudo_weight;
  std::vector<double> mean_vanilla_weight;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t last_step = 0;
  double mean_train_loss = 0.0;
  std::optional<double> mean_meta_loss;
  MetricsReport validation;
  MetricsReport test;
  double train_seconds = 0.0;  // wall clock, excluded from the deterministic log
};

struct RunLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  MetricsReport initial_validation;
  MetricsReport initial_test;
  std::size_t gradient_evaluations = 0;
  std::size_t best_epoch = 0;
};

inline StepRecord make_step_record(std::size_t step, double train_loss, std::optional<double> meta_loss,
                                   const std::vector<WeightPair>& weights, std::size_t slots) {
  StepRecord r;
  r.step = step;
  r.train_loss = train_loss;
  r.meta_loss = meta_loss;
  r.mean_pseudo_weight.assign(slots, 0.0);
  r.mean_vanilla_weight.assign(slots, 0.0);
  r.min_pseudo_weight.assign(slots, std::numeric_limits<double>::infinity());
  r.max_pseudo_weight.assign(slots, -std::numeric_limits<double>::infinity());
  const std::size_t n = weights.size() / slots;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < slots; ++s) {
      const WeightPair& w = weights[i * slots + s];
      r.mean_pseudo_weight[s] += w.pseudo;
      r.mean_vanilla_weight[s] += w.vanilla;
      r.min_pseudo_weight[s] = std::min(r.min_pseudo_weight[s], w.pseudo);
      r.max_pseudo_weight[s] = std::max(r.max_pseudo_weight[s], w.pseudo);
    }
  for (std::size_t s = 0; s < slots; ++s) {
    r.mean_pseudo_weight[s] /= static_cast<double>(n);
    r.mean_vanilla_weight[s] /= static_cast<double>(n);
  }
  return r;
}

inline Json to_json(const StepRecord& r) {
  Json j;
  j["record"] = "step";
  j["step"] = r.step;
  j["train_loss"] = r.train_loss;
  j["meta_loss"] = r.meta_loss ? Json(*r.meta_loss) : Json(nullptr);
  j["mean_pseudo_weight"] = r.mean_pseudo_weight;
  j["min_pseudo_weight"] = r.min_pseudo_weight;
  j["max_pseudo_weight"] = r.max_pseudo_weight;
  j["mean_vanilla_weight"] = r.mean_vanilla_weight;
  return j;
}

inline Json to_json(const EpochRecord& r) {
  Json j;
  j["record"] = "epoch";
  j["epoch"] = r.epoch;
  j["last_step"] = r.last_step;
  j["mean_train_loss"] = r.mean_train_loss;
  j["mean_meta_loss"] = r.mean_meta_loss ? Json(*r.mean_meta_loss) : Json(nullptr);
  j["validation"] = to_json(r.validation);
  j["test"] = to_json(r.test);
  return j;
}

/// Line-delimited run log; deterministic (no wall-clock fields).
inline void write_run_log(std::ostream& out, const RunLog& log) {
  Json init;
  init["record"] = "initial";
  init["validation"] = to_json(log.initial_validation);
  init["test"] = to_json(log.initial_test);
  out << init.dump() << '\n';
  std::size_t e = 0;
  for (const auto& s : log.steps) {
    out << to_json(s).dump() << '\n';
    if (e < log.epochs.size() && log.epochs[e].last_step == s.step) out << to_json(log.epochs[e++]).dump() << '\n';
  }
  for (; e < log.epochs.size(); ++e) out << to_json(log.epochs[e]).dump() << '\n';
  Json summary;
  summary["record"] = "summary";
  summary["gradient_evaluations"] = log.gradient_evaluations;
  summary["best_epoch"] = log.best_epoch;
  out << summary.dump() << '\n';
}

// --- training loops ---

/// Divergence during training; carries the last parameters with finite loss.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, PrimaryModel last_good)
      : DivergenceError(what), last_good_(std::move(last_good)) {}
  const PrimaryModel& last_good() const noexcept { return last_good_; }

 private:
  PrimaryModel last_good_;
};

/// Primary-model state carried across steps j: parameters, scheme and both
/// optimizers. One call to step() is a full meta step plus the primary update.
class MetaTrainer {
 public:
  /// Called with the interim model after the meta update, before the primary update.
  using InterimHook = std::function<void(PrimaryModel&)>;

  MetaTrainer(PrimaryModel theta, WeightingScheme scheme, const TrainConfig& cfg, std::size_t total_steps)
      : cfg_(cfg),
        theta_(std::move(theta)),
        scheme_(std::move(scheme)),
        primary_opt_(cfg.primary_optimizer, theta_.num_parameters()),
        meta_opt_(cfg.meta_optimizer, scheme_.num_parameters()),
        schedule_{cfg.primary_optimizer.learning_rate, std::max<std::size_t>(total_steps, 1), cfg.warmup_fraction} {}

  bool has_meta_step() const noexcept { return scheme_.num_parameters() > 0; }

  StepRecord step(const Batch& train, const Batch* meta, const InterimHook& hook = {}) {
    std::optional<double> meta_loss;
    if (has_meta_step()) {
      if (!meta) throw ConfigError("meta step requires a meta batch");
      auto hg = hypergradient(theta_, train, *meta, scheme_, cfg_.inner_lr);
      gradient_evaluations_ += 2;
      meta_loss = hg.meta_loss;
      meta_update(scheme_, hg.grad, meta_opt_);
      if (hook) hook(hg.interim);
    }
    auto upd = primary_update(theta_, train, scheme_, primary_opt_, schedule_.at(step_));
    gradient_evaluations_ += 1;
    auto rec = make_step_record(step_, upd.train_loss, meta_loss, upd.weights, theta_.shape().num_slots());
    ++step_;
    return rec;
  }

  const PrimaryModel& model() const noexcept { return theta_; }
  const WeightingScheme& scheme() const noexcept { return scheme_; }
  std::size_t gradient_evaluations() const noexcept { return gradient_evaluations_; }
  std::size_t steps_taken() const noexcept { return step_; }

 private:
  TrainConfig cfg_;
  PrimaryModel theta_;
  WeightingScheme scheme_;
  Optimizer primary_opt_;
  Optimizer meta_opt_;
  LinearWarmupSchedule schedule_;
  std::size_t step_ = 0;
  std::size_t gradient_evaluations_ = 0;
};

struct TrainResult {
  PrimaryModel model;
  WeightingScheme scheme;
  PrimaryModel best_model;
  WeightingScheme best_scheme;
  MetricsReport best_validation;
  MetricsReport best_test;
  RunLog log;
  /// Training split actually used (pseudo labels filled in).
  Dataset train;
  std::optional<PrimaryModel> aux_model;
};

/// Pseudo labels for the training split, from the auxiliary model
/// unless the corpus already carries them.
inline Dataset ensure_pseudo_labels(const Corpus& corpus, const TrainConfig& cfg, std::optional<PrimaryModel>* aux_out) {
  const bool have = !corpus.train.empty() &&
                    std::all_of(corpus.train.begin(), corpus.train.end(), [](const Sample& s) { return s.pseudo_labels.has_value(); });
  if (have) return corpus.train;
  const Dataset& source = cfg.aux_source == AuxSource::Validation ? corpus.validation : corpus.clean;
  auto aux = train_auxiliary(source, corpus.schema, cfg.aux, cfg.seed);
  Dataset out = generate_pseudo_labels(aux.model, corpus.train);
  if (aux_out) *aux_out = std::move(aux.model);
  return out;
}

inline std::size_t total_steps(const TrainConfig& cfg, std::size_t train_size) {
  if (cfg.steps) return *cfg.steps;
  return cfg.epochs * ((train_size + cfg.batch_train - 1) / cfg.batch_train);
}

namespace detail {

/// Shared epoch/evaluation bookkeeping for every training loop. `step_fn`
/// performs one step and returns its record.
template <typename StepFn, typename SnapshotFn>
void run_epochs(const Corpus& corpus, const TrainConfig& cfg, std::size_t train_size, TrainResult& result,
                StepFn&& step_fn, SnapshotFn&& snapshot) {
  const std::size_t spe = (train_size + cfg.batch_train - 1) / cfg.batch_train;
  const std::size_t total = total_steps(cfg, train_size);
  RunLog& log = result.log;
  snapshot(result.best_model, result.best_scheme);
  if (cfg.evaluate_epochs) {
    log.initial_validation = evaluate(result.best_model, corpus.validation);
    log.initial_test = evaluate(result.best_model, corpus.test);
  }
  result.best_validation = log.initial_validation;
  result.best_test = log.initial_test;

  double loss_sum = 0.0, meta_sum = 0.0;
  std::size_t in_epoch = 0, meta_count = 0;
  auto clock_start = std::chrono::steady_clock::now();
  for (std::size_t j = 0; j < total; ++j) {
    StepRecord rec = step_fn(j);
    loss_sum += rec.train_loss;
    if (rec.meta_loss) {
      meta_sum += *rec.meta_loss;
      ++meta_count;
    }
    ++in_epoch;
    log.steps.push_back(std::move(rec));
    if ((j + 1) % spe == 0 || j + 1 == total) {
      EpochRecord e;
      e.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
      e.epoch = log.epochs.size() + 1;
      e.last_step = j;
      e.mean_train_loss = loss_sum / static_cast<double>(in_epoch);
      if (meta_count) e.mean_meta_loss = meta_sum / static_cast<double>(meta_count);
      PrimaryModel current;
      WeightingScheme current_scheme;
      snapshot(current, current_scheme);
      if (cfg.evaluate_epochs) {
        e.validation = evaluate(current, corpus.validation);
        e.test = evaluate(current, corpus.test);
        if (e.validation.jga > result.best_validation.jga) {
          result.best_validation = e.validation;
          result.best_test = e.test;
          result.best_model = current;
          result.best_scheme = current_scheme;
          log.best_epoch = e.epoch;
        }
      }
      log.epochs.push_back(std::move(e));
      loss_sum = meta_sum = 0.0;
      in_epoch = meta_count = 0;
      clock_start = std::chrono::steady_clock::now();
    }
  }
}

}  // namespace detail

/// Full learning algorithm: auxiliary training and pseudo labels when needed,
/// then the meta steps with per-epoch evaluation and best-checkpoint tracking.
inline TrainResult train_meta(const Corpus& corpus, const TrainConfig& cfg) {
  cfg.validate();
  TrainResult result;
  result.train = ensure_pseudo_labels(corpus, cfg, &result.aux_model);
  const int dim = corpus.generator_config.context_dim;
  const std::size_t total = total_steps(cfg, result.train.size());
  MetaTrainer trainer(init_model(shape_for(corpus.schema, dim, cfg.architecture, cfg.hidden_width), cfg.init_scale, cfg.seed),
                      make_scheme(cfg.scheme, corpus.schema.size(), cfg.seed), cfg, total);
  MinibatchSampler train_sampler(result.train, cfg.batch_train, make_rng(cfg.seed, Stream::TrainBatches));
  MinibatchSampler meta_sampler(corpus.validation, cfg.batch_meta, make_rng(cfg.seed, Stream::MetaBatches));
  auto step_fn = [&](std::size_t) {
    const Batch train = train_sampler.next();
    if (!trainer.has_meta_step()) return trainer.step(train, nullptr);
    const Batch meta = meta_sampler.next();
    try {
      return trainer.step(train, &meta);
    } catch (const DivergenceError& e) {
      throw TrainingDiverged(std::string(e.what()) + " (global step " + std::to_string(trainer.steps_taken()) + ")",
                             trainer.model());
    }
  };
  auto snapshot = [&](PrimaryModel& m, WeightingScheme& w) {
    m = trainer.model();
    w = trainer.scheme();
  };
  detail::run_epochs(corpus, cfg, result.train.size(), result, step_fn, snapshot);
  result.model = trainer.model();
  result.scheme = trainer.scheme();
  result.log.gradient_evaluations = trainer.gradient_evaluations();
  return result;
}

/// ASSIST baseline: single-loop training on alpha * pseudo + (1 - alpha) * vanilla.
inline TrainResult train_fixed_alpha(const Corpus& corpus, const TrainConfig& cfg, double alpha) {
  cfg.validate();
  TrainResult result;
  result.train = ensure_pseudo_labels(corpus, cfg, &result.aux_model);
  const int dim = corpus.generator_config.context_dim;
  const std::size_t total = total_steps(cfg, result.train.size());
  PrimaryModel theta = init_model(shape_for(corpus.schema, dim, cfg.architecture, cfg.hidden_width), cfg.init_scale, cfg.seed);
  const WeightingScheme scheme = WeightingScheme::fixed_alpha(alpha);
  Optimizer opt(cfg.primary_optimizer, theta.num_parameters());
  const LinearWarmupSchedule schedule{cfg.primary_optimizer.learning_rate, std::max<std::size_t>(total, 1),
                                      cfg.warmup_fraction};
  MinibatchSampler train_sampler(result.train, cfg.batch_train, make_rng(cfg.seed, Stream::TrainBatches));
  std::size_t grad_evals = 0;
  auto step_fn = [&](std::size_t j) {
    const Batch batch = train_sampler.next();
    PrimaryUpdateResult upd;
    try {
      upd = primary_update(theta, batch, scheme, opt, schedule.at(j));
    } catch (const DivergenceError& e) {
      throw TrainingDiverged(std::string(e.what()) + " (global step " + std::to_string(j) + ")", theta);
    }
    ++grad_evals;
    return make_step_record(j, upd.train_loss, std::nullopt, upd.weights, theta.shape().num_slots());
  };
  auto snapshot = [&](PrimaryModel& m, WeightingScheme& w) {
    m = theta;
    w = scheme;
  };
  detail::run_epochs(corpus, cfg, result.train.size(), result, step_fn, snapshot);
  result.model = theta;
  result.scheme = scheme;
  result.log.gradient_evaluations = grad_evals;
  return result;
}

/// Standard training on one label set (vanilla-only or pseudo-only).
inline TrainResult train_hard_labels(const Corpus& corpus, const TrainConfig& cfg, LabelSource source) {
  cfg.validate();
  TrainResult result;
  result.train = source == LabelSource::Pseudo ? ensure_pseudo_labels(corpus, cfg, &result.aux_model) : corpus.train;
  const int dim = corpus.generator_config.context_dim;
  const std::size_t total = total_steps(cfg, result.train.size());
  PrimaryModel theta = init_model(shape_for(corpus.schema, dim, cfg.architecture, cfg.hidden_width), cfg.init_scale, cfg.seed);
  Optimizer opt(cfg.primary_optimizer, theta.num_parameters());
  const LinearWarmupSchedule schedule{cfg.primary_optimizer.learning_rate, std::max<std::size_t>(total, 1),
                                      cfg.warmup_fraction};
  MinibatchSampler train_sampler(result.train, cfg.batch_train, make_rng(cfg.seed, Stream::TrainBatches));
  const auto slots = theta.shape().num_slots();
  auto step_fn = [&](std::size_t j) {
    const Batch batch = train_sampler.next();
    auto [loss, grad] = hard_label_loss_and_grad(theta, batch, source);
    if (!std::isfinite(loss)) throw TrainingDiverged("training loss is non-finite at step " + std::to_string(j), theta);
    opt.step(theta.parameters(), grad, schedule.at(j));
    const WeightPair w = source == LabelSource::Vanilla ? WeightPair{0.0, 1.0} : WeightPair{1.0, 0.0};
    return make_step_record(j, loss, std::nullopt, std::vector<WeightPair>(batch.size() * slots, w), slots);
  };
  auto snapshot = [&](PrimaryModel& m, WeightingScheme& w) {
    m = theta;
    w = WeightingScheme::fixed_alpha(source == LabelSource::Vanilla ? 0.0 : 1.0);
  };
  detail::run_epochs(corpus, cfg, result.train.size(), result, step_fn, snapshot);
  result.model = theta;
  result.scheme = WeightingScheme::fixed_alpha(source == LabelSource::Vanilla ? 0.0 : 1.0);
  result.log.gradient_evaluations = total;
  return result;
}

}  // namespace metaassist
