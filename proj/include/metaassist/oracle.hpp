#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "metaassist/data.hpp"
#include "metaassist/meta_trainer.hpp"
#include "metaassist/metrics.hpp"
#include "metaassist/model.hpp"
#include "metaassist/weighting.hpp"

namespace metaassist {

// --- mean approximation error of combined labels against true labels ---

struct ErrorReport {
  double y_value = 0.0;
  std::vector<double> per_slot_y;
  /// Per-slot alpha evaluated; empty when per-(sample, slot) weights were used.
  std::vector<double> alpha_used;
};

namespace detail {

inline void require_pseudo_split(const Dataset& split) {
  if (split.empty()) throw ConfigError("approximation error: split is empty");
  for (const auto& s : split) require_pseudo(s);
}

inline double squared_distance_to_truth(const std::vector<double>& combined, int truth) {
  double d = 0.0;
  for (std::size_t v = 0; v < combined.size(); ++v) {
    const double diff = combined[v] - (static_cast<int>(v) == truth ? 1.0 : 0.0);
    d += diff * diff;
  }
  return d;
}

inline ErrorReport finish_report(std::vector<double> per_slot_sum, std::size_t n) {
  ErrorReport r;
  r.per_slot_y = std::move(per_slot_sum);
  for (auto& y : r.per_slot_y) y /= static_cast<double>(n);
  double total = 0.0;
  for (double y : r.per_slot_y) total += y;
  r.y_value = total / static_cast<double>(r.per_slot_y.size());
  return r;
}

}  // namespace detail

/// Y = mean over (sample, slot) of ||combined - onehot(true)||^2 with one
/// alpha per slot.
inline ErrorReport approximation_error(const Dataset& split, const SlotSchema& schema, std::span<const double> alphas) {
  detail::require_pseudo_split(split);
  if (alphas.size() != schema.size()) throw ConfigError("approximation_error: one alpha per slot");
  std::vector<double> sums(schema.size(), 0.0);
  for (const auto& smp : split)
    for (std::size_t s = 0; s < schema.size(); ++s) {
      const auto combined = combine_labels((*smp.pseudo_labels)[s], smp.vanilla_labels[s], schema[s].vocab_size,
                                           {alphas[s], 1.0 - alphas[s]});
      sums[s] += detail::squared_distance_to_truth(combined, smp.true_labels[s]);
    }
  auto r = detail::finish_report(std::move(sums), split.size());
  r.alpha_used.assign(alphas.begin(), alphas.end());
  return r;
}

/// Same functional with per-(sample, slot) weight pairs indexed [i * |S| + s].
inline ErrorReport approximation_error_pairs(const Dataset& split, const SlotSchema& schema,
                                             std::span<const WeightPair> weights) {
  detail::require_pseudo_split(split);
  if (weights.size() != split.size() * schema.size()) throw ConfigError("approximation_error: one pair per (sample, slot)");
  std::vector<double> sums(schema.size(), 0.0);
  for (std::size_t i = 0; i < split.size(); ++i)
    for (std::size_t s = 0; s < schema.size(); ++s) {
      const auto& smp = split[i];
      const auto combined = combine_labels((*smp.pseudo_labels)[s], smp.vanilla_labels[s], schema[s].vocab_size,
                                           weights[i * schema.size() + s]);
      sums[s] += detail::squared_distance_to_truth(combined, smp.true_labels[s]);
    }
  return detail::finish_report(std::move(sums), split.size());
}

/// Per-slot tallies of which label is correct. The error of a slot at alpha
/// is a quadratic in alpha determined by these counts.
struct SlotCaseCounts {
  std::size_t both_correct = 0;
  std::size_t pseudo_only = 0;        // n1: pseudo correct, vanilla wrong
  std::size_t vanilla_only = 0;       // n2: vanilla correct, pseudo wrong
  std::size_t both_wrong_same = 0;
  std::size_t both_wrong_differ = 0;  // n3
  std::size_t total = 0;

  /// Mean squared error of the slot's combined labels at alpha.
  double error_at(double alpha) const {
    const double b = 1.0 - alpha;
    const double sum = 2.0 * static_cast<double>(pseudo_only) * b * b +
                       2.0 * static_cast<double>(vanilla_only) * alpha * alpha +
                       2.0 * static_cast<double>(both_wrong_same) +
                       static_cast<double>(both_wrong_differ) * (alpha * alpha + b * b + 1.0);
    return sum / static_cast<double>(total);
  }

  /// Stationary point (2 n1 + n3) / (2 (n1 + n2 + n3)); none when the slot
  /// error does not depend on alpha.
  std::optional<double> analytic_alpha() const {
    const auto denom = pseudo_only + vanilla_only + both_wrong_differ;
    if (denom == 0) return std::nullopt;
    return static_cast<double>(2 * pseudo_only + both_wrong_differ) / (2.0 * static_cast<double>(denom));
  }
};

inline std::vector<SlotCaseCounts> case_counts(const Dataset& split, std::size_t num_slots) {
  detail::require_pseudo_split(split);
  std::vector<SlotCaseCounts> out(num_slots);
  for (const auto& smp : split)
    for (std::size_t s = 0; s < num_slots; ++s) {
      const int t = smp.true_labels[s], v = smp.vanilla_labels[s], p = (*smp.pseudo_labels)[s];
      auto& c = out[s];
      ++c.total;
      if (p == t && v == t)
        ++c.both_correct;
      else if (p == t)
        ++c.pseudo_only;
      else if (v == t)
        ++c.vanilla_only;
      else if (p == v)
        ++c.both_wrong_same;
      else
        ++c.both_wrong_differ;
    }
  return out;
}

/// {0, step, 2 step, ...} up to 1, with 1 always included.
inline std::vector<double> alpha_grid(double step) {
  if (!(step > 0.0 && step <= 0.5)) throw ConfigError("grid_step must lie in (0, 0.5]");
  std::vector<double> grid;
  for (std::size_t k = 0;; ++k) {
    const double a = static_cast<double>(k) * step;
    if (a > 1.0 + 1e-12) break;
    grid.push_back(std::min(a, 1.0));
  }
  if (grid.back() < 1.0) grid.push_back(1.0);
  return grid;
}

struct SharedOptimum {
  double alpha = 0.0;
  double y = 0.0;
  /// Aggregate stationary point over all slots; advisory, compare with the grid.
  std::optional<double> analytic_alpha;
};

struct SlotwiseOptimum {
  std::vector<double> alphas;
  std::vector<double> per_slot_y;
  double y = 0.0;
};

namespace detail {

inline double mean_over_slots(const std::vector<SlotCaseCounts>& counts, double alpha) {
  double total = 0.0;
  for (const auto& c : counts) total += c.error_at(alpha);
  return total / static_cast<double>(counts.size());
}

}  // namespace detail

/// Grid search for one alpha shared by every slot; ties go to the smaller alpha.
inline SharedOptimum optimal_shared_alpha(const std::vector<SlotCaseCounts>& counts, double grid_step) {
  SharedOptimum best;
  bool first = true;
  for (double a : alpha_grid(grid_step)) {
    const double y = detail::mean_over_slots(counts, a);
    if (first || y < best.y) {
      best.alpha = a;
      best.y = y;
      first = false;
    }
  }
  std::size_t n1 = 0, n2 = 0, n3 = 0;
  for (const auto& c : counts) {
    n1 += c.pseudo_only;
    n2 += c.vanilla_only;
    n3 += c.both_wrong_differ;
  }
  if (n1 + n2 + n3 > 0)
    best.analytic_alpha = static_cast<double>(2 * n1 + n3) / (2.0 * static_cast<double>(n1 + n2 + n3));
  return best;
}

inline SharedOptimum optimal_shared_alpha(const Dataset& split, std::size_t num_slots, double grid_step) {
  return optimal_shared_alpha(case_counts(split, num_slots), grid_step);
}

/// Independent grid search per slot; Y is the mean of the per-slot minima.
inline SlotwiseOptimum optimal_slotwise_alpha(const std::vector<SlotCaseCounts>& counts, double grid_step) {
  const auto grid = alpha_grid(grid_step);
  SlotwiseOptimum r;
  for (const auto& c : counts) {
    double best_a = grid.front(), best_y = c.error_at(grid.front());
    for (double a : grid) {
      const double y = c.error_at(a);
      if (y < best_y) {
        best_y = y;
        best_a = a;
      }
    }
    r.alphas.push_back(best_a);
    r.per_slot_y.push_back(best_y);
  }
  double total = 0.0;
  for (double y : r.per_slot_y) total += y;
  r.y = total / static_cast<double>(r.per_slot_y.size());
  return r;
}

inline SlotwiseOptimum optimal_slotwise_alpha(const Dataset& split, std::size_t num_slots, double grid_step) {
  return optimal_slotwise_alpha(case_counts(split, num_slots), grid_step);
}

/// Per-(sample, slot) weights minimising each term: a lower bound for any
/// slot-wise or shared alpha.
inline std::vector<WeightPair> instance_optimal_weights(const Dataset& split, std::size_t num_slots) {
  std::vector<WeightPair> out;
  out.reserve(split.size() * num_slots);
  for (const auto& smp : split)
    for (std::size_t s = 0; s < num_slots; ++s) {
      const int t = smp.true_labels[s], v = smp.vanilla_labels[s], p = (*smp.pseudo_labels)[s];
      if (p == t && v != t)
        out.push_back({1.0, 0.0});
      else if (v == t)
        out.push_back({0.0, 1.0});
      else if (p == v)
        out.push_back({0.0, 1.0});
      else
        out.push_back({0.5, 0.5});
    }
  return out;
}

// --- slot-wise vs shared dominance over random instances ---

struct InstanceConfig {
  int num_slots = 10;
  int vocab_size = 5;
  std::size_t samples = 500;
  double max_noise = 0.5;
  int context_dim = 4;
};

struct Theorem1Report {
  std::size_t instance = 0;
  std::uint64_t corpus_seed = 0;
  std::vector<double> vanilla_noise;
  std::vector<double> pseudo_noise;
  double noise_spread = 0.0;  // range over slots of (vanilla - pseudo) noise rate
  SharedOptimum shared;
  SlotwiseOptimum slotwise;
  bool holds = false;
  double margin = 0.0;  // shared Y* - slot-wise Y*
};

class Theorem1Violation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline constexpr double kDominanceSlack = 1e-12;

inline Theorem1Report verify_instance(const NoiseConfig& config, double grid_step, std::size_t index = 0) {
  const Corpus c = generate_corpus(config);
  const auto counts = case_counts(c.train, c.schema.size());
  Theorem1Report r;
  r.instance = index;
  r.corpus_seed = config.seed;
  r.vanilla_noise = config.vanilla_noise_rates;
  r.pseudo_noise = config.pseudo_noise_rates.value_or(std::vector<double>(config.vanilla_noise_rates.size(), 0.0));
  double lo = 0.0, hi = 0.0;
  for (std::size_t s = 0; s < r.vanilla_noise.size(); ++s) {
    const double gap = r.vanilla_noise[s] - r.pseudo_noise[s];
    lo = s == 0 ? gap : std::min(lo, gap);
    hi = s == 0 ? gap : std::max(hi, gap);
  }
  r.noise_spread = hi - lo;
  r.shared = optimal_shared_alpha(counts, grid_step);
  r.slotwise = optimal_slotwise_alpha(counts, grid_step);
  r.margin = r.shared.y - r.slotwise.y;
  r.holds = r.slotwise.y <= r.shared.y + kDominanceSlack;
  return r;
}

inline NoiseConfig random_instance_config(const InstanceConfig& ic, Rng& rng, std::uint64_t corpus_seed) {
  std::uniform_real_distribution<double> rate(0.0, ic.max_noise);
  NoiseConfig nc;
  nc.num_slots = ic.num_slots;
  nc.vocab_sizes.assign(static_cast<std::size_t>(ic.num_slots), ic.vocab_size);
  nc.context_dim = ic.context_dim;
  nc.clean_size = nc.validation_size = nc.test_size = 1;
  nc.train_size = ic.samples;
  nc.vanilla_noise_rates.resize(static_cast<std::size_t>(ic.num_slots));
  std::vector<double> pseudo(static_cast<std::size_t>(ic.num_slots));
  for (auto& r : nc.vanilla_noise_rates) r = rate(rng);
  for (auto& r : pseudo) r = rate(rng);
  nc.pseudo_noise_rates = pseudo;
  nc.seed = corpus_seed;
  return nc;
}

/// Random controlled-mode instances; throws Theorem1Violation on the first
/// instance where the slot-wise optimum exceeds the shared one.
inline std::vector<Theorem1Report> verify_theorem1(std::size_t num_instances, const InstanceConfig& ic,
                                                   double grid_step, std::uint64_t seed) {
  std::vector<Theorem1Report> out;
  for (std::size_t i = 0; i < num_instances; ++i) {
    Rng rng = make_rng(seed, Stream::Instances, i);
    const auto config = random_instance_config(ic, rng, derive_seed(seed, Stream::Instances, i));
    auto r = verify_instance(config, grid_step, i);
    if (!r.holds)
      throw Theorem1Violation("instance " + std::to_string(i) + ": slot-wise Y* " + std::to_string(r.slotwise.y) +
                              " exceeds shared Y* " + std::to_string(r.shared.y));
    out.push_back(std::move(r));
  }
  return out;
}

inline Json to_json(const Theorem1Report& r) {
  Json j;
  j["instance"] = r.instance;
  j["corpus_seed"] = r.corpus_seed;
  j["noise_spread"] = r.noise_spread;
  j["shared_alpha"] = r.shared.alpha;
  j["shared_y"] = r.shared.y;
  j["analytic_alpha"] = r.shared.analytic_alpha ? Json(*r.shared.analytic_alpha) : Json(nullptr);
  j["slotwise_alpha"] = r.slotwise.alphas;
  j["slotwise_y"] = r.slotwise.y;
  j["holds"] = r.holds;
  j["margin"] = r.margin;
  j["vanilla_noise"] = r.vanilla_noise;
  j["pseudo_noise"] = r.pseudo_noise;
  return j;
}

// --- learned-weight exports ---

inline constexpr std::size_t kHistogramBins = 50;

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts = std::vector<std::size_t>(kHistogramBins, 0);

  void add(double x) {
    const double t = (x - lo) / (hi - lo);
    auto bin = static_cast<std::ptrdiff_t>(std::floor(t * static_cast<double>(counts.size())));
    bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(counts.size()) - 1);
    ++counts[static_cast<std::size_t>(bin)];
  }
};

struct WeightRecord {
  std::int64_t sample_id = 0;
  std::size_t slot = 0;
  double a_pseudo = 0.0;
  double a_vanilla = 0.0;
  double l_vanilla = 0.0;
  double l_pseudo = 0.0;
  std::optional<LossFeatures> features;        // instance-wise schemes
  std::optional<BetaDecomposition> decomposition;  // S3 variants
};

struct SlotWeightSummary {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  Histogram pseudo_histogram;
  std::optional<Histogram> scale_histogram;  // S3 variants, over [0, 2]
};

struct WeightDistribution {
  SchemeKind kind = SchemeKind::FixedAlpha;
  std::vector<WeightRecord> records;
  std::vector<SlotWeightSummary> per_slot;
};

/// Weights the scheme assigns to every (sample, slot) of `split` under `model`.
inline WeightDistribution weight_distribution_report(const WeightingScheme& scheme, const Dataset& split,
                                                     const PrimaryModel& model) {
  const auto slots = model.shape().num_slots();
  const bool instance_wise = scheme.kind() == SchemeKind::S2 || scheme.kind() == SchemeKind::S3 ||
                             scheme.kind() == SchemeKind::S3Decoupled;
  const bool decoupled = scheme.kind() == SchemeKind::S3 || scheme.kind() == SchemeKind::S3Decoupled;
  WeightDistribution d;
  d.kind = scheme.kind();
  d.per_slot.resize(slots);
  for (auto& s : d.per_slot) {
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    if (decoupled) s.scale_histogram = Histogram{0.0, 2.0};
  }
  const Batch batch = whole(split);
  const auto ev = evaluate_batch(model, batch, scheme);
  d.records.reserve(batch.size() * slots);
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t s = 0; s < slots; ++s) {
      const auto k = i * slots + s;
      WeightRecord r{batch[i]->sample_id, s, ev.weights[k].pseudo, ev.weights[k].vanilla, ev.l_vanilla[k],
                     ev.l_pseudo[k], std::nullopt, std::nullopt};
      if (instance_wise) r.features = ev.features[k];
      if (decoupled) r.decomposition = beta_decompose(ev.weights[k]);
      auto& sum = d.per_slot[s];
      sum.mean += r.a_pseudo;
      sum.min = std::min(sum.min, r.a_pseudo);
      sum.max = std::max(sum.max, r.a_pseudo);
      sum.pseudo_histogram.add(r.a_pseudo);
      if (r.decomposition) sum.scale_histogram->add(r.decomposition->scale);
      d.records.push_back(std::move(r));
    }
  for (auto& s : d.per_slot) s.mean /= static_cast<double>(batch.size());
  return d;
}

inline Json to_json(const WeightRecord& r) {
  Json j;
  j["sample_id"] = r.sample_id;
  j["slot"] = r.slot;
  j["a_pseudo"] = r.a_pseudo;
  j["a_vanilla"] = r.a_vanilla;
  j["l_vanilla"] = r.l_vanilla;
  j["l_pseudo"] = r.l_pseudo;
  if (r.features) j["features"] = *r.features;
  if (r.decomposition) {
    j["scale"] = r.decomposition->scale;
    j["beta"] = r.decomposition->beta;
  }
  return j;
}

/// Mean a_pseudo over records with l_pseudo - l_vanilla < -gap minus the mean
/// over records with l_pseudo - l_vanilla > gap.
struct LossGapSplit {
  double mean_when_pseudo_lower = 0.0;
  double mean_when_vanilla_lower = 0.0;
  std::size_t n_pseudo_lower = 0;
  std::size_t n_vanilla_lower = 0;
  double difference() const { return mean_when_pseudo_lower - mean_when_vanilla_lower; }
};

inline LossGapSplit split_by_loss_gap(const WeightDistribution& d, double gap = 1.0) {
  LossGapSplit r;
  for (const auto& rec : d.records) {
    const double diff = rec.l_pseudo - rec.l_vanilla;
    if (diff < -gap) {
      r.mean_when_pseudo_lower += rec.a_pseudo;
      ++r.n_pseudo_lower;
    } else if (diff > gap) {
      r.mean_when_vanilla_lower += rec.a_pseudo;
      ++r.n_vanilla_lower;
    }
  }
  if (r.n_pseudo_lower) r.mean_when_pseudo_lower /= static_cast<double>(r.n_pseudo_lower);
  if (r.n_vanilla_lower) r.mean_when_vanilla_lower /= static_cast<double>(r.n_vanilla_lower);
  return r;
}

inline std::vector<double> per_slot_error_rates(const PrimaryModel& model, const Dataset& split) {
  return evaluate(model, split).per_slot_error_rate();
}

// --- gradient checking ---

/// Central-difference check of `analytic` against f at x; returns the largest
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8) over coordinates.
template <typename F>
double finite_difference_check(F&& f, std::span<const double> analytic, std::vector<double> x, double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite_difference_check: eps must be > 0");
  if (analytic.size() != x.size()) throw ConfigError("finite_difference_check: gradient size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + eps;
    const auto fp = f(std::span<const double>(x));
    x[i] = x0 - eps;
    const auto fm = f(std::span<const double>(x));
    x[i] = x0;
    if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm)))
      throw ConfigError("finite_difference_check: non-finite evaluation at coordinate " + std::to_string(i));
    const double numeric = static_cast<double>((fp - fm) / (2 * static_cast<decltype(fp)>(eps)));
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace metaassist
