#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metaassist/corpus_io.hpp"
#include "metaassist/rng.hpp"
#include "metaassist/types.hpp"

namespace metaassist {

enum class SchemeKind { FixedAlpha, S1, S2, S3, S3Decoupled };

inline std::string scheme_name(SchemeKind k) {
  switch (k) {
    case SchemeKind::FixedAlpha: return "fixed";
    case SchemeKind::S1: return "s1";
    case SchemeKind::S2: return "s2";
    case SchemeKind::S3: return "s3";
    case SchemeKind::S3Decoupled: return "s3d";
  }
  return "?";
}

/// [l_vanilla, l_pseudo, l_vanilla - l_pseudo, l_pseudo - l_vanilla, l_vanilla + l_pseudo]
using LossFeatures = std::array<double, 5>;

inline LossFeatures loss_features(double l_vanilla, double l_pseudo) {
  if (!std::isfinite(l_vanilla) || !std::isfinite(l_pseudo))
    throw ConfigError("loss_features: losses must be finite");
  return {l_vanilla, l_pseudo, l_vanilla - l_pseudo, l_pseudo - l_vanilla, l_vanilla + l_pseudo};
}

inline constexpr double kFeatureClamp = 50.0;
inline constexpr int kDefaultWeightingHidden = 32;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("init alpha must lie strictly inside (0,1)");
  return std::log(p / (1.0 - p));
}

namespace detail {

/// Scalar-output MLP: z = b2 + sum_j w2_j tanh(W1_j . x + b1_j).
/// Layout: W1 (H x n), b1 (H), w2 (H), b2.
struct Mlp {
  int inputs = 0;
  int hidden = 0;

  std::size_t size() const noexcept {
    const auto h = static_cast<std::size_t>(hidden);
    return h * static_cast<std::size_t>(inputs) + 2 * h + 1;
  }

  double forward(std::span<const double> p, std::span<const double> x, std::span<double> act) const {
    const auto n = static_cast<std::size_t>(inputs);
    const auto h = static_cast<std::size_t>(hidden);
    double z = p[h * n + 2 * h];
    for (std::size_t j = 0; j < h; ++j) {
      double a = p[h * n + j];
      for (std::size_t k = 0; k < n; ++k) a += p[j * n + k] * x[k];
      act[j] = std::tanh(a);
      z += p[h * n + h + j] * act[j];
    }
    return z;
  }

  /// grad += upstream * dz/dp
  void backward(std::span<const double> p, std::span<const double> x, std::span<const double> act, double upstream,
                std::span<double> grad) const {
    const auto n = static_cast<std::size_t>(inputs);
    const auto h = static_cast<std::size_t>(hidden);
    grad[h * n + 2 * h] += upstream;
    for (std::size_t j = 0; j < h; ++j) {
      grad[h * n + h + j] += upstream * act[j];
      const double delta = upstream * p[h * n + h + j] * (1.0 - act[j] * act[j]);
      grad[h * n + j] += delta;
      for (std::size_t k = 0; k < n; ++k) grad[j * n + k] += delta * x[k];
    }
  }
};

}  // namespace detail

/// The learnable (or fixed) map from loss features to a WeightPair.
///
/// Parameter blocks: S1 holds one scalar per slot; S2 one MLP over the five
/// loss features; S3 two MLPs (pseudo first, vanilla second); S3Decoupled two
/// one-input MLPs fed l_pseudo and l_vanilla respectively. FixedAlpha has none.
class WeightingScheme {
 public:
  WeightingScheme() = default;

  static WeightingScheme fixed_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("fixed alpha must lie in [0,1]");
    WeightingScheme w;
    w.kind_ = SchemeKind::FixedAlpha;
    w.alpha_ = alpha;
    return w;
  }

  /// S1 with every alpha_s = sigmoid(w_s) = init_alpha.
  static WeightingScheme slotwise(std::size_t num_slots, double init_alpha = 0.5) {
    WeightingScheme w;
    w.kind_ = SchemeKind::S1;
    w.num_slots_ = num_slots;
    w.params_.assign(num_slots, logit(init_alpha));
    return w;
  }

  /// S2 / S3 / S3Decoupled with N(0, init_scale) weights and zero biases.
  static WeightingScheme instance_wise(SchemeKind kind, std::size_t num_slots, int hidden, std::uint64_t seed,
                                       double init_scale = 0.01) {
    if (kind != SchemeKind::S2 && kind != SchemeKind::S3 && kind != SchemeKind::S3Decoupled)
      throw ConfigError("instance_wise: scheme must be s2, s3 or s3d");
    if (hidden < 1) throw ConfigError("weighting MLP hidden width must be >= 1");
    WeightingScheme w;
    w.kind_ = kind;
    w.num_slots_ = num_slots;
    w.hidden_ = hidden;
    w.params_.assign(w.expected_size(), 0.0);
    Rng rng = make_rng(seed, Stream::SchemeInit);
    std::normal_distribution<double> normal(0.0, init_scale);
    const auto n_mlp = w.num_mlps();
    for (std::size_t m = 0; m < n_mlp; ++m) {
      const auto mlp = w.mlp(m);
      const auto base = m * mlp.size();
      const auto h = static_cast<std::size_t>(hidden);
      const auto n = static_cast<std::size_t>(mlp.inputs);
      for (std::size_t i = 0; i < h * n; ++i) w.params_[base + i] = normal(rng);
      for (std::size_t i = 0; i < h; ++i) w.params_[base + h * n + h + i] = normal(rng);
    }
    return w;
  }

  SchemeKind kind() const noexcept { return kind_; }
  double alpha() const noexcept { return alpha_; }
  std::size_t num_slots() const noexcept { return num_slots_; }
  int hidden_width() const noexcept { return hidden_; }
  bool sums_to_one() const noexcept { return kind_ == SchemeKind::FixedAlpha || kind_ == SchemeKind::S1 || kind_ == SchemeKind::S2; }

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::size_t num_parameters() const noexcept { return params_.size(); }

  /// Start of the second (vanilla, w_2) block; equals num_parameters() when there is none.
  std::size_t second_block_offset() const noexcept {
    return (kind_ == SchemeKind::S3 || kind_ == SchemeKind::S3Decoupled) ? mlp(0).size() : params_.size();
  }

  WeightPair compute(const LossFeatures& h, std::size_t slot) const {
    switch (kind_) {
      case SchemeKind::FixedAlpha: return {alpha_, 1.0 - alpha_};
      case SchemeKind::S1: {
        const double a = sigmoid(params_.at(slot));
        return {a, 1.0 - a};
      }
      case SchemeKind::S2: {
        const double a = sigmoid(eval_mlp(0, h).z);
        return {a, 1.0 - a};
      }
      case SchemeKind::S3:
      case SchemeKind::S3Decoupled: return {sigmoid(eval_mlp(0, h).z), sigmoid(eval_mlp(1, h).z)};
    }
    return {};
  }

  /// grad += coef_pseudo * d(a_pseudo)/dw + coef_vanilla * d(a_vanilla)/dw
  void accumulate_vjp(const LossFeatures& h, std::size_t slot, double coef_pseudo, double coef_vanilla,
                      std::span<double> grad) const {
    switch (kind_) {
      case SchemeKind::FixedAlpha: return;
      case SchemeKind::S1: {
        const double a = sigmoid(params_.at(slot));
        grad[slot] += (coef_pseudo - coef_vanilla) * a * (1.0 - a);
        return;
      }
      case SchemeKind::S2: {
        const auto e = eval_mlp(0, h);
        const double a = sigmoid(e.z);
        mlp(0).backward(block(0), e.input, e.act, (coef_pseudo - coef_vanilla) * a * (1.0 - a), grad_block(grad, 0));
        return;
      }
      case SchemeKind::S3:
      case SchemeKind::S3Decoupled: {
        const auto ep = eval_mlp(0, h);
        const double ap = sigmoid(ep.z);
        mlp(0).backward(block(0), ep.input, ep.act, coef_pseudo * ap * (1.0 - ap), grad_block(grad, 0));
        const auto ev = eval_mlp(1, h);
        const double av = sigmoid(ev.z);
        mlp(1).backward(block(1), ev.input, ev.act, coef_vanilla * av * (1.0 - av), grad_block(grad, 1));
        return;
      }
    }
  }

  bool operator==(const WeightingScheme&) const = default;

  friend Json scheme_to_json(const WeightingScheme& w);
  friend WeightingScheme scheme_from_json(const Json& j);

 private:
  struct MlpEval {
    std::vector<double> input;
    std::vector<double> act;
    double z = 0.0;
  };

  std::size_t num_mlps() const noexcept {
    switch (kind_) {
      case SchemeKind::S2: return 1;
      case SchemeKind::S3:
      case SchemeKind::S3Decoupled: return 2;
      default: return 0;
    }
  }

  detail::Mlp mlp(std::size_t) const { return {kind_ == SchemeKind::S3Decoupled ? 1 : 5, hidden_}; }

  std::size_t expected_size() const {
    if (kind_ == SchemeKind::S1) return num_slots_;
    return num_mlps() * mlp(0).size();
  }

  std::span<const double> block(std::size_t m) const {
    return std::span<const double>(params_).subspan(m * mlp(0).size(), mlp(0).size());
  }
  std::span<double> grad_block(std::span<double> grad, std::size_t m) const {
    return grad.subspan(m * mlp(0).size(), mlp(0).size());
  }

  MlpEval eval_mlp(std::size_t m, const LossFeatures& h) const {
    MlpEval e;
    if (kind_ == SchemeKind::S3Decoupled)
      e.input = {m == 0 ? h[1] : h[0]};
    else
      e.input.assign(h.begin(), h.end());
    for (auto& x : e.input) x = std::clamp(x, -kFeatureClamp, kFeatureClamp);
    e.act.resize(static_cast<std::size_t>(hidden_));
    e.z = mlp(m).forward(block(m), e.input, e.act);
    return e;
  }

  SchemeKind kind_ = SchemeKind::FixedAlpha;
  double alpha_ = 0.0;
  std::size_t num_slots_ = 0;
  int hidden_ = 0;
  std::vector<double> params_;
};

inline WeightPair compute_weights(const WeightingScheme& scheme, const LossFeatures& h, std::size_t slot) {
  return scheme.compute(h, slot);
}

/// Jacobian of (a_pseudo, a_vanilla) with respect to the scheme parameters.
struct WeightJacobian {
  std::vector<double> d_pseudo;
  std::vector<double> d_vanilla;
};

inline WeightJacobian weight_jacobian(const WeightingScheme& scheme, const LossFeatures& h, std::size_t slot) {
  WeightJacobian j;
  j.d_pseudo.assign(scheme.num_parameters(), 0.0);
  j.d_vanilla.assign(scheme.num_parameters(), 0.0);
  scheme.accumulate_vjp(h, slot, 1.0, 0.0, j.d_pseudo);
  scheme.accumulate_vjp(h, slot, 0.0, 1.0, j.d_vanilla);
  return j;
}

/// a_pseudo * onehot(pseudo) + a_vanilla * onehot(vanilla).
inline std::vector<double> combine_labels(int pseudo, int vanilla, int vocab_size, WeightPair w) {
  if (pseudo < 0 || pseudo >= vocab_size || vanilla < 0 || vanilla >= vocab_size)
    throw ConfigError("combine_labels: label outside vocabulary");
  std::vector<double> out(static_cast<std::size_t>(vocab_size), 0.0);
  out[static_cast<std::size_t>(pseudo)] += w.pseudo;
  out[static_cast<std::size_t>(vanilla)] += w.vanilla;
  return out;
}

/// One-hot vector overload; both vectors must share a vocabulary.
inline std::vector<double> combine_labels(std::span<const double> pseudo, std::span<const double> vanilla, WeightPair w) {
  if (pseudo.size() != vanilla.size()) throw ConfigError("combine_labels: vocabulary size mismatch");
  std::vector<double> out(pseudo.size());
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = w.pseudo * pseudo[v] + w.vanilla * vanilla[v];
  return out;
}

struct BetaDecomposition {
  double scale = 1.0;
  double beta = 0.5;
};

/// (a_pseudo, a_vanilla) = scale * (beta, 1 - beta).
inline BetaDecomposition beta_decompose(WeightPair w) {
  const double scale = w.pseudo + w.vanilla;
  if (!(scale > 1e-15)) throw ConfigError("beta_decompose: degenerate weights (sum <= 1e-15)");
  return {scale, w.pseudo / scale};
}

// --- checkpoints ---

inline SchemeKind parse_scheme_kind(std::string_view s) {
  for (auto k : {SchemeKind::FixedAlpha, SchemeKind::S1, SchemeKind::S2, SchemeKind::S3, SchemeKind::S3Decoupled})
    if (scheme_name(k) == s) return k;
  throw ConfigError("unknown scheme '" + std::string(s) + "'");
}

inline Json scheme_to_json(const WeightingScheme& w) {
  Json j;
  j["format"] = "metaassist-scheme";
  j["variant"] = scheme_name(w.kind_);
  j["alpha"] = w.alpha_;
  j["num_slots"] = w.num_slots_;
  j["hidden"] = w.hidden_;
  j["params"] = w.params_;
  return j;
}

inline WeightingScheme scheme_from_json(const Json& j) {
  try {
    WeightingScheme w;
    w.kind_ = parse_scheme_kind(j.at("variant").get<std::string>());
    w.alpha_ = j.at("alpha").get<double>();
    w.num_slots_ = j.at("num_slots").get<std::size_t>();
    w.hidden_ = j.at("hidden").get<int>();
    w.params_ = j.at("params").get<std::vector<double>>();
    if (w.params_.size() != w.expected_size())
      throw SchemaError("scheme checkpoint has " + std::to_string(w.params_.size()) + " parameters, variant needs " +
                        std::to_string(w.expected_size()));
    return w;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("bad scheme checkpoint: ") + e.what());
  }
}

}  // namespace metaassist
