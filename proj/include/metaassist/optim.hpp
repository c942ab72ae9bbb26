#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "metaassist/errors.hpp"

namespace metaassist {

enum class OptimizerKind { Sgd, Momentum, Adam };

inline std::string_view optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::Momentum: return "momentum";
    case OptimizerKind::Adam: return "adamw";
  }
  return "?";
}

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "momentum") return OptimizerKind::Momentum;
  if (s == "adamw" || s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected sgd|momentum|adamw)");
}

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::Sgd;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decoupled weight decay (adaptive optimizer only).
  double weight_decay = 0.0;

  bool operator==(const OptimizerSpec&) const = default;
};

/// Stateful first-order update over a flat parameter array.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerSpec spec, std::size_t n) : spec_(spec) {
    if (spec_.kind != OptimizerKind::Sgd) first_.assign(n, 0.0);
    if (spec_.kind == OptimizerKind::Adam) second_.assign(n, 0.0);
  }

  const OptimizerSpec& spec() const noexcept { return spec_; }

  void step(std::span<double> params, std::span<const double> grad, double lr) {
    ++steps_;
    switch (spec_.kind) {
      case OptimizerKind::Sgd:
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
        break;
      case OptimizerKind::Momentum:
        for (std::size_t i = 0; i < params.size(); ++i) {
          first_[i] = spec_.momentum * first_[i] + grad[i];
          params[i] -= lr * first_[i];
        }
        break;
      case OptimizerKind::Adam: {
        const double c1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(steps_));
        for (std::size_t i = 0; i < params.size(); ++i) {
          params[i] -= lr * spec_.weight_decay * params[i];
          first_[i] = spec_.beta1 * first_[i] + (1.0 - spec_.beta1) * grad[i];
          second_[i] = spec_.beta2 * second_[i] + (1.0 - spec_.beta2) * grad[i] * grad[i];
          params[i] -= lr * (first_[i] / c1) / (std::sqrt(second_[i] / c2) + spec_.epsilon);
        }
        break;
      }
    }
  }

  void step(std::span<double> params, std::span<const double> grad) { step(params, grad, spec_.learning_rate); }

 private:
  OptimizerSpec spec_;
  std::vector<double> first_;
  std::vector<double> second_;
  std::size_t steps_ = 0;
};

/// Linear warmup over the first `warmup_fraction` of steps, then linear decay to 0.
struct LinearWarmupSchedule {
  double peak = 0.1;
  std::size_t total_steps = 1;
  double warmup_fraction = 0.1;

  double at(std::size_t step) const {
    const auto warmup = static_cast<std::size_t>(warmup_fraction * static_cast<double>(total_steps));
    if (step < warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
    if (total_steps <= warmup) return peak;
    return peak * std::max(0.0, static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup));
  }
};

}  // namespace metaassist
