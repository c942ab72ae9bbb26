#pragma once

#include <vector>

#include "metaassist/model.hpp"

namespace metaassist {

struct MetricsReport {
  double jga = 0.0;  // every slot correct
  double jta = 0.0;  // every active (non-none) slot correct
  double sa = 0.0;   // mean per-slot accuracy
  std::vector<double> per_slot_accuracy;

  std::vector<double> per_slot_error_rate() const {
    std::vector<double> out;
    out.reserve(per_slot_accuracy.size());
    for (double a : per_slot_accuracy) out.push_back(1.0 - a);
    return out;
  }

  bool operator==(const MetricsReport&) const = default;
};

/// Scores argmax predictions against true labels. Active slots are those
/// whose true value is not "none"; a sample with no active slot counts as
/// JTA-correct.
inline MetricsReport score_predictions(const Dataset& split, const std::vector<std::vector<int>>& predictions) {
  if (split.empty()) throw ConfigError("evaluate: split is empty");
  const std::size_t slots = split.front().true_labels.size();
  MetricsReport r;
  r.per_slot_accuracy.assign(slots, 0.0);
  std::size_t joint = 0, turn = 0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& truth = split[i].true_labels;
    const auto& pred = predictions[i];
    bool all = true, active = true;
    for (std::size_t s = 0; s < slots; ++s) {
      const bool ok = pred[s] == truth[s];
      if (ok) r.per_slot_accuracy[s] += 1.0;
      all = all && ok;
      if (truth[s] != kNoneValue) active = active && ok;
    }
    joint += all;
    turn += active;
  }
  const double n = static_cast<double>(split.size());
  double sum = 0.0;
  for (auto& a : r.per_slot_accuracy) {
    a /= n;
    sum += a;
  }
  r.jga = static_cast<double>(joint) / n;
  r.jta = static_cast<double>(turn) / n;
  r.sa = sum / static_cast<double>(slots);
  return r;
}

inline MetricsReport evaluate(const PrimaryModel& model, const Dataset& split) {
  if (split.empty()) throw ConfigError("evaluate: split is empty");
  std::vector<std::vector<int>> predictions;
  predictions.reserve(split.size());
  for (const auto& smp : split) predictions.push_back(predict(model, smp.context));
  return score_predictions(split, predictions);
}

inline Json to_json(const MetricsReport& m) {
  Json j;
  j["jga"] = m.jga;
  j["jta"] = m.jta;
  j["sa"] = m.sa;
  j["per_slot_accuracy"] = m.per_slot_accuracy;
  j["per_slot_error_rate"] = m.per_slot_error_rate();
  return j;
}

}  // namespace metaassist
