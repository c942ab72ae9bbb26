#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "metaassist/errors.hpp"

namespace metaassist {

/// Lower bound applied to probabilities before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

/// Value index reserved for "none" in every slot.
inline constexpr int kNoneValue = 0;

struct SlotDescriptor {
  std::string name;
  int vocab_size = 2;

  bool operator==(const SlotDescriptor&) const = default;
};

class SlotSchema {
 public:
  SlotSchema() = default;
  explicit SlotSchema(std::vector<SlotDescriptor> slots) : slots_(std::move(slots)) { validate(); }

  std::size_t size() const noexcept { return slots_.size(); }
  const SlotDescriptor& operator[](std::size_t s) const { return slots_.at(s); }
  const std::vector<SlotDescriptor>& slots() const noexcept { return slots_; }

  std::vector<int> vocab_sizes() const {
    std::vector<int> out;
    out.reserve(slots_.size());
    for (const auto& d : slots_) out.push_back(d.vocab_size);
    return out;
  }

  /// FNV-1a over names and vocabulary sizes; ties checkpoints to a schema.
  std::uint64_t hash() const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](unsigned char c) {
      h ^= c;
      h *= 0x100000001b3ULL;
    };
    for (const auto& d : slots_) {
      for (char c : d.name) mix(static_cast<unsigned char>(c));
      mix(0);
      for (int k = 0; k < 4; ++k) mix(static_cast<unsigned char>((d.vocab_size >> (8 * k)) & 0xff));
    }
    return h;
  }

  bool operator==(const SlotSchema&) const = default;

 private:
  void validate() const {
    std::unordered_set<std::string_view> seen;
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      if (slots_[s].vocab_size < 2)
        throw ConfigError("slot '" + slots_[s].name + "': vocab_size must be >= 2");
      if (!seen.insert(slots_[s].name).second)
        throw ConfigError("duplicate slot name '" + slots_[s].name + "'");
    }
  }

  std::vector<SlotDescriptor> slots_;
};

/// One labelled "turn". Labels are per-slot value indices.
struct Sample {
  std::int64_t sample_id = 0;
  std::vector<double> context;
  std::vector<int> true_labels;
  std::vector<int> vanilla_labels;
  std::optional<std::vector<int>> pseudo_labels;

  bool operator==(const Sample&) const = default;
};

using Dataset = std::vector<Sample>;

/// Non-owning minibatch view into a dataset.
using Batch = std::vector<const Sample*>;

inline Batch whole(const Dataset& data) {
  Batch b;
  b.reserve(data.size());
  for (const auto& s : data) b.push_back(&s);
  return b;
}

enum class Split { Clean, Train, Validation, Test };

inline constexpr std::array<Split, 4> kAllSplits{Split::Clean, Split::Train, Split::Validation, Split::Test};

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::Clean: return "clean";
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(std::string_view name) {
  for (Split s : kAllSplits)
    if (split_name(s) == name) return s;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

/// Parameters of the ground-truth map context -> labels.
struct LabelModelConfig {
  double weight_scale = 1.0;
  double bias_scale = 1.0;
  /// Added to the "none" logit of every slot; positive values make "none" more common.
  double none_bias = 0.0;

  bool operator==(const LabelModelConfig&) const = default;
};

struct NoiseConfig {
  int num_slots = 10;
  std::vector<int> vocab_sizes = std::vector<int>(10, 5);
  int context_dim = 16;
  std::size_t clean_size = 1000;
  std::size_t train_size = 8000;
  std::size_t validation_size = 1000;
  std::size_t test_size = 2000;
  std::vector<double> vanilla_noise_rates = std::vector<double>(10, 0.0);
  /// Set only in controlled mode: pseudo labels are corrupted true labels.
  std::optional<std::vector<double>> pseudo_noise_rates;
  std::uint64_t seed = 0;
  LabelModelConfig label_model;

  bool controlled() const noexcept { return pseudo_noise_rates.has_value(); }

  std::size_t split_size(Split s) const {
    switch (s) {
      case Split::Clean: return clean_size;
      case Split::Train: return train_size;
      case Split::Validation: return validation_size;
      case Split::Test: return test_size;
    }
    return 0;
  }

  void validate() const {
    if (num_slots < 1) throw ConfigError("num_slots must be >= 1");
    if (context_dim < 1) throw ConfigError("context_dim must be >= 1");
    const auto n = static_cast<std::size_t>(num_slots);
    if (vocab_sizes.size() != n) throw ConfigError("vocab_sizes must have num_slots entries");
    for (std::size_t s = 0; s < n; ++s)
      if (vocab_sizes[s] < 2)
        throw ConfigError("vocab_sizes[" + std::to_string(s) + "] must be >= 2");
    for (Split sp : kAllSplits)
      if (split_size(sp) < 1) throw ConfigError(std::string(split_name(sp)) + "_size must be >= 1");
    auto check_rates = [n](const std::vector<double>& rates, const char* field) {
      if (rates.size() != n) throw ConfigError(std::string(field) + " must have num_slots entries");
      for (std::size_t s = 0; s < n; ++s)
        if (!(rates[s] >= 0.0 && rates[s] < 1.0))
          throw ConfigError(std::string(field) + "[" + std::to_string(s) + "] must lie in [0,1)");
    };
    check_rates(vanilla_noise_rates, "vanilla_noise_rates");
    if (pseudo_noise_rates) check_rates(*pseudo_noise_rates, "pseudo_noise_rates");
  }

  bool operator==(const NoiseConfig&) const = default;
};

struct Corpus {
  SlotSchema schema;
  Dataset clean;
  Dataset train;
  Dataset validation;
  Dataset test;
  NoiseConfig generator_config;

  Dataset& split(Split s) {
    switch (s) {
      case Split::Clean: return clean;
      case Split::Train: return train;
      case Split::Validation: return validation;
      case Split::Test: return test;
    }
    return test;
  }
  const Dataset& split(Split s) const { return const_cast<Corpus*>(this)->split(s); }

  bool operator==(const Corpus&) const = default;
};

/// Multipliers of the pseudo and vanilla one-hot labels for one (sample, slot).
struct WeightPair {
  double pseudo = 0.0;
  double vanilla = 1.0;

  bool operator==(const WeightPair&) const = default;
};

}  // namespace metaassist
