#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "metaassist/rng.hpp"
#include "metaassist/types.hpp"

namespace metaassist {

/// Ground-truth linear scorer per slot: true label = argmax(W_s x + b_s).
struct LabelModel {
  int context_dim = 0;
  std::vector<std::vector<double>> weights;  // per slot, row-major vocab x dim
  std::vector<std::vector<double>> biases;   // per slot, vocab

  std::vector<int> labels(std::span<const double> x) const {
    std::vector<int> out(weights.size());
    for (std::size_t s = 0; s < weights.size(); ++s) {
      const auto vocab = biases[s].size();
      int best = 0;
      double best_score = 0.0;
      for (std::size_t v = 0; v < vocab; ++v) {
        double z = biases[s][v];
        const double* row = weights[s].data() + v * static_cast<std::size_t>(context_dim);
        for (int k = 0; k < context_dim; ++k) z += row[k] * x[k];
        if (v == 0 || z > best_score) {
          best_score = z;
          best = static_cast<int>(v);
        }
      }
      out[s] = best;
    }
    return out;
  }
};

inline LabelModel make_label_model(const NoiseConfig& config) {
  Rng rng = make_rng(config.seed, Stream::LabelModel);
  std::normal_distribution<double> normal(0.0, 1.0);
  LabelModel lm;
  lm.context_dim = config.context_dim;
  for (int s = 0; s < config.num_slots; ++s) {
    const auto vocab = static_cast<std::size_t>(config.vocab_sizes[s]);
    std::vector<double> w(vocab * static_cast<std::size_t>(config.context_dim));
    std::vector<double> b(vocab);
    for (auto& x : w) x = config.label_model.weight_scale * normal(rng);
    for (auto& x : b) x = config.label_model.bias_scale * normal(rng);
    b[kNoneValue] += config.label_model.none_bias;
    lm.weights.push_back(std::move(w));
    lm.biases.push_back(std::move(b));
  }
  return lm;
}

inline SlotSchema make_schema(const NoiseConfig& config) {
  std::vector<SlotDescriptor> slots;
  for (int s = 0; s < config.num_slots; ++s)
    slots.push_back({"slot-" + std::to_string(s), config.vocab_sizes.at(static_cast<std::size_t>(s))});
  return SlotSchema(std::move(slots));
}

/// Symmetric uniform flip: each slot independently, with probability
/// rates[s], is replaced by a uniformly drawn different value.
inline std::vector<int> corrupt_labels(std::span<const int> labels, std::span<const double> rates,
                                       const SlotSchema& schema, Rng& rng) {
  if (labels.size() != schema.size() || rates.size() != schema.size())
    throw ConfigError("corrupt_labels: labels and rates must cover every slot");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> out(labels.begin(), labels.end());
  for (std::size_t s = 0; s < out.size(); ++s) {
    if (!(rates[s] >= 0.0 && rates[s] < 1.0))
      throw ConfigError("corrupt_labels: rates[" + std::to_string(s) + "] must lie in [0,1)");
    if (unif(rng) >= rates[s]) continue;
    std::uniform_int_distribution<int> other(0, schema[s].vocab_size - 2);
    const int r = other(rng);
    out[s] = r < labels[s] ? r : r + 1;
  }
  return out;
}

/// Deterministic synthetic corpus: a pure function of the config (seed included).
inline Corpus generate_corpus(const NoiseConfig& config) {
  config.validate();
  Corpus corpus;
  corpus.schema = make_schema(config);
  corpus.generator_config = config;
  const LabelModel lm = make_label_model(config);

  std::int64_t next_id = 0;
  for (Split split : kAllSplits) {
    Dataset& data = corpus.split(split);
    const std::size_t n = config.split_size(split);
    data.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Sample smp;
      smp.sample_id = next_id++;
      const auto uid = static_cast<std::uint64_t>(smp.sample_id);
      Rng ctx_rng = make_rng(config.seed, Stream::Context, uid);
      std::normal_distribution<double> normal(0.0, 1.0);
      smp.context.resize(static_cast<std::size_t>(config.context_dim));
      for (auto& x : smp.context) x = normal(ctx_rng);
      smp.true_labels = lm.labels(smp.context);
      if (split == Split::Train) {
        Rng noise_rng = make_rng(config.seed, Stream::VanillaNoise, uid);
        smp.vanilla_labels = corrupt_labels(smp.true_labels, config.vanilla_noise_rates, corpus.schema, noise_rng);
        if (config.pseudo_noise_rates) {
          Rng pseudo_rng = make_rng(config.seed, Stream::PseudoNoise, uid);
          smp.pseudo_labels = corrupt_labels(smp.true_labels, *config.pseudo_noise_rates, corpus.schema, pseudo_rng);
        }
      } else {
        smp.vanilla_labels = smp.true_labels;
      }
      data.push_back(std::move(smp));
    }
  }
  return corpus;
}

/// Desk-scale defaults: 10 slots of vocabulary 5, d = 16, per-slot vanilla
/// noise spread over [0.02, 0.2], pseudo labels from the auxiliary model.
inline NoiseConfig desk_default_config(std::uint64_t seed = 0) {
  NoiseConfig c;
  c.seed = seed;
  for (int s = 0; s < c.num_slots; ++s) c.vanilla_noise_rates[static_cast<std::size_t>(s)] = 0.02 + 0.02 * s;
  return c;
}

/// Controlled asymmetric benchmark: vanilla 0.4 / pseudo 0.1 on the first
/// half of the slots, reversed on the second half.
inline NoiseConfig asymmetric_benchmark_config(std::uint64_t seed = 0) {
  NoiseConfig c;
  c.seed = seed;
  std::vector<double> pseudo(10);
  for (std::size_t s = 0; s < 10; ++s) {
    c.vanilla_noise_rates[s] = s < 5 ? 0.4 : 0.1;
    pseudo[s] = s < 5 ? 0.1 : 0.4;
  }
  c.pseudo_noise_rates = pseudo;
  return c;
}

/// Epoch-wise shuffled minibatches; each epoch is a seeded permutation of the
/// split and the last batch of an epoch may be partial.
class MinibatchSampler {
 public:
  MinibatchSampler(const Dataset& data, std::size_t batch_size, Rng rng)
      : data_(&data), batch_size_(batch_size), rng_(std::move(rng)) {
    if (data.empty()) throw ConfigError("sample_minibatch: split is empty");
    if (batch_size < 1) throw ConfigError("sample_minibatch: batch size must be >= 1");
    order_.resize(data.size());
  }

  Batch next() {
    if (epoch_ == 0 || cursor_ >= order_.size()) start_epoch();
    const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
    Batch b;
    b.reserve(end - cursor_);
    for (; cursor_ < end; ++cursor_) b.push_back(&(*data_)[order_[cursor_]]);
    return b;
  }

  std::size_t batches_per_epoch() const noexcept { return (data_->size() + batch_size_ - 1) / batch_size_; }
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  void start_epoch() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
    ++epoch_;
  }

  const Dataset* data_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace metaassist
