#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "metaassist/corpus_io.hpp"
#include "metaassist/data.hpp"
#include "metaassist/rng.hpp"
#include "metaassist/types.hpp"

namespace metaassist {

enum class Architecture { Linear, OneHidden };

inline std::string_view architecture_name(Architecture a) { return a == Architecture::Linear ? "linear" : "hidden"; }

inline Architecture parse_architecture(std::string_view s) {
  if (s == "linear") return Architecture::Linear;
  if (s == "hidden") return Architecture::OneHidden;
  throw ConfigError("unknown architecture '" + std::string(s) + "' (expected linear|hidden)");
}

struct ModelShape {
  std::vector<int> vocab_sizes;
  int input_dim = 0;
  Architecture architecture = Architecture::Linear;
  /// Width of the shared tanh layer; ignored for the linear architecture.
  int hidden_width = 0;

  std::size_t num_slots() const noexcept { return vocab_sizes.size(); }
  int head_input_dim() const noexcept { return architecture == Architecture::Linear ? input_dim : hidden_width; }

  bool operator==(const ModelShape&) const = default;
};

using ParameterVector = std::vector<double>;

/// Per-slot softmax classifiers over a context vector, optionally behind one
/// shared tanh hidden layer. Parameters live in one flat array:
///   [U (H x d), c (H)]            hidden architecture only
///   [W_s (V_s x in), b_s (V_s)]   for every slot s
class PrimaryModel {
 public:
  PrimaryModel() = default;

  explicit PrimaryModel(ModelShape shape) : shape_(std::move(shape)) {
    if (shape_.input_dim < 1) throw ConfigError("model input_dim must be >= 1");
    if (shape_.architecture == Architecture::OneHidden && shape_.hidden_width < 1)
      throw ConfigError("hidden architecture needs hidden_width >= 1");
    const auto in = static_cast<std::size_t>(shape_.head_input_dim());
    std::size_t offset = 0;
    if (shape_.architecture == Architecture::OneHidden)
      offset = static_cast<std::size_t>(shape_.hidden_width) * (static_cast<std::size_t>(shape_.input_dim) + 1);
    for (int v : shape_.vocab_sizes) {
      if (v < 2) throw ConfigError("model vocab sizes must be >= 2");
      head_offsets_.push_back(offset);
      offset += static_cast<std::size_t>(v) * (in + 1);
    }
    params_.assign(offset, 0.0);
  }

  const ModelShape& shape() const noexcept { return shape_; }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::size_t num_parameters() const noexcept { return params_.size(); }

  /// Offset of W_s; b_s follows at head_offset(s) + V_s * head_input_dim.
  std::size_t head_offset(std::size_t s) const { return head_offsets_.at(s); }
  std::size_t bias_offset(std::size_t s) const {
    return head_offsets_.at(s) +
           static_cast<std::size_t>(shape_.vocab_sizes[s]) * static_cast<std::size_t>(shape_.head_input_dim());
  }

  bool operator==(const PrimaryModel& o) const { return shape_ == o.shape_ && params_ == o.params_; }

 private:
  ModelShape shape_;
  ParameterVector params_;
  std::vector<std::size_t> head_offsets_;
};

inline ModelShape shape_for(const SlotSchema& schema, int input_dim, Architecture arch = Architecture::Linear,
                            int hidden_width = 0) {
  return {schema.vocab_sizes(), input_dim, arch, hidden_width};
}

/// Normal(0, scale) initialisation; scale 0 gives the all-zero model.
inline PrimaryModel init_model(ModelShape shape, double scale, std::uint64_t seed,
                               Stream stream = Stream::ModelInit) {
  PrimaryModel m(std::move(shape));
  if (scale != 0.0) {
    Rng rng = make_rng(seed, stream);
    std::normal_distribution<double> normal(0.0, scale);
    for (auto& p : m.parameters()) p = normal(rng);
  }
  return m;
}

/// A linear model that reproduces the corpus' ground-truth labelling.
inline PrimaryModel oracle_classifier(const NoiseConfig& config) {
  const LabelModel lm = make_label_model(config);
  ModelShape shape{config.vocab_sizes, config.context_dim, Architecture::Linear, 0};
  PrimaryModel m(shape);
  auto p = m.parameters();
  for (std::size_t s = 0; s < lm.weights.size(); ++s) {
    std::copy(lm.weights[s].begin(), lm.weights[s].end(), p.begin() + static_cast<std::ptrdiff_t>(m.head_offset(s)));
    std::copy(lm.biases[s].begin(), lm.biases[s].end(), p.begin() + static_cast<std::ptrdiff_t>(m.bias_offset(s)));
  }
  return m;
}

/// Per-slot probability vectors.
using SlotDistribution = std::vector<std::vector<double>>;

/// Cached activations of one context; enough to form any per-slot gradient.
struct ForwardPass {
  std::vector<double> input;
  std::vector<double> head_input;  // input (linear) or tanh activations (hidden)
  SlotDistribution probs;
};

namespace detail {

/// Stable softmax in place.
inline void softmax(std::span<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

}  // namespace detail

inline ForwardPass forward_pass(const PrimaryModel& model, std::span<const double> context) {
  const auto& shape = model.shape();
  if (context.size() != static_cast<std::size_t>(shape.input_dim))
    throw SchemaError("context dimension " + std::to_string(context.size()) + " does not match model input " +
                      std::to_string(shape.input_dim));
  const auto p = model.parameters();
  ForwardPass fp;
  fp.input.assign(context.begin(), context.end());
  if (shape.architecture == Architecture::Linear) {
    fp.head_input = fp.input;
  } else {
    const auto d = static_cast<std::size_t>(shape.input_dim);
    const auto h = static_cast<std::size_t>(shape.hidden_width);
    fp.head_input.resize(h);
    for (std::size_t j = 0; j < h; ++j) {
      double a = p[h * d + j];
      const double* row = p.data() + j * d;
      for (std::size_t k = 0; k < d; ++k) a += row[k] * context[k];
      fp.head_input[j] = std::tanh(a);
    }
  }
  const auto in = fp.head_input.size();
  fp.probs.resize(shape.num_slots());
  for (std::size_t s = 0; s < shape.num_slots(); ++s) {
    const auto vocab = static_cast<std::size_t>(shape.vocab_sizes[s]);
    auto& z = fp.probs[s];
    z.resize(vocab);
    const double* w = p.data() + model.head_offset(s);
    const double* b = p.data() + model.bias_offset(s);
    for (std::size_t v = 0; v < vocab; ++v) {
      double a = b[v];
      const double* row = w + v * in;
      for (std::size_t k = 0; k < in; ++k) a += row[k] * fp.head_input[k];
      z[v] = a;
    }
    detail::softmax(z);
  }
  return fp;
}

inline SlotDistribution forward(const PrimaryModel& model, std::span<const double> context) {
  return forward_pass(model, context).probs;
}

/// -log p[label] with p floored at kProbabilityFloor.
inline double slot_loss(std::span<const double> dist, int label) {
  return -std::log(std::max(dist[static_cast<std::size_t>(label)], kProbabilityFloor));
}

/// Adds weight * d(slot_loss)/d(logits) into `residual`. The floored region
/// has zero gradient.
inline void add_label_residual(std::span<const double> dist, int label, double weight, std::span<double> residual) {
  if (dist[static_cast<std::size_t>(label)] < kProbabilityFloor) return;
  for (std::size_t v = 0; v < dist.size(); ++v) residual[v] += weight * dist[v];
  residual[static_cast<std::size_t>(label)] -= weight;
}

/// grad += scale * d(residual . logits_s)/d(theta).
inline void accumulate_slot_gradient(const PrimaryModel& model, const ForwardPass& fp, std::size_t slot,
                                     std::span<const double> residual, double scale, std::span<double> grad) {
  const auto& shape = model.shape();
  const auto vocab = static_cast<std::size_t>(shape.vocab_sizes[slot]);
  const auto in = fp.head_input.size();
  double* gw = grad.data() + model.head_offset(slot);
  double* gb = grad.data() + model.bias_offset(slot);
  for (std::size_t v = 0; v < vocab; ++v) {
    const double r = scale * residual[v];
    if (r == 0.0) continue;
    double* row = gw + v * in;
    for (std::size_t k = 0; k < in; ++k) row[k] += r * fp.head_input[k];
    gb[v] += r;
  }
  if (shape.architecture == Architecture::OneHidden) {
    const auto p = model.parameters();
    const auto d = fp.input.size();
    const double* w = p.data() + model.head_offset(slot);
    for (std::size_t j = 0; j < in; ++j) {
      double back = 0.0;
      for (std::size_t v = 0; v < vocab; ++v) back += w[v * in + j] * residual[v];
      const double delta = scale * back * (1.0 - fp.head_input[j] * fp.head_input[j]);
      if (delta == 0.0) continue;
      double* row = grad.data() + j * d;
      for (std::size_t k = 0; k < d; ++k) row[k] += delta * fp.input[k];
      grad[in * d + j] += delta;
    }
  }
}

/// Vector u with <d(r . logits_s)/d(theta), direction> = r . u for every residual r.
/// Lets many per-example gradient inner products share one pass.
inline std::vector<double> slot_sensitivity(const PrimaryModel& model, const ForwardPass& fp, std::size_t slot,
                                            std::span<const double> direction) {
  const auto& shape = model.shape();
  const auto vocab = static_cast<std::size_t>(shape.vocab_sizes[slot]);
  const auto in = fp.head_input.size();
  const double* gw = direction.data() + model.head_offset(slot);
  const double* gb = direction.data() + model.bias_offset(slot);
  std::vector<double> u(vocab);
  for (std::size_t v = 0; v < vocab; ++v) {
    double a = gb[v];
    const double* row = gw + v * in;
    for (std::size_t k = 0; k < in; ++k) a += row[k] * fp.head_input[k];
    u[v] = a;
  }
  if (shape.architecture == Architecture::OneHidden) {
    const auto p = model.parameters();
    const auto d = fp.input.size();
    const double* w = p.data() + model.head_offset(slot);
    for (std::size_t j = 0; j < in; ++j) {
      double hidden_dir = direction[in * d + j];
      const double* row = direction.data() + j * d;
      for (std::size_t k = 0; k < d; ++k) hidden_dir += row[k] * fp.input[k];
      const double t = hidden_dir * (1.0 - fp.head_input[j] * fp.head_input[j]);
      for (std::size_t v = 0; v < vocab; ++v) u[v] += w[v * in + j] * t;
    }
  }
  return u;
}

namespace detail {

inline void require_pseudo(const Sample& s) {
  if (!s.pseudo_labels)
    throw ConfigError("sample " + std::to_string(s.sample_id) +
                      " has no pseudo labels; run generate_pseudo_labels (gen-pseudo) first");
}

}  // namespace detail

/// Gradient of (1/(|batch||S|)) sum_i sum_s (a_pseudo l_pseudo + a_vanilla l_vanilla).
/// `weights` is indexed [i * |S| + s] and is treated as constant.
inline ParameterVector grad_theta(const PrimaryModel& model, const Batch& batch, std::span<const WeightPair> weights) {
  const auto slots = model.shape().num_slots();
  if (weights.size() != batch.size() * slots) throw ConfigError("grad_theta: one weight pair per (sample, slot)");
  ParameterVector grad(model.num_parameters(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size() * slots);
  std::vector<double> residual;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& smp = *batch[i];
    detail::require_pseudo(smp);
    const ForwardPass fp = forward_pass(model, smp.context);
    for (std::size_t s = 0; s < slots; ++s) {
      const WeightPair& w = weights[i * slots + s];
      residual.assign(fp.probs[s].size(), 0.0);
      add_label_residual(fp.probs[s], (*smp.pseudo_labels)[s], w.pseudo, residual);
      add_label_residual(fp.probs[s], smp.vanilla_labels[s], w.vanilla, residual);
      accumulate_slot_gradient(model, fp, s, residual, scale, grad);
    }
  }
  return grad;
}

/// Mean weighted loss matching grad_theta.
inline double weighted_loss(const PrimaryModel& model, const Batch& batch, std::span<const WeightPair> weights) {
  const auto slots = model.shape().num_slots();
  if (weights.size() != batch.size() * slots) throw ConfigError("weighted_loss: one weight pair per (sample, slot)");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& smp = *batch[i];
    detail::require_pseudo(smp);
    const auto probs = forward(model, smp.context);
    for (std::size_t s = 0; s < slots; ++s) {
      const WeightPair& w = weights[i * slots + s];
      total += w.pseudo * slot_loss(probs[s], (*smp.pseudo_labels)[s]) +
               w.vanilla * slot_loss(probs[s], smp.vanilla_labels[s]);
    }
  }
  return total * (1.0 / static_cast<double>(batch.size() * slots));
}

enum class LabelSource { Vanilla, Pseudo };

inline const std::vector<int>& labels_of(const Sample& s, LabelSource src) {
  if (src == LabelSource::Vanilla) return s.vanilla_labels;
  detail::require_pseudo(s);
  return *s.pseudo_labels;
}

/// Plain cross-entropy against one label set: (mean loss, gradient).
inline std::pair<double, ParameterVector> hard_label_loss_and_grad(const PrimaryModel& model, const Batch& batch,
                                                                   LabelSource src) {
  const auto slots = model.shape().num_slots();
  ParameterVector grad(model.num_parameters(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size() * slots);
  double total = 0.0;
  std::vector<double> residual;
  for (const Sample* smp : batch) {
    const auto& labels = labels_of(*smp, src);
    const ForwardPass fp = forward_pass(model, smp->context);
    for (std::size_t s = 0; s < slots; ++s) {
      total += slot_loss(fp.probs[s], labels[s]);
      residual.assign(fp.probs[s].size(), 0.0);
      add_label_residual(fp.probs[s], labels[s], 1.0, residual);
      accumulate_slot_gradient(model, fp, s, residual, scale, grad);
    }
  }
  return {total * scale, std::move(grad)};
}

/// Argmax per slot; ties go to the lower index.
inline std::vector<int> predict(const PrimaryModel& model, std::span<const double> context) {
  const auto probs = forward(model, context);
  std::vector<int> out(probs.size());
  for (std::size_t s = 0; s < probs.size(); ++s)
    out[s] = static_cast<int>(std::max_element(probs[s].begin(), probs[s].end()) - probs[s].begin());
  return out;
}

// --- checkpoints ---

inline Json model_to_json(const PrimaryModel& m, const SlotSchema& schema) {
  Json j;
  j["format"] = "metaassist-model";
  j["schema_hash"] = schema.hash();
  j["architecture"] = architecture_name(m.shape().architecture);
  j["dims"] = {{"vocab_sizes", m.shape().vocab_sizes},
               {"input_dim", m.shape().input_dim},
               {"hidden_width", m.shape().hidden_width}};
  j["params"] = std::vector<double>(m.parameters().begin(), m.parameters().end());
  return j;
}

inline PrimaryModel model_from_json(const Json& j, const SlotSchema* schema = nullptr) {
  try {
    if (schema && j.at("schema_hash").get<std::uint64_t>() != schema->hash())
      throw SchemaError("model checkpoint was trained for a different slot schema");
    const auto& dims = j.at("dims");
    ModelShape shape{dims.at("vocab_sizes").get<std::vector<int>>(), dims.at("input_dim").get<int>(),
                     parse_architecture(j.at("architecture").get<std::string>()), dims.at("hidden_width").get<int>()};
    PrimaryModel m(shape);
    const auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != m.num_parameters())
      throw SchemaError("model checkpoint has " + std::to_string(params.size()) + " parameters, shape needs " +
                        std::to_string(m.num_parameters()));
    std::copy(params.begin(), params.end(), m.parameters().begin());
    return m;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("bad model checkpoint: ") + e.what());
  }
}

inline void save_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

inline Json load_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

inline void save_model(const PrimaryModel& m, const SlotSchema& schema, const std::filesystem::path& path) {
  save_json(model_to_json(m, schema), path);
}

inline PrimaryModel load_model(const std::filesystem::path& path, const SlotSchema* schema = nullptr) {
  return model_from_json(load_json(path), schema);
}

}  // namespace metaassist
