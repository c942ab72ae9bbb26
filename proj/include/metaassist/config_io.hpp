#pragma once

#include <optional>
#include <string>

#include "metaassist/corpus_io.hpp"
#include "metaassist/meta_trainer.hpp"
#include "metaassist/oracle.hpp"

namespace metaassist {

namespace detail {

template <typename T>
void take(const Json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

template <typename T>
void take_optional(const Json& j, const char* key, std::optional<T>& field) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    field.reset();
    return;
  }
  T v{};
  take(j, key, v);
  field = v;
}

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

}  // namespace detail

inline Json to_json(const OptimizerSpec& o) {
  Json j;
  j["kind"] = optimizer_name(o.kind);
  j["learning_rate"] = o.learning_rate;
  j["momentum"] = o.momentum;
  j["beta1"] = o.beta1;
  j["beta2"] = o.beta2;
  j["epsilon"] = o.epsilon;
  j["weight_decay"] = o.weight_decay;
  return j;
}

inline OptimizerSpec optimizer_from_json(const Json& j, OptimizerSpec o) {
  if (j.contains("kind")) o.kind = parse_optimizer(j.at("kind").get<std::string>());
  detail::take(j, "learning_rate", o.learning_rate);
  detail::take(j, "momentum", o.momentum);
  detail::take(j, "beta1", o.beta1);
  detail::take(j, "beta2", o.beta2);
  detail::take(j, "epsilon", o.epsilon);
  detail::take(j, "weight_decay", o.weight_decay);
  return o;
}

inline Json to_json(const SchemeSpec& s) {
  Json j;
  j["kind"] = scheme_name(s.kind);
  j["alpha"] = s.alpha;
  j["hidden"] = s.hidden;
  j["init_scale"] = s.init_scale;
  j["init_alpha"] = detail::optional_json(s.init_alpha);
  return j;
}

inline SchemeSpec scheme_spec_from_json(const Json& j, SchemeSpec s) {
  if (j.contains("kind")) s.kind = parse_scheme_kind(j.at("kind").get<std::string>());
  detail::take(j, "alpha", s.alpha);
  detail::take(j, "hidden", s.hidden);
  detail::take(j, "init_scale", s.init_scale);
  detail::take_optional(j, "init_alpha", s.init_alpha);
  return s;
}

inline Json to_json(const AuxConfig& a) {
  Json j;
  j["steps"] = a.steps;
  j["batch_size"] = a.batch_size;
  j["optimizer"] = to_json(a.optimizer);
  j["init_scale"] = a.init_scale;
  j["architecture"] = architecture_name(a.architecture);
  j["hidden_width"] = a.hidden_width;
  return j;
}

inline AuxConfig aux_config_from_json(const Json& j, AuxConfig a) {
  detail::take(j, "steps", a.steps);
  detail::take(j, "batch_size", a.batch_size);
  if (j.contains("optimizer")) a.optimizer = optimizer_from_json(j.at("optimizer"), a.optimizer);
  detail::take(j, "init_scale", a.init_scale);
  if (j.contains("architecture")) a.architecture = parse_architecture(j.at("architecture").get<std::string>());
  detail::take(j, "hidden_width", a.hidden_width);
  return a;
}

inline Json to_json(const TrainConfig& c) {
  Json j;
  j["scheme"] = to_json(c.scheme);
  j["architecture"] = architecture_name(c.architecture);
  j["hidden_width"] = c.hidden_width;
  j["init_scale"] = c.init_scale;
  j["batch_train"] = c.batch_train;
  j["batch_meta"] = c.batch_meta;
  j["epochs"] = c.epochs;
  j["steps"] = detail::optional_json(c.steps);
  j["inner_lr"] = c.inner_lr;
  j["primary_optimizer"] = to_json(c.primary_optimizer);
  j["warmup_fraction"] = c.warmup_fraction;
  j["meta_optimizer"] = to_json(c.meta_optimizer);
  j["aux"] = to_json(c.aux);
  j["aux_source"] = c.aux_source == AuxSource::Validation ? "validation" : "clean";
  j["seed"] = c.seed;
  j["evaluate_epochs"] = c.evaluate_epochs;
  return j;
}

inline TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  if (j.contains("scheme")) c.scheme = scheme_spec_from_json(j.at("scheme"), c.scheme);
  if (j.contains("architecture")) c.architecture = parse_architecture(j.at("architecture").get<std::string>());
  detail::take(j, "hidden_width", c.hidden_width);
  detail::take(j, "init_scale", c.init_scale);
  detail::take(j, "batch_train", c.batch_train);
  detail::take(j, "batch_meta", c.batch_meta);
  detail::take(j, "epochs", c.epochs);
  detail::take_optional(j, "steps", c.steps);
  detail::take(j, "inner_lr", c.inner_lr);
  if (j.contains("primary_optimizer"))
    c.primary_optimizer = optimizer_from_json(j.at("primary_optimizer"), c.primary_optimizer);
  detail::take(j, "warmup_fraction", c.warmup_fraction);
  if (j.contains("meta_optimizer")) c.meta_optimizer = optimizer_from_json(j.at("meta_optimizer"), c.meta_optimizer);
  if (j.contains("aux")) c.aux = aux_config_from_json(j.at("aux"), c.aux);
  if (j.contains("aux_source")) {
    const auto s = j.at("aux_source").get<std::string>();
    if (s == "validation")
      c.aux_source = AuxSource::Validation;
    else if (s == "clean")
      c.aux_source = AuxSource::Clean;
    else
      throw ConfigError("aux_source must be 'validation' or 'clean'");
  }
  detail::take(j, "seed", c.seed);
  detail::take(j, "evaluate_epochs", c.evaluate_epochs);
  return c;
}

inline Json to_json(const InstanceConfig& c) {
  Json j;
  j["num_slots"] = c.num_slots;
  j["vocab_size"] = c.vocab_size;
  j["samples"] = c.samples;
  j["max_noise"] = c.max_noise;
  j["context_dim"] = c.context_dim;
  return j;
}

inline InstanceConfig instance_config_from_json(const Json& j, InstanceConfig c) {
  detail::take(j, "num_slots", c.num_slots);
  detail::take(j, "vocab_size", c.vocab_size);
  detail::take(j, "samples", c.samples);
  detail::take(j, "max_noise", c.max_noise);
  detail::take(j, "context_dim", c.context_dim);
  return c;
}

}  // namespace metaassist
