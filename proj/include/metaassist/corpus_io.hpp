#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "metaassist/errors.hpp"
#include "metaassist/types.hpp"

namespace metaassist {

using Json = nlohmann::ordered_json;

// Doubles go through nlohmann's shortest round-trip formatting, so every
// file written here reloads bit-exactly.

inline Json to_json(const SlotSchema& schema) {
  Json slots = Json::array();
  for (const auto& d : schema.slots()) slots.push_back({{"name", d.name}, {"vocab_size", d.vocab_size}});
  return {{"slots", slots}};
}

inline SlotSchema schema_from_json(const Json& j) {
  std::vector<SlotDescriptor> slots;
  for (const auto& d : j.at("slots")) slots.push_back({d.at("name").get<std::string>(), d.at("vocab_size").get<int>()});
  return SlotSchema(std::move(slots));
}

inline Json to_json(const NoiseConfig& c) {
  Json j;
  j["num_slots"] = c.num_slots;
  j["vocab_sizes"] = c.vocab_sizes;
  j["context_dim"] = c.context_dim;
  j["clean_size"] = c.clean_size;
  j["train_size"] = c.train_size;
  j["validation_size"] = c.validation_size;
  j["test_size"] = c.test_size;
  j["vanilla_noise_rates"] = c.vanilla_noise_rates;
  j["pseudo_noise_rates"] = c.pseudo_noise_rates ? Json(*c.pseudo_noise_rates) : Json(nullptr);
  j["seed"] = c.seed;
  j["label_model"] = {{"weight_scale", c.label_model.weight_scale},
                      {"bias_scale", c.label_model.bias_scale},
                      {"none_bias", c.label_model.none_bias}};
  return j;
}

/// Reads a NoiseConfig, taking unspecified fields from `base`.
inline NoiseConfig noise_config_from_json(const Json& j, NoiseConfig base = {}) {
  auto take = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  take("num_slots", base.num_slots);
  take("vocab_sizes", base.vocab_sizes);
  take("context_dim", base.context_dim);
  take("clean_size", base.clean_size);
  take("train_size", base.train_size);
  take("validation_size", base.validation_size);
  take("test_size", base.test_size);
  take("vanilla_noise_rates", base.vanilla_noise_rates);
  if (j.contains("pseudo_noise_rates")) {
    const auto& p = j.at("pseudo_noise_rates");
    if (p.is_null())
      base.pseudo_noise_rates.reset();
    else
      base.pseudo_noise_rates = p.get<std::vector<double>>();
  }
  take("seed", base.seed);
  if (j.contains("label_model")) {
    const auto& lm = j.at("label_model");
    if (lm.contains("weight_scale")) base.label_model.weight_scale = lm.at("weight_scale").get<double>();
    if (lm.contains("bias_scale")) base.label_model.bias_scale = lm.at("bias_scale").get<double>();
    if (lm.contains("none_bias")) base.label_model.none_bias = lm.at("none_bias").get<double>();
  }
  return base;
}

inline Json sample_record(const Sample& s, Split split) {
  Json j;
  j["sample_id"] = s.sample_id;
  j["split"] = split_name(split);
  j["context"] = s.context;
  j["true_labels"] = s.true_labels;
  j["vanilla_labels"] = s.vanilla_labels;
  j["pseudo_labels"] = s.pseudo_labels ? Json(*s.pseudo_labels) : Json(nullptr);
  return j;
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  Json header;
  header["record"] = "header";
  header["format"] = "metaassist-corpus";
  header["version"] = 1;
  header["schema"] = to_json(corpus.schema);
  header["config"] = to_json(corpus.generator_config);
  Json counts;
  for (Split s : kAllSplits) counts[std::string(split_name(s))] = corpus.split(s).size();
  header["counts"] = counts;
  out << header.dump() << '\n';
  for (Split s : kAllSplits)
    for (const auto& smp : corpus.split(s)) out << sample_record(smp, s).dump() << '\n';
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_corpus(out, corpus);
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

namespace detail {

inline std::vector<int> read_labels(const Json& j, const char* field, const SlotSchema& schema, std::size_t line) {
  if (!j.is_array()) throw ParseError(std::string(field) + " must be an array", line);
  if (j.size() != schema.size())
    throw SchemaError("line " + std::to_string(line) + ": " + field + " has " + std::to_string(j.size()) +
                      " entries, schema has " + std::to_string(schema.size()) + " slots");
  std::vector<int> out;
  out.reserve(j.size());
  for (std::size_t s = 0; s < j.size(); ++s) {
    const int v = j[s].get<int>();
    if (v < 0 || v >= schema[s].vocab_size)
      throw SchemaError("line " + std::to_string(line) + ": " + field + " value " + std::to_string(v) +
                        " out of range for slot '" + schema[s].name + "' (vocab_size " +
                        std::to_string(schema[s].vocab_size) + ")");
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

/// Parses a corpus; never returns a partially read corpus.
inline Corpus read_corpus(std::istream& in) {
  Corpus corpus;
  std::string text;
  std::size_t line = 0;
  Json counts;
  bool have_header = false;
  std::unordered_set<std::int64_t> ids;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), line);
    }
    try {
      if (!have_header) {
        if (!j.is_object() || j.value("record", "") != "header")
          throw ParseError("first record must be the header", line);
        corpus.schema = schema_from_json(j.at("schema"));
        corpus.generator_config = noise_config_from_json(j.at("config"));
        counts = j.at("counts");
        have_header = true;
        continue;
      }
      Sample smp;
      smp.sample_id = j.at("sample_id").get<std::int64_t>();
      const Split split = parse_split(j.at("split").get<std::string>());
      smp.context = j.at("context").get<std::vector<double>>();
      if (smp.context.size() != static_cast<std::size_t>(corpus.generator_config.context_dim))
        throw SchemaError("line " + std::to_string(line) + ": context has dimension " +
                          std::to_string(smp.context.size()) + ", expected " +
                          std::to_string(corpus.generator_config.context_dim));
      smp.true_labels = detail::read_labels(j.at("true_labels"), "true_labels", corpus.schema, line);
      smp.vanilla_labels = detail::read_labels(j.at("vanilla_labels"), "vanilla_labels", corpus.schema, line);
      const auto& pseudo = j.at("pseudo_labels");
      if (!pseudo.is_null()) smp.pseudo_labels = detail::read_labels(pseudo, "pseudo_labels", corpus.schema, line);
      if (!ids.insert(smp.sample_id).second)
        throw SchemaError("line " + std::to_string(line) + ": duplicate sample_id " + std::to_string(smp.sample_id));
      corpus.split(split).push_back(std::move(smp));
    } catch (const Json::exception& e) {
      throw ParseError(std::string("bad field: ") + e.what(), line);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line);
    }
  }
  if (!have_header) throw ParseError("empty corpus file");
  for (Split s : kAllSplits) {
    const auto expected = counts.value(std::string(split_name(s)), std::size_t{0});
    if (corpus.split(s).size() != expected)
      throw ParseError("truncated corpus: split '" + std::string(split_name(s)) + "' has " +
                           std::to_string(corpus.split(s).size()) + " samples, header declares " +
                           std::to_string(expected),
                       line);
  }
  return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return read_corpus(in);
}

inline std::string serialize_corpus(const Corpus& corpus) {
  std::ostringstream os;
  write_corpus(os, corpus);
  return os.str();
}

}  // namespace metaassist
