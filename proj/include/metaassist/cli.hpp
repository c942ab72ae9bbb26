#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "metaassist/config_io.hpp"
#include "metaassist/corpus_io.hpp"
#include "metaassist/meta_trainer.hpp"
#include "metaassist/oracle.hpp"

namespace metaassist::cli {

namespace fs = std::filesystem;

struct AnalysisOptions {
  double grid_step = 0.01;
  std::size_t instances = 100;
  InstanceConfig instance;
  std::uint64_t seed = 0;
  std::string split = "test";
  double loss_gap = 1.0;
};

struct BenchOptions {
  std::size_t seeds = 5;
  std::uint64_t base_seed = 0;
  std::vector<double> alphas{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<std::string> schemes{"s1", "s2", "s3"};
};

struct Inputs {
  std::string data;
  std::string model;
  std::string aux;
  std::string scheme;
  /// error-rates: NAME=PATH entries
  std::vector<std::string> models;
};

/// Everything a subcommand reads. Defaults, then the preset, then --config,
/// then flags; the resolved value is written as config.json beside outputs.
struct ExperimentConfig {
  std::string command;
  std::string preset;
  NoiseConfig data;
  TrainConfig train;
  AnalysisOptions analysis;
  BenchOptions bench;
  Inputs inputs;
};

inline NoiseConfig preset_config(std::string_view name, std::uint64_t seed) {
  if (name == "desk") return desk_default_config(seed);
  if (name == "asymmetric") return asymmetric_benchmark_config(seed);
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected desk|asymmetric)");
}

inline std::string default_preset(std::string_view command) { return command == "bench-table" ? "asymmetric" : "desk"; }

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["command"] = c.command;
  j["preset"] = c.preset;
  j["data"] = metaassist::to_json(c.data);
  j["train"] = metaassist::to_json(c.train);
  j["analysis"] = {{"grid_step", c.analysis.grid_step},
                   {"instances", c.analysis.instances},
                   {"instance", metaassist::to_json(c.analysis.instance)},
                   {"seed", c.analysis.seed},
                   {"split", c.analysis.split},
                   {"loss_gap", c.analysis.loss_gap}};
  j["bench"] = {{"seeds", c.bench.seeds},
                {"base_seed", c.bench.base_seed},
                {"alphas", c.bench.alphas},
                {"schemes", c.bench.schemes}};
  j["inputs"] = {{"data", c.inputs.data},
                 {"model", c.inputs.model},
                 {"aux", c.inputs.aux},
                 {"scheme", c.inputs.scheme},
                 {"models", c.inputs.models}};
  return j;
}

/// Applies a config file on top of `c`. The preset, if present, replaces the
/// data section before the file's own data fields are read.
inline void apply_config_json(const Json& j, ExperimentConfig& c) {
  using detail::take;
  if (j.contains("command") && j.at("command").get<std::string>() != c.command)
    throw ConfigError("config file is for '" + j.at("command").get<std::string>() + "', not '" + c.command + "'");
  if (j.contains("preset")) {
    take(j, "preset", c.preset);
    c.data = preset_config(c.preset, c.data.seed);
  }
  if (j.contains("data")) c.data = noise_config_from_json(j.at("data"), c.data);
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    take(a, "grid_step", c.analysis.grid_step);
    take(a, "instances", c.analysis.instances);
    if (a.contains("instance")) c.analysis.instance = instance_config_from_json(a.at("instance"), c.analysis.instance);
    take(a, "seed", c.analysis.seed);
    take(a, "split", c.analysis.split);
    take(a, "loss_gap", c.analysis.loss_gap);
  }
  if (j.contains("bench")) {
    const auto& b = j.at("bench");
    take(b, "seeds", c.bench.seeds);
    take(b, "base_seed", c.bench.base_seed);
    take(b, "alphas", c.bench.alphas);
    take(b, "schemes", c.bench.schemes);
  }
  if (j.contains("inputs")) {
    const auto& in = j.at("inputs");
    take(in, "data", c.inputs.data);
    take(in, "model", c.inputs.model);
    take(in, "aux", c.inputs.aux);
    take(in, "scheme", c.inputs.scheme);
    take(in, "models", c.inputs.models);
  }
}

// --- output helpers ---

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * x);
  return buf;
}

/// Comma-separated rendering of a table with a header row.
inline std::string render_csv(const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + row[c];
    out += '\n';
  }
  return out;
}

/// Plain-text rendering: first column left-aligned, the rest right-aligned.
inline std::string render_text(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], row[c].size());
    }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const auto pad = std::string(width[c] - rows[r][c].size(), ' ');
      line += c == 0 ? rows[r][c] + pad : "  " + pad + rows[r][c];
    }
    out += line + '\n';
    if (r == 0) out += std::string(line.size(), '-') + '\n';
  }
  return out;
}

// --- subcommands ---

inline Corpus load_input_corpus(const ExperimentConfig& c) {
  if (c.inputs.data.empty()) throw ConfigError("--data is required");
  return load_corpus(c.inputs.data);
}

/// Corpus copy whose train split carries pseudo labels: kept if present,
/// otherwise decoded with --aux.
inline Corpus with_pseudo_labels(Corpus corpus, const ExperimentConfig& c) {
  const bool have = std::all_of(corpus.train.begin(), corpus.train.end(),
                                [](const Sample& s) { return s.pseudo_labels.has_value(); });
  if (have) return corpus;
  if (c.inputs.aux.empty())
    throw ConfigError("train split has no pseudo labels; pass --aux or run gen-pseudo first");
  corpus.train = generate_pseudo_labels(load_model(c.inputs.aux, &corpus.schema), corpus.train);
  return corpus;
}

inline int cmd_gen_data(const ExperimentConfig& c, const fs::path& out) {
  const Corpus corpus = generate_corpus(c.data);
  save_corpus(corpus, out / "corpus.jsonl");
  std::cout << "wrote " << (out / "corpus.jsonl").string() << " (" << corpus.train.size() << " train samples)\n";
  return 0;
}

inline int cmd_train_aux(const ExperimentConfig& c, const fs::path& out) {
  const Corpus corpus = load_input_corpus(c);
  const Dataset& source = c.train.aux_source == AuxSource::Validation ? corpus.validation : corpus.clean;
  const auto aux = train_auxiliary(source, corpus.schema, c.train.aux, c.train.seed);
  save_model(aux.model, corpus.schema, out / "aux_model.json");
  std::ostringstream log;
  for (std::size_t j = 0; j < aux.step_losses.size(); ++j)
    log << Json({{"step", j}, {"loss", aux.step_losses[j]}}).dump() << '\n';
  write_text(out / "aux_log.jsonl", log.str());
  Json m;
  m["test"] = metaassist::to_json(evaluate(aux.model, corpus.test));
  write_json(out / "aux_metrics.json", m);
  std::cout << "auxiliary model test JGA " << percent(evaluate(aux.model, corpus.test).jga) << "%\n";
  return 0;
}

inline int cmd_gen_pseudo(const ExperimentConfig& c, const fs::path& out) {
  Corpus corpus = load_input_corpus(c);
  if (c.inputs.aux.empty()) throw ConfigError("--aux is required");
  corpus.train = generate_pseudo_labels(load_model(c.inputs.aux, &corpus.schema), corpus.train);
  save_corpus(corpus, out / "corpus.jsonl");
  std::cout << "wrote " << (out / "corpus.jsonl").string() << '\n';
  return 0;
}

inline int cmd_train(const ExperimentConfig& c, const fs::path& out) {
  const Corpus corpus = load_input_corpus(c);
  const TrainResult r = train_meta(corpus, c.train);
  save_model(r.model, corpus.schema, out / "model.json");
  save_model(r.best_model, corpus.schema, out / "best_model.json");
  write_json(out / "scheme.json", scheme_to_json(r.scheme));
  write_json(out / "best_scheme.json", scheme_to_json(r.best_scheme));
  if (r.aux_model) save_model(*r.aux_model, corpus.schema, out / "aux_model.json");
  std::ostringstream log;
  write_run_log(log, r.log);
  write_text(out / "run_log.jsonl", log.str());

  Json m;
  m["scheme"] = format_scheme_spec(c.train.scheme);
  m["gradient_evaluations"] = r.log.gradient_evaluations;
  m["final"] = {{"validation", metaassist::to_json(evaluate(r.model, corpus.validation))},
                {"test", metaassist::to_json(evaluate(r.model, corpus.test))}};
  m["best"] = {{"epoch", r.log.best_epoch},
               {"validation", metaassist::to_json(r.best_validation)},
               {"test", metaassist::to_json(r.best_test)}};
  write_json(out / "metrics.json", m);

  Json t;
  double total = 0.0;
  Json per_epoch = Json::array();
  for (const auto& e : r.log.epochs) {
    per_epoch.push_back(e.train_seconds);
    total += e.train_seconds;
  }
  t["epoch_train_seconds"] = per_epoch;
  t["total_train_seconds"] = total;
  write_json(out / "timing.json", t);
  std::cout << format_scheme_spec(c.train.scheme) << ": best epoch " << r.log.best_epoch << ", test JGA "
            << percent(r.best_test.jga) << "%\n";
  return 0;
}

inline int cmd_evaluate(const ExperimentConfig& c, const fs::path& out) {
  const Corpus corpus = load_input_corpus(c);
  if (c.inputs.model.empty()) throw ConfigError("--model is required");
  const auto model = load_model(c.inputs.model, &corpus.schema);
  const auto report = evaluate(model, corpus.split(parse_split(c.analysis.split)));
  Json m;
  m["split"] = c.analysis.split;
  m["metrics"] = metaassist::to_json(report);
  write_json(out / "metrics.json", m);
  std::cout << c.analysis.split << ": JGA " << percent(report.jga) << "%  JTA " << percent(report.jta) << "%  SA "
            << percent(report.sa) << "%\n";
  return 0;
}

inline int cmd_verify_theorem1(const ExperimentConfig& c, const fs::path& out) {
  std::vector<Theorem1Report> reports;
  try {
    reports = verify_theorem1(c.analysis.instances, c.analysis.instance, c.analysis.grid_step, c.analysis.seed);
  } catch (const Theorem1Violation& e) {
    write_json(out / "summary.json", {{"holds", false}, {"violation", e.what()}});
    std::cerr << "error: dominance violated: " << e.what() << '\n';
    return 3;
  }
  std::ostringstream lines;
  std::size_t spread = 0, strict = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  for (const auto& r : reports) {
    lines << metaassist::to_json(r).dump() << '\n';
    min_margin = std::min(min_margin, r.margin);
    if (r.noise_spread >= 0.2) {
      ++spread;
      strict += r.margin > 0.0;
    }
  }
  write_text(out / "theorem1.jsonl", lines.str());
  Json s;
  s["holds"] = true;
  s["instances"] = reports.size();
  s["min_margin"] = reports.empty() ? Json(nullptr) : Json(min_margin);
  s["wide_spread_instances"] = spread;
  s["wide_spread_strict"] = strict;
  write_json(out / "summary.json", s);
  std::cout << "dominance holds on " << reports.size() << "/" << reports.size() << " instances; strict on " << strict
            << "/" << spread << " with noise spread >= 0.2\n";
  return 0;
}

inline int cmd_export_weights(const ExperimentConfig& c, const fs::path& out) {
  const Corpus corpus = with_pseudo_labels(load_input_corpus(c), c);
  if (c.inputs.model.empty() || c.inputs.scheme.empty()) throw ConfigError("--model and --scheme-file are required");
  const auto model = load_model(c.inputs.model, &corpus.schema);
  const auto scheme = scheme_from_json(load_json(c.inputs.scheme));
  const Split split = parse_split(c.analysis.split);
  const auto dist = weight_distribution_report(scheme, corpus.split(split), model);
  std::ostringstream lines;
  for (const auto& r : dist.records) lines << metaassist::to_json(r).dump() << '\n';
  write_text(out / "weights.jsonl", lines.str());

  Json slots = Json::array();
  for (std::size_t s = 0; s < dist.per_slot.size(); ++s) {
    const auto& p = dist.per_slot[s];
    Json js{{"slot", corpus.schema[s].name}, {"mean", p.mean}, {"min", p.min}, {"max", p.max},
            {"histogram", {{"lo", p.pseudo_histogram.lo}, {"hi", p.pseudo_histogram.hi}, {"counts", p.pseudo_histogram.counts}}}};
    if (p.scale_histogram)
      js["scale_histogram"] = {{"lo", p.scale_histogram->lo}, {"hi", p.scale_histogram->hi}, {"counts", p.scale_histogram->counts}};
    slots.push_back(js);
  }
  const auto gap = split_by_loss_gap(dist, c.analysis.loss_gap);
  Json summary;
  summary["scheme"] = scheme_name(scheme.kind());
  summary["split"] = c.analysis.split;
  summary["per_slot"] = slots;
  summary["loss_gap"] = {{"gap", c.analysis.loss_gap},
                         {"mean_when_pseudo_lower", gap.mean_when_pseudo_lower},
                         {"count_pseudo_lower", gap.n_pseudo_lower},
                         {"mean_when_vanilla_lower", gap.mean_when_vanilla_lower},
                         {"count_vanilla_lower", gap.n_vanilla_lower}};
  write_json(out / "weight_summary.json", summary);
  std::cout << "exported " << dist.records.size() << " weight records\n";
  return 0;
}

inline int cmd_error_rates(const ExperimentConfig& c, const fs::path& out) {
  const Corpus corpus = load_input_corpus(c);
  if (c.inputs.models.empty()) throw ConfigError("--model NAME=PATH is required at least once");
  const Dataset& split = corpus.split(parse_split(c.analysis.split));
  std::vector<std::string> names;
  std::vector<std::vector<double>> rates;
  for (const auto& entry : c.inputs.models) {
    const auto eq = entry.find('=');
    const std::string path = eq == std::string::npos ? entry : entry.substr(eq + 1);
    names.push_back(eq == std::string::npos ? fs::path(path).parent_path().filename().string() : entry.substr(0, eq));
    rates.push_back(per_slot_error_rates(load_model(path, &corpus.schema), split));
  }
  std::vector<std::vector<std::string>> rows{{"slot"}};
  for (const auto& n : names) rows[0].push_back(n + " error (%)");
  std::ostringstream lines;
  for (std::size_t s = 0; s < corpus.schema.size(); ++s) {
    std::vector<std::string> row{corpus.schema[s].name};
    Json rec{{"slot", corpus.schema[s].name}};
    for (std::size_t k = 0; k < names.size(); ++k) {
      row.push_back(percent(rates[k][s]));
      rec[names[k]] = rates[k][s];
    }
    rows.push_back(row);
    lines << rec.dump() << '\n';
  }
  write_text(out / "error_rates.jsonl", lines.str());
  write_text(out / "error_rates.csv", render_csv(rows));
  write_text(out / "error_rates.txt", render_text(rows));
  std::cout << render_text(rows);
  return 0;
}

struct BenchRun {
  std::string scheme;
  std::uint64_t seed = 0;
  MetricsReport test;
  std::size_t best_epoch = 0;
  std::vector<double> slot_alphas;  // S1 only
};

/// One training run of the benchmark: "fixed:<a>" or a scheme name.
inline BenchRun bench_run(const Corpus& corpus, TrainConfig cfg, const std::string& scheme) {
  cfg.scheme = parse_scheme_spec(scheme, cfg.scheme);
  const TrainResult r = cfg.scheme.kind == SchemeKind::FixedAlpha ? train_fixed_alpha(corpus, cfg, cfg.scheme.alpha)
                                                                  : train_meta(corpus, cfg);
  BenchRun b{scheme, cfg.seed, r.best_test, r.log.best_epoch, {}};
  if (r.scheme.kind() == SchemeKind::S1)
    for (double w : r.scheme.parameters()) b.slot_alphas.push_back(sigmoid(w));
  return b;
}

inline std::string alpha_label(double a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fixed:%.2f", a);
  return buf;
}

/// Runs `tasks` on up to `jobs` threads; results land at their own index.
template <typename T>
std::vector<T> run_parallel(const std::vector<std::function<T()>>& tasks, unsigned jobs) {
  std::vector<T> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < tasks.size();) {
      try {
        results[i] = tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < std::max(1u, jobs); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

struct BenchRow {
  std::string scheme;
  double jga_mean = 0.0;
  double jga_std = 0.0;
  double jta_mean = 0.0;
  double sa_mean = 0.0;
};

inline std::vector<BenchRow> summarize_bench(const std::vector<std::string>& schemes, const std::vector<BenchRun>& runs) {
  std::vector<BenchRow> rows;
  for (const auto& name : schemes) {
    BenchRow row{name};
    std::vector<double> jga;
    for (const auto& r : runs)
      if (r.scheme == name) {
        jga.push_back(r.test.jga);
        row.jta_mean += r.test.jta;
        row.sa_mean += r.test.sa;
      }
    const double n = static_cast<double>(jga.size());
    for (double x : jga) row.jga_mean += x / n;
    for (double x : jga) row.jga_std += (x - row.jga_mean) * (x - row.jga_mean);
    row.jga_std = jga.size() > 1 ? std::sqrt(row.jga_std / (n - 1.0)) : 0.0;
    row.jta_mean /= n;
    row.sa_mean /= n;
    rows.push_back(row);
  }
  return rows;
}

inline int cmd_bench_table(const ExperimentConfig& c, const fs::path& out, unsigned jobs) {
  if (c.bench.seeds < 1) throw ConfigError("--seeds must be >= 1");
  std::vector<std::string> schemes;
  for (double a : c.bench.alphas) schemes.push_back(alpha_label(a));
  for (const auto& s : c.bench.schemes) {
    parse_scheme_spec(s);
    schemes.push_back(s);
  }
  std::vector<Corpus> corpora;
  for (std::size_t r = 0; r < c.bench.seeds; ++r) {
    NoiseConfig nc = c.data;
    nc.seed = c.bench.base_seed + r;
    corpora.push_back(generate_corpus(nc));
  }
  std::vector<std::function<BenchRun()>> tasks;
  for (std::size_t r = 0; r < c.bench.seeds; ++r)
    for (const auto& s : schemes)
      tasks.push_back([&, r, s] {
        TrainConfig cfg = c.train;
        cfg.seed = c.bench.base_seed + r;
        return bench_run(corpora[r], cfg, s);
      });
  const auto runs = run_parallel(tasks, jobs);

  std::ostringstream lines;
  for (const auto& r : runs) {
    Json j{{"scheme", r.scheme}, {"seed", r.seed}, {"best_epoch", r.best_epoch}, {"test", metaassist::to_json(r.test)}};
    if (!r.slot_alphas.empty()) j["slot_alphas"] = r.slot_alphas;
    lines << j.dump() << '\n';
  }
  write_text(out / "runs.jsonl", lines.str());

  std::vector<std::vector<std::string>> table{{"scheme", "JGA (%)", "JGA std", "JTA (%)", "SA (%)"}};
  for (const auto& row : summarize_bench(schemes, runs))
    table.push_back({row.scheme, percent(row.jga_mean), percent(row.jga_std), percent(row.jta_mean), percent(row.sa_mean)});
  write_text(out / "bench.csv", render_csv(table));
  write_text(out / "bench.txt", render_text(table));
  std::cout << render_text(table);
  return 0;
}

// --- dispatch ---

inline fs::path default_output_root() {
  const char* env = std::getenv("METAASSIST_OUT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

using Override = std::function<void(ExperimentConfig&)>;

template <typename T, typename Apply>
void add_flag(CLI::App* app, std::vector<Override>& overrides, const std::string& name, const std::string& help,
              Apply apply) {
  auto value = std::make_shared<T>();
  CLI::Option* opt = app->add_option(name, *value, help);
  overrides.push_back([opt, value, apply](ExperimentConfig& c) {
    if (opt->count()) apply(c, *value);
  });
}

/// Entry point of the metaassist tool. Returns the process exit code.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"MetaASSIST on synthetic multi-slot data"};
  app.require_subcommand(1);
  std::vector<Override> overrides;
  std::string config_path, out_dir;
  unsigned jobs = 1;

  struct Sub {
    CLI::App* app;
    std::string name;
  };
  std::vector<Sub> subs;
  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", config_path, "JSON config applied before flags");
    s->add_option("--out", out_dir, "output directory");
    subs.push_back({s, name});
    return s;
  };
  auto data_flag = [&](CLI::App* s) {
    add_flag<std::string>(s, overrides, "--data", "corpus file", [](auto& c, auto& v) { c.inputs.data = v; });
  };
  auto train_seed_flag = [&](CLI::App* s) {
    add_flag<std::uint64_t>(s, overrides, "--seed", "training seed", [](auto& c, auto& v) { c.train.seed = v; });
  };
  auto split_flag = [&](CLI::App* s, const char* help) {
    add_flag<std::string>(s, overrides, "--split", help, [](auto& c, auto& v) { c.analysis.split = v; });
  };
  auto preset_flags = [&](CLI::App* s) {
    add_flag<std::string>(s, overrides, "--preset", "desk|asymmetric", [](auto& c, auto& v) {
      c.preset = v;
      c.data = preset_config(v, c.data.seed);
    });
    add_flag<std::size_t>(s, overrides, "--train-size", "training split size",
                          [](auto& c, auto& v) { c.data.train_size = v; });
  };
  auto train_flags = [&](CLI::App* s) {
    add_flag<std::string>(s, overrides, "--scheme", "fixed:<alpha>|s1|s2|s3|s3d",
                          [](auto& c, auto& v) { c.train.scheme = parse_scheme_spec(v, c.train.scheme); });
    add_flag<double>(s, overrides, "--init-alpha", "start every S1 alpha_s here",
                     [](auto& c, auto& v) { c.train.scheme.init_alpha = v; });
    add_flag<std::size_t>(s, overrides, "--epochs", "training epochs", [](auto& c, auto& v) { c.train.epochs = v; });
    add_flag<std::size_t>(s, overrides, "--steps", "training steps (overrides --epochs)",
                          [](auto& c, auto& v) { c.train.steps = v; });
    add_flag<double>(s, overrides, "--lr", "primary peak learning rate",
                     [](auto& c, auto& v) { c.train.primary_optimizer.learning_rate = v; });
    add_flag<double>(s, overrides, "--inner-lr", "interim step size",
                     [](auto& c, auto& v) { c.train.inner_lr = v; });
    add_flag<double>(s, overrides, "--meta-lr", "weighting learning rate",
                     [](auto& c, auto& v) { c.train.meta_optimizer.learning_rate = v; });
    add_flag<std::size_t>(s, overrides, "--batch", "training batch size",
                          [](auto& c, auto& v) { c.train.batch_train = v; });
    add_flag<std::size_t>(s, overrides, "--meta-batch", "meta batch size",
                          [](auto& c, auto& v) { c.train.batch_meta = v; });
    add_flag<std::string>(s, overrides, "--architecture", "linear|hidden",
                          [](auto& c, auto& v) { c.train.architecture = parse_architecture(v); });
  };

  auto* gen = sub("gen-data", "generate a synthetic corpus");
  preset_flags(gen);
  add_flag<std::uint64_t>(gen, overrides, "--seed", "corpus seed", [](auto& c, auto& v) { c.data.seed = v; });

  auto* aux = sub("train-aux", "train the auxiliary model");
  data_flag(aux);
  train_seed_flag(aux);
  add_flag<std::size_t>(aux, overrides, "--aux-steps", "auxiliary steps", [](auto& c, auto& v) { c.train.aux.steps = v; });

  auto* pseudo = sub("gen-pseudo", "fill train pseudo labels from an auxiliary model");
  data_flag(pseudo);
  add_flag<std::string>(pseudo, overrides, "--aux", "auxiliary model", [](auto& c, auto& v) { c.inputs.aux = v; });

  auto* train = sub("train", "train a primary model with a weighting scheme");
  data_flag(train);
  train_seed_flag(train);
  train_flags(train);

  auto* eval = sub("evaluate", "score a model on a split");
  data_flag(eval);
  add_flag<std::string>(eval, overrides, "--model", "model checkpoint", [](auto& c, auto& v) { c.inputs.model = v; });
  split_flag(eval, "split to score (default test)");

  auto* thm = sub("verify-theorem1", "slot-wise vs shared optimal weights on random instances");
  add_flag<std::size_t>(thm, overrides, "--instances", "number of instances",
                        [](auto& c, auto& v) { c.analysis.instances = v; });
  add_flag<double>(thm, overrides, "--grid-step", "alpha grid step", [](auto& c, auto& v) { c.analysis.grid_step = v; });
  add_flag<std::size_t>(thm, overrides, "--samples", "samples per instance",
                        [](auto& c, auto& v) { c.analysis.instance.samples = v; });
  add_flag<std::uint64_t>(thm, overrides, "--seed", "instance seed", [](auto& c, auto& v) { c.analysis.seed = v; });

  auto* exp = sub("export-weights", "per-sample learned weights and histograms");
  data_flag(exp);
  add_flag<std::string>(exp, overrides, "--model", "model checkpoint", [](auto& c, auto& v) { c.inputs.model = v; });
  add_flag<std::string>(exp, overrides, "--scheme-file", "scheme checkpoint", [](auto& c, auto& v) { c.inputs.scheme = v; });
  add_flag<std::string>(exp, overrides, "--aux", "auxiliary model for pseudo labels",
                        [](auto& c, auto& v) { c.inputs.aux = v; });
  split_flag(exp, "split to export (default train)");
  add_flag<double>(exp, overrides, "--loss-gap", "loss-gap threshold", [](auto& c, auto& v) { c.analysis.loss_gap = v; });

  auto* err = sub("error-rates", "per-slot error rates of one or more models");
  data_flag(err);
  add_flag<std::vector<std::string>>(err, overrides, "--model", "NAME=PATH, repeatable",
                                     [](auto& c, auto& v) { c.inputs.models = v; });
  split_flag(err, "split to score (default test)");

  auto* bench = sub("bench-table", "fixed-alpha grid and schemes over several seeds");
  preset_flags(bench);
  train_flags(bench);
  add_flag<std::size_t>(bench, overrides, "--seeds", "number of seeds", [](auto& c, auto& v) { c.bench.seeds = v; });
  add_flag<std::uint64_t>(bench, overrides, "--seed", "first seed", [](auto& c, auto& v) { c.bench.base_seed = v; });
  add_flag<std::vector<double>>(bench, overrides, "--alphas", "fixed-alpha grid",
                                [](auto& c, auto& v) { c.bench.alphas = v; });
  add_flag<std::vector<std::string>>(bench, overrides, "--schemes", "learned schemes",
                                     [](auto& c, auto& v) { c.bench.schemes = v; });
  bench->add_option("--jobs", jobs, "parallel runs (does not change results)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    ExperimentConfig c;
    for (const auto& s : subs)
      if (s.app->parsed()) c.command = s.name;
    c.preset = default_preset(c.command);
    c.data = preset_config(c.preset, 0);
    if (c.command == "export-weights") c.analysis.split = "train";
    if (!config_path.empty()) apply_config_json(load_json(config_path), c);
    for (const auto& o : overrides) o(c);
    c.data.validate();
    c.train.validate();

    const fs::path out = out_dir.empty() ? default_output_root() / c.command : fs::path(out_dir);
    fs::create_directories(out);
    write_json(out / "config.json", to_json(c));

    if (c.command == "gen-data") return cmd_gen_data(c, out);
    if (c.command == "train-aux") return cmd_train_aux(c, out);
    if (c.command == "gen-pseudo") return cmd_gen_pseudo(c, out);
    if (c.command == "train") return cmd_train(c, out);
    if (c.command == "evaluate") return cmd_evaluate(c, out);
    if (c.command == "verify-theorem1") return cmd_verify_theorem1(c, out);
    if (c.command == "export-weights") return cmd_export_weights(c, out);
    if (c.command == "error-rates") return cmd_error_rates(c, out);
    if (c.command == "bench-table") return cmd_bench_table(c, out, jobs);
    throw ConfigError("unknown subcommand");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace metaassist::cli
