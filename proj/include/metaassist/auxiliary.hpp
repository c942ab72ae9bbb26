#pragma once

#include <cmath>
#include <vector>

#include "metaassist/data.hpp"
#include "metaassist/model.hpp"
#include "metaassist/optim.hpp"

namespace metaassist {

struct AuxConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 32;  // n
  OptimizerSpec optimizer{OptimizerKind::Momentum, 2.0};
  double init_scale = 0.01;
  Architecture architecture = Architecture::Linear;
  int hidden_width = 32;

  bool operator==(const AuxConfig&) const = default;
};

struct AuxResult {
  PrimaryModel model;
  std::vector<double> step_losses;
};

/// Minibatch training on the (clean) vanilla labels of `clean`.
inline AuxResult train_auxiliary(const Dataset& clean, const SlotSchema& schema, const AuxConfig& cfg,
                                 std::uint64_t seed) {
  if (clean.empty()) throw ConfigError("train_auxiliary: clean split is empty");
  const int dim = static_cast<int>(clean.front().context.size());
  AuxResult r{init_model(shape_for(schema, dim, cfg.architecture, cfg.hidden_width), cfg.init_scale, seed,
                         Stream::AuxInit),
              {}};
  if (cfg.steps == 0) return r;
  MinibatchSampler sampler(clean, cfg.batch_size, make_rng(seed, Stream::AuxBatches));
  Optimizer opt(cfg.optimizer, r.model.num_parameters());
  r.step_losses.reserve(cfg.steps);
  for (std::size_t j = 0; j < cfg.steps; ++j) {
    const Batch batch = sampler.next();
    auto [loss, grad] = hard_label_loss_and_grad(r.model, batch, LabelSource::Vanilla);
    if (!std::isfinite(loss))
      throw DivergenceError("auxiliary training diverged at step " + std::to_string(j) + " (loss " +
                            std::to_string(loss) + ", lr " + std::to_string(cfg.optimizer.learning_rate) + ")");
    r.step_losses.push_back(loss);
    opt.step(r.model.parameters(), grad);
  }
  return r;
}

/// Copy of `train` whose pseudo labels are the auxiliary model's argmax decodes.
inline Dataset generate_pseudo_labels(const PrimaryModel& aux, const Dataset& train) {
  Dataset out = train;
  for (auto& smp : out) smp.pseudo_labels = predict(aux, smp.context);
  return out;
}

}  // namespace metaassist
