// Trains S1 on a small asymmetric corpus and prints the learned slot weights
// next to the per-slot noise rates.
#include <cstdio>

#include "metaassist/metaassist.hpp"

int main() {
  using namespace metaassist;
  NoiseConfig data = asymmetric_benchmark_config(3);
  data.train_size = 2000;
  const Corpus corpus = generate_corpus(data);

  TrainConfig cfg;
  cfg.scheme = parse_scheme_spec("s1");
  cfg.epochs = 5;
  cfg.seed = 3;
  const TrainResult r = train_meta(corpus, cfg);

  std::printf("slot  vanilla  pseudo  alpha_s\n");
  for (std::size_t s = 0; s < corpus.schema.size(); ++s)
    std::printf("%4zu  %7.2f  %6.2f  %7.3f\n", s, data.vanilla_noise_rates[s], (*data.pseudo_noise_rates)[s],
                sigmoid(r.scheme.parameters()[s]));
  std::printf("best test JGA %.2f%% (epoch %zu)\n", 100.0 * r.best_test.jga, r.log.best_epoch);
}
