#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gradient_checks.hpp"
#include "metaassist/meta_trainer.hpp"

using namespace metaassist;

namespace {

// One slot, vocabulary 2, scalar context 2, vanilla label 1, pseudo label 0.
struct Toy {
  Dataset data;
  Batch batch;
  PrimaryModel theta{ModelShape{{2}, 1, Architecture::Linear, 0}};

  Toy() {
    Sample s;
    s.context = {2.0};
    s.true_labels = {1};
    s.vanilla_labels = {1};
    s.pseudo_labels = std::vector<int>{0};
    data.push_back(s);
    batch = whole(data);
  }
};

NoiseConfig small_corpus_config(std::uint64_t seed) {
  NoiseConfig c;
  c.num_slots = 3;
  c.vocab_sizes = {3, 4, 5};
  c.context_dim = 6;
  c.clean_size = 100;
  c.train_size = 300;
  c.validation_size = 80;
  c.test_size = 80;
  c.vanilla_noise_rates = {0.1, 0.3, 0.5};
  c.seed = seed;
  return c;
}

TrainConfig small_train_config(const std::string& scheme) {
  TrainConfig t;
  t.scheme = parse_scheme_spec(scheme);
  t.epochs = 2;
  t.hidden_width = 4;
  t.scheme.hidden = 4;
  t.seed = 5;
  return t;
}

std::string run_log_text(const RunLog& log) {
  std::ostringstream out;
  write_run_log(out, log);
  return out.str();
}

}  // namespace

TEST(InterimStep, HandDerivedToy) {
  Toy toy;
  const auto scheme = WeightingScheme::slotwise(1, 0.25);
  const auto hat = interim_step(toy.theta, toy.batch, scheme, 0.1);
  const std::vector<double> want{-0.05, 0.05, -0.025, 0.025};
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(hat.parameters()[i], want[i], 1e-16);
  for (double p : toy.theta.parameters()) EXPECT_EQ(p, 0.0);

  PrimaryModel theta = toy.theta;
  Optimizer sgd(OptimizerSpec{OptimizerKind::Sgd, 0.1}, theta.num_parameters());
  const auto upd = primary_update(theta, toy.batch, scheme, sgd, 0.1);
  EXPECT_EQ(theta, hat);
  EXPECT_NEAR(upd.weights[0].pseudo, 0.25, 1e-15);
  EXPECT_NEAR(upd.train_loss, std::log(2.0), 1e-15);
}

TEST(Hypergradient, HandDerivedToy) {
  Toy toy;
  const auto scheme = WeightingScheme::slotwise(1, 0.25);
  const auto hg = hypergradient(toy.theta, toy.batch, toy.batch, scheme, 0.1);
  // The interim logits are -/+0.125, so the meta residual is q = 1 - sigmoid(0.25)
  // and the two label gradients at theta project onto it with -5q and +5q.
  const double q = 1.0 - 1.0 / (1.0 + std::exp(-0.25));
  ASSERT_EQ(hg.grad.size(), 1u);
  EXPECT_NEAR(hg.grad[0], 0.1 * 0.1875 * 10.0 * q, 1e-15);
  EXPECT_NEAR(hg.meta_loss, -std::log(1.0 - q), 1e-15);
}

TEST(Hypergradient, ZeroStepLeavesThetaAndGivesZero) {
  const auto p = ref::random_problem(2, SchemeKind::S2, Architecture::OneHidden);
  const auto hg = hypergradient(p.theta, p.train, p.meta, p.scheme, 0.0);
  EXPECT_EQ(hg.interim, p.theta);
  for (double g : hg.grad) EXPECT_EQ(g, 0.0);
}

TEST(Hypergradient, FixedSchemeHasNoGradient) {
  auto p = ref::random_problem(2, SchemeKind::FixedAlpha, Architecture::Linear);
  EXPECT_TRUE(hypergradient(p.theta, p.train, p.meta, p.scheme, 0.5).grad.empty());
}

class HypergradientFd : public ::testing::TestWithParam<SchemeKind> {};

TEST_P(HypergradientFd, MatchesFiniteDifferences) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto arch = seed % 2 ? Architecture::OneHidden : Architecture::Linear;
    worst = std::max(worst, ref::hypergradient_error(ref::random_problem(seed, GetParam(), arch)));
  }
  EXPECT_LT(worst, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Schemes, HypergradientFd,
                         ::testing::Values(SchemeKind::S1, SchemeKind::S2, SchemeKind::S3, SchemeKind::S3Decoupled),
                         [](const auto& info) { return scheme_name(info.param); });

TEST(Hypergradient, DescentStepLowersMetaLoss) {
  for (auto kind : {SchemeKind::S1, SchemeKind::S2, SchemeKind::S3}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto p = ref::random_problem(seed, kind, Architecture::Linear);
      const auto before = hypergradient(p.theta, p.train, p.meta, p.scheme, p.eta);
      double norm = 0.0;
      for (double g : before.grad) norm += g * g;
      if (norm < 1e-20) continue;
      bool lowered = false;
      for (double r = 1.0; r > 1e-8 && !lowered; r /= 2) {
        auto scheme = p.scheme;
        Optimizer sgd(OptimizerSpec{OptimizerKind::Sgd, r}, scheme.num_parameters());
        meta_update(scheme, before.grad, sgd);
        lowered = hypergradient(p.theta, p.train, p.meta, scheme, p.eta).meta_loss < before.meta_loss;
      }
      EXPECT_TRUE(lowered) << scheme_name(kind) << " seed " << seed;
    }
  }
}

TEST(MetaUpdate, PlainDescentIsExact) {
  auto w = WeightingScheme::slotwise(3);
  const std::vector<double> start(w.parameters().begin(), w.parameters().end());
  const std::vector<double> g{0.5, -2.0, 0.0};
  Optimizer sgd(OptimizerSpec{OptimizerKind::Sgd, 0.3}, 3);
  meta_update(w, g, sgd);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(w.parameters()[i], start[i] - 0.3 * g[i]);
  EXPECT_THROW(meta_update(w, std::vector<double>{1.0}, sgd), ConfigError);
}

TEST(MetaUpdate, ZeroGradientLeavesParameters) {
  for (auto kind : {OptimizerKind::Sgd, OptimizerKind::Momentum, OptimizerKind::Adam}) {
    auto w = WeightingScheme::instance_wise(SchemeKind::S2, 2, 4, 1);
    const auto before = w;
    Optimizer opt(OptimizerSpec{kind, 0.1}, w.num_parameters());
    const std::vector<double> zero(w.num_parameters(), 0.0);
    for (int t = 0; t < 3; ++t) meta_update(w, zero, opt);
    EXPECT_EQ(w, before) << optimizer_name(kind);
  }
}

TEST(MetaTrainer, PrimaryUpdateStartsFromCurrentParameters) {
  const auto p = ref::random_problem(7, SchemeKind::S2, Architecture::Linear);
  TrainConfig cfg;
  cfg.inner_lr = p.eta;
  MetaTrainer plain(p.theta, p.scheme, cfg, 10);
  MetaTrainer poked(p.theta, p.scheme, cfg, 10);
  bool called = false;
  plain.step(p.train, &p.meta);
  poked.step(p.train, &p.meta, [&](PrimaryModel& interim) {
    called = true;
    for (auto& v : interim.parameters()) v = std::nan("");
  });
  EXPECT_TRUE(called);
  EXPECT_EQ(plain.model(), poked.model());
  EXPECT_EQ(plain.scheme(), poked.scheme());
}

TEST(MetaTrainer, PrimaryUpdateUsesUpdatedScheme) {
  const auto p = ref::random_problem(8, SchemeKind::S1, Architecture::Linear);
  TrainConfig cfg;
  cfg.inner_lr = p.eta;
  cfg.meta_optimizer = {OptimizerKind::Sgd, 50.0};
  MetaTrainer trainer(p.theta, p.scheme, cfg, 10);
  const auto rec = trainer.step(p.train, &p.meta);
  const auto S = p.theta.shape().num_slots();
  for (std::size_t i = 0; i < p.train.size(); ++i)
    for (std::size_t s = 0; s < S; ++s) {
      const double want = sigmoid(trainer.scheme().parameters()[s]);
      EXPECT_NE(want, sigmoid(p.scheme.parameters()[s]));
      EXPECT_DOUBLE_EQ(rec.mean_pseudo_weight[s], want);
    }
}

TEST(MetaTrainer, MissingMetaBatchIsAnError) {
  const auto p = ref::random_problem(1, SchemeKind::S2, Architecture::Linear);
  MetaTrainer trainer(p.theta, p.scheme, TrainConfig{}, 10);
  EXPECT_THROW(trainer.step(p.train, nullptr), ConfigError);
}

TEST(Schedule, WarmupThenLinearDecay) {
  const LinearWarmupSchedule s{2.0, 100, 0.1};
  EXPECT_DOUBLE_EQ(s.at(0), 0.2);
  EXPECT_DOUBLE_EQ(s.at(9), 2.0);
  EXPECT_DOUBLE_EQ(s.at(10), 2.0);
  EXPECT_DOUBLE_EQ(s.at(55), 1.0);
  EXPECT_DOUBLE_EQ(s.at(99), 2.0 / 90.0);
  EXPECT_DOUBLE_EQ(s.at(100), 0.0);
  const LinearWarmupSchedule none{1.0, 10, 0.0};
  EXPECT_DOUBLE_EQ(none.at(0), 1.0);
}

TEST(Reductions, FixedSchemeMatchesSingleLoopBaseline) {
  const Corpus corpus = generate_corpus(small_corpus_config(1));
  for (double alpha : {0.0, 0.3, 1.0}) {
    std::ostringstream spec;
    spec << "fixed:" << alpha;
    const auto cfg = small_train_config(spec.str());
    const auto meta = train_meta(corpus, cfg);
    const auto fixed = train_fixed_alpha(corpus, cfg, alpha);
    EXPECT_EQ(meta.model, fixed.model) << alpha;
    EXPECT_EQ(meta.best_test, fixed.best_test);
  }
}

TEST(Reductions, EndpointsMatchHardLabelTraining) {
  const Corpus corpus = generate_corpus(small_corpus_config(2));
  const auto vanilla = train_hard_labels(corpus, small_train_config("fixed:0"), LabelSource::Vanilla);
  const auto pseudo = train_hard_labels(corpus, small_train_config("fixed:1"), LabelSource::Pseudo);
  EXPECT_EQ(train_fixed_alpha(corpus, small_train_config("fixed:0"), 0.0).model, vanilla.model);
  EXPECT_EQ(train_fixed_alpha(corpus, small_train_config("fixed:1"), 1.0).model, pseudo.model);
  EXPECT_NE(vanilla.model, pseudo.model);
}

TEST(Training, RunLogIsDeterministic) {
  const Corpus corpus = generate_corpus(small_corpus_config(3));
  for (const char* scheme : {"s1", "s2", "s3", "s3d"}) {
    const auto cfg = small_train_config(scheme);
    const auto a = train_meta(corpus, cfg), b = train_meta(corpus, cfg);
    EXPECT_EQ(run_log_text(a.log), run_log_text(b.log)) << scheme;
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(a.scheme, b.scheme);
  }
}

TEST(Training, GradientEvaluationCounts) {
  const Corpus corpus = generate_corpus(small_corpus_config(4));
  const auto cfg = small_train_config("s1");
  const std::size_t steps = total_steps(cfg, corpus.train.size());
  EXPECT_EQ(train_meta(corpus, cfg).log.gradient_evaluations, 3 * steps);
  EXPECT_EQ(train_fixed_alpha(corpus, cfg, 0.5).log.gradient_evaluations, steps);
  EXPECT_EQ(train_meta(corpus, small_train_config("fixed:0.5")).log.gradient_evaluations, steps);
}

TEST(Training, ZeroStepsReturnsInitialisation) {
  const Corpus corpus = generate_corpus(small_corpus_config(5));
  auto cfg = small_train_config("s2");
  cfg.steps = 0;
  const auto r = train_meta(corpus, cfg);
  EXPECT_EQ(r.model, init_model(shape_for(corpus.schema, 6, cfg.architecture, cfg.hidden_width), cfg.init_scale, cfg.seed));
  EXPECT_EQ(r.scheme, make_scheme(cfg.scheme, 3, cfg.seed));
  EXPECT_TRUE(r.log.steps.empty());
  EXPECT_EQ(r.log.gradient_evaluations, 0u);
}

TEST(Training, DivergenceIsReported) {
  const Corpus corpus = generate_corpus(small_corpus_config(6));
  auto cfg = small_train_config("s2");
  cfg.primary_optimizer.learning_rate = 1e308;
  EXPECT_THROW(train_meta(corpus, cfg), DivergenceError);
  auto bad = small_train_config("s2");
  bad.batch_train = 0;
  EXPECT_THROW(train_meta(corpus, bad), ConfigError);
}

TEST(Training, LossesDecreaseOnSmallCorpus) {
  const Corpus corpus = generate_corpus(small_corpus_config(7));
  auto cfg = small_train_config("s2");
  cfg.epochs = 8;
  const auto r = train_meta(corpus, cfg);
  ASSERT_EQ(r.log.epochs.size(), 8u);
  EXPECT_LT(r.log.epochs.back().mean_train_loss, r.log.epochs.front().mean_train_loss);
  for (const auto& e : r.log.epochs) {
    EXPECT_TRUE(std::isfinite(e.mean_train_loss));
    ASSERT_TRUE(e.mean_meta_loss.has_value());
    EXPECT_TRUE(std::isfinite(*e.mean_meta_loss));
  }
}

TEST(SlowBenchmark, BestFixedAlphaIsInterior) {
  const Corpus corpus = generate_corpus(asymmetric_benchmark_config(0));
  TrainConfig cfg;
  double best = -1.0, best_alpha = -1.0;
  for (int k = 0; k <= 10; ++k) {
    const double alpha = k / 10.0;
    const double jga = train_fixed_alpha(corpus, cfg, alpha).best_test.jga;
    if (jga > best) {
      best = jga;
      best_alpha = alpha;
    }
  }
  EXPECT_GT(best_alpha, 0.0);
  EXPECT_LT(best_alpha, 1.0);
}

TEST(SlowBenchmark, DeskDefaultMetaBeatsEndpoints) {
  double meta = 0.0, f0 = 0.0, f1 = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Corpus corpus = generate_corpus(desk_default_config(seed));
    TrainConfig cfg;
    cfg.seed = seed;
    meta += train_meta(corpus, cfg).best_test.jga;
    f0 += train_fixed_alpha(corpus, cfg, 0.0).best_test.jga;
    f1 += train_fixed_alpha(corpus, cfg, 1.0).best_test.jga;
  }
  EXPECT_GT(meta, f0);
  EXPECT_GT(meta, f1);
}
