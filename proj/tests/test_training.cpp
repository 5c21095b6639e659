#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "semhpo/error.hpp"
#include "semhpo/training.hpp"

using namespace semhpo;
using semhpo::nn::Graph;

namespace {

Fragment fragment(std::vector<int> ids, int window) {
  Fragment f;
  f.true_length = static_cast<int>(ids.size());
  ids.resize(static_cast<std::size_t>(window), Vocabulary::kPad);
  f.token_ids = std::move(ids);
  return f;
}

// Binary cross-entropy of alpha against a membership set, averaged over M.
double penalty_oracle(const RowVector& alpha, const std::vector<int>& members) {
  const std::set<int> in(members.begin(), members.end());
  double s = 0.0;
  for (int j = 0; j < alpha.cols(); ++j) s += in.count(j) ? std::log(alpha(j)) : std::log(1.0 - alpha(j));
  return -s / static_cast<double>(alpha.cols());
}

TrainingPools synthetic_pools(int ehr, int cats, int subs, int window = 4) {
  TrainingPools p;
  for (int i = 0; i < ehr; ++i) p.ehr.push_back(fragment({2 + i % 5}, window));
  for (int i = 0; i < cats; ++i) p.category_items.push_back({"C" + std::to_string(i), {i % 3}, {fragment({3}, window)}});
  for (int i = 0; i < subs; ++i) {
    p.subclass_items.push_back({"S" + std::to_string(i), {i % 3}, {fragment({4}, window), fragment({5}, window)}});
  }
  return p;
}

void zero_classifier_output(Model& m) {
  m.params()["classifier.dense.weight"].setZero();
  m.params()["classifier.dense.bias"].setZero();
}

}  // namespace

TEST(Losses, AlphaPenaltyMatchesFormula) {
  const auto c = ModelConfig::tiny(20, 4);
  const Model m(c, 3);
  const std::vector<int> one{2}, many{0, 3};
  const auto fc = fragment({5, 6}, c.window), fs = fragment({7, 8, 9}, c.window);
  const TrainingBatch batch{{&fc, DocumentKind::kCategory, &one}, {&fs, DocumentKind::kSubclass, &many}};
  Graph g;
  graph::Binder bind(g, m.params(), nullptr);
  const auto lg = build_losses(bind, c, batch, {});
  ASSERT_EQ(lg.traces.size(), 2u);
  EXPECT_NEAR(lg.traces[0].alpha_penalty, penalty_oracle(m.encode(fc).alpha, one), 1e-12);
  EXPECT_NEAR(lg.traces[1].alpha_penalty, penalty_oracle(m.encode(fs).alpha, many), 1e-12);
  const auto v = lg.values(g);
  EXPECT_NEAR(v.category, lg.traces[0].reconstruction + lg.traces[0].alpha_penalty, 1e-12);
  EXPECT_NEAR(v.subclass, lg.traces[1].reconstruction + lg.traces[1].alpha_penalty, 1e-12);
}

TEST(Losses, PenaltyAtHalfIsLogTwo) {
  // Zeroing the alpha head gives alpha = 0.5 everywhere.
  for (int m_count : {2, 3}) {
    const auto c = ModelConfig::tiny(20, m_count);
    Model m(c, 1);
    m.params()["encoder.alpha.weight"].setZero();
    const std::vector<int> members = m_count == 2 ? std::vector<int>{0} : std::vector<int>{1, 2};
    const auto f = fragment({}, c.window);  // empty text: no reconstruction term
    const TrainingBatch batch{{&f, m_count == 2 ? DocumentKind::kCategory : DocumentKind::kSubclass, &members}};
    const auto term = m_count == 2 ? LossTerm::kCategory : LossTerm::kSubclass;
    EXPECT_NEAR(evaluate_loss(m, batch, term), std::log(2.0), 1e-12);
  }
}

TEST(Losses, UniformClassifierGivesMLogM) {
  for (int m_count : {3, 24}) {
    const auto c = ModelConfig::tiny(20, m_count);
    Model m(c, 2);
    zero_classifier_output(m);
    const auto f1 = fragment({4}, c.window), f2 = fragment({5, 6}, c.window);
    const TrainingBatch batch{{&f1, DocumentKind::kEhr, nullptr}, {&f2, DocumentKind::kEhr, nullptr}};
    EXPECT_NEAR(loss_prior(m, batch), m_count * std::log(static_cast<double>(m_count)), 1e-9);
  }
  EXPECT_NEAR(24 * std::log(24.0), 76.273, 1e-3);
}

TEST(Losses, FreshGeneratorIsNearLogVocabulary) {
  const int vocab = 200;
  const auto c = ModelConfig::tiny(vocab, 3);
  const Model m(c, 4);
  std::mt19937_64 rng(1);
  std::vector<Fragment> frags;
  for (int i = 0; i < 16; ++i) {
    std::vector<int> ids;
    for (int t = 0; t < c.window; ++t) ids.push_back(2 + static_cast<int>(rng() % (vocab - 2)));
    frags.push_back(fragment(ids, c.window));
  }
  TrainingBatch batch;
  for (const auto& f : frags) batch.push_back({&f, DocumentKind::kEhr, nullptr});
  const double l = loss_reconstruction_ehr(m, batch);
  EXPECT_NEAR(l / std::log(static_cast<double>(vocab)), 1.0, 0.05);
}

TEST(Losses, EmptySubBatchesContributeZero) {
  const auto c = ModelConfig::tiny(20, 3);
  const Model m(c, 5);
  const auto f = fragment({4, 5}, c.window);
  const TrainingBatch batch{{&f, DocumentKind::kEhr, nullptr}};
  EXPECT_EQ(loss_reconstruction_category(m, batch), 0.0);
  EXPECT_EQ(loss_reconstruction_subclass(m, batch), 0.0);
  EXPECT_GT(loss_reconstruction_ehr(m, batch), 0.0);
}

TEST(Losses, CombinedIsTheWeightedSum) {
  const auto c = ModelConfig::tiny(20, 3);
  const Model m(c, 6);
  const std::vector<int> one{1}, two{0, 2};
  const auto a = fragment({3, 4}, c.window), b = fragment({5}, c.window), d = fragment({6, 7, 8}, c.window);
  const TrainingBatch batch{{&a, DocumentKind::kEhr, nullptr},
                            {&b, DocumentKind::kCategory, &one},
                            {&d, DocumentKind::kSubclass, &two}};
  const LossWeights w{0.5, 2.0, 3.0, 0.25};
  const double expect = w.ehr * loss_reconstruction_ehr(m, batch) + w.category * loss_reconstruction_category(m, batch) +
                        w.subclass * loss_reconstruction_subclass(m, batch) + w.prior * loss_prior(m, batch);
  EXPECT_NEAR(evaluate_loss(m, batch, LossTerm::kCombined, w), expect, 1e-10);
}

TEST(Losses, BadMembershipIsDataError) {
  const auto c = ModelConfig::tiny(20, 3);
  const Model m(c, 6);
  const std::vector<int> two{0, 1}, out_of_range{7};
  const auto f = fragment({3}, c.window);
  EXPECT_THROW(loss_reconstruction_category(m, {{&f, DocumentKind::kCategory, &two}}), DataError);
  EXPECT_THROW(loss_reconstruction_subclass(m, {{&f, DocumentKind::kSubclass, &out_of_range}}), DataError);
  EXPECT_THROW(loss_reconstruction_subclass(m, {{&f, DocumentKind::kSubclass, nullptr}}), DataError);
}

TEST(Sampler, UniformMixMatchesPoolProportions) {
  const auto pools = synthetic_pools(100, 24, 500);
  std::mt19937_64 rng(17);
  double ehr = 0, cat = 0, sub = 0;
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    const auto batch = sample_batch(pools, {}, 32, rng);
    ASSERT_EQ(batch.size(), 32u);
    std::set<const Fragment*> seen_ehr;
    for (const auto& ex : batch) {
      if (ex.kind == DocumentKind::kEhr) {
        EXPECT_TRUE(seen_ehr.insert(ex.fragment).second) << "EHR fragment drawn twice";
        ++ehr;
      } else if (ex.kind == DocumentKind::kCategory) {
        ++cat;
      } else {
        ++sub;
      }
    }
  }
  // Expected counts are 32 * n_kind / 624.
  EXPECT_NEAR(ehr / trials, 32.0 * 100 / 624, 0.1);
  EXPECT_NEAR(cat / trials, 32.0 * 24 / 624, 0.05);
  EXPECT_NEAR(sub / trials, 32.0 * 500 / 624, 0.1);
}

TEST(Sampler, OversizedBatchDrawsWithReplacement) {
  const auto pools = synthetic_pools(2, 1, 1);
  std::mt19937_64 rng(1);
  EXPECT_EQ(sample_batch(pools, {}, 10, rng).size(), 10u);
}

TEST(Sampler, QuotaGivesExactCounts) {
  const auto pools = synthetic_pools(10, 3, 10);
  std::mt19937_64 rng(2);
  const MixPolicy q{MixPolicy::Kind::kQuota, 4, 1, 3};
  const auto batch = sample_batch(pools, q, 8, rng);
  int counts[3] = {0, 0, 0};
  for (const auto& ex : batch) ++counts[static_cast<int>(ex.kind)];
  EXPECT_EQ(counts[static_cast<int>(DocumentKind::kEhr)], 4);
  EXPECT_EQ(counts[static_cast<int>(DocumentKind::kCategory)], 1);
  EXPECT_EQ(counts[static_cast<int>(DocumentKind::kSubclass)], 3);
  EXPECT_THROW(sample_batch(pools, q, 9, rng), ConfigError);
}

TEST(Sampler, EmptyPoolIsConfigError) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_batch(synthetic_pools(0, 1, 1), {}, 4, rng), ConfigError);
  EXPECT_THROW(sample_batch(synthetic_pools(3, 0, 1), {}, 4, rng), ConfigError);
  EXPECT_THROW(sample_batch(synthetic_pools(3, 1, 0), {}, 4, rng), ConfigError);
}

TEST(Sampler, OntologyExamplesCarryTheirMembership) {
  const auto pools = synthetic_pools(1, 3, 3);
  std::mt19937_64 rng(3);
  for (const auto& ex : sample_batch(pools, {}, 7, rng)) {
    if (ex.kind == DocumentKind::kEhr) {
      EXPECT_EQ(ex.categories, nullptr);
    } else {
      ASSERT_NE(ex.categories, nullptr);
      EXPECT_FALSE(ex.categories->empty());
    }
  }
}

TEST(Training, PriorOnlyObjectiveReducesPrior) {
  const auto c = ModelConfig::tiny(20, 3);
  Model m(c, 8);
  const auto pools = synthetic_pools(30, 3, 6, c.window);
  TrainingSettings s;
  s.batch_size = 8;
  s.max_steps = 200;
  s.weights = {0, 0, 0, 1};
  // Much larger steps kill every ReLU of the tiny classifier at once.
  s.optimizer.learning_rate = 1e-3;
  s.horizon = 1000;
  const auto r = train(m, pools, s, 1);
  ASSERT_EQ(r.log.size(), 200u);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    first += r.log[i].losses.prior;
    last += r.log[r.log.size() - 1 - i].losses.prior;
  }
  EXPECT_LT(last, 0.9 * first);
  // The untouched reconstruction terms stay where they started.
  EXPECT_NEAR(r.log.back().losses.ehr, r.log.front().losses.ehr, 0.5);
}

TEST(Training, FreshClassifierIsNearlyUniform) {
  const auto c = ModelConfig::tiny(20, 3);
  const Model m(c, 9);
  const auto pools = synthetic_pools(10, 3, 3, c.window);
  std::mt19937_64 rng(1);
  const auto batch = sample_batch(pools, {}, 8, rng);
  EXPECT_NEAR(loss_prior(m, batch) / (3 * std::log(3.0)), 1.0, 0.10);
}

TEST(Training, SameSeedGivesIdenticalLogs) {
  const auto c = ModelConfig::tiny(20, 3);
  const auto pools = synthetic_pools(20, 3, 6, c.window);
  TrainingSettings s;
  s.batch_size = 6;
  s.max_steps = 8;
  auto run = [&] {
    Model m(c, 4);
    std::ostringstream out;
    write_training_log(out, train(m, pools, s, 21).log);
    return out.str();
  };
  EXPECT_EQ(run(), run());
}

TEST(Training, ConvergenceRuleStopsOnAPlateau) {
  const auto c = ModelConfig::tiny(20, 3);
  Model m(c, 4);
  const auto pools = synthetic_pools(10, 3, 3, c.window);
  TrainingSettings s;
  s.batch_size = 4;
  s.max_steps = 200;
  s.optimizer.learning_rate = 0.0;  // loss can never improve
  s.average_window = 5;
  s.horizon = 10;
  const auto r = train(m, pools, s, 1);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.log.size(), 200u);
}

TEST(Training, NonFiniteLossIsDivergence) {
  const auto c = ModelConfig::tiny(20, 3);
  Model m(c, 4);
  m.params()["encoder.alpha.bias"](0, 0) = std::nan("");
  const auto pools = synthetic_pools(10, 3, 3, c.window);
  TrainingSettings s;
  s.batch_size = 4;
  s.max_steps = 3;
  EXPECT_THROW(train(m, pools, s, 1), DivergenceError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameters p;
  p.add("w", Matrix::Constant(1, 2, 1.0));
  Adam adam(p, {0.1, 0.9, 0.999, 1e-8});
  Matrix g(1, 2);
  g << 3.0, -0.5;
  adam.step(p, {g});
  EXPECT_NEAR(p["w"](0, 0), 0.9, 1e-6);
  EXPECT_NEAR(p["w"](0, 1), 1.1, 1e-6);
}

TEST(Config, ParsesPresetAndOverrides) {
  std::istringstream in("# comment\npreset = small\nlambda1 = 2.5\nmax_steps=40  # trailing\nconv_widths = 4, 2\n"
                        "conv_channels = 2,3\nmix = quota\nquota_ehr = 20\nquota_category = 4\nquota_subclass = 8\n"
                        "seed = 12\nprior_on_ontology_only = true\n");
  const auto cfg = parse_training_config(in);
  EXPECT_EQ(cfg.model.hidden, 64);
  EXPECT_EQ(cfg.training.weights.ehr, 2.5);
  EXPECT_EQ(cfg.training.weights.category, 10.0);
  EXPECT_EQ(cfg.training.max_steps, 40);
  EXPECT_EQ(cfg.model.conv_widths, (std::vector<int>{4, 2}));
  EXPECT_EQ(cfg.training.mix.kind, MixPolicy::Kind::kQuota);
  EXPECT_EQ(cfg.training.mix.subclass, 8);
  EXPECT_EQ(cfg.seed, 12u);
  EXPECT_TRUE(cfg.training.loss.prior_on_ontology_only);
}

TEST(Config, DefaultsFollowTheFullSizeSetting) {
  std::istringstream in("");
  const auto cfg = parse_training_config(in);
  EXPECT_EQ(cfg.model.hidden, 768);
  EXPECT_EQ(cfg.training.batch_size, 32);
  EXPECT_EQ(cfg.training.optimizer.learning_rate, 1e-4);
  EXPECT_EQ(cfg.training.weights.prior, 1.0);
}

TEST(Config, ErrorsAreTyped) {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return parse_training_config(in);
  };
  EXPECT_THROW(parse("bogus = 1\n"), ConfigError);
  EXPECT_THROW(parse("layers = two\n"), ParseError);
  EXPECT_THROW(parse("layers\n"), ParseError);
  EXPECT_THROW(parse("layers = 1\nlayers = 2\n"), ParseError);
  EXPECT_THROW(parse("seed = -4\n"), ParseError);
  EXPECT_THROW(parse("lambda2 = -1\n"), ConfigError);
  EXPECT_THROW(parse("preset = huge\n"), ParseError);
  try {
    parse("\n\nlearning_rate = fast\n");
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}
