#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "semhpo/error.hpp"
#include "semhpo/eval.hpp"
#include "semhpo/synthetic.hpp"
#include "support.hpp"

using namespace semhpo;

namespace {

void expect_scores(const Scores& s, double p, double r, double f) {
  EXPECT_NEAR(s.precision, p, 1e-12);
  EXPECT_NEAR(s.recall, r, 1e-12);
  EXPECT_NEAR(s.f1, f, 1e-12);
}

LabelMap random_labels(int docs, int m, std::mt19937_64& rng, double empty_rate) {
  LabelMap out;
  std::uniform_real_distribution<double> u(0, 1);
  for (int d = 0; d < docs; ++d) {
    std::vector<int> v;
    if (u(rng) >= empty_rate) {
      for (int j = 0; j < m; ++j) {
        if (u(rng) < 0.3) v.push_back(j);
      }
    }
    out["doc" + std::to_string(d)] = v;
  }
  return out;
}

}  // namespace

TEST(ScoreDocument, WorkedExamples) {
  expect_scores(score_document({1, 2}, {1, 2}), 1, 1, 1);
  expect_scores(score_document({}, {1}), 0, 0, 0);
  expect_scores(score_document({1, 2, 3}, {2, 3, 4}), 2.0 / 3, 2.0 / 3, 2.0 / 3);
  expect_scores(score_document({5}, {1, 2}), 0, 0, 0);
  expect_scores(score_document({1, 1, 2}, {1}), 0.5, 1, 2.0 / 3);
  EXPECT_THROW(score_document({1}, {}), InputError);
}

TEST(Evaluate, ThreeDocumentFixture) {
  // d1: P={0,1} S={0}     -> p 1/2, r 1,   f 2/3
  // d2: P={}    S={1,2}   -> 0, 0, 0
  // d3: P={0,2} S={0,1,2} -> p 1,   r 2/3, f 4/5
  const LabelMap pred{{"d1", {0, 1}}, {"d3", {2, 0}}};
  const LabelMap silver{{"d1", {0}}, {"d2", {1, 2}}, {"d3", {0, 1, 2}}, {"d4", {}}};
  const auto r = evaluate(pred, silver);
  EXPECT_EQ(r.scored, 3u);
  EXPECT_EQ(r.skipped, 1u);
  ASSERT_EQ(r.per_document.size(), 3u);
  EXPECT_EQ(r.per_document[1].doc_id, "d2");
  expect_scores(r.mean, (0.5 + 0 + 1) / 3, (1 + 0 + 2.0 / 3) / 3, (2.0 / 3 + 0 + 0.8) / 3);
  // Pooled: hits 1+0+2, predicted 2+0+2, silver 1+2+3.
  expect_scores(r.pooled, 3.0 / 4, 3.0 / 6, 2 * 0.75 * 0.5 / 1.25);
}

TEST(Evaluate, PerfectPredictorScoresOne) {
  const LabelMap silver{{"a", {1}}, {"b", {0, 3}}};
  expect_scores(evaluate(silver, silver).mean, 1, 1, 1);
}

TEST(Evaluate, CountsPredictionsWithoutSilver) {
  const auto r = evaluate({{"a", {1}}, {"z", {2}}}, {{"a", {1}}});
  EXPECT_EQ(r.unlabeled_predictions, 1u);
  EXPECT_EQ(r.scored, 1u);
}

TEST(Evaluate, MatchesBruteForceOnRandomFixtures) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int docs = 1 + trial % 50;
    const auto silver = random_labels(docs, 6, rng, 0.1);
    auto pred = random_labels(docs, 6, rng, 0.2);
    if (trial % 3 == 0) pred.erase(pred.begin());
    const auto r = evaluate(pred, silver);
    double p = 0, rc = 0, f = 0;
    std::size_t n = 0;
    for (const auto& [id, gold] : silver) {
      if (gold.empty()) continue;
      const auto it = pred.find(id);
      const auto s = semhpo::testing::score_oracle(it == pred.end() ? std::vector<int>{} : it->second, gold);
      p += s.p;
      rc += s.r;
      f += s.f;
      ++n;
    }
    ASSERT_EQ(r.scored, n);
    if (n == 0) continue;
    EXPECT_NEAR(r.mean.precision, p / n, 1e-9);
    EXPECT_NEAR(r.mean.recall, rc / n, 1e-9);
    EXPECT_NEAR(r.mean.f1, f / n, 1e-9);
    for (const auto& d : r.per_document) {
      const auto& s = d.scores;
      const double h = s.precision + s.recall == 0 ? 0 : 2 * s.precision * s.recall / (s.precision + s.recall);
      EXPECT_DOUBLE_EQ(s.f1, h);
      EXPECT_GE(s.f1, 0.0);
      EXPECT_LE(s.f1, 1.0);
    }
  }
}

TEST(Evaluate, DocumentOrderDoesNotMatter) {
  std::mt19937_64 rng(4);
  const auto silver = random_labels(30, 5, rng, 0.0);
  const auto pred = random_labels(30, 5, rng, 0.0);
  // Rename documents so the map orders them differently.
  LabelMap silver2, pred2;
  for (const auto& [id, v] : silver) silver2["x" + std::string(id.rbegin(), id.rend())] = v;
  for (const auto& [id, v] : pred) pred2["x" + std::string(id.rbegin(), id.rend())] = v;
  const auto a = evaluate(pred, silver), b = evaluate(pred2, silver2);
  EXPECT_NEAR(a.mean.f1, b.mean.f1, 1e-12);
  EXPECT_NEAR(a.mean.precision, b.mean.precision, 1e-12);
  EXPECT_NEAR(a.pooled.recall, b.pooled.recall, 1e-12);
}

TEST(Reports, TableAndTsvCarryTheCounts) {
  const auto r = evaluate({{"a", {1}}}, {{"a", {1, 2}}, {"b", {}}});
  std::ostringstream table, tsv;
  write_report_table(table, r);
  write_report_tsv(tsv, r);
  EXPECT_NE(tsv.str().find("a\t1\t0.5"), std::string::npos) << tsv.str();
  EXPECT_NE(tsv.str().find("MEAN"), std::string::npos);
  EXPECT_NE(tsv.str().find("POOLED"), std::string::npos);
  EXPECT_NE(tsv.str().find("scored=1 skipped=1"), std::string::npos);
  EXPECT_NE(table.str().find("skipped"), std::string::npos);
}

TEST(CorpusStats, EmptyAndSingleDocument) {
  const Ontology o({semhpo::testing::make_term("HP:0000001", "All"),
                    semhpo::testing::make_term("HP:0000118", "Phenotypic abnormality", {"HP:0000001"}),
                    semhpo::testing::make_term("HP:0000707", "Nervous", {"HP:0000118"}),
                    semhpo::testing::make_term("HP:0002315", "Headache", {"HP:0000707"})});
  const auto c = subclass_closure(o, select_general_categories(o));
  const KeywordIndex k(o, c);
  const auto empty = corpus_stats({}, k);
  EXPECT_EQ(empty.documents, 0u);
  EXPECT_EQ(empty.mean_icd, 0.0);
  EXPECT_TRUE(empty.per_code.empty());

  const Document d{"d", DocumentKind::kEhr, "headache again, headache", {"428", "V45", "250"}, {}};
  const auto s = corpus_stats({d}, k);
  EXPECT_EQ(s.documents, 1u);
  EXPECT_DOUBLE_EQ(s.mean_icd, 3.0);
  EXPECT_DOUBLE_EQ(s.mean_keyword_terms, 1.0);
  EXPECT_EQ(s.supplementary_codes, 1u);
  ASSERT_EQ(s.per_code.size(), 3u);
  EXPECT_EQ(s.per_code[0].code, "250");
  EXPECT_EQ(s.per_code[0].min_terms, 1u);
}

TEST(CorpusStats, SyntheticExplicitInjectionsAreCountedExactly) {
  SyntheticOptions opt;
  opt.notes = 120;
  const auto syn = generate_synthetic(opt);
  const Ontology o(syn.terms);
  const auto c = subclass_closure(o, select_general_categories(o));
  const KeywordIndex k(o, c);
  const auto s = corpus_stats(syn.notes, k, &syn.labels);
  double terms = 0, icd = 0, labels = 0;
  for (const auto& d : syn.notes) {
    const auto& ex = syn.explicit_terms.at(d.doc_id);
    terms += static_cast<double>(std::set<std::string>(ex.begin(), ex.end()).size());
    icd += static_cast<double>(d.icd_codes.size());
    labels += static_cast<double>(syn.labels.at(d.doc_id).size());
  }
  EXPECT_DOUBLE_EQ(s.mean_keyword_terms, terms / 120);
  EXPECT_DOUBLE_EQ(s.mean_icd, icd / 120);
  EXPECT_DOUBLE_EQ(s.mean_silver_categories, labels / 120);
}
