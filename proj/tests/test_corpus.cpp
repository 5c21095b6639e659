#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "semhpo/corpus.hpp"
#include "semhpo/error.hpp"
#include "support.hpp"

using namespace semhpo;

namespace {

Document ehr(std::string id, std::string text, std::vector<std::string> codes = {}) {
  return {std::move(id), DocumentKind::kEhr, std::move(text), std::move(codes), {}};
}

std::string words(int n, const std::string& stem = "w") {
  std::string s;
  for (int i = 0; i < n; ++i) s += stem + std::to_string(i) + "x ";
  return s;
}

}  // namespace

TEST(Tokenize, SpecExampleDropsNumbersAndPunctuation) {
  EXPECT_EQ(normalize_tokenize("Mild Headache, BP 120/80."), (std::vector<std::string>{"mild", "headache", "bp"}));
  EXPECT_TRUE(normalize_tokenize("").empty());
  EXPECT_EQ(normalize_tokenize("aneurysm"), std::vector<std::string>{"aneurysm"});
}

TEST(Tokenize, RemovesPhiMasksAsAUnit) {
  EXPECT_EQ(normalize_tokenize("seen at [**Hospital 1234**] on [**2101-3-4**] today"),
            (std::vector<std::string>{"seen", "at", "on", "today"}));
}

TEST(Tokenize, NoNumberSurvives) {
  for (const auto& t : normalize_tokenize("3.5 -2 1,000 12:30 98.6F 2x (7) b12 .5 x1.2")) {
    EXPECT_FALSE(is_numeric_token(t)) << t;
    EXPECT_TRUE(std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::isalpha(c); })) << t;
  }
}

TEST(Vocabulary, ReservedIdsComeFirst) {
  const auto v = build_vocabulary({ehr("a", "beta alpha beta gamma")});
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.token(Vocabulary::kUnk), "<unk>");
  EXPECT_EQ(v.id("beta"), 2);
  EXPECT_EQ(v.id("alpha"), 3);  // tie with gamma, lexicographically first
  EXPECT_EQ(v.id("gamma"), 4);
  EXPECT_EQ(v.id("delta"), Vocabulary::kUnk);
}

TEST(Vocabulary, CapNotBindingKeepsAllTokens) {
  const auto v = build_vocabulary({ehr("a", words(10))});
  EXPECT_EQ(v.size(), 12u);
}

TEST(Vocabulary, CapKeepsMostFrequentTokens) {
  // 35,000 distinct tokens with varied counts; keep 30,000.
  std::mt19937_64 rng(3);
  std::vector<Document> docs;
  std::string text;
  for (int i = 0; i < 35000; ++i) {
    const int reps = 1 + static_cast<int>(rng() % 4);
    for (int r = 0; r < reps; ++r) text += "t" + std::to_string(i) + "q ";
    if (i % 1000 == 999) {
      docs.push_back(ehr("d" + std::to_string(i), text));
      text.clear();
    }
  }
  const auto counts = count_tokens(docs);
  ASSERT_EQ(counts.size(), 35000u);
  const auto v = build_vocabulary(docs, 30000);
  ASSERT_EQ(v.size(), 30002u);
  std::size_t min_kept = SIZE_MAX, max_dropped = 0;
  for (const auto& [tok, n] : counts) {
    if (v.id(tok) != Vocabulary::kUnk) {
      min_kept = std::min(min_kept, n);
    } else {
      max_dropped = std::max(max_dropped, n);
    }
  }
  EXPECT_GE(min_kept, max_dropped);
}

TEST(Vocabulary, SaveLoadPreservesHash) {
  const auto v = build_vocabulary({ehr("a", "x y z y")});
  std::stringstream s;
  v.save(s);
  const auto w = Vocabulary::load(s);
  EXPECT_EQ(w.tokens(), v.tokens());
  EXPECT_EQ(w.hash(), v.hash());
}

TEST(Fragment, SeventyTokensMakeThreeWindows) {
  const auto doc = ehr("d", words(70));
  const auto v = build_vocabulary({doc});
  const auto f = fragment_document(doc, v, 32);
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[0].true_length, 32);
  EXPECT_EQ(f[1].true_length, 32);
  EXPECT_EQ(f[2].true_length, 6);
  for (std::size_t i = 6; i < 32; ++i) EXPECT_EQ(f[2].token_ids[i], Vocabulary::kPad);
}

TEST(Fragment, EmptyDocumentGivesOnePadFragment) {
  const auto v = build_vocabulary({ehr("a", "x")});
  const auto f = fragment_document(ehr("e", ""), v, 32);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].true_length, 0);
  EXPECT_EQ(f[0].token_ids, std::vector<int>(32, Vocabulary::kPad));
}

TEST(Fragment, UnseenTokenMapsToUnk) {
  const auto v = build_vocabulary({ehr("a", "known")});
  const auto f = fragment_document(ehr("b", "known novel"), v, 4);
  EXPECT_EQ(f[0].token_ids[1], Vocabulary::kUnk);
}

TEST(Fragment, ReassemblyReproducesTokens) {
  const auto doc = ehr("d", words(101) + " Tail, 42 end.");
  const auto v = build_vocabulary({doc});
  std::vector<std::string> back;
  for (const auto& f : fragment_document(doc, v, 7)) {
    for (int i = 0; i < f.true_length; ++i) back.push_back(v.token(f.token_ids[static_cast<std::size_t>(i)]));
  }
  EXPECT_EQ(back, normalize_tokenize(doc.text));
}

TEST(Fragment, WindowBelowOneIsRejected) {
  const auto v = build_vocabulary({ehr("a", "x")});
  EXPECT_THROW(fragment_document(ehr("a", "x"), v, 0), ConfigError);
}

TEST(Split, SeventyThirtyDeterministicAndDisjoint) {
  std::vector<Document> docs;
  for (int i = 0; i < 100; ++i) docs.push_back(ehr("d" + std::to_string(i), "x"));
  const auto [a, b] = split_train_test(docs, 0.7, 9);
  EXPECT_EQ(a.size(), 70u);
  EXPECT_EQ(b.size(), 30u);
  const auto [a2, b2] = split_train_test(docs, 0.7, 9);
  std::set<std::string> ids;
  for (const auto& d : a) ids.insert(d.doc_id);
  for (const auto& d : b) EXPECT_FALSE(ids.count(d.doc_id));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].doc_id, a2[i].doc_id);
  const auto [c, d] = split_train_test(docs, 0.7, 10);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].doc_id != c[i].doc_id;
  EXPECT_TRUE(differs);
}

TEST(Split, FullCorpusSizeFloors) {
  std::vector<Document> docs(52722, ehr("", ""));
  for (std::size_t i = 0; i < docs.size(); ++i) docs[i].doc_id = std::to_string(i);
  EXPECT_EQ(split_train_test(docs, 0.7, 1).first.size(), 36905u);
}

TEST(Split, RejectsDegenerateInput) {
  EXPECT_THROW(split_train_test({ehr("a", "")}, 0.7, 1), DataError);
  EXPECT_THROW(split_train_test({ehr("a", ""), ehr("b", "")}, 1.0, 1), ConfigError);
}

TEST(Icd, TruncatesToThreeCharacters) {
  EXPECT_EQ(truncate_icd9("428.0"), "428");
  EXPECT_EQ(truncate_icd9("4280"), "428");
  EXPECT_EQ(truncate_icd9("v45.81"), "V45");
  EXPECT_EQ(truncate_icd9("E878.8"), "E87");
  EXPECT_TRUE(is_supplementary_icd9("V45"));
  EXPECT_FALSE(is_supplementary_icd9("428"));
}

TEST(Jsonl, RoundTripAndTruncation) {
  std::istringstream in(R"({"doc_id": "a", "text": "Chest pain.", "icd9": ["428.0", "4280", "V45.81"]}
{"doc_id": "b", "text": "", "icd9": []}
)");
  const auto docs = read_ehr_jsonl(in);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].icd_codes, (std::vector<std::string>{"428", "V45"}));
  std::stringstream s;
  write_ehr_jsonl(s, docs);
  const auto again = read_ehr_jsonl(s);
  EXPECT_EQ(again[0].text, "Chest pain.");
  EXPECT_EQ(again[0].icd_codes, docs[0].icd_codes);
}

TEST(Jsonl, DuplicateDocIdIsParseError) {
  std::istringstream in("{\"doc_id\":\"a\",\"text\":\"\"}\n{\"doc_id\":\"a\",\"text\":\"\"}\n");
  EXPECT_THROW(read_ehr_jsonl(in), ParseError);
}

TEST(Mimic, JoinsDischargeSummariesWithDiagnoses) {
  const auto dir = std::filesystem::temp_directory_path() / "semhpo_mimic_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream n(dir / "NOTEEVENTS.csv");
    n << "ROW_ID,SUBJECT_ID,HADM_ID,CATEGORY,TEXT\n"
      << "1,10,100,Discharge summary,\"Admitted with \"\"chest pain\"\",\nstable.\"\n"
      << "2,10,100,Nursing,ignored\n"
      << "3,11,101,Discharge summary,Second note\n"
      << "4,10,100,Discharge summary,Addendum\n";
    std::ofstream d(dir / "DIAGNOSES_ICD.csv");
    d << "ROW_ID,SUBJECT_ID,HADM_ID,SEQ_NUM,ICD9_CODE\n"
      << "1,10,100,1,4280\n2,10,100,2,V4581\n3,11,101,1,25000\n4,12,999,1,4019\n";
  }
  const auto docs = load_mimic_discharge_summaries((dir / "NOTEEVENTS.csv").string(), (dir / "DIAGNOSES_ICD.csv").string());
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].doc_id, "100");
  EXPECT_EQ(docs[0].text, "Admitted with \"chest pain\",\nstable.\nAddendum");
  EXPECT_EQ(docs[0].icd_codes, (std::vector<std::string>{"428", "V45"}));
  EXPECT_EQ(docs[1].icd_codes, std::vector<std::string>{"250"});
  std::filesystem::remove_all(dir);
}

TEST(OntologyDocuments, CategoriesThenSubclassesWithMembership) {
  using semhpo::testing::make_term;
  const Ontology o({make_term("R", "root"), make_term("H1", "Heart", {"R"}), make_term("H2", "Lung", {"R"}),
                    make_term("S", "Shared", {"H1", "H2"})});
  const auto c = subclass_closure(o, select_general_categories(o, "R"));
  const auto docs = ontology_documents(o, c);
  ASSERT_EQ(docs.size(), 3u);
  EXPECT_EQ(docs[0].kind, DocumentKind::kCategory);
  EXPECT_EQ(docs[0].category_indices, std::vector<int>{0});
  EXPECT_EQ(docs[2].kind, DocumentKind::kSubclass);
  EXPECT_EQ(docs[2].category_indices, (std::vector<int>{0, 1}));
  EXPECT_EQ(docs[2].text, "Shared");
}
