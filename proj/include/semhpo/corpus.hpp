#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "semhpo/ontology.hpp"

namespace semhpo {

/// Lowercases, splits on whitespace, strips leading/trailing punctuation,
/// removes masked-PHI spans "[**...**]" and drops numeric tokens.
std::vector<std::string> normalize_tokenize(std::string_view text);

/// True for tokens with at least one digit and no letters ("12", "3.5",
/// "120/80"). Such tokens never reach the vocabulary.
bool is_numeric_token(std::string_view token);

inline constexpr std::size_t kDefaultVocabularyCap = 30000;
inline constexpr int kDefaultWindow = 32;

class Vocabulary {
public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  /// Builds from an ordered token list (reserved tokens are prepended).
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  /// Including the reserved ids.
  std::size_t size() const noexcept { return tokens_.size(); }
  /// FNV-1a over the id-ordered token list; checkpoints pin this.
  std::uint64_t hash() const noexcept { return hash_; }

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// One token per line in id order, reserved tokens first.
  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  std::uint64_t hash_ = 0;
};

enum class DocumentKind { kEhr, kCategory, kSubclass };

std::string_view to_string(DocumentKind kind);

struct Document {
  std::string doc_id;
  DocumentKind kind = DocumentKind::kEhr;
  std::string text;
  std::vector<std::string> icd_codes;  // 3-character ICD-9 codes
  std::vector<int> category_indices;   // sorted; empty for EHRs
};

struct Fragment {
  std::string doc_id;
  int position = 0;
  std::vector<int> token_ids;  // always window-sized
  int true_length = 0;
};

/// Ranks tokens by total frequency (ties lexicographic) and keeps the top
/// cap. Throws DataError on an empty document list.
Vocabulary build_vocabulary(const std::vector<Document>& documents, std::size_t cap = kDefaultVocabularyCap);

/// Token-frequency table used by build_vocabulary; exposed for reporting.
std::unordered_map<std::string, std::size_t> count_tokens(const std::vector<Document>& documents);

/// Consecutive non-overlapping windows. An empty document yields one
/// all-PAD fragment.
std::vector<Fragment> fragment_document(const Document& doc, const Vocabulary& vocab, int window = kDefaultWindow);
std::vector<Fragment> fragment_tokens(std::string_view doc_id, const std::vector<std::string>& tokens,
                                      const Vocabulary& vocab, int window = kDefaultWindow);

/// Random document-level partition; train gets floor(ratio * n) documents.
/// Both halves keep the input order. Throws DataError for fewer than two
/// documents and ConfigError when ratio is outside (0, 1).
std::pair<std::vector<Document>, std::vector<Document>> split_train_test(const std::vector<Document>& docs,
                                                                         double ratio, std::uint64_t seed);

/// First three characters of an ICD-9 code, upper-cased, dots removed.
std::string truncate_icd9(std::string_view code);
/// V (supplementary) and E (external cause) codes.
bool is_supplementary_icd9(std::string_view code);

/// CATEGORY documents for every H_j and SUBCLASS documents for every other
/// closure member, texts from term_text.
std::vector<Document> ontology_documents(const Ontology& ontology, const PhenotypeCategories& categories);

/// JSON Lines: {"doc_id": ..., "text": ..., "icd9": [...]}. Codes are
/// truncated to three characters and de-duplicated on load.
std::vector<Document> read_ehr_jsonl(std::istream& in);
std::vector<Document> load_ehr_jsonl(const std::string& path);
void write_ehr_jsonl(std::ostream& out, const std::vector<Document>& docs);

/// MIMIC-III adapter: discharge summaries from a NOTEEVENTS export joined to
/// DIAGNOSES_ICD on HADM_ID. doc_id is the HADM_ID.
std::vector<Document> load_mimic_discharge_summaries(const std::string& noteevents_csv,
                                                     const std::string& diagnoses_csv);

}  // namespace semhpo
