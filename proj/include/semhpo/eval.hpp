#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "semhpo/corpus.hpp"
#include "semhpo/silver_standard.hpp"

namespace semhpo {

using LabelMap = std::map<std::string, std::vector<int>>;

struct Scores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// precision = |P & S| / |P| (0 when P is empty), recall = |P & S| / |S|,
/// f1 their harmonic mean (0 when both are 0). Duplicates are ignored.
/// Throws InputError when `silver` is empty.
Scores score_document(std::vector<int> predicted, std::vector<int> silver);

struct DocumentScore {
  std::string doc_id;
  Scores scores;
};

struct EvalReport {
  std::vector<DocumentScore> per_document;  // sorted by doc_id
  Scores mean;                              // unweighted means over scored documents
  /// Globally pooled counts over the scored documents, for comparison only.
  Scores pooled;
  std::size_t scored = 0;
  std::size_t skipped = 0;                // documents with an empty silver set
  std::size_t unlabeled_predictions = 0;  // predictions with no silver record
};

/// Documents without a prediction are scored as empty predictions.
EvalReport evaluate(const LabelMap& predictions, const LabelMap& silver);

struct CodeTermRange {
  std::string code;
  std::size_t documents = 0;
  std::size_t min_terms = 0;
  std::size_t max_terms = 0;
};

struct CorpusStats {
  std::size_t documents = 0;
  double mean_icd = 0.0;
  double mean_keyword_terms = 0.0;
  double mean_silver_categories = 0.0;  // only when silver labels are given
  std::size_t supplementary_codes = 0;  // V and E code occurrences
  std::vector<CodeTermRange> per_code;  // sorted by code
};

/// Per-document ICD counts and keyword-matched HPO term counts, plus the
/// spread of matched-term counts among documents sharing each code.
CorpusStats corpus_stats(const std::vector<Document>& documents, const KeywordIndex& keywords,
                         const LabelMap* silver = nullptr);

void write_report_table(std::ostream& out, const EvalReport& report);
/// doc_id, precision, recall, f1 per line, then MEAN and POOLED rows.
void write_report_tsv(std::ostream& out, const EvalReport& report);
void write_stats_table(std::ostream& out, const CorpusStats& stats);
void write_stats_tsv(std::ostream& out, const CorpusStats& stats);

}  // namespace semhpo
