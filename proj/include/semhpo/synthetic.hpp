#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "semhpo/corpus.hpp"
#include "semhpo/ontology.hpp"
#include "semhpo/silver_standard.hpp"

namespace semhpo {

/// Knobs for the synthetic benchmark. Notes mix generic clinical filler with
/// the texts of injected subclasses; the injected terms are the ground truth.
struct SyntheticOptions {
  int categories = 6;             // 1..6
  int subclasses_per_category = 16;
  int notes = 500;
  int min_injections = 1;         // distinct categories drawn per note
  int max_injections = 3;
  int filler_tokens = 80;         // approximate filler length per note
  double explicit_rate = 0.3;     // inject the name or a synonym instead of the definition
  double dropout = 0.15;          // per-word drop rate for definition injections
  std::uint64_t seed = 13;
};

struct SyntheticCorpus {
  std::vector<OntologyTerm> terms;
  std::vector<Document> notes;
  /// doc_id -> injected term ids, in injection order.
  std::map<std::string, std::vector<std::string>> injected;
  /// doc_id -> injected terms whose name or synonym was written verbatim.
  std::map<std::string, std::vector<std::string>> explicit_terms;
  /// doc_id -> union of the closure sets of the injected terms.
  std::map<std::string, std::vector<int>> labels;
  PairTable icd_to_omim;
  PairTable omim_to_hpo;
};

SyntheticCorpus generate_synthetic(const SyntheticOptions& options);

/// Writes ontology.obo, notes.jsonl, labels.jsonl, icd_omim.tsv and
/// omim_hpo.tsv into `dir`, creating it if needed. Returns the paths.
std::vector<std::string> write_synthetic(const SyntheticCorpus& corpus, const std::string& dir);

}  // namespace semhpo
