#pragma once

#include <iosfwd>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "semhpo/corpus.hpp"
#include "semhpo/ontology.hpp"

namespace semhpo {

/// key -> set of values, loaded from "key<TAB>value" lines.
using PairTable = std::map<std::string, std::set<std::string>>;

/// ICD-9 code -> OMIM id. Codes are truncated to three characters; OMIM ids
/// are normalised to "OMIM:<digits>". '#' lines are comments. Throws
/// ParseError naming the line of any malformed code.
PairTable read_icd_omim(std::istream& in);
/// OMIM id -> HPO id ("HP:<digits>").
PairTable read_omim_hpo(std::istream& in);

struct MappingTable {
  PairTable icd_to_omim;
  PairTable omim_to_hpo;
  std::map<std::string, std::vector<int>> icd_to_categories;  // sorted indices, possibly empty
  /// One entry per HPO id that was dropped because it has no closure
  /// membership; also written to the log stream when one is given.
  std::vector<std::string> warnings;

  std::size_t unmapped_code_count() const;
};

/// icd_to_categories[c] = union of closure[t] over t in omim_to_hpo[o],
/// o in icd_to_omim[c]. HPO alt_ids resolve to their primary id.
MappingTable compose_mapping(PairTable icd_to_omim, PairTable omim_to_hpo, const Ontology& ontology,
                             const PhenotypeCategories& categories, std::ostream* log = nullptr);

struct SilverLabels {
  std::map<std::string, std::vector<int>> labels;
  std::size_t covered = 0;    // documents with a non-empty label set
  std::size_t uncovered = 0;  // documents whose codes map to nothing
};

SilverLabels silver_labels(const std::vector<Document>& documents, const MappingTable& table);

/// Exact token-subsequence search of term names and synonyms, using the
/// corpus normaliser on both sides.
class KeywordIndex {
public:
  KeywordIndex(const Ontology& ontology, const PhenotypeCategories& categories);

  /// Ids of every matched term, sorted.
  std::vector<std::string> match_terms(std::string_view text) const;
  /// Union of the closure sets of the matched terms.
  std::vector<int> annotate(std::string_view text) const;

private:
  struct Phrase {
    std::vector<std::string> tokens;
    std::size_t term;
  };
  std::vector<std::size_t> matched(const std::vector<std::string>& tokens) const;

  std::unordered_map<std::string, std::vector<Phrase>> by_first_token_;
  std::vector<std::string> term_ids_;
  std::vector<std::vector<int>> term_categories_;
};

std::vector<int> keyword_annotate(std::string_view text, const Ontology& ontology,
                                  const PhenotypeCategories& categories);

/// Each of the M categories is included independently with probability rate.
std::vector<int> random_annotate(int categories, std::mt19937_64& rng, double rate = 0.5);

/// {"doc_id": ..., "categories": [HPO ids]} per line, in doc_id order.
void write_label_records(std::ostream& out, const std::map<std::string, std::vector<int>>& labels,
                         const std::vector<std::string>& category_ids);

/// Reads label or prediction records. Ids that are not categories map
/// through the closure, so external annotators may emit specific terms.
/// Unknown ids are dropped and reported in `warnings` when given.
std::map<std::string, std::vector<int>> read_label_records(std::istream& in, const Ontology& ontology,
                                                           const PhenotypeCategories& categories,
                                                           std::vector<std::string>* warnings = nullptr);

}  // namespace semhpo
