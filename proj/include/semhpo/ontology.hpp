#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace semhpo {

/// Identifier of the HPO "Phenotypic abnormality" term, the default root
/// whose direct children are the general categories.
inline constexpr std::string_view kPhenotypicAbnormalityRoot = "HP:0000118";

struct OntologyTerm {
  std::string id;
  std::string name;
  std::vector<std::string> synonyms;
  std::string definition;
  std::vector<std::string> parents;  // is_a targets
  std::vector<std::string> alt_ids;
  bool obsolete = false;

  friend bool operator==(const OntologyTerm&, const OntologyTerm&) = default;
};

/// Parses OBO 1.2 term stanzas. Keys other than id, name, alt_id, synonym,
/// def, is_a and is_obsolete are ignored, as are non-[Term] stanzas.
/// Throws ParseError on a stanza missing its id (or its name when not
/// obsolete) and on duplicate ids.
std::vector<OntologyTerm> parse_obo(std::istream& in);

/// Canonical OBO writer; parse_obo(write_obo(t)) == t.
void write_obo(std::ostream& out, const std::vector<OntologyTerm>& terms);

/// Line-oriented snapshot: a header line then one tab-separated record per
/// term (id, name, obsolete, alt_ids, parents, synonyms, definition). List
/// fields are '|'-joined; backslash escapes protect tabs, newlines and pipes.
void write_snapshot(std::ostream& out, const std::vector<OntologyTerm>& terms);
std::vector<OntologyTerm> read_snapshot(std::istream& in);

/// Loads either an OBO file or a snapshot, chosen by content sniffing.
std::vector<OntologyTerm> load_terms(const std::string& path);

/// Indexed, validated view over a term list. alt_ids resolve to primary ids.
class Ontology {
public:
  Ontology() = default;
  /// Throws OntologyError on a parent reference that resolves to no term.
  explicit Ontology(std::vector<OntologyTerm> terms);

  const std::vector<OntologyTerm>& terms() const noexcept { return terms_; }
  std::size_t size() const noexcept { return terms_.size(); }

  /// Primary id for id or alt_id; empty when unknown.
  std::string resolve(std::string_view id) const;
  const OntologyTerm* find(std::string_view id) const;
  /// Position of the term in terms(), or npos.
  std::size_t index_of(std::string_view id) const;

  /// Direct non-obsolete children (by index) of each term.
  const std::vector<std::vector<std::size_t>>& children() const noexcept { return children_; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
  std::vector<OntologyTerm> terms_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, std::string> aliases_;
  std::vector<std::vector<std::size_t>> children_;
};

/// The M general categories and the closure map id -> category indices.
struct PhenotypeCategories {
  std::string root_id;
  std::vector<std::string> ids;    // H_1..H_M, sorted by id
  std::vector<std::string> names;
  std::map<std::string, std::vector<int>> closure;  // sorted, 0-based indices

  std::size_t size() const noexcept { return ids.size(); }
  int index_of(std::string_view id) const;
  /// Number of closure entries that are not categories themselves.
  std::size_t subclass_count() const;
  /// Closure membership of id, or an empty vector.
  const std::vector<int>& membership(std::string_view id) const;
};

PhenotypeCategories select_general_categories(const Ontology& ontology,
                                              std::string_view root_id = kPhenotypicAbnormalityRoot);

/// Populates categories.closure with multi-hop is_a reachability from every
/// category. Obsolete terms are skipped. Throws OntologyError naming a
/// member of any is_a cycle.
PhenotypeCategories subclass_closure(const Ontology& ontology, PhenotypeCategories categories);

/// Name, synonyms (file order), then definition, space-separated.
std::string term_text(const OntologyTerm& term);

}  // namespace semhpo
