#include "semhpo/silver_standard.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "semhpo/error.hpp"

namespace semhpo {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

// 3-5 digit numeric codes, V + 2-4 digits, E + 3-4 digits, optional dot.
bool valid_icd9(std::string_view code) {
  std::string digits;
  bool dot = false;
  for (std::size_t i = 0; i < code.size(); ++i) {
    const char c = code[i];
    if (c == '.') {
      if (dot) return false;
      dot = true;
    } else if (i == 0 && (c == 'V' || c == 'v' || c == 'E' || c == 'e')) {
      digits.push_back('X');
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      digits.push_back(c);
    } else {
      return false;
    }
  }
  if (digits.empty()) return false;
  if (digits.front() == 'X') {
    const bool e = code.front() == 'E' || code.front() == 'e';
    const auto n = digits.size() - 1;
    return e ? (n >= 3 && n <= 4) : (n >= 2 && n <= 4);
  }
  return digits.size() >= 3 && digits.size() <= 5;
}

std::string normalize_omim(std::string_view raw) {
  std::string s = trim(raw);
  for (std::string_view prefix : {"OMIM:", "MIM:"}) {
    if (s.rfind(prefix, 0) == 0) {
      s.erase(0, prefix.size());
      break;
    }
  }
  return all_digits(s) ? "OMIM:" + s : std::string{};
}

std::string normalize_hpo(std::string_view raw) {
  std::string s = trim(raw);
  return s.rfind("HP:", 0) == 0 && all_digits(std::string_view(s).substr(3)) ? s : std::string{};
}

template <typename Key, typename Value>
PairTable read_pairs(std::istream& in, Key&& key_of, Value&& value_of, const char* what) {
  PairTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(std::string(what) + ": expected exactly two tab-separated fields", line_no);
    }
    const auto key = key_of(trim(line.substr(0, tab)));
    const auto value = value_of(trim(line.substr(tab + 1)));
    if (key.empty()) throw ParseError(std::string(what) + ": malformed key '" + line.substr(0, tab) + "'", line_no);
    if (value.empty()) throw ParseError(std::string(what) + ": malformed value '" + line.substr(tab + 1) + "'", line_no);
    table[key].insert(value);
  }
  return table;
}

}  // namespace

PairTable read_icd_omim(std::istream& in) {
  return read_pairs(
      in, [](const std::string& c) { return valid_icd9(c) ? truncate_icd9(c) : std::string{}; }, normalize_omim,
      "ICD->OMIM");
}

PairTable read_omim_hpo(std::istream& in) { return read_pairs(in, normalize_omim, normalize_hpo, "OMIM->HPO"); }

std::size_t MappingTable::unmapped_code_count() const {
  return static_cast<std::size_t>(
      std::count_if(icd_to_categories.begin(), icd_to_categories.end(), [](const auto& kv) { return kv.second.empty(); }));
}

MappingTable compose_mapping(PairTable icd_to_omim, PairTable omim_to_hpo, const Ontology& ontology,
                             const PhenotypeCategories& categories, std::ostream* log) {
  MappingTable table;
  table.icd_to_omim = std::move(icd_to_omim);
  table.omim_to_hpo = std::move(omim_to_hpo);

  // Resolve each distinct HPO id once, warning about every one dropped.
  std::map<std::string, const std::vector<int>*> resolved;
  for (const auto& [omim, hpos] : table.omim_to_hpo) {
    for (const auto& h : hpos) {
      if (resolved.count(h)) continue;
      const auto primary = ontology.resolve(h);
      const auto& m = categories.membership(primary.empty() ? h : primary);
      resolved.emplace(h, m.empty() ? nullptr : &m);
      if (m.empty()) {
        auto msg = "HPO id " + h + (primary.empty() ? " is not in the ontology" : " is outside the category closure") +
                   "; dropped (first seen under " + omim + ")";
        if (log) *log << "warning: " << msg << '\n';
        table.warnings.push_back(std::move(msg));
      }
    }
  }

  for (const auto& [code, omims] : table.icd_to_omim) {
    std::vector<int> cats;
    for (const auto& o : omims) {
      const auto it = table.omim_to_hpo.find(o);
      if (it == table.omim_to_hpo.end()) continue;
      for (const auto& h : it->second) {
        if (const auto* m = resolved.at(h)) cats.insert(cats.end(), m->begin(), m->end());
      }
    }
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    table.icd_to_categories.emplace(code, std::move(cats));
  }
  return table;
}

SilverLabels silver_labels(const std::vector<Document>& documents, const MappingTable& table) {
  SilverLabels out;
  for (const auto& d : documents) {
    std::vector<int> cats;
    for (const auto& raw : d.icd_codes) {
      const auto it = table.icd_to_categories.find(truncate_icd9(raw));
      if (it != table.icd_to_categories.end()) cats.insert(cats.end(), it->second.begin(), it->second.end());
    }
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    (cats.empty() ? out.uncovered : out.covered) += 1;
    out.labels[d.doc_id] = std::move(cats);
  }
  return out;
}

KeywordIndex::KeywordIndex(const Ontology& ontology, const PhenotypeCategories& categories) {
  for (const auto& t : ontology.terms()) {
    if (t.obsolete) continue;
    const auto& m = categories.membership(t.id);
    if (m.empty()) continue;
    const auto idx = term_ids_.size();
    term_ids_.push_back(t.id);
    term_categories_.push_back(m);
    auto add = [&](const std::string& label) {
      auto tokens = normalize_tokenize(label);
      if (tokens.empty()) return;
      const auto first = tokens.front();
      by_first_token_[first].push_back({std::move(tokens), idx});
    };
    add(t.name);
    for (const auto& s : t.synonyms) add(s);
  }
}

std::vector<std::size_t> KeywordIndex::matched(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto it = by_first_token_.find(tokens[i]);
    if (it == by_first_token_.end()) continue;
    for (const auto& p : it->second) {
      if (i + p.tokens.size() > tokens.size()) continue;
      if (std::equal(p.tokens.begin(), p.tokens.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
        hits.push_back(p.term);
      }
    }
  }
  std::sort(hits.begin(), hits.end());
  hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
  return hits;
}

std::vector<std::string> KeywordIndex::match_terms(std::string_view text) const {
  std::vector<std::string> out;
  for (auto t : matched(normalize_tokenize(text))) out.push_back(term_ids_[t]);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> KeywordIndex::annotate(std::string_view text) const {
  std::vector<int> cats;
  for (auto t : matched(normalize_tokenize(text))) {
    cats.insert(cats.end(), term_categories_[t].begin(), term_categories_[t].end());
  }
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  return cats;
}

std::vector<int> keyword_annotate(std::string_view text, const Ontology& ontology,
                                  const PhenotypeCategories& categories) {
  return KeywordIndex(ontology, categories).annotate(text);
}

std::vector<int> random_annotate(int categories, std::mt19937_64& rng, double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("random baseline rate must lie in [0, 1]");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> out;
  for (int j = 0; j < categories; ++j) {
    if (u(rng) < rate) out.push_back(j);
  }
  return out;
}

void write_label_records(std::ostream& out, const std::map<std::string, std::vector<int>>& labels,
                         const std::vector<std::string>& category_ids) {
  for (const auto& [doc, cats] : labels) {
    nlohmann::json j;
    j["doc_id"] = doc;
    auto& arr = j["categories"] = nlohmann::json::array();
    for (int c : cats) arr.push_back(category_ids.at(static_cast<std::size_t>(c)));
    out << j.dump() << '\n';
  }
}

std::map<std::string, std::vector<int>> read_label_records(std::istream& in, const Ontology& ontology,
                                                           const PhenotypeCategories& categories,
                                                           std::vector<std::string>* warnings) {
  std::map<std::string, std::vector<int>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!j.is_object() || !j.contains("doc_id") || !j["doc_id"].is_string()) {
      throw ParseError("record lacks a string doc_id", line_no);
    }
    const auto cats_it = j.find("categories");
    if (cats_it == j.end() || !cats_it->is_array()) throw ParseError("record lacks a categories array", line_no);
    std::vector<int> cats;
    for (const auto& v : *cats_it) {
      if (!v.is_string()) throw ParseError("category ids must be strings", line_no);
      const auto raw = v.get<std::string>();
      const auto primary = ontology.resolve(raw);
      const auto& m = categories.membership(primary.empty() ? raw : primary);
      if (m.empty()) {
        if (warnings) warnings->push_back("line " + std::to_string(line_no) + ": " + raw + " has no category; dropped");
        continue;
      }
      cats.insert(cats.end(), m.begin(), m.end());
    }
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    if (!out.emplace(j["doc_id"].get<std::string>(), std::move(cats)).second) {
      throw ParseError("duplicate doc_id " + j["doc_id"].get<std::string>(), line_no);
    }
  }
  return out;
}

}  // namespace semhpo
