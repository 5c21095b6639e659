#include "semhpo/ontology.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "semhpo/error.hpp"

namespace semhpo {

namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

// Extracts the leading quoted string of an OBO value such as
// "Anaemia" EXACT [] or "Reduced red cells." [PMID:1].
std::string unquote(std::string_view value, std::size_t line) {
  value = trim(value);
  if (value.empty() || value.front() != '"') {
    // Tolerate unquoted values: keep everything up to a provenance bracket.
    const auto br = value.find(" [");
    return std::string(trim(value.substr(0, br)));
  }
  std::string out;
  for (std::size_t i = 1; i < value.size(); ++i) {
    const char c = value[i];
    if (c == '\\' && i + 1 < value.size()) {
      const char n = value[++i];
      switch (n) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        default: out.push_back(n); break;
      }
    } else if (c == '"') {
      return out;
    } else {
      out.push_back(c);
    }
  }
  throw ParseError("unterminated quoted value", line);
}

std::string obo_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  out.push_back('"');
  return out;
}

std::string parent_id(std::string_view value) {
  value = value.substr(0, value.find('!'));
  value = value.substr(0, value.find('{'));
  value = trim(value);
  return std::string(value.substr(0, value.find_first_of(" \t")));
}

struct Stanza {
  OntologyTerm term;
  std::size_t line = 0;
  bool has_id = false;
  bool has_name = false;
};

void finish(Stanza& st, std::vector<OntologyTerm>& terms, std::map<std::string, std::size_t>& seen) {
  if (!st.has_id) throw ParseError("[Term] stanza without id", st.line);
  if (!st.has_name && !st.term.obsolete) throw ParseError("term " + st.term.id + " has no name", st.line);
  auto [it, inserted] = seen.emplace(st.term.id, st.line);
  if (!inserted) {
    throw ParseError("duplicate id " + st.term.id + " (first defined at line " + std::to_string(it->second) + ")",
                     st.line);
  }
  terms.push_back(std::move(st.term));
}

// Snapshot field escaping.
std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '|': out += "\\|"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

// Splits on unescaped sep, unescaping each piece.
std::vector<std::string> split_escaped(std::string_view s, char sep, std::size_t line) {
  std::vector<std::string> out(1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '\\') {
      if (i + 1 >= s.size()) throw ParseError("dangling escape", line);
      const char n = s[++i];
      switch (n) {
        case 't': out.back().push_back('\t'); break;
        case 'n': out.back().push_back('\n'); break;
        case 'r': out.back().push_back('\r'); break;
        default: out.back().push_back(n); break;
      }
    } else if (c == sep) {
      out.emplace_back();
    } else {
      out.back().push_back(c);
    }
  }
  return out;
}

std::string join_escaped(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out.push_back('|');
    out += escape(items[i]);
  }
  return out;
}

constexpr std::string_view kSnapshotMagic = "#semhpo-ontology-snapshot v1";

}  // namespace

std::vector<OntologyTerm> parse_obo(std::istream& in) {
  std::vector<OntologyTerm> terms;
  std::map<std::string, std::size_t> seen;
  std::optional<Stanza> current;
  bool in_other_stanza = false;
  std::string raw;
  std::size_t line_no = 0;

  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '!') continue;
    if (line.front() == '[') {
      if (current) finish(*current, terms, seen);
      current.reset();
      in_other_stanza = line != "[Term]";
      if (!in_other_stanza) {
        current.emplace();
        current->line = line_no;
      }
      continue;
    }
    if (!current || in_other_stanza) continue;  // header or [Typedef] content

    const auto colon = line.find(':');
    if (colon == std::string_view::npos) throw ParseError("expected 'key: value'", line_no);
    const auto key = trim(line.substr(0, colon));
    const auto value = trim(line.substr(colon + 1));
    auto& t = current->term;
    if (key == "id") {
      if (current->has_id) throw ParseError("stanza has two ids", line_no);
      t.id = std::string(value);
      current->has_id = !t.id.empty();
    } else if (key == "name") {
      t.name = std::string(value);
      current->has_name = !t.name.empty();
    } else if (key == "alt_id") {
      t.alt_ids.emplace_back(parent_id(value));
    } else if (key == "synonym") {
      t.synonyms.push_back(unquote(value, line_no));
    } else if (key == "def") {
      t.definition = unquote(value, line_no);
    } else if (key == "is_a") {
      auto p = parent_id(value);
      if (p.empty()) throw ParseError("empty is_a", line_no);
      t.parents.push_back(std::move(p));
    } else if (key == "is_obsolete") {
      t.obsolete = value == "true";
    }
  }
  if (current) finish(*current, terms, seen);
  return terms;
}

void write_obo(std::ostream& out, const std::vector<OntologyTerm>& terms) {
  out << "format-version: 1.2\n";
  for (const auto& t : terms) {
    out << "\n[Term]\n";
    out << "id: " << t.id << '\n';
    if (!t.name.empty()) out << "name: " << t.name << '\n';
    for (const auto& a : t.alt_ids) out << "alt_id: " << a << '\n';
    if (!t.definition.empty()) out << "def: " << obo_quote(t.definition) << " []\n";
    for (const auto& s : t.synonyms) out << "synonym: " << obo_quote(s) << " EXACT []\n";
    for (const auto& p : t.parents) out << "is_a: " << p << '\n';
    if (t.obsolete) out << "is_obsolete: true\n";
  }
}

void write_snapshot(std::ostream& out, const std::vector<OntologyTerm>& terms) {
  out << kSnapshotMagic << '\n';
  out << "#id\tname\tobsolete\talt_ids\tparents\tsynonyms\tdefinition\n";
  for (const auto& t : terms) {
    out << escape(t.id) << '\t' << escape(t.name) << '\t' << (t.obsolete ? 1 : 0) << '\t'
        << join_escaped(t.alt_ids) << '\t' << join_escaped(t.parents) << '\t' << join_escaped(t.synonyms) << '\t'
        << escape(t.definition) << '\n';
  }
}

std::vector<OntologyTerm> read_snapshot(std::istream& in) {
  std::vector<OntologyTerm> terms;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  auto scalar = [&](std::string_view field) {
    auto parts = split_escaped(field, '|', line_no);
    if (parts.size() != 1) throw ParseError("unescaped '|' in scalar field", line_no);
    return parts.front();
  };
  auto list = [&](std::string_view field) {
    return field.empty() ? std::vector<std::string>{} : split_escaped(field, '|', line_no);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto tab = rest.find('\t');
      fields.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (fields.size() != 7) throw ParseError("expected 7 tab-separated fields", line_no);
    OntologyTerm t;
    t.id = scalar(fields[0]);
    t.name = scalar(fields[1]);
    if (fields[2] != "0" && fields[2] != "1") throw ParseError("obsolete flag must be 0 or 1", line_no);
    t.obsolete = fields[2] == "1";
    t.alt_ids = list(fields[3]);
    t.parents = list(fields[4]);
    t.synonyms = list(fields[5]);
    t.definition = scalar(fields[6]);
    if (t.id.empty()) throw ParseError("record without id", line_no);
    if (t.name.empty() && !t.obsolete) throw ParseError("term " + t.id + " has no name", line_no);
    if (!seen.insert(t.id).second) throw ParseError("duplicate id " + t.id, line_no);
    terms.push_back(std::move(t));
  }
  return terms;
}

std::vector<OntologyTerm> load_terms(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ontology file " + path);
  std::string first;
  std::getline(in, first);
  in.clear();
  in.seekg(0);
  if (first.rfind(kSnapshotMagic, 0) == 0) return read_snapshot(in);
  return parse_obo(in);
}

Ontology::Ontology(std::vector<OntologyTerm> terms) : terms_(std::move(terms)) {
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (!index_.emplace(terms_[i].id, i).second) throw OntologyError("duplicate id " + terms_[i].id);
  }
  for (const auto& t : terms_) {
    for (const auto& a : t.alt_ids) {
      if (!index_.count(a)) aliases_.emplace(a, t.id);
    }
  }
  children_.assign(terms_.size(), {});
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    const auto& t = terms_[i];
    for (const auto& p : t.parents) {
      const auto pi = index_of(p);
      if (pi == npos) throw OntologyError("term " + t.id + " has dangling is_a reference " + p);
      if (!t.obsolete && !terms_[pi].obsolete) children_[pi].push_back(i);
    }
  }
}

std::string Ontology::resolve(std::string_view id) const {
  const std::string key(id);
  if (index_.count(key)) return key;
  if (auto it = aliases_.find(key); it != aliases_.end()) return it->second;
  return {};
}

const OntologyTerm* Ontology::find(std::string_view id) const {
  const auto i = index_of(id);
  return i == npos ? nullptr : &terms_[i];
}

std::size_t Ontology::index_of(std::string_view id) const {
  const std::string key(id);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  if (auto it = aliases_.find(key); it != aliases_.end()) return index_.at(it->second);
  return npos;
}

int PhenotypeCategories::index_of(std::string_view id) const {
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] == id) return static_cast<int>(j);
  }
  return -1;
}

std::size_t PhenotypeCategories::subclass_count() const {
  std::size_t n = 0;
  for (const auto& [id, set] : closure) {
    if (index_of(id) < 0) ++n;
  }
  return n;
}

const std::vector<int>& PhenotypeCategories::membership(std::string_view id) const {
  static const std::vector<int> empty;
  const auto it = closure.find(std::string(id));
  return it == closure.end() ? empty : it->second;
}

PhenotypeCategories select_general_categories(const Ontology& ontology, std::string_view root_id) {
  const auto root = ontology.index_of(root_id);
  if (root == Ontology::npos) throw ConfigError("category root " + std::string(root_id) + " not in ontology");
  std::vector<std::size_t> kids = ontology.children()[root];
  if (kids.empty()) throw ConfigError("category root " + std::string(root_id) + " has no live children");
  std::sort(kids.begin(), kids.end(),
            [&](auto a, auto b) { return ontology.terms()[a].id < ontology.terms()[b].id; });

  PhenotypeCategories cats;
  cats.root_id = ontology.terms()[root].id;
  for (std::size_t j = 0; j < kids.size(); ++j) {
    const auto& t = ontology.terms()[kids[j]];
    cats.ids.push_back(t.id);
    cats.names.push_back(t.name);
    cats.closure[t.id] = {static_cast<int>(j)};
  }
  return cats;
}

PhenotypeCategories subclass_closure(const Ontology& ontology, PhenotypeCategories categories) {
  const auto& terms = ontology.terms();
  const auto& children = ontology.children();
  const std::size_t n = terms.size();

  // Post-order DFS over child edges gives a reverse topological order and
  // detects cycles (grey node revisited).
  enum : unsigned char { kWhite, kGrey, kBlack };
  std::vector<unsigned char> colour(n, kWhite);
  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    if (colour[s] != kWhite || terms[s].obsolete) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{s, 0}};
    colour[s] = kGrey;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < children[node].size()) {
        const auto c = children[node][next++];
        if (colour[c] == kGrey) throw OntologyError("is_a cycle through " + terms[c].id);
        if (colour[c] == kWhite) {
          colour[c] = kGrey;
          stack.emplace_back(c, 0);
        }
      } else {
        colour[node] = kBlack;
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  // Walk parents-before-children, pushing membership down each edge.
  std::vector<std::vector<int>> member(n);
  for (std::size_t j = 0; j < categories.size(); ++j) {
    const auto i = ontology.index_of(categories.ids[j]);
    if (i == Ontology::npos) throw ConfigError("category " + categories.ids[j] + " not in ontology");
    member[i].push_back(static_cast<int>(j));
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& m = member[*it];
    std::sort(m.begin(), m.end());
    m.erase(std::unique(m.begin(), m.end()), m.end());
    if (m.empty()) continue;
    for (const auto c : children[*it]) member[c].insert(member[c].end(), m.begin(), m.end());
  }

  categories.closure.clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (!member[i].empty() && !terms[i].obsolete) categories.closure[terms[i].id] = std::move(member[i]);
  }
  return categories;
}

std::string term_text(const OntologyTerm& term) {
  std::string out = term.name;
  auto append = [&](const std::string& s) {
    if (s.empty()) return;
    if (!out.empty()) out.push_back(' ');
    out += s;
  };
  for (const auto& s : term.synonyms) append(s);
  append(term.definition);
  return out;
}

}  // namespace semhpo
