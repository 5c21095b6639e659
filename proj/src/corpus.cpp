#include "semhpo/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include <json.hpp>

#include "csv.hpp"
#include "semhpo/error.hpp"
#include "semhpo/hash.hpp"

namespace semhpo {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
bool is_letter(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalpha(u) != 0;
}

// Replaces every "[**...**]" span with a space. An unterminated mask runs to
// the end of the text.
std::string strip_phi_masks(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto open = text.find("[**", i);
    if (open == std::string_view::npos) {
      out.append(text.substr(i));
      break;
    }
    out.append(text.substr(i, open - i));
    out.push_back(' ');
    const auto close = text.find("**]", open + 3);
    if (close == std::string_view::npos) break;
    i = close + 3;
  }
  return out;
}

}  // namespace

bool is_numeric_token(std::string_view token) {
  bool digit = false;
  for (char c : token) {
    if (is_letter(c)) return false;
    if (std::isdigit(static_cast<unsigned char>(c))) digit = true;
  }
  return digit;
}

std::vector<std::string> normalize_tokenize(std::string_view text) {
  const auto clean = strip_phi_masks(text);
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < clean.size()) {
    while (i < clean.size() && is_space(clean[i])) ++i;
    std::size_t j = i;
    while (j < clean.size() && !is_space(clean[j])) ++j;
    std::size_t b = i, e = j;
    while (b < e && is_punct(clean[b])) ++b;
    while (e > b && is_punct(clean[e - 1])) --e;
    if (b < e) {
      std::string tok(clean.substr(b, e - b));
      for (auto& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (!is_numeric_token(tok)) tokens.push_back(std::move(tok));
    }
    i = j;
  }
  return tokens;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_.reserve(tokens.size() + 2);
  tokens_.emplace_back(kPadToken);
  tokens_.emplace_back(kUnkToken);
  for (const auto& t : tokens) {
    if (t == kPadToken || t == kUnkToken) continue;
    tokens_.push_back(t);
  }
  Fnv1a h;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) throw DataError("duplicate vocabulary token " + tokens_[i]);
    h.update(tokens_[i]);
    h.update("\n");
  }
  hash_ = h.digest();
}

int Vocabulary::id(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

void Vocabulary::save(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line != kPadToken) throw ParseError("vocabulary must start with " + std::string(kPadToken), 1);
    if (line_no == 2 && line != kUnkToken) throw ParseError("vocabulary line 2 must be " + std::string(kUnkToken), 2);
    if (line_no <= 2) continue;
    if (line.empty()) throw ParseError("empty vocabulary token", line_no);
    tokens.push_back(line);
  }
  if (line_no < 2) throw ParseError("vocabulary file is missing reserved tokens");
  return Vocabulary(tokens);
}

std::string_view to_string(DocumentKind kind) {
  switch (kind) {
    case DocumentKind::kEhr: return "EHR";
    case DocumentKind::kCategory: return "CATEGORY";
    case DocumentKind::kSubclass: return "SUBCLASS";
  }
  return "?";
}

std::unordered_map<std::string, std::size_t> count_tokens(const std::vector<Document>& documents) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& d : documents) {
    for (auto& t : normalize_tokenize(d.text)) ++counts[std::move(t)];
  }
  return counts;
}

Vocabulary build_vocabulary(const std::vector<Document>& documents, std::size_t cap) {
  if (documents.empty()) throw DataError("cannot build a vocabulary from zero documents");
  const auto counts = count_tokens(documents);
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > cap) ranked.resize(cap);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [tok, n] : ranked) tokens.push_back(std::move(tok));
  return Vocabulary(tokens);
}

std::vector<Fragment> fragment_tokens(std::string_view doc_id, const std::vector<std::string>& tokens,
                                      const Vocabulary& vocab, int window) {
  if (window < 1) throw ConfigError("fragment window must be at least 1");
  const auto w = static_cast<std::size_t>(window);
  std::vector<Fragment> out;
  std::size_t start = 0;
  do {
    Fragment f;
    f.doc_id = std::string(doc_id);
    f.position = static_cast<int>(out.size());
    f.token_ids.assign(w, Vocabulary::kPad);
    const auto end = std::min(tokens.size(), start + w);
    for (std::size_t k = start; k < end; ++k) f.token_ids[k - start] = vocab.id(tokens[k]);
    f.true_length = static_cast<int>(end - start);
    out.push_back(std::move(f));
    start = end;
  } while (start < tokens.size());
  return out;
}

std::vector<Fragment> fragment_document(const Document& doc, const Vocabulary& vocab, int window) {
  return fragment_tokens(doc.doc_id, normalize_tokenize(doc.text), vocab, window);
}

std::pair<std::vector<Document>, std::vector<Document>> split_train_test(const std::vector<Document>& docs,
                                                                         double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
  if (docs.size() < 2) throw DataError("need at least two documents to split");
  const auto n = docs.size();
  auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(perm[i], perm[j]);
  }
  std::vector<char> in_train(n, 0);
  for (std::size_t i = 0; i < n_train; ++i) in_train[perm[i]] = 1;

  std::pair<std::vector<Document>, std::vector<Document>> out;
  out.first.reserve(n_train);
  out.second.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? out.first : out.second).push_back(docs[i]);
  return out;
}

std::string truncate_icd9(std::string_view code) {
  std::string out;
  for (char c : code) {
    if (c == '.' || is_space(c)) continue;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (out.size() == 3) break;
  }
  return out;
}

bool is_supplementary_icd9(std::string_view code) {
  return !code.empty() && (code.front() == 'V' || code.front() == 'v' || code.front() == 'E' || code.front() == 'e');
}

std::vector<Document> ontology_documents(const Ontology& ontology, const PhenotypeCategories& categories) {
  std::vector<Document> docs;
  for (std::size_t j = 0; j < categories.size(); ++j) {
    const auto* t = ontology.find(categories.ids[j]);
    if (!t) throw ConfigError("category " + categories.ids[j] + " missing from ontology");
    docs.push_back({t->id, DocumentKind::kCategory, term_text(*t), {}, {static_cast<int>(j)}});
  }
  // Ontology order keeps the subclass list stable across runs.
  for (const auto& t : ontology.terms()) {
    if (t.obsolete || categories.index_of(t.id) >= 0) continue;
    const auto& m = categories.membership(t.id);
    if (m.empty()) continue;
    docs.push_back({t.id, DocumentKind::kSubclass, term_text(t), {}, m});
  }
  return docs;
}

namespace {

void add_code(Document& d, std::string_view raw) {
  auto code = truncate_icd9(raw);
  if (code.empty()) return;
  if (std::find(d.icd_codes.begin(), d.icd_codes.end(), code) == d.icd_codes.end()) d.icd_codes.push_back(code);
}

}  // namespace

std::vector<Document> read_ehr_jsonl(std::istream& in) {
  std::vector<Document> docs;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
    if (!j.is_object() || !j.contains("doc_id") || !j["doc_id"].is_string() || !j.contains("text") ||
        !j["text"].is_string()) {
      throw ParseError("record needs string fields doc_id and text", line_no);
    }
    Document d;
    d.doc_id = j["doc_id"].get<std::string>();
    d.text = j["text"].get<std::string>();
    if (j.contains("icd9")) {
      if (!j["icd9"].is_array()) throw ParseError("icd9 must be an array", line_no);
      for (const auto& c : j["icd9"]) {
        if (!c.is_string()) throw ParseError("icd9 entries must be strings", line_no);
        add_code(d, c.get<std::string>());
      }
    }
    if (!seen.insert(d.doc_id).second) throw ParseError("duplicate doc_id " + d.doc_id, line_no);
    docs.push_back(std::move(d));
  }
  return docs;
}

std::vector<Document> load_ehr_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus file " + path);
  return read_ehr_jsonl(in);
}

void write_ehr_jsonl(std::ostream& out, const std::vector<Document>& docs) {
  for (const auto& d : docs) {
    nlohmann::json j = {{"doc_id", d.doc_id}, {"text", d.text}, {"icd9", d.icd_codes}};
    out << j.dump() << '\n';
  }
}

std::vector<Document> load_mimic_discharge_summaries(const std::string& noteevents_csv,
                                                     const std::string& diagnoses_csv) {
  auto column = [](const std::vector<std::string>& header, std::string_view name, const std::string& path) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ParseError(path + ": missing column " + std::string(name), 1);
  };

  std::ifstream notes(noteevents_csv);
  if (!notes) throw ConfigError("cannot open " + noteevents_csv);
  std::vector<std::string> rec;
  if (!detail::read_csv_record(notes, rec)) throw ParseError(noteevents_csv + ": empty file", 1);
  const auto c_hadm = column(rec, "HADM_ID", noteevents_csv);
  const auto c_cat = column(rec, "CATEGORY", noteevents_csv);
  const auto c_text = column(rec, "TEXT", noteevents_csv);

  // Several discharge notes (report plus addenda) can share one admission.
  std::map<std::string, std::size_t> by_hadm;
  std::vector<Document> docs;
  std::size_t record = 1;
  while (detail::read_csv_record(notes, rec)) {
    ++record;
    if (rec.size() == 1 && rec[0].empty()) continue;
    if (rec.size() <= std::max({c_hadm, c_cat, c_text})) throw ParseError(noteevents_csv + ": short record", record);
    if (rec[c_cat] != "Discharge summary" || rec[c_hadm].empty()) continue;
    auto [it, fresh] = by_hadm.emplace(rec[c_hadm], docs.size());
    if (fresh) {
      docs.push_back({rec[c_hadm], DocumentKind::kEhr, rec[c_text], {}, {}});
    } else {
      docs[it->second].text += "\n" + rec[c_text];
    }
  }

  std::ifstream diag(diagnoses_csv);
  if (!diag) throw ConfigError("cannot open " + diagnoses_csv);
  if (!detail::read_csv_record(diag, rec)) throw ParseError(diagnoses_csv + ": empty file", 1);
  const auto d_hadm = column(rec, "HADM_ID", diagnoses_csv);
  const auto d_code = column(rec, "ICD9_CODE", diagnoses_csv);
  record = 1;
  while (detail::read_csv_record(diag, rec)) {
    ++record;
    if (rec.size() == 1 && rec[0].empty()) continue;
    if (rec.size() <= std::max(d_hadm, d_code)) throw ParseError(diagnoses_csv + ": short record", record);
    if (auto it = by_hadm.find(rec[d_hadm]); it != by_hadm.end()) add_code(docs[it->second], rec[d_code]);
  }
  return docs;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  Fnv1a h;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) h.update(buf, static_cast<std::size_t>(in.gcount()));
  return h.digest();
}

}  // namespace semhpo
