#include "semhpo/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <set>

#include "semhpo/error.hpp"

namespace semhpo {

namespace {

void sort_unique(std::vector<int>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

std::size_t overlap(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return common.size();
}

Scores from_counts(double hit, double predicted, double actual) {
  Scores s;
  s.precision = predicted > 0 ? hit / predicted : 0.0;
  s.recall = actual > 0 ? hit / actual : 0.0;
  const double sum = s.precision + s.recall;
  s.f1 = sum > 0 ? 2.0 * s.precision * s.recall / sum : 0.0;
  return s;
}

}  // namespace

Scores score_document(std::vector<int> predicted, std::vector<int> silver) {
  if (silver.empty()) throw InputError("cannot score a document with an empty silver set");
  sort_unique(predicted);
  sort_unique(silver);
  const auto hit = overlap(predicted, silver);
  return from_counts(static_cast<double>(hit), static_cast<double>(predicted.size()),
                     static_cast<double>(silver.size()));
}

EvalReport evaluate(const LabelMap& predictions, const LabelMap& silver) {
  EvalReport r;
  double hit = 0, predicted = 0, actual = 0;
  for (const auto& [doc, gold] : silver) {
    if (gold.empty()) {
      ++r.skipped;
      continue;
    }
    const auto it = predictions.find(doc);
    auto p = it == predictions.end() ? std::vector<int>{} : it->second;
    auto s = gold;
    sort_unique(p);
    sort_unique(s);
    r.per_document.push_back({doc, score_document(p, s)});
    hit += static_cast<double>(overlap(p, s));
    predicted += static_cast<double>(p.size());
    actual += static_cast<double>(s.size());
  }
  for (const auto& kv : predictions) {
    if (!silver.count(kv.first)) ++r.unlabeled_predictions;
  }
  r.scored = r.per_document.size();
  if (r.scored > 0) {
    for (const auto& d : r.per_document) {
      r.mean.precision += d.scores.precision;
      r.mean.recall += d.scores.recall;
      r.mean.f1 += d.scores.f1;
    }
    const auto n = static_cast<double>(r.scored);
    r.mean.precision /= n;
    r.mean.recall /= n;
    r.mean.f1 /= n;
    r.pooled = from_counts(hit, predicted, actual);
  }
  return r;
}

CorpusStats corpus_stats(const std::vector<Document>& documents, const KeywordIndex& keywords,
                         const LabelMap* silver) {
  CorpusStats st;
  st.documents = documents.size();
  if (documents.empty()) return st;

  std::map<std::string, CodeTermRange> ranges;
  double icd = 0, terms = 0, cats = 0;
  for (const auto& d : documents) {
    const auto matched = keywords.match_terms(d.text).size();
    icd += static_cast<double>(d.icd_codes.size());
    terms += static_cast<double>(matched);
    for (const auto& c : d.icd_codes) {
      if (is_supplementary_icd9(c)) ++st.supplementary_codes;
    }
    const std::set<std::string> unique(d.icd_codes.begin(), d.icd_codes.end());
    for (const auto& c : unique) {
      auto [it, fresh] = ranges.try_emplace(c);
      auto& range = it->second;
      range.code = c;
      range.min_terms = fresh ? matched : std::min(range.min_terms, matched);
      range.max_terms = fresh ? matched : std::max(range.max_terms, matched);
      ++range.documents;
    }
    if (silver) {
      const auto it = silver->find(d.doc_id);
      if (it != silver->end()) cats += static_cast<double>(it->second.size());
    }
  }
  const auto n = static_cast<double>(documents.size());
  st.mean_icd = icd / n;
  st.mean_keyword_terms = terms / n;
  st.mean_silver_categories = silver ? cats / n : 0.0;
  for (auto& kv : ranges) st.per_code.push_back(std::move(kv.second));
  return st;
}

void write_report_table(std::ostream& out, const EvalReport& r) {
  out << std::fixed << std::setprecision(4);
  out << "documents scored  " << r.scored << '\n';
  out << "documents skipped " << r.skipped << "  (empty silver set)\n";
  if (r.unlabeled_predictions) out << "predictions without labels " << r.unlabeled_predictions << '\n';
  out << '\n' << std::left << std::setw(28) << "" << std::setw(11) << "precision" << std::setw(9) << "recall"
      << "f1\n";
  out << std::setw(28) << "per-document mean" << std::setw(11) << r.mean.precision << std::setw(9) << r.mean.recall
      << r.mean.f1 << '\n';
  out << std::setw(28) << "pooled counts (comparison)" << std::setw(11) << r.pooled.precision << std::setw(9)
      << r.pooled.recall << r.pooled.f1 << '\n';
  out.unsetf(std::ios::floatfield);
}

void write_report_tsv(std::ostream& out, const EvalReport& r) {
  out << std::setprecision(17);
  out << "doc_id\tprecision\trecall\tf1\n";
  for (const auto& d : r.per_document) {
    out << d.doc_id << '\t' << d.scores.precision << '\t' << d.scores.recall << '\t' << d.scores.f1 << '\n';
  }
  out << "MEAN\t" << r.mean.precision << '\t' << r.mean.recall << '\t' << r.mean.f1 << '\n';
  out << "POOLED\t" << r.pooled.precision << '\t' << r.pooled.recall << '\t' << r.pooled.f1 << '\n';
  out << "# scored=" << r.scored << " skipped=" << r.skipped << '\n';
}

void write_stats_table(std::ostream& out, const CorpusStats& st) {
  out << std::fixed << std::setprecision(2);
  out << "documents                   " << st.documents << '\n';
  out << "mean ICD codes per EHR      " << st.mean_icd << '\n';
  out << "mean matched HPO terms      " << st.mean_keyword_terms << '\n';
  out << "mean silver categories      " << st.mean_silver_categories << '\n';
  out << "V/E code occurrences        " << st.supplementary_codes << '\n';
  if (!st.per_code.empty()) {
    out << "\ncode    docs  min terms  max terms\n";
    for (const auto& c : st.per_code) {
      out << std::left << std::setw(8) << c.code << std::right << std::setw(4) << c.documents << std::setw(11)
          << c.min_terms << std::setw(11) << c.max_terms << '\n';
    }
  }
  out.unsetf(std::ios::floatfield);
}

void write_stats_tsv(std::ostream& out, const CorpusStats& st) {
  out << std::setprecision(17);
  out << "documents\t" << st.documents << '\n';
  out << "mean_icd\t" << st.mean_icd << '\n';
  out << "mean_keyword_terms\t" << st.mean_keyword_terms << '\n';
  out << "mean_silver_categories\t" << st.mean_silver_categories << '\n';
  out << "supplementary_codes\t" << st.supplementary_codes << '\n';
  out << "code\tdocuments\tmin_terms\tmax_terms\n";
  for (const auto& c : st.per_code) {
    out << c.code << '\t' << c.documents << '\t' << c.min_terms << '\t' << c.max_terms << '\n';
  }
}

}  // namespace semhpo
