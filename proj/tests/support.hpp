#pragma once

// Fixtures and independent oracles shared by the unit tests and the
// acceptance runner. Oracles deliberately avoid the library's own helpers.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "semhpo/ontology.hpp"

namespace semhpo::testing {

inline std::string term_id(int n) {
  std::string digits = std::to_string(n);
  return "HP:" + std::string(7 - std::min<std::size_t>(7, digits.size()), '0') + digits;
}

inline OntologyTerm make_term(std::string id, std::string name, std::vector<std::string> parents = {}) {
  OntologyTerm t;
  t.id = std::move(id);
  t.name = std::move(name);
  t.parents = std::move(parents);
  return t;
}

/// Random DAG of `n` terms under the phenotype root: `m` categories, the
/// rest attached to one to three earlier terms (so multi-parent diamonds
/// appear), plus a few obsolete terms and an unrelated branch.
inline std::vector<OntologyTerm> random_dag(int n, int m, std::mt19937_64& rng) {
  std::vector<OntologyTerm> terms;
  terms.push_back(make_term("HP:0000001", "All"));
  terms.push_back(make_term(std::string(kPhenotypicAbnormalityRoot), "Phenotypic abnormality", {"HP:0000001"}));
  terms.push_back(make_term("HP:0000005", "Mode of inheritance", {"HP:0000001"}));
  for (int j = 0; j < m; ++j) {
    terms.push_back(make_term(term_id(1000 + j), "category " + std::to_string(j),
                              {std::string(kPhenotypicAbnormalityRoot)}));
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = static_cast<int>(terms.size()); i < n; ++i) {
    auto t = make_term(term_id(2000 + i), "term " + std::to_string(i));
    if (u(rng) < 0.03) {
      t.obsolete = true;
    } else {
      const int k = 1 + static_cast<int>(u(rng) * 3);
      std::set<std::string> ps;
      for (int p = 0; p < k; ++p) {
        const auto lo = u(rng) < 0.1 ? std::size_t{2} : std::size_t{3};  // occasionally the unrelated branch
        std::uniform_int_distribution<std::size_t> pick(lo, terms.size() - 1);
        const auto& parent = terms[pick(rng)];
        if (!parent.obsolete) ps.insert(parent.id);
      }
      if (ps.empty()) ps.insert(terms[3].id);
      t.parents.assign(ps.begin(), ps.end());
    }
    terms.push_back(std::move(t));
  }
  std::shuffle(terms.begin(), terms.end(), rng);
  return terms;
}

/// Per-source DFS over child edges built straight from the parent lists.
inline std::map<std::string, std::set<int>> brute_force_closure(const std::vector<OntologyTerm>& terms,
                                                                const std::vector<std::string>& category_ids) {
  std::map<std::string, std::vector<std::string>> children;
  std::set<std::string> obsolete;
  for (const auto& t : terms) {
    if (t.obsolete) {
      obsolete.insert(t.id);
      continue;
    }
    for (const auto& p : t.parents) children[p].push_back(t.id);
  }
  std::map<std::string, std::set<int>> out;
  for (int j = 0; j < static_cast<int>(category_ids.size()); ++j) {
    std::vector<std::string> stack{category_ids[static_cast<std::size_t>(j)]};
    std::set<std::string> seen;
    while (!stack.empty()) {
      const auto id = stack.back();
      stack.pop_back();
      if (obsolete.count(id) || !seen.insert(id).second) continue;
      out[id].insert(j);
      for (const auto& c : children[id]) stack.push_back(c);
    }
  }
  return out;
}

/// Linear-interpolation percentile written out longhand.
inline double percentile_oracle(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = (p / 100.0) * static_cast<double>(v.size() - 1);
  const double below = std::floor(pos);
  const auto i = static_cast<std::size_t>(below);
  if (i + 1 >= v.size()) return v.back();
  return v[i] * (1.0 - (pos - below)) + v[i + 1] * (pos - below);
}

struct Prf {
  double p, r, f;
};

/// Example-based scores by explicit membership counting.
inline Prf score_oracle(const std::vector<int>& pred, const std::vector<int>& gold) {
  const std::set<int> P(pred.begin(), pred.end()), S(gold.begin(), gold.end());
  int hit = 0;
  for (int x : P) hit += static_cast<int>(S.count(x));
  const double p = P.empty() ? 0.0 : double(hit) / double(P.size());
  const double r = double(hit) / double(S.size());
  const double f = (p + r) == 0.0 ? 0.0 : 2 * p * r / (p + r);
  return {p, r, f};
}

}  // namespace semhpo::testing
