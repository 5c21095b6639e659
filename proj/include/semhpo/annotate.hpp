#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "semhpo/corpus.hpp"
#include "semhpo/model.hpp"

namespace semhpo {

inline constexpr double kDefaultPercentile = 90.0;

/// Per-category cutoffs tau_j on alpha_j.
struct ThresholdSet {
  std::vector<double> tau;
  double percentile = kDefaultPercentile;
  std::uint64_t calibration_hash = 0;  // fingerprint of the alpha matrix used
};

/// Linear-interpolation percentile (the "linear" rule: rank p/100*(n-1)).
double percentile(std::vector<double> values, double p);

/// alpha for every fragment (rows) using `workers` threads. Row order
/// follows the input; results do not depend on the worker count.
Matrix fragment_alphas(const Model& model, const std::vector<Fragment>& fragments, int workers = 1);

/// tau_j = p-th percentile of column j. Throws ConfigError unless p lies
/// in [70, 95] and DataError on an empty matrix.
ThresholdSet calibrate_thresholds(const Matrix& alphas, double p = kDefaultPercentile);
ThresholdSet calibrate_thresholds(const Model& model, const std::vector<Fragment>& training_fragments,
                                  double p = kDefaultPercentile, int workers = 1);

/// { j : alpha_j > tau_j }, sorted.
std::vector<int> annotate_alpha(const RowVector& alpha, const ThresholdSet& thresholds);
std::vector<int> annotate_fragment(const Model& model, const Fragment& fragment, const ThresholdSet& thresholds);

enum class Aggregation {
  kUnion,     // OR over fragment annotations
  kMaxAlpha,  // threshold the per-category maximum alpha
};

struct AnnotationResult {
  std::string doc_id;
  std::vector<int> categories;
  Matrix per_fragment_alpha;  // fragments x M, kept for audit
};

/// Annotates the fragments of one document from their alpha rows.
AnnotationResult aggregate_annotations(std::string doc_id, const Matrix& alphas, const ThresholdSet& thresholds,
                                       Aggregation aggregation = Aggregation::kUnion);
AnnotationResult annotate_document(const Model& model, const std::vector<Fragment>& fragments,
                                   const ThresholdSet& thresholds, Aggregation aggregation = Aggregation::kUnion);

/// Fragments and annotates every document; documents are split across
/// `workers` threads and results come back in input order.
std::vector<AnnotationResult> annotate_documents(const Model& model, const std::vector<Document>& documents,
                                                 const Vocabulary& vocab, const ThresholdSet& thresholds,
                                                 int workers = 1, Aggregation aggregation = Aggregation::kUnion);

/// Header "# percentile=<p> calibration_hash=<hex>" then M lines
/// "<category id>\t<tau>".
void write_thresholds(std::ostream& out, const ThresholdSet& t, const std::vector<std::string>& category_ids);
/// Reads a threshold file, ordering tau by category_ids. Throws ParseError
/// on a missing or unknown category.
ThresholdSet read_thresholds(std::istream& in, const std::vector<std::string>& category_ids);

/// One JSON record per line: {"doc_id", "categories": [ids], "alpha_path"?}.
void write_annotations(std::ostream& out, const std::vector<AnnotationResult>& results,
                       const std::vector<std::string>& category_ids, const std::string& alpha_path = {});
/// doc_id, position, then M alpha columns.
void write_alpha_matrix(std::ostream& out, const std::vector<AnnotationResult>& results);

}  // namespace semhpo
