#include "semhpo/annotate.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "semhpo/error.hpp"
#include "semhpo/hash.hpp"

namespace semhpo {

namespace {

// Runs body(i) for i in [0, n) on `workers` threads over contiguous chunks.
template <typename Body>
void parallel_for(std::size_t n, int workers, Body&& body) {
  const auto w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(w);
  const auto chunk = (n + w - 1) / w;
  for (std::size_t t = 0; t < w; ++t) {
    const auto begin = t * chunk;
    const auto end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&, t, begin, end] {
      try {
        for (auto i = begin; i < end; ++i) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::uint64_t matrix_hash(const Matrix& m) {
  Fnv1a h;
  const auto rows = static_cast<std::uint64_t>(m.rows());
  const auto cols = static_cast<std::uint64_t>(m.cols());
  h.update(&rows, sizeof rows);
  h.update(&cols, sizeof cols);
  h.update(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  return h.digest();
}

}  // namespace

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw DataError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(values.size() - 1, lo + 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Matrix fragment_alphas(const Model& model, const std::vector<Fragment>& fragments, int workers) {
  Matrix out(static_cast<Eigen::Index>(fragments.size()), model.config().categories);
  parallel_for(fragments.size(), workers, [&](std::size_t i) {
    out.row(static_cast<Eigen::Index>(i)) = model.encode(fragments[i]).alpha;
  });
  return out;
}

ThresholdSet calibrate_thresholds(const Matrix& alphas, double p) {
  if (!(p >= 70.0 && p <= 95.0)) throw ConfigError("percentile must lie in [70, 95]");
  if (alphas.rows() == 0) throw DataError("cannot calibrate thresholds on zero fragments");
  ThresholdSet t;
  t.percentile = p;
  t.calibration_hash = matrix_hash(alphas);
  t.tau.resize(static_cast<std::size_t>(alphas.cols()));
  for (Eigen::Index j = 0; j < alphas.cols(); ++j) {
    std::vector<double> column;
    column.reserve(static_cast<std::size_t>(alphas.rows()));
    for (Eigen::Index i = 0; i < alphas.rows(); ++i) column.push_back(alphas(i, j));
    t.tau[static_cast<std::size_t>(j)] = std::clamp(percentile(std::move(column), p), 0.0, 1.0);
  }
  return t;
}

ThresholdSet calibrate_thresholds(const Model& model, const std::vector<Fragment>& training_fragments, double p,
                                  int workers) {
  if (!(p >= 70.0 && p <= 95.0)) throw ConfigError("percentile must lie in [70, 95]");
  if (training_fragments.empty()) throw DataError("cannot calibrate thresholds on zero fragments");
  return calibrate_thresholds(fragment_alphas(model, training_fragments, workers), p);
}

std::vector<int> annotate_alpha(const RowVector& alpha, const ThresholdSet& thresholds) {
  if (static_cast<std::size_t>(alpha.size()) != thresholds.tau.size()) {
    throw InputError("threshold count does not match the number of categories");
  }
  std::vector<int> out;
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    if (alpha(j) > thresholds.tau[static_cast<std::size_t>(j)]) out.push_back(static_cast<int>(j));
  }
  return out;
}

std::vector<int> annotate_fragment(const Model& model, const Fragment& fragment, const ThresholdSet& thresholds) {
  return annotate_alpha(model.encode(fragment).alpha, thresholds);
}

AnnotationResult aggregate_annotations(std::string doc_id, const Matrix& alphas, const ThresholdSet& thresholds,
                                       Aggregation aggregation) {
  AnnotationResult r;
  r.doc_id = std::move(doc_id);
  r.per_fragment_alpha = alphas;
  if (alphas.rows() == 0) return r;
  if (aggregation == Aggregation::kMaxAlpha) {
    r.categories = annotate_alpha(alphas.colwise().maxCoeff(), thresholds);
    return r;
  }
  std::vector<char> hit(thresholds.tau.size(), 0);
  for (Eigen::Index i = 0; i < alphas.rows(); ++i) {
    for (int j : annotate_alpha(alphas.row(i), thresholds)) hit[static_cast<std::size_t>(j)] = 1;
  }
  for (std::size_t j = 0; j < hit.size(); ++j) {
    if (hit[j]) r.categories.push_back(static_cast<int>(j));
  }
  return r;
}

AnnotationResult annotate_document(const Model& model, const std::vector<Fragment>& fragments,
                                   const ThresholdSet& thresholds, Aggregation aggregation) {
  std::string doc_id;
  for (const auto& f : fragments) {
    if (doc_id.empty()) doc_id = f.doc_id;
    if (f.doc_id != doc_id) throw InputError("annotate_document: fragments from more than one document");
  }
  return aggregate_annotations(doc_id, fragment_alphas(model, fragments, 1), thresholds, aggregation);
}

std::vector<AnnotationResult> annotate_documents(const Model& model, const std::vector<Document>& documents,
                                                 const Vocabulary& vocab, const ThresholdSet& thresholds,
                                                 int workers, Aggregation aggregation) {
  std::vector<AnnotationResult> out(documents.size());
  parallel_for(documents.size(), workers, [&](std::size_t i) {
    const auto frags = fragment_document(documents[i], vocab, model.config().window);
    out[i] = aggregate_annotations(documents[i].doc_id, fragment_alphas(model, frags, 1), thresholds, aggregation);
  });
  return out;
}

void write_thresholds(std::ostream& out, const ThresholdSet& t, const std::vector<std::string>& category_ids) {
  if (category_ids.size() != t.tau.size()) throw InputError("threshold count does not match category ids");
  out << "# percentile=" << t.percentile << " calibration_hash=" << hex64(t.calibration_hash) << '\n';
  out << std::setprecision(17);
  for (std::size_t j = 0; j < t.tau.size(); ++j) out << category_ids[j] << '\t' << t.tau[j] << '\n';
}

ThresholdSet read_thresholds(std::istream& in, const std::vector<std::string>& category_ids) {
  ThresholdSet t;
  std::map<std::string, double> by_id;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream hs(line.substr(1));
      std::string kv;
      while (hs >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const auto key = kv.substr(0, eq), val = kv.substr(eq + 1);
        try {
          if (key == "percentile") t.percentile = std::stod(val);
          if (key == "calibration_hash") t.calibration_hash = std::stoull(val, nullptr, 16);
        } catch (const std::exception&) {
          throw ParseError("bad header value for " + key, line_no);
        }
      }
      header = true;
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected '<id>\\t<tau>'", line_no);
    double tau = 0.0;
    try {
      std::size_t pos = 0;
      tau = std::stod(line.substr(tab + 1), &pos);
      if (pos != line.size() - tab - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("threshold is not a number", line_no);
    }
    if (!(tau >= 0.0 && tau <= 1.0)) throw ParseError("threshold outside [0, 1]", line_no);
    if (!by_id.emplace(line.substr(0, tab), tau).second) throw ParseError("duplicate category", line_no);
  }
  if (!header) throw ParseError("threshold file has no header");
  for (const auto& id : category_ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ParseError("threshold file lacks category " + id);
    t.tau.push_back(it->second);
    by_id.erase(it);
  }
  if (!by_id.empty()) throw ParseError("threshold file has unknown category " + by_id.begin()->first);
  return t;
}

void write_annotations(std::ostream& out, const std::vector<AnnotationResult>& results,
                       const std::vector<std::string>& category_ids, const std::string& alpha_path) {
  for (const auto& r : results) {
    nlohmann::json j;
    j["doc_id"] = r.doc_id;
    auto& cats = j["categories"] = nlohmann::json::array();
    for (int c : r.categories) cats.push_back(category_ids.at(static_cast<std::size_t>(c)));
    if (!alpha_path.empty()) j["alpha_path"] = alpha_path;
    out << j.dump() << '\n';
  }
}

void write_alpha_matrix(std::ostream& out, const std::vector<AnnotationResult>& results) {
  out << std::setprecision(9);
  for (const auto& r : results) {
    for (Eigen::Index i = 0; i < r.per_fragment_alpha.rows(); ++i) {
      out << r.doc_id << '\t' << i;
      for (Eigen::Index j = 0; j < r.per_fragment_alpha.cols(); ++j) out << '\t' << r.per_fragment_alpha(i, j);
      out << '\n';
    }
  }
}

}  // namespace semhpo
