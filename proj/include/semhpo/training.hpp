#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "semhpo/corpus.hpp"
#include "semhpo/model.hpp"

namespace semhpo {

/// Coefficients of the combined objective
/// L = l1 * L_ehr + l2 * L_category + l3 * L_subclass + l4 * L_prior.
struct LossWeights {
  double ehr = 10.0;
  double category = 10.0;
  double subclass = 10.0;
  double prior = 1.0;
};

/// Fragment pools the sampler draws from. Ontology texts longer than the
/// window are fragmented and every fragment inherits the term's categories.
struct TrainingPools {
  struct OntologyItem {
    std::string id;
    std::vector<int> categories;
    std::vector<Fragment> fragments;
  };
  std::vector<Fragment> ehr;
  std::vector<OntologyItem> category_items;
  std::vector<OntologyItem> subclass_items;

  static TrainingPools build(const std::vector<Document>& ehr_documents, const std::vector<Document>& ontology_documents,
                             const Vocabulary& vocab, int window);
};

struct TrainingExample {
  const Fragment* fragment = nullptr;
  DocumentKind kind = DocumentKind::kEhr;
  const std::vector<int>* categories = nullptr;  // null for EHRs
};
using TrainingBatch = std::vector<TrainingExample>;

struct MixPolicy {
  enum class Kind { kUniform, kQuota };
  Kind kind = Kind::kUniform;
  // Per-kind counts for kQuota; they must sum to the batch size.
  int ehr = 0;
  int category = 0;
  int subclass = 0;
};

/// kUniform draws B items from the union of EHR fragments and ontology
/// terms (then a random fragment of a drawn term), without replacement
/// unless B exceeds the union. kQuota draws fixed per-kind counts with
/// replacement. Throws ConfigError on an empty pool or a bad quota.
TrainingBatch sample_batch(const TrainingPools& pools, const MixPolicy& policy, int batch_size, std::mt19937_64& rng);

struct LossOptions {
  /// Probabilities are clamped to [eps, 1 - eps] before logs.
  double eps = 1e-7;
  /// Restrict the prior term to ontology texts (ablation switch).
  bool prior_on_ontology_only = false;
};

/// Per-example record kept for auditing the alpha penalties.
struct ExampleTrace {
  DocumentKind kind = DocumentKind::kEhr;
  RowVector alpha;
  double reconstruction = 0.0;  // mean token cross-entropy, 0 for empty text
  double alpha_penalty = 0.0;   // 0 for EHRs
};

/// Scalar values of the four terms and their weighted combination.
struct LossValues {
  double ehr = 0.0;
  double category = 0.0;
  double subclass = 0.0;
  double prior = 0.0;
  double combined = 0.0;
};

/// Graph handles for every term of the objective on one batch.
struct LossGraph {
  nn::Var ehr, category, subclass, prior, combined;
  std::vector<ExampleTrace> traces;

  LossValues values(const nn::Graph& g) const;
};

LossGraph build_losses(graph::Binder& bind, const ModelConfig& config, const TrainingBatch& batch,
                       const LossWeights& weights, const LossOptions& options = {});

enum class LossTerm { kEhr, kCategory, kSubclass, kPrior, kCombined };

/// Evaluates one term; when grads is non-null, adds its gradient there.
double evaluate_loss(const Model& model, const TrainingBatch& batch, LossTerm term, const LossWeights& weights = {},
                     const LossOptions& options = {}, std::vector<Matrix>* grads = nullptr);

/// Mean token cross-entropy of EHR reconstructions (empty fragments skipped).
double loss_reconstruction_ehr(const Model& model, const TrainingBatch& batch, const LossOptions& options = {});
/// Reconstruction plus the one-hot alpha penalty, averaged over CATEGORY examples.
double loss_reconstruction_category(const Model& model, const TrainingBatch& batch, const LossOptions& options = {});
/// Reconstruction plus the closure-membership alpha penalty, averaged over SUBCLASS examples.
double loss_reconstruction_subclass(const Model& model, const TrainingBatch& batch, const LossOptions& options = {});
/// Mean over examples of sum_j -log D(c_j | z^(j)).
double loss_prior(const Model& model, const TrainingBatch& batch, const LossOptions& options = {});

struct OptimizerSettings {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over every tensor of a Parameters set.
class Adam {
public:
  Adam(const Parameters& params, const OptimizerSettings& settings);
  void step(Parameters& params, const std::vector<Matrix>& grads);
  long steps() const noexcept { return t_; }

private:
  OptimizerSettings s_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

struct TrainingSettings {
  int batch_size = 32;
  int max_steps = 20000;
  MixPolicy mix;
  LossWeights weights;
  OptimizerSettings optimizer;
  LossOptions loss;
  // Stop once the moving average (over `average_window` steps) of the
  // combined loss improved by less than `tolerance` (relative) across the
  // last `horizon` steps.
  int average_window = 100;
  int horizon = 500;
  double tolerance = 1e-3;
};

struct StepLog {
  int step = 0;
  LossValues losses;
  double seconds = 0.0;  // wall-clock since training started
};

struct TrainingResult {
  std::vector<StepLog> log;
  bool converged = false;
};

/// The optimisation loop: sample a mixed batch, build all four losses,
/// step Adam on the weighted sum. Throws DivergenceError on a non-finite
/// loss, reporting the last finite values.
TrainingResult train(Model& model, const TrainingPools& pools, const TrainingSettings& settings, std::uint64_t seed,
                     const std::function<void(const StepLog&)>& on_step = {});

/// Tab-separated step log: step and the five loss values. Wall-clock time
/// goes to a separate two-column file so the loss log is reproducible.
void write_training_log(std::ostream& out, const std::vector<StepLog>& log);
void write_timing_log(std::ostream& out, const std::vector<StepLog>& log);

/// Declarative training configuration read from "key = value" lines.
struct TrainingConfig {
  ModelConfig model;  // vocab_size and categories are filled from data
  TrainingSettings training;
  std::uint64_t seed = 0;
};

/// Recognised keys: preset (full|small|tiny), window, layers, hidden,
/// intermediate, heads, latent_dim, conv_widths, conv_channels, lambda1..4,
/// learning_rate, beta1, beta2, adam_epsilon, batch_size, max_steps, mix
/// (uniform|quota), quota_ehr, quota_category, quota_subclass,
/// prior_on_ontology_only, average_window, horizon, tolerance, seed.
/// Unknown keys raise ConfigError.
TrainingConfig parse_training_config(std::istream& in);
TrainingConfig load_training_config(const std::string& path);

}  // namespace semhpo
