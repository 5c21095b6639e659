#include "semhpo/training.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "semhpo/error.hpp"

namespace semhpo {

using nn::Graph;
using nn::Var;

TrainingPools TrainingPools::build(const std::vector<Document>& ehr_documents,
                                   const std::vector<Document>& ontology_documents, const Vocabulary& vocab,
                                   int window) {
  TrainingPools pools;
  for (const auto& d : ehr_documents) {
    for (auto& f : fragment_document(d, vocab, window)) pools.ehr.push_back(std::move(f));
  }
  for (const auto& d : ontology_documents) {
    if (d.kind == DocumentKind::kEhr) continue;
    if (d.category_indices.empty()) throw DataError("ontology text " + d.doc_id + " has no category membership");
    OntologyItem item{d.doc_id, d.category_indices, fragment_document(d, vocab, window)};
    (d.kind == DocumentKind::kCategory ? pools.category_items : pools.subclass_items).push_back(std::move(item));
  }
  return pools;
}

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace

TrainingBatch sample_batch(const TrainingPools& pools, const MixPolicy& policy, int batch_size, std::mt19937_64& rng) {
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (pools.ehr.empty()) throw ConfigError("EHR fragment pool is empty");
  if (pools.category_items.empty()) throw ConfigError("category text pool is empty");
  if (pools.subclass_items.empty()) throw ConfigError("subclass text pool is empty");

  TrainingBatch batch;
  batch.reserve(static_cast<std::size_t>(batch_size));
  auto take_ontology = [&](const TrainingPools::OntologyItem& item, DocumentKind kind) {
    const auto& f = item.fragments[uniform_index(rng, item.fragments.size())];
    batch.push_back({&f, kind, &item.categories});
  };
  const auto n_ehr = pools.ehr.size();
  const auto n_cat = pools.category_items.size();
  const auto n_sub = pools.subclass_items.size();
  auto take_union = [&](std::size_t u) {
    if (u < n_ehr) {
      batch.push_back({&pools.ehr[u], DocumentKind::kEhr, nullptr});
    } else if (u < n_ehr + n_cat) {
      take_ontology(pools.category_items[u - n_ehr], DocumentKind::kCategory);
    } else {
      take_ontology(pools.subclass_items[u - n_ehr - n_cat], DocumentKind::kSubclass);
    }
  };

  if (policy.kind == MixPolicy::Kind::kUniform) {
    const auto total = n_ehr + n_cat + n_sub;
    const auto b = static_cast<std::size_t>(batch_size);
    if (b > total) {
      for (std::size_t i = 0; i < b; ++i) take_union(uniform_index(rng, total));
    } else {
      // Floyd's sampling of b distinct indices.
      std::set<std::size_t> chosen;
      for (std::size_t j = total - b; j < total; ++j) {
        const auto t = uniform_index(rng, j + 1);
        if (!chosen.insert(t).second) chosen.insert(j);
      }
      for (auto u : chosen) take_union(u);
    }
    return batch;
  }

  if (policy.ehr < 0 || policy.category < 0 || policy.subclass < 0 ||
      policy.ehr + policy.category + policy.subclass != batch_size) {
    throw ConfigError("quota mix must be non-negative and sum to the batch size");
  }
  for (int i = 0; i < policy.ehr; ++i) batch.push_back({&pools.ehr[uniform_index(rng, n_ehr)], DocumentKind::kEhr, nullptr});
  for (int i = 0; i < policy.category; ++i) {
    take_ontology(pools.category_items[uniform_index(rng, n_cat)], DocumentKind::kCategory);
  }
  for (int i = 0; i < policy.subclass; ++i) {
    take_ontology(pools.subclass_items[uniform_index(rng, n_sub)], DocumentKind::kSubclass);
  }
  return batch;
}

LossValues LossGraph::values(const Graph& g) const {
  return {g.scalar(ehr), g.scalar(category), g.scalar(subclass), g.scalar(prior), g.scalar(combined)};
}

LossGraph build_losses(graph::Binder& bind, const ModelConfig& config, const TrainingBatch& batch,
                       const LossWeights& weights, const LossOptions& options) {
  auto& g = bind.graph();
  const int m = config.categories;
  LossGraph out;
  out.traces.reserve(batch.size());

  std::vector<Var> ehr_terms, category_terms, subclass_terms, latents;
  std::size_t category_count = 0, subclass_count = 0;
  for (const auto& ex : batch) {
    if (!ex.fragment) throw InputError("training example without fragment");
    const auto enc = graph::encode(bind, config, *ex.fragment);
    ExampleTrace trace;
    trace.kind = ex.kind;
    trace.alpha = g.value(enc.alpha);

    Var term{};
    const int len = ex.fragment->true_length;
    if (len > 0) {
      const std::span<const int> tokens(ex.fragment->token_ids.data(), static_cast<std::size_t>(len));
      term = g.cross_entropy(graph::generator_logits(bind, config, enc.composite, tokens, len), tokens);
      trace.reconstruction = g.scalar(term);
    }

    if (ex.kind != DocumentKind::kEhr) {
      if (!ex.categories || ex.categories->empty()) throw DataError("ontology example without category membership");
      if (ex.kind == DocumentKind::kCategory && ex.categories->size() != 1) {
        throw DataError("category example must carry exactly one index");
      }
      Matrix member = Matrix::Zero(1, m);
      for (int j : *ex.categories) {
        if (j < 0 || j >= m) throw DataError("category index out of range");
        member(0, j) = 1.0;
      }
      const Matrix other = (1.0 - member.array()).matrix();
      const Var on = g.weighted_sum(g.log_clamped(enc.alpha, options.eps), member);
      const Var off = g.weighted_sum(g.log_clamped(g.one_minus(enc.alpha), options.eps), other);
      const Var penalty = g.scale(g.add(on, off), -1.0 / m);
      trace.alpha_penalty = g.scalar(penalty);
      term = term.valid() ? g.add(term, penalty) : penalty;
    }

    if (ex.kind == DocumentKind::kEhr) {
      if (term.valid()) ehr_terms.push_back(term);
    } else if (ex.kind == DocumentKind::kCategory) {
      category_terms.push_back(term);
      ++category_count;
    } else {
      subclass_terms.push_back(term);
      ++subclass_count;
    }
    if (!options.prior_on_ontology_only || ex.kind != DocumentKind::kEhr) latents.push_back(enc.components);
    out.traces.push_back(std::move(trace));
  }

  auto zero = [&] { return g.constant(Matrix::Zero(1, 1)); };
  auto mean_of = [&](const std::vector<Var>& terms) {
    if (terms.empty()) return zero();
    const Var stacked = terms.size() == 1 ? terms.front() : g.concat_rows(terms);
    return g.scale(g.sum(stacked), 1.0 / static_cast<double>(terms.size()));
  };
  out.ehr = mean_of(ehr_terms);
  out.category = mean_of(category_terms);
  out.subclass = mean_of(subclass_terms);

  if (latents.empty()) {
    out.prior = zero();
  } else {
    const Var all = latents.size() == 1 ? latents.front() : g.concat_rows(latents);
    const Var probs = g.softmax_rows(graph::classifier_logits(bind, config, all));
    std::vector<int> targets(latents.size() * static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<int>(i % static_cast<std::size_t>(m));
    const Var picked = g.log_clamped(g.pick(probs, targets), options.eps);
    out.prior = g.scale(g.sum(picked), -1.0 / static_cast<double>(latents.size()));
  }

  out.combined = g.add(g.add(g.scale(out.ehr, weights.ehr), g.scale(out.category, weights.category)),
                       g.add(g.scale(out.subclass, weights.subclass), g.scale(out.prior, weights.prior)));
  return out;
}

double evaluate_loss(const Model& model, const TrainingBatch& batch, LossTerm term, const LossWeights& weights,
                     const LossOptions& options, std::vector<Matrix>* grads) {
  Graph g;
  graph::Binder bind(g, model.params(), grads);
  const auto losses = build_losses(bind, model.config(), batch, weights, options);
  Var v;
  switch (term) {
    case LossTerm::kEhr: v = losses.ehr; break;
    case LossTerm::kCategory: v = losses.category; break;
    case LossTerm::kSubclass: v = losses.subclass; break;
    case LossTerm::kPrior: v = losses.prior; break;
    case LossTerm::kCombined: v = losses.combined; break;
  }
  if (grads) g.backward(v);
  return g.scalar(v);
}

double loss_reconstruction_ehr(const Model& model, const TrainingBatch& batch, const LossOptions& options) {
  return evaluate_loss(model, batch, LossTerm::kEhr, {}, options);
}
double loss_reconstruction_category(const Model& model, const TrainingBatch& batch, const LossOptions& options) {
  return evaluate_loss(model, batch, LossTerm::kCategory, {}, options);
}
double loss_reconstruction_subclass(const Model& model, const TrainingBatch& batch, const LossOptions& options) {
  return evaluate_loss(model, batch, LossTerm::kSubclass, {}, options);
}
double loss_prior(const Model& model, const TrainingBatch& batch, const LossOptions& options) {
  return evaluate_loss(model, batch, LossTerm::kPrior, {}, options);
}

Adam::Adam(const Parameters& params, const OptimizerSettings& settings)
    : s_(settings), m_(params.zeros_like()), v_(params.zeros_like()) {}

void Adam::step(Parameters& params, const std::vector<Matrix>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& g = grads[i].array();
    m_[i] = (s_.beta1 * m_[i].array() + (1.0 - s_.beta1) * g).matrix();
    v_[i] = (s_.beta2 * v_[i].array() + (1.0 - s_.beta2) * g.square()).matrix();
    params.value(i).array() -= s_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + s_.epsilon);
  }
}

TrainingResult train(Model& model, const TrainingPools& pools, const TrainingSettings& settings, std::uint64_t seed,
                     const std::function<void(const StepLog&)>& on_step) {
  if (settings.max_steps < 1) throw ConfigError("max_steps must be positive");
  std::mt19937_64 rng(seed);
  Adam adam(model.params(), settings.optimizer);
  TrainingResult result;
  const auto start = std::chrono::steady_clock::now();
  std::deque<double> window;
  double window_sum = 0.0;
  std::vector<double> averages;

  for (int step = 1; step <= settings.max_steps; ++step) {
    const auto batch = sample_batch(pools, settings.mix, settings.batch_size, rng);
    auto grads = model.params().zeros_like();
    Graph g;
    graph::Binder bind(g, model.params(), &grads);
    const auto losses = build_losses(bind, model.config(), batch, settings.weights, settings.loss);
    const auto values = losses.values(g);
    if (!std::isfinite(values.combined)) {
      std::ostringstream msg;
      msg << "combined loss became non-finite at step " << step;
      if (!result.log.empty()) {
        const auto& last = result.log.back().losses;
        msg << "; last finite losses (step " << result.log.back().step << "): ehr=" << last.ehr
            << " category=" << last.category << " subclass=" << last.subclass << " prior=" << last.prior
            << " combined=" << last.combined;
      }
      throw DivergenceError(msg.str());
    }
    g.backward(losses.combined);
    adam.step(model.params(), grads);

    StepLog entry{step, values,
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
    result.log.push_back(entry);
    if (on_step) on_step(entry);

    window.push_back(values.combined);
    window_sum += values.combined;
    if (static_cast<int>(window.size()) > settings.average_window) {
      window_sum -= window.front();
      window.pop_front();
    }
    if (static_cast<int>(window.size()) == settings.average_window) {
      averages.push_back(window_sum / settings.average_window);
      const auto h = static_cast<std::size_t>(settings.horizon);
      if (averages.size() > h) {
        const double before = averages[averages.size() - 1 - h];
        const double now = averages.back();
        if ((before - now) / std::abs(before) < settings.tolerance) {
          result.converged = true;
          break;
        }
      }
    }
  }
  return result;
}

void write_training_log(std::ostream& out, const std::vector<StepLog>& log) {
  out << "step\tloss_ehr\tloss_category\tloss_subclass\tloss_prior\tloss_combined\n";
  out << std::setprecision(17);
  for (const auto& e : log) {
    out << e.step << '\t' << e.losses.ehr << '\t' << e.losses.category << '\t' << e.losses.subclass << '\t'
        << e.losses.prior << '\t' << e.losses.combined << '\n';
  }
}

void write_timing_log(std::ostream& out, const std::vector<StepLog>& log) {
  out << "step\tseconds\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& e : log) out << e.step << '\t' << e.seconds << '\n';
}

namespace {

std::string trim_copy(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<int> int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(trim_copy(item)));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": expected comma-separated integers");
    }
  }
  return out;
}

}  // namespace

TrainingConfig parse_training_config(std::istream& in) {
  std::map<std::string, std::pair<std::string, std::size_t>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim_copy(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    auto key = trim_copy(line.substr(0, eq));
    auto value = trim_copy(line.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", line_no);
    if (!entries.emplace(key, std::make_pair(value, line_no)).second) throw ParseError("duplicate key " + key, line_no);
  }

  TrainingConfig cfg;
  cfg.model = ModelConfig::full(0, 24);
  if (auto it = entries.find("preset"); it != entries.end()) {
    const auto& p = it->second.first;
    if (p == "full") {
      cfg.model = ModelConfig::full(0, 24);
    } else if (p == "small") {
      cfg.model = ModelConfig::small(0, 24);
    } else if (p == "tiny") {
      cfg.model = ModelConfig::tiny(0, 24);
    } else {
      throw ParseError("unknown preset " + p, it->second.second);
    }
    entries.erase(it);
  }

  for (const auto& [key, entry] : entries) {
    const auto& [v, ln] = entry;
    auto as_int = [&] {
      try {
        std::size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
      } catch (const std::exception&) {
        throw ParseError("key " + key + " expects an integer", ln);
      }
    };
    auto as_double = [&] {
      try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
      } catch (const std::exception&) {
        throw ParseError("key " + key + " expects a number", ln);
      }
    };
    auto as_bool = [&] {
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      throw ParseError("key " + key + " expects true or false", ln);
    };
    auto& m = cfg.model;
    auto& t = cfg.training;
    if (key == "window") m.window = as_int();
    else if (key == "layers") m.layers = as_int();
    else if (key == "hidden") m.hidden = as_int();
    else if (key == "intermediate") m.intermediate = as_int();
    else if (key == "heads") m.heads = as_int();
    else if (key == "latent_dim") m.latent_dim = as_int();
    else if (key == "conv_widths") m.conv_widths = int_list(key, v);
    else if (key == "conv_channels") m.conv_channels = int_list(key, v);
    else if (key == "lambda1") t.weights.ehr = as_double();
    else if (key == "lambda2") t.weights.category = as_double();
    else if (key == "lambda3") t.weights.subclass = as_double();
    else if (key == "lambda4") t.weights.prior = as_double();
    else if (key == "learning_rate") t.optimizer.learning_rate = as_double();
    else if (key == "beta1") t.optimizer.beta1 = as_double();
    else if (key == "beta2") t.optimizer.beta2 = as_double();
    else if (key == "adam_epsilon") t.optimizer.epsilon = as_double();
    else if (key == "batch_size") t.batch_size = as_int();
    else if (key == "max_steps") t.max_steps = as_int();
    else if (key == "quota_ehr") t.mix.ehr = as_int();
    else if (key == "quota_category") t.mix.category = as_int();
    else if (key == "quota_subclass") t.mix.subclass = as_int();
    else if (key == "prior_on_ontology_only") t.loss.prior_on_ontology_only = as_bool();
    else if (key == "average_window") t.average_window = as_int();
    else if (key == "horizon") t.horizon = as_int();
    else if (key == "tolerance") t.tolerance = as_double();
    else if (key == "seed") {
      try {
        std::size_t pos = 0;
        cfg.seed = std::stoull(v, &pos);
        if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
      } catch (const std::exception&) {
        throw ParseError("key seed expects a non-negative integer", ln);
      }
    }
    else if (key == "mix") {
      if (v == "uniform") t.mix.kind = MixPolicy::Kind::kUniform;
      else if (v == "quota") t.mix.kind = MixPolicy::Kind::kQuota;
      else throw ParseError("mix must be uniform or quota", ln);
    } else {
      throw ConfigError("unknown config key '" + key + "' at line " + std::to_string(ln));
    }
  }
  for (double w : {cfg.training.weights.ehr, cfg.training.weights.category, cfg.training.weights.subclass,
                   cfg.training.weights.prior}) {
    if (w < 0.0) throw ConfigError("loss weights must be non-negative");
  }
  if (cfg.training.average_window < 1 || cfg.training.horizon < 1) {
    throw ConfigError("average_window and horizon must be positive");
  }
  return cfg;
}

TrainingConfig load_training_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_training_config(in);
}

}  // namespace semhpo
