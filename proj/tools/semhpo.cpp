// semhpo: command-line driver for the phenotype annotation pipeline.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "semhpo/annotate.hpp"
#include "semhpo/cli_support.hpp"
#include "semhpo/corpus.hpp"
#include "semhpo/error.hpp"
#include "semhpo/eval.hpp"
#include "semhpo/model.hpp"
#include "semhpo/ontology.hpp"
#include "semhpo/silver_standard.hpp"
#include "semhpo/synthetic.hpp"
#include "semhpo/training.hpp"

namespace fs = std::filesystem;
using namespace semhpo;

namespace {

struct LoadedOntology {
  Ontology ontology;
  PhenotypeCategories categories;
};

LoadedOntology load_ontology(const std::string& path, const std::string& root) {
  LoadedOntology o{Ontology(load_terms(path)), {}};
  o.categories = subclass_closure(o.ontology, select_general_categories(o.ontology, root));
  return o;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  return f;
}

Vocabulary load_vocabulary(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing vocabulary " + path.string());
  return Vocabulary::load(in);
}

// Output directory: --out when given, else runs/<manifest hash>.
fs::path run_dir(const std::string& out, const RunManifest& manifest) {
  return out.empty() ? fs::path("runs") / manifest.hash() : fs::path(out);
}

void finish(RunManifest& manifest, const fs::path& dir, std::initializer_list<fs::path> artifacts) {
  for (const auto& a : artifacts) manifest.artifacts.push_back(a.string());
  manifest.write(dir.string());
  std::cerr << "wrote " << dir.string() << '\n';
}

nlohmann::json config_json(const TrainingConfig& c) {
  const auto& m = c.model;
  const auto& t = c.training;
  return {
      {"model",
       {{"vocab_size", m.vocab_size},
        {"window", m.window},
        {"layers", m.layers},
        {"hidden", m.hidden},
        {"intermediate", m.intermediate},
        {"heads", m.heads},
        {"categories", m.categories},
        {"latent_dim", m.latent_dim},
        {"conv_widths", m.conv_widths},
        {"conv_channels", m.conv_channels}}},
      {"training",
       {{"batch_size", t.batch_size},
        {"max_steps", t.max_steps},
        {"mix", t.mix.kind == MixPolicy::Kind::kUniform ? "uniform" : "quota"},
        {"quota", {t.mix.ehr, t.mix.category, t.mix.subclass}},
        {"lambda", {t.weights.ehr, t.weights.category, t.weights.subclass, t.weights.prior}},
        {"learning_rate", t.optimizer.learning_rate},
        {"beta1", t.optimizer.beta1},
        {"beta2", t.optimizer.beta2},
        {"adam_epsilon", t.optimizer.epsilon},
        {"prior_on_ontology_only", t.loss.prior_on_ontology_only},
        {"average_window", t.average_window},
        {"horizon", t.horizon},
        {"tolerance", t.tolerance}}},
      {"seed", c.seed},
  };
}

// Shared options.
struct Common {
  std::string ontology;
  std::string root{kPhenotypicAbnormalityRoot};
  std::string corpus;
  std::string input;
  std::string split = "test";
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int workers = 1;
};

std::vector<Document> documents_from(const Common& c, RunManifest& manifest) {
  if (!c.input.empty()) {
    manifest.add_input(c.input);
    return load_ehr_jsonl(c.input);
  }
  if (c.corpus.empty()) throw ConfigError("pass --corpus (a build-corpus directory) or --input");
  const auto path = (fs::path(c.corpus) / (c.split + ".jsonl")).string();
  if (!fs::exists(path)) throw ConfigError("missing corpus split " + path);
  manifest.add_input(path);
  return load_ehr_jsonl(path);
}

int cmd_parse_ontology(const Common& c) {
  RunManifest manifest;
  manifest.command = "parse-ontology";
  manifest.config = {{"root", c.root}};
  manifest.add_input(c.ontology);
  const auto o = load_ontology(c.ontology, c.root);
  const auto dir = run_dir(c.out, manifest);
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "ontology.tsv");
    write_snapshot(f, o.ontology.terms());
  }
  {
    auto f = open_out(dir / "categories.tsv");
    f << "index\tid\tname\tclosure_size\n";
    std::vector<std::size_t> sizes(o.categories.size(), 0);
    for (const auto& [id, cats] : o.categories.closure) {
      for (int j : cats) ++sizes[static_cast<std::size_t>(j)];
    }
    for (std::size_t j = 0; j < o.categories.size(); ++j) {
      f << j << '\t' << o.categories.ids[j] << '\t' << o.categories.names[j] << '\t' << sizes[j] << '\n';
    }
  }
  std::cout << o.ontology.size() << " terms, " << o.categories.size() << " categories, "
            << o.categories.subclass_count() << " subclasses\n";
  finish(manifest, dir, {dir / "ontology.tsv", dir / "categories.tsv"});
  return 0;
}

int cmd_build_corpus(const Common& c, const std::string& noteevents, const std::string& diagnoses, double ratio,
                     std::size_t vocab_cap) {
  RunManifest manifest;
  manifest.command = "build-corpus";
  manifest.seed = c.seed;
  manifest.config = {{"split_ratio", ratio}, {"vocab_size", vocab_cap}, {"root", c.root}};
  manifest.add_input(c.ontology);
  std::vector<Document> docs;
  if (!c.input.empty()) {
    manifest.add_input(c.input);
    docs = load_ehr_jsonl(c.input);
  } else if (!noteevents.empty() && !diagnoses.empty()) {
    manifest.add_input(noteevents);
    manifest.add_input(diagnoses);
    docs = load_mimic_discharge_summaries(noteevents, diagnoses);
  } else {
    throw ConfigError("pass --input notes.jsonl, or both --noteevents and --diagnoses");
  }
  const auto o = load_ontology(c.ontology, c.root);
  auto [train, test] = split_train_test(docs, ratio, c.seed);
  auto vocab_docs = train;
  const auto onto_docs = ontology_documents(o.ontology, o.categories);
  vocab_docs.insert(vocab_docs.end(), onto_docs.begin(), onto_docs.end());
  const auto vocab = build_vocabulary(vocab_docs, vocab_cap);

  const auto dir = run_dir(c.out, manifest);
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "train.jsonl");
    write_ehr_jsonl(f, train);
  }
  {
    auto f = open_out(dir / "test.jsonl");
    write_ehr_jsonl(f, test);
  }
  {
    auto f = open_out(dir / "vocab.txt");
    vocab.save(f);
  }
  std::cout << train.size() << " training and " << test.size() << " test documents, vocabulary " << vocab.size()
            << '\n';
  finish(manifest, dir, {dir / "train.jsonl", dir / "test.jsonl", dir / "vocab.txt"});
  return 0;
}

int cmd_gen_synthetic(const Common& c, SyntheticOptions options) {
  options.seed = c.seed;
  RunManifest manifest;
  manifest.command = "gen-synthetic";
  manifest.seed = c.seed;
  manifest.config = {{"categories", options.categories},
                     {"subclasses_per_category", options.subclasses_per_category},
                     {"notes", options.notes},
                     {"explicit_rate", options.explicit_rate},
                     {"dropout", options.dropout}};
  const auto dir = run_dir(c.out, manifest);
  const auto corpus = generate_synthetic(options);
  for (const auto& p : write_synthetic(corpus, dir.string())) manifest.artifacts.push_back(p);
  std::cout << corpus.terms.size() << " terms, " << corpus.notes.size() << " notes\n";
  finish(manifest, dir, {});
  return 0;
}

int cmd_train(const Common& c, const std::string& config_path, int max_steps) {
  RunManifest manifest;
  manifest.command = "train";
  TrainingConfig cfg;
  if (!config_path.empty()) {
    manifest.add_input(config_path);
    cfg = load_training_config(config_path);
  }
  if (c.seed_given) cfg.seed = c.seed;
  if (max_steps > 0) cfg.training.max_steps = max_steps;
  if (c.corpus.empty()) throw ConfigError("train needs --corpus (a build-corpus directory)");
  manifest.add_input(c.ontology);
  const auto train_path = fs::path(c.corpus) / "train.jsonl";
  const auto vocab_path = fs::path(c.corpus) / "vocab.txt";
  manifest.add_input(train_path.string());
  manifest.add_input(vocab_path.string());

  const auto o = load_ontology(c.ontology, c.root);
  const auto vocab = load_vocabulary(vocab_path);
  const auto docs = load_ehr_jsonl(train_path.string());
  cfg.model.vocab_size = static_cast<int>(vocab.size());
  cfg.model.categories = static_cast<int>(o.categories.size());
  cfg.model.validate();
  manifest.seed = cfg.seed;
  manifest.config = config_json(cfg);

  const auto pools = TrainingPools::build(docs, ontology_documents(o.ontology, o.categories), vocab, cfg.model.window);
  Checkpoint ckpt{Model(cfg.model, cfg.seed), vocab.hash(), cfg.seed};
  const auto result = train(ckpt.model, pools, cfg.training, cfg.seed, [](const StepLog& s) {
    if (s.step % 100 == 0) {
      std::cerr << "step " << s.step << "  loss " << s.losses.combined << "  (ehr " << s.losses.ehr << ", category "
                << s.losses.category << ", subclass " << s.losses.subclass << ", prior " << s.losses.prior << ")\n";
    }
  });

  const auto dir = run_dir(c.out, manifest);
  fs::create_directories(dir);
  save_checkpoint((dir / "checkpoint.bin").string(), ckpt);
  {
    auto f = open_out(dir / "loss_log.tsv");
    write_training_log(f, result.log);
  }
  {
    auto f = open_out(dir / "timing.tsv");
    write_timing_log(f, result.log);
  }
  std::cout << result.log.size() << " steps, " << (result.converged ? "converged" : "step budget reached") << '\n';
  finish(manifest, dir, {dir / "checkpoint.bin", dir / "loss_log.tsv", dir / "timing.tsv"});
  return 0;
}

Checkpoint load_model(const std::string& checkpoint, const Vocabulary& vocab, const PhenotypeCategories& cats) {
  if (checkpoint.empty()) throw ConfigError("missing checkpoint: pass --checkpoint");
  auto ckpt = load_checkpoint(checkpoint, vocab.hash());
  if (ckpt.model.config().categories != static_cast<int>(cats.size())) {
    throw ConfigError("checkpoint has " + std::to_string(ckpt.model.config().categories) +
                      " categories but the ontology has " + std::to_string(cats.size()));
  }
  return ckpt;
}

int cmd_calibrate(const Common& c, const std::string& checkpoint, double pct) {
  RunManifest manifest;
  manifest.command = "calibrate";
  manifest.config = {{"percentile", pct}};
  if (checkpoint.empty()) throw ConfigError("missing checkpoint: pass --checkpoint");
  if (c.corpus.empty()) throw ConfigError("calibrate needs --corpus (a build-corpus directory)");
  manifest.add_input(c.ontology);
  manifest.add_input(checkpoint);
  const auto o = load_ontology(c.ontology, c.root);
  const auto vocab_path = fs::path(c.corpus) / "vocab.txt";
  const auto train_path = fs::path(c.corpus) / "train.jsonl";
  manifest.add_input(vocab_path.string());
  manifest.add_input(train_path.string());
  const auto vocab = load_vocabulary(vocab_path);
  const auto ckpt = load_model(checkpoint, vocab, o.categories);

  std::vector<Fragment> frags;
  for (const auto& d : load_ehr_jsonl(train_path.string())) {
    auto f = fragment_document(d, vocab, ckpt.model.config().window);
    frags.insert(frags.end(), f.begin(), f.end());
  }
  const auto thresholds = calibrate_thresholds(ckpt.model, frags, pct, c.workers);
  const auto dir = run_dir(c.out, manifest);
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "thresholds.tsv");
    write_thresholds(f, thresholds, o.categories.ids);
  }
  finish(manifest, dir, {dir / "thresholds.tsv"});
  return 0;
}

int cmd_annotate(const Common& c, const std::string& method, const std::string& checkpoint,
                 const std::string& thresholds_path, const std::string& aggregation, bool save_alpha, double rate) {
  RunManifest manifest;
  manifest.command = "annotate";
  manifest.seed = c.seed;
  manifest.config = {{"method", method}, {"aggregation", aggregation}, {"split", c.split}, {"rate", rate}};
  manifest.add_input(c.ontology);
  const auto o = load_ontology(c.ontology, c.root);

  std::vector<AnnotationResult> results;
  if (method == "model") {
    if (checkpoint.empty()) throw ConfigError("missing checkpoint: annotate --method model needs --checkpoint");
    if (thresholds_path.empty()) throw ConfigError("missing thresholds: annotate --method model needs --thresholds");
    if (c.corpus.empty()) throw ConfigError("annotate --method model needs --corpus for its vocabulary");
    manifest.add_input(checkpoint);
    manifest.add_input(thresholds_path);
    const auto vocab_path = fs::path(c.corpus) / "vocab.txt";
    manifest.add_input(vocab_path.string());
    const auto vocab = load_vocabulary(vocab_path);
    const auto ckpt = load_model(checkpoint, vocab, o.categories);
    std::ifstream tin(thresholds_path);
    if (!tin) throw ConfigError("missing thresholds " + thresholds_path);
    const auto thresholds = read_thresholds(tin, o.categories.ids);
    const auto docs = documents_from(c, manifest);
    const auto agg = aggregation == "max" ? Aggregation::kMaxAlpha : Aggregation::kUnion;
    results = annotate_documents(ckpt.model, docs, vocab, thresholds, c.workers, agg);
  } else {
    const auto docs = documents_from(c, manifest);
    const KeywordIndex index(o.ontology, o.categories);
    std::mt19937_64 rng(c.seed);
    for (const auto& d : docs) {
      AnnotationResult r;
      r.doc_id = d.doc_id;
      r.categories = method == "keyword" ? index.annotate(d.text)
                                         : random_annotate(static_cast<int>(o.categories.size()), rng, rate);
      results.push_back(std::move(r));
    }
  }

  const auto dir = run_dir(c.out, manifest);
  fs::create_directories(dir);
  const auto alpha_path = dir / "alpha.tsv";
  const bool write_alpha = save_alpha && method == "model";
  {
    auto f = open_out(dir / "annotations.jsonl");
    write_annotations(f, results, o.categories.ids, write_alpha ? alpha_path.string() : std::string{});
  }
  if (write_alpha) {
    auto f = open_out(alpha_path);
    write_alpha_matrix(f, results);
    finish(manifest, dir, {dir / "annotations.jsonl", alpha_path});
  } else {
    finish(manifest, dir, {dir / "annotations.jsonl"});
  }
  return 0;
}

int cmd_build_silver(const Common& c, const std::string& icd_omim, const std::string& omim_hpo) {
  RunManifest manifest;
  manifest.command = "build-silver";
  manifest.config = {{"split", c.split}};
  if (icd_omim.empty() || omim_hpo.empty()) {
    throw ConfigError("build-silver needs --mapping-icd-omim and --mapping-omim-hpo");
  }
  manifest.add_input(c.ontology);
  manifest.add_input(icd_omim);
  manifest.add_input(omim_hpo);
  const auto o = load_ontology(c.ontology, c.root);
  std::ifstream a(icd_omim), b(omim_hpo);
  const auto table = compose_mapping(read_icd_omim(a), read_omim_hpo(b), o.ontology, o.categories, &std::cerr);
  const auto docs = documents_from(c, manifest);
  const auto silver = silver_labels(docs, table);

  const auto dir = run_dir(c.out, manifest);
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "silver.jsonl");
    write_label_records(f, silver.labels, o.categories.ids);
  }
  {
    auto f = open_out(dir / "coverage.txt");
    f << "documents\t" << docs.size() << '\n'
      << "covered\t" << silver.covered << '\n'
      << "uncovered\t" << silver.uncovered << '\n'
      << "icd_codes\t" << table.icd_to_categories.size() << '\n'
      << "icd_codes_without_categories\t" << table.unmapped_code_count() << '\n'
      << "dropped_hpo_ids\t" << table.warnings.size() << '\n';
    for (const auto& w : table.warnings) f << "# warning: " << w << '\n';
  }
  std::cout << silver.covered << " of " << docs.size() << " documents have silver labels\n";
  finish(manifest, dir, {dir / "silver.jsonl", dir / "coverage.txt"});
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& predictions, const std::string& labels) {
  RunManifest manifest;
  manifest.command = "evaluate";
  if (predictions.empty() || labels.empty()) throw ConfigError("evaluate needs --predictions and --labels");
  manifest.add_input(c.ontology);
  manifest.add_input(predictions);
  manifest.add_input(labels);
  const auto o = load_ontology(c.ontology, c.root);
  std::vector<std::string> warnings;
  std::ifstream p(predictions), l(labels);
  const auto pred = read_label_records(p, o.ontology, o.categories, &warnings);
  const auto gold = read_label_records(l, o.ontology, o.categories, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  const auto report = evaluate(pred, gold);

  const auto dir = run_dir(c.out, manifest);
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "report.txt");
    write_report_table(f, report);
  }
  {
    auto f = open_out(dir / "report.tsv");
    write_report_tsv(f, report);
  }
  write_report_table(std::cout, report);
  finish(manifest, dir, {dir / "report.txt", dir / "report.tsv"});
  return 0;
}

int cmd_stats(const Common& c, const std::string& labels) {
  RunManifest manifest;
  manifest.command = "stats";
  manifest.config = {{"split", c.split}};
  manifest.add_input(c.ontology);
  const auto o = load_ontology(c.ontology, c.root);
  const auto docs = documents_from(c, manifest);
  LabelMap silver;
  if (!labels.empty()) {
    manifest.add_input(labels);
    std::ifstream l(labels);
    silver = read_label_records(l, o.ontology, o.categories);
  }
  const auto st = corpus_stats(docs, KeywordIndex(o.ontology, o.categories), labels.empty() ? nullptr : &silver);

  const auto dir = run_dir(c.out, manifest);
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "stats.txt");
    write_stats_table(f, st);
  }
  {
    auto f = open_out(dir / "stats.tsv");
    write_stats_tsv(f, st);
  }
  write_stats_table(std::cout, st);
  finish(manifest, dir, {dir / "stats.txt", dir / "stats.tsv"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised HPO phenotype-category annotation of clinical text"};
  app.set_version_flag("--version", std::string(SEMHPO_VERSION));
  app.require_subcommand(1);

  Common c;
  auto ontology_opt = [&](CLI::App* s, bool required = true) {
    auto* opt = s->add_option("--ontology", c.ontology, "HPO OBO file or ontology.tsv snapshot");
    if (required) opt->required();
    s->add_option("--root", c.root, "Phenotypic abnormality root id");
  };
  auto seed_opt = [&](CLI::App* s) {
    s->add_option("--seed", c.seed, "Global random seed")->each([&](const std::string&) { c.seed_given = true; });
  };
  auto docs_opt = [&](CLI::App* s) {
    s->add_option("--corpus", c.corpus, "build-corpus output directory");
    s->add_option("--input", c.input, "EHR JSON Lines file (overrides --corpus split)");
    s->add_option("--split", c.split, "Corpus split to read")->check(CLI::IsMember({"train", "test"}));
  };
  auto out_opt = [&](CLI::App* s) { s->add_option("--out", c.out, "Output directory (default runs/<manifest hash>)"); };

  auto* parse = app.add_subcommand("parse-ontology", "Parse an OBO file and report categories and closure");
  ontology_opt(parse);
  out_opt(parse);

  std::string noteevents, diagnoses;
  double ratio = 0.7;
  std::size_t vocab_cap = kDefaultVocabularyCap;
  auto* build = app.add_subcommand("build-corpus", "Split EHRs 70/30 and build the vocabulary");
  ontology_opt(build);
  build->add_option("--input", c.input, "EHR JSON Lines file");
  build->add_option("--noteevents", noteevents, "MIMIC-III NOTEEVENTS.csv");
  build->add_option("--diagnoses", diagnoses, "MIMIC-III DIAGNOSES_ICD.csv");
  build->add_option("--split-ratio", ratio, "Training share")->check(CLI::Range(0.0, 1.0));
  build->add_option("--vocab-size", vocab_cap, "Vocabulary cap, excluding reserved tokens");
  seed_opt(build);
  out_opt(build);

  SyntheticOptions syn;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic ontology, notes and injected labels");
  gen->add_option("--notes", syn.notes, "Number of notes");
  gen->add_option("--categories", syn.categories, "Number of categories (1-6)");
  gen->add_option("--subclasses", syn.subclasses_per_category, "Subclasses per category");
  gen->add_option("--explicit-rate", syn.explicit_rate, "Share of injections written as names or synonyms");
  gen->add_option("--dropout", syn.dropout, "Word dropout for definition injections");
  seed_opt(gen);
  out_opt(gen);

  std::string config_path;
  int max_steps = 0;
  auto* tr = app.add_subcommand("train", "Train encoder, generator and classifier jointly");
  tr->add_option("--config", config_path, "key = value training config");
  tr->add_option("--max-steps", max_steps, "Override the config step budget");
  ontology_opt(tr);
  tr->add_option("--corpus", c.corpus, "build-corpus output directory")->required();
  seed_opt(tr);
  out_opt(tr);

  std::string checkpoint, thresholds;
  double pct = kDefaultPercentile;
  auto* cal = app.add_subcommand("calibrate", "Calibrate per-category thresholds on training fragments");
  cal->add_option("--checkpoint", checkpoint, "Trained checkpoint");
  cal->add_option("--percentile", pct, "Percentile of training alphas (70-95)")->check(CLI::Range(70.0, 95.0));
  cal->add_option("--corpus", c.corpus, "build-corpus output directory");
  cal->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  ontology_opt(cal);
  out_opt(cal);

  std::string method = "model", aggregation = "union";
  bool save_alpha = false;
  double rate = 0.5;
  auto* ann = app.add_subcommand("annotate", "Annotate documents with phenotype categories");
  ann->add_option("--method", method, "model, keyword or random")->check(CLI::IsMember({"model", "keyword", "random"}));
  ann->add_option("--checkpoint", checkpoint, "Trained checkpoint");
  ann->add_option("--thresholds", thresholds, "Threshold file from calibrate");
  ann->add_option("--aggregation", aggregation, "union or max")->check(CLI::IsMember({"union", "max"}));
  ann->add_option("--rate", rate, "Inclusion rate of the random baseline")->check(CLI::Range(0.0, 1.0));
  ann->add_flag("--save-alpha", save_alpha, "Also write the per-fragment alpha matrix");
  ann->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  ontology_opt(ann);
  docs_opt(ann);
  seed_opt(ann);
  out_opt(ann);

  std::string icd_omim, omim_hpo;
  auto* silver = app.add_subcommand("build-silver", "Compose ICD->OMIM->HPO mappings into silver labels");
  silver->add_option("--mapping-icd-omim", icd_omim, "code<TAB>omim file");
  silver->add_option("--mapping-omim-hpo", omim_hpo, "omim<TAB>hpo file");
  ontology_opt(silver);
  docs_opt(silver);
  out_opt(silver);

  std::string predictions, labels;
  auto* ev = app.add_subcommand("evaluate", "Score predictions against labels");
  ev->add_option("--predictions", predictions, "annotate output or external annotator records");
  ev->add_option("--labels", labels, "Silver or injected label records");
  ontology_opt(ev);
  out_opt(ev);

  auto* st = app.add_subcommand("stats", "Corpus statistics: ICD codes and keyword-matched terms per EHR");
  st->add_option("--labels", labels, "Optional label records");
  ontology_opt(st);
  docs_opt(st);
  out_opt(st);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*parse) return cmd_parse_ontology(c);
    if (*build) return cmd_build_corpus(c, noteevents, diagnoses, ratio, vocab_cap);
    if (*gen) return cmd_gen_synthetic(c, syn);
    if (*tr) return cmd_train(c, config_path, max_steps);
    if (*cal) return cmd_calibrate(c, checkpoint, pct);
    if (*ann) return cmd_annotate(c, method, checkpoint, thresholds, aggregation, save_alpha, rate);
    if (*silver) return cmd_build_silver(c, icd_omim, omim_hpo);
    if (*ev) return cmd_evaluate(c, predictions, labels);
    if (*st) return cmd_stats(c, labels);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
