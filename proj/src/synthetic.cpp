#include "semhpo/synthetic.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "semhpo/error.hpp"

namespace semhpo {

namespace {

struct CategorySeed {
  const char* id;
  const char* name;
  const char* synonym;
  std::vector<std::string> words;
};

// Disjoint per-category lexicons. None of these words occur in the filler.
const std::array<CategorySeed, 6>& category_seeds() {
  static const std::array<CategorySeed, 6> seeds{{
      {"HP:0000152", "Abnormality of head or neck", "Head and neck abnormality",
       {"skull", "scalp", "facial", "jaw", "cranial", "cervical", "forehead", "occipital", "mandible", "maxilla",
        "palate", "lip", "chin", "cheek", "nasal", "orbit", "tongue", "throat", "tonsil", "parotid", "fontanelle",
        "suture", "hairline", "dental", "gingival", "philtrum", "eyelid", "earlobe"}},
      {"HP:0000707", "Abnormality of the nervous system", "Neurological abnormality",
       {"brain", "cerebral", "neuron", "seizure", "cortex", "spinal", "nerve", "cerebellar", "ataxia", "reflex",
        "tremor", "cognitive", "gait", "neuropathy", "myelin", "hemisphere", "sensory", "motor", "spasticity",
        "paresis", "encephalopathy", "headache", "dementia", "aphasia", "convulsion", "hypotonia", "axonal",
        "ganglia"}},
      {"HP:0000818", "Abnormality of the endocrine system", "Endocrine abnormality",
       {"thyroid", "adrenal", "pituitary", "insulin", "glucose", "hormone", "cortisol", "gland", "islet",
        "parathyroid", "calcium", "goiter", "gonadal", "estrogen", "testosterone", "growth", "metabolic",
        "glycemic", "endocrine", "secretion", "thyroxine", "aldosterone", "diabetes", "prolactin", "hypothalamic",
        "corticotropin", "ketosis", "pubertal"}},
      {"HP:0001626", "Abnormality of the cardiovascular system", "Cardiovascular abnormality",
       {"heart", "cardiac", "ventricular", "atrial", "valve", "aortic", "mitral", "murmur", "arrhythmia",
        "coronary", "myocardial", "vascular", "arterial", "venous", "pericardial", "septal", "tachycardia",
        "bradycardia", "systolic", "diastolic", "vessel", "aneurysm", "endocardial", "conduction", "palpitation",
        "infarction", "hypertension", "tricuspid"}},
      {"HP:0002086", "Abnormality of the respiratory system", "Respiratory abnormality",
       {"lung", "pulmonary", "bronchial", "alveolar", "airway", "pleural", "tracheal", "respiratory", "breathing",
        "dyspnea", "cough", "wheeze", "apnea", "sputum", "bronchiectasis", "emphysema", "pneumonia",
        "ventilation", "oxygenation", "hypoxemia", "laryngeal", "stridor", "diaphragm", "expiratory",
        "inspiratory", "atelectasis", "tachypnea", "bronchiolar"}},
      {"HP:0025031", "Abnormality of the digestive system", "Digestive system abnormality",
       {"bowel", "intestinal", "colon", "gastric", "hepatic", "liver", "biliary", "esophageal", "duodenal",
        "rectal", "anal", "stomach", "pancreatic", "abdominal", "diarrhea", "constipation", "vomiting",
        "dysphagia", "jaundice", "ascites", "reflux", "ulcer", "cirrhosis", "colitis", "polyp", "peristalsis",
        "splenic", "mucosal"}},
  }};
  return seeds;
}

const std::vector<std::string> kModifiers{"abnormal",   "reduced", "increased", "progressive", "congenital",
                                          "recurrent",  "chronic", "focal",     "diffuse",     "bilateral",
                                          "severe",     "partial", "absent",    "enlarged",    "hypoplastic",
                                          "persistent", "episodic"};
const std::vector<std::string> kSynonymNouns{"abnormality", "anomaly", "defect", "disorder", "dysfunction"};
const std::vector<std::string> kDefinitionNouns{"finding", "condition", "feature", "process", "state"};
const std::vector<std::string> kGlue{"of", "in", "with", "and", "affecting", "involving", "the", "by", "within"};

const std::vector<std::string> kFiller{
    "Patient is a {age} year old {sex} admitted on [**{date}**] for evaluation.",
    "Vital signs on admission were temperature {temp} pulse {n} bp {bp}.",
    "{Pro} was started on {drug} {n} mg daily and tolerated it well.",
    "Labs notable for wbc {f} hgb {f} and creatinine {f}.",
    "Discharged home in stable condition with outpatient follow up.",
    "No acute distress noted on examination this morning.",
    "Family history is noncontributory and social history is unremarkable.",
    "Patient was seen by the consult team who agreed with the plan.",
    "Medications were reconciled prior to discharge.",
    "{Pro} denies fever chills or night sweats.",
    "Pain controlled with oral medication overnight.",
    "Physical therapy evaluated the patient and recommended rehab.",
    "Follow up with primary care provider in {n} weeks.",
    "Code status full code confirmed with family at [**Hospital {n}**].",
    "Imaging obtained on [**{date}**] was reviewed with radiology.",
    "Diet advanced as tolerated without complication.",
    "Patient ambulating independently at time of discharge.",
    "Electrolytes repleted as needed during the stay.",
    "Seen by social work regarding placement options.",
    "Discussed plan of care with patient and family at bedside.",
};
const std::vector<std::string> kDrugs{"lisinopril", "metformin", "heparin", "aspirin", "furosemide", "omeprazole"};
const std::vector<std::string> kLeadIns{"findings consistent with", "history of", "known", "noted"};

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string fill_template(std::string t, std::mt19937_64& rng) {
  auto num = [&](int lo, int hi) { return std::to_string(std::uniform_int_distribution<int>(lo, hi)(rng)); };
  auto replace = [&](const std::string& key, auto make) {
    for (auto pos = t.find(key); pos != std::string::npos; pos = t.find(key)) t.replace(pos, key.size(), make());
  };
  const bool female = std::bernoulli_distribution(0.5)(rng);
  replace("{age}", [&] { return num(18, 95); });
  replace("{sex}", [&] { return std::string(female ? "woman" : "man"); });
  replace("{Pro}", [&] { return std::string(female ? "She" : "He"); });
  replace("{date}", [&] { return "21" + num(10, 99) + "-" + num(1, 12) + "-" + num(1, 28); });
  replace("{temp}", [&] { return "9" + num(6, 9) + "." + num(0, 9); });
  replace("{bp}", [&] { return num(95, 160) + "/" + num(50, 95); });
  replace("{drug}", [&] { return pick(kDrugs, rng); });
  replace("{f}", [&] { return num(1, 15) + "." + num(0, 9); });
  replace("{n}", [&] { return num(2, 120); });
  return t;
}

std::string hpo_id(int serial) {
  std::ostringstream s;
  s << "HP:99" << std::setw(5) << std::setfill('0') << serial;
  return s.str();
}

// Draws `count` distinct words from each (lexicon, count) pair, interleaved
// with glue words, as a lower-case definition sentence.
std::string make_definition(const std::vector<std::pair<const std::vector<std::string>*, int>>& sources,
                            std::mt19937_64& rng) {
  std::vector<std::string> content;
  for (const auto& [lexicon, count] : sources) {
    auto pool = *lexicon;
    std::shuffle(pool.begin(), pool.end(), rng);
    content.insert(content.end(), pool.begin(), pool.begin() + count);
  }
  std::shuffle(content.begin(), content.end(), rng);
  std::vector<std::string> words{"a", pick(kDefinitionNouns, rng), pick(kGlue, rng)};
  for (std::size_t i = 0; i < content.size(); ++i) {
    words.push_back(content[i]);
    if (i % 2 == 1 && i + 1 < content.size()) words.push_back(pick(kGlue, rng));
  }
  return join(words);
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticOptions& o) {
  const auto& seeds = category_seeds();
  if (o.categories < 1 || o.categories > static_cast<int>(seeds.size())) {
    throw ConfigError("synthetic categories must lie in [1, 6]");
  }
  if (o.subclasses_per_category < 2) throw ConfigError("synthetic subclasses_per_category must be at least 2");
  if (o.notes < 0) throw ConfigError("synthetic notes must be non-negative");
  if (o.min_injections < 1 || o.max_injections < o.min_injections || o.max_injections > o.categories) {
    throw ConfigError("synthetic injections must satisfy 1 <= min <= max <= categories");
  }
  if (!(o.explicit_rate >= 0 && o.explicit_rate <= 1) || !(o.dropout >= 0 && o.dropout < 1)) {
    throw ConfigError("synthetic rates must lie in [0, 1]");
  }

  std::mt19937_64 rng(o.seed);
  SyntheticCorpus out;
  auto& terms = out.terms;
  terms.push_back({"HP:0000001", "All", {}, {}, {}, {}, false});
  terms.push_back({"HP:0000005", "Mode of inheritance", {}, "The pattern in which a trait is passed on.",
                   {"HP:0000001"}, {}, false});
  terms.push_back({"HP:0000006", "Autosomal dominant inheritance", {}, "", {"HP:0000005"}, {}, false});
  terms.push_back({std::string(kPhenotypicAbnormalityRoot), "Phenotypic abnormality", {}, "", {"HP:0000001"},
                   {"HP:0000008"}, false});

  const auto m = static_cast<std::size_t>(o.categories);
  std::set<std::string> labels_used;
  std::vector<std::vector<std::size_t>> own(m);  // subclass term indices by primary category
  int serial = 1;

  for (std::size_t c = 0; c < m; ++c) {
    const auto& s = seeds[c];
    OntologyTerm cat{s.id, s.name, {s.synonym}, "", {std::string(kPhenotypicAbnormalityRoot)}, {}, false};
    cat.definition = make_definition({{&s.words, 4}}, rng);
    terms.push_back(std::move(cat));
  }
  for (std::size_t c = 0; c < m; ++c) {
    const auto& words = seeds[c].words;
    const auto direct = static_cast<std::size_t>(o.subclasses_per_category + 1) / 2;
    for (int k = 0; k < o.subclasses_per_category; ++k) {
      OntologyTerm t;
      t.id = hpo_id(serial++);
      auto pair = [&] {
        const auto& a = pick(words, rng);
        auto b = a;
        while (b == a) b = pick(words, rng);
        return a + " " + b;
      };
      do {
        t.name = pick(kModifiers, rng) + " " + pair();
      } while (!labels_used.insert(t.name).second);
      t.name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(t.name[0])));
      if (std::bernoulli_distribution(0.7)(rng)) {
        std::string syn;
        do {
          syn = pair() + " " + pick(kSynonymNouns, rng);
        } while (!labels_used.insert(syn).second);
        t.synonyms.push_back(syn);
      }
      if (static_cast<std::size_t>(k) < direct) {
        t.parents.push_back(seeds[c].id);
      } else {
        const auto& siblings = own[c];
        t.parents.push_back(terms[siblings[std::uniform_int_distribution<std::size_t>(0, direct - 1)(rng)]].id);
      }
      // The last subclass of every category also sits under the next
      // category, giving multi-parent diamonds across the hierarchy.
      const bool shared = m > 1 && k == o.subclasses_per_category - 1;
      if (shared) {
        const auto next = (c + 1) % m;
        t.parents.push_back(own[next].empty() ? std::string(seeds[next].id) : terms[own[next].front()].id);
        t.definition = make_definition({{&words, 4}, {&seeds[next].words, 3}}, rng);
      } else {
        t.definition = make_definition({{&words, 6}}, rng);
      }
      own[c].push_back(terms.size());
      terms.push_back(std::move(t));
    }
  }
  // An obsolete term, to exercise parser and closure handling downstream.
  terms.push_back({hpo_id(serial++), "obsolete " + seeds[0].words.front() + " finding", {}, "", {}, {}, true});

  const Ontology ontology(terms);
  const auto cats = subclass_closure(ontology, select_general_categories(ontology));

  // Mapping tables: each subclass owns one OMIM disease and one ICD code.
  std::vector<int> code_pool(900);
  for (int i = 0; i < 900; ++i) code_pool[static_cast<std::size_t>(i)] = 100 + i;
  std::shuffle(code_pool.begin(), code_pool.end(), rng);
  std::map<std::string, std::string> code_of;
  std::size_t next_code = 0;
  for (const auto& group : own) {
    for (auto idx : group) {
      const auto code = std::to_string(code_pool[next_code++]);
      const auto omim = "OMIM:" + std::to_string(600001 + static_cast<int>(next_code));
      out.icd_to_omim[code].insert(omim);
      out.omim_to_hpo[omim].insert(terms[idx].id);
      code_of[terms[idx].id] = code;
    }
  }
  // One disease annotated only outside the phenotype branch.
  const auto orphan_code = std::to_string(code_pool[next_code++]);
  out.icd_to_omim[orphan_code].insert("OMIM:699999");
  out.omim_to_hpo["OMIM:699999"].insert("HP:0000006");
  const std::vector<std::string> supplementary{"V45", "V58", "E87"};

  std::uniform_int_distribution<int> injections(o.min_injections, o.max_injections);
  for (int n = 0; n < o.notes; ++n) {
    Document d;
    std::ostringstream id;
    id << "note" << std::setw(4) << std::setfill('0') << n + 1;
    d.doc_id = id.str();
    d.kind = DocumentKind::kEhr;

    std::vector<std::size_t> order(m);
    for (std::size_t c = 0; c < m; ++c) order[c] = c;
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(static_cast<std::size_t>(injections(rng)));

    std::vector<std::string> segments;
    int filler = 0;
    while (filler < o.filler_tokens) {
      segments.push_back(fill_template(pick(kFiller, rng), rng));
      filler += static_cast<int>(normalize_tokenize(segments.back()).size());
    }
    auto& injected = out.injected[d.doc_id];
    auto& explicit_terms = out.explicit_terms[d.doc_id];
    std::vector<int> labels;
    for (auto c : order) {
      const auto& term = terms[own[c][std::uniform_int_distribution<std::size_t>(0, own[c].size() - 1)(rng)]];
      std::string text;
      if (std::bernoulli_distribution(o.explicit_rate)(rng)) {
        std::vector<std::string> forms{term.name};
        forms.insert(forms.end(), term.synonyms.begin(), term.synonyms.end());
        text = pick(kLeadIns, rng) + " " + pick(forms, rng) + ".";
        if (std::find(explicit_terms.begin(), explicit_terms.end(), term.id) == explicit_terms.end()) {
          explicit_terms.push_back(term.id);
        }
      } else {
        auto words = normalize_tokenize(term.definition);
        std::vector<std::string> kept;
        std::bernoulli_distribution drop(o.dropout);
        for (const auto& w : words) {
          if (!drop(rng)) kept.push_back(w);
        }
        if (kept.size() < 3) kept = words;
        text = join(kept) + ".";
      }
      const auto at = std::uniform_int_distribution<std::size_t>(0, segments.size())(rng);
      segments.insert(segments.begin() + static_cast<std::ptrdiff_t>(at), text);
      injected.push_back(term.id);
      const auto& mem = cats.membership(term.id);
      labels.insert(labels.end(), mem.begin(), mem.end());
      d.icd_codes.push_back(code_of.at(term.id));
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    out.labels[d.doc_id] = std::move(labels);

    if (std::bernoulli_distribution(0.4)(rng)) d.icd_codes.push_back(pick(supplementary, rng));
    if (std::bernoulli_distribution(0.1)(rng)) d.icd_codes.push_back(orphan_code);
    std::sort(d.icd_codes.begin(), d.icd_codes.end());
    d.icd_codes.erase(std::unique(d.icd_codes.begin(), d.icd_codes.end()), d.icd_codes.end());

    for (const auto& s : segments) {
      if (!d.text.empty()) d.text += ' ';
      d.text += s;
    }
    out.notes.push_back(std::move(d));
  }
  return out;
}

std::vector<std::string> write_synthetic(const SyntheticCorpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const Ontology ontology(corpus.terms);
  const auto cats = select_general_categories(ontology);
  std::vector<std::string> paths;
  auto open = [&](const std::string& name) {
    paths.push_back((fs::path(dir) / name).string());
    std::ofstream f(paths.back(), std::ios::binary);
    if (!f) throw ConfigError("cannot write " + paths.back());
    return f;
  };
  {
    auto f = open("ontology.obo");
    write_obo(f, corpus.terms);
  }
  {
    auto f = open("notes.jsonl");
    write_ehr_jsonl(f, corpus.notes);
  }
  {
    auto f = open("labels.jsonl");
    for (const auto& [doc, labels] : corpus.labels) {
      nlohmann::json j;
      j["doc_id"] = doc;
      auto& arr = j["categories"] = nlohmann::json::array();
      for (int c : labels) arr.push_back(cats.ids.at(static_cast<std::size_t>(c)));
      j["terms"] = corpus.injected.at(doc);
      f << j.dump() << '\n';
    }
  }
  auto write_pairs = [&](const std::string& name, const PairTable& table, const char* header) {
    auto f = open(name);
    f << "# " << header << '\n';
    for (const auto& [k, vs] : table) {
      for (const auto& v : vs) f << k << '\t' << v << '\n';
    }
  };
  write_pairs("icd_omim.tsv", corpus.icd_to_omim, "icd9\tomim");
  write_pairs("omim_hpo.tsv", corpus.omim_to_hpo, "omim\thpo");
  return paths;
}

}  // namespace semhpo
