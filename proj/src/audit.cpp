#include "snob/audit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "snob/errors.hpp"
#include "snob/rng.hpp"
#include "snob/stats.hpp"

namespace snob {

namespace fs = std::filesystem;

void AuditConfig::validate() const {
  if (corpus_path.empty()) throw ConfigError("corpus path is required");
  if (!fs::exists(corpus_path)) {
    throw ConfigError("corpus file does not exist: " + corpus_path.string());
  }
  // The norm classifier always uses the WE representation.
  if (embedding_path.empty()) throw ConfigError("embedding path is required");
  if (!fs::exists(embedding_path)) {
    throw ConfigError("embedding file does not exist: " + embedding_path.string());
  }
  if (!lexicon_path.empty() && !fs::exists(lexicon_path)) {
    throw ConfigError("lexicon file does not exist: " + lexicon_path.string());
  }
  if (!nb_corpus_path.empty() && !fs::exists(nb_corpus_path)) {
    throw ConfigError("nb corpus file does not exist: " + nb_corpus_path.string());
  }
  if (reprs.empty()) throw ConfigError("at least one representation required");
  if (interventions.empty()) throw ConfigError("at least one intervention required");
  if (min_df < 1) throw ConfigError("min_df must be >= 1");
  if (chi_level <= 0 || chi_level >= 1) throw ConfigError("chi_level in (0,1)");
  if (po_calibration != "validation" && po_calibration != "test") {
    throw ConfigError("po_calibration must be \"validation\" or \"test\"");
  }
  if (train.reg_strength < 0) throw ConfigError("reg_strength must be >= 0");
  if (train.tol <= 0) throw ConfigError("tol must be > 0");
  if (train.max_iter < 1) throw ConfigError("max_iter must be >= 1");
}

nlohmann::json config_to_json(const AuditConfig& config) {
  nlohmann::json j;
  j["corpus_path"] = config.corpus_path.string();
  j["embedding_path"] = config.embedding_path.string();
  j["lexicon_path"] = config.lexicon_path.string();
  j["nb_corpus_path"] = config.nb_corpus_path.string();
  j["ratios"] = config.ratios;
  j["seed"] = config.seed;
  nlohmann::json reprs = nlohmann::json::array();
  for (Repr r : config.reprs) reprs.push_back(to_string(r));
  j["reprs"] = std::move(reprs);
  nlohmann::json ivs = nlohmann::json::array();
  for (InterventionKind k : config.interventions) ivs.push_back(to_string(k));
  j["interventions"] = std::move(ivs);
  j["reg_strength"] = config.train.reg_strength;
  j["tol"] = config.train.tol;
  j["max_iter"] = config.train.max_iter;
  j["indicators"] = config.indicators;
  j["min_df"] = config.min_df;
  j["chi_level"] = config.chi_level;
  j["comparative_t"] = config.comparative_t;
  j["comparative_t_prime"] = config.comparative_t_prime;
  j["po_calibration"] = config.po_calibration;
  j["po_randomize"] = config.po_randomize;
  j["compute_irrev"] = config.compute_irrev;
  // out_dir is a pure output location and stays out of the canonical form.
  return j;
}

AuditConfig config_from_json(const nlohmann::json& j, AuditConfig base) {
  AuditConfig c = std::move(base);
  c.corpus_path = j.value("corpus_path", c.corpus_path.string());
  c.embedding_path = j.value("embedding_path", c.embedding_path.string());
  c.lexicon_path = j.value("lexicon_path", c.lexicon_path.string());
  c.nb_corpus_path = j.value("nb_corpus_path", c.nb_corpus_path.string());
  if (j.contains("ratios")) c.ratios = j.at("ratios").get<std::array<double, 3>>();
  c.seed = j.value("seed", c.seed);
  if (j.contains("reprs")) {
    c.reprs.clear();
    for (const auto& r : j.at("reprs")) {
      c.reprs.push_back(repr_from_string(r.get<std::string>()));
    }
  }
  if (j.contains("interventions")) {
    c.interventions.clear();
    for (const auto& k : j.at("interventions")) {
      c.interventions.push_back(intervention_from_string(k.get<std::string>()));
    }
  }
  c.train.reg_strength = j.value("reg_strength", c.train.reg_strength);
  c.train.tol = j.value("tol", c.train.tol);
  c.train.max_iter = j.value("max_iter", c.train.max_iter);
  if (j.contains("indicators")) {
    c.indicators = j.at("indicators").get<std::vector<std::string>>();
  }
  c.min_df = j.value("min_df", c.min_df);
  c.chi_level = j.value("chi_level", c.chi_level);
  c.comparative_t = j.value("comparative_t", c.comparative_t);
  c.comparative_t_prime = j.value("comparative_t_prime", c.comparative_t_prime);
  c.po_calibration = j.value("po_calibration", c.po_calibration);
  c.po_randomize = j.value("po_randomize", c.po_randomize);
  c.compute_irrev = j.value("compute_irrev", c.compute_irrev);
  return c;
}

AuditConfig load_config(const fs::path& path, AuditConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

std::string config_hash(const AuditConfig& config) {
  const std::string canonical = config_to_json(config).dump();
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical)));
  return buf;
}

std::optional<double> ScoreTable::lookup(const std::string& occupation,
                                         const std::string& bio_id) const {
  auto occ_it = scores.find(occupation);
  if (occ_it == scores.end()) return std::nullopt;
  auto it = occ_it->second.find(bio_id);
  if (it == occ_it->second.end()) return std::nullopt;
  return it->second;
}

ScoreTable import_external_scores(const fs::path& path, const Corpus& corpus,
                                  const std::string& provenance) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score file: " + path.string());

  std::unordered_set<std::string> known_ids;
  for (const Biography& bio : corpus.biographies()) known_ids.insert(bio.id);

  ScoreTable table;
  table.provenance = provenance;
  std::vector<std::string> unknown;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;  // header
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos
                                            : line.find(',', c1 + 1);
    if (c2 == std::string::npos) {
      throw DataError("score file parse error at line " + std::to_string(line_no));
    }
    std::string bio_id = line.substr(0, c1);
    std::string occupation = line.substr(c1 + 1, c2 - c1 - 1);
    double score;
    try {
      score = std::stod(line.substr(c2 + 1));
    } catch (const std::exception&) {
      throw DataError("score file parse error at line " + std::to_string(line_no));
    }
    if (score < 0.0 || score > 1.0) {
      throw DataError("score out of [0,1] at line " + std::to_string(line_no) +
                      ": " + std::to_string(score));
    }
    if (!known_ids.count(bio_id)) {
      if (unknown.size() < 10) unknown.push_back(bio_id);
      continue;
    }
    if (!corpus.has_occupation(occupation)) {
      throw DataError("unknown occupation \"" + occupation + "\" at line " +
                      std::to_string(line_no));
    }
    table.scores[occupation][bio_id] = score;
  }
  if (!unknown.empty()) {
    std::string msg = "unknown bio ids in score file:";
    for (const std::string& id : unknown) msg += " " + id;
    throw DataError(msg);
  }
  if (table.scores.empty()) throw DataError("score file has no usable rows");
  return table;
}

namespace {

using OptScores = std::vector<std::optional<double>>;
using ScoresByOcc = std::map<std::string, OptScores>;

struct Pipeline {
  AuditConfig config;
  std::string cfg_hash;
  Corpus corpus;
  DatasetSplit split;
  IndicatorSet indicator_set;
  Vocabulary vocab;
  EmbeddingTable table;
  NormClassifier g;
  std::string split_id;
  double g_accuracy = 0.0;

  OptScores g_test;                       // G scores aligned with test bios
  std::map<std::string, OptScores> g_irrev_test;  // per occupation
  TaskRelevanceMap relevance;

  std::vector<Biography> nb_bios;  // test-split NB plus external NB corpus
  OptScores g_nb;

  std::map<std::string, std::optional<double>> p_c;  // full-corpus proportions
};

std::string compute_split_id(const DatasetSplit& split) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& s) {
    h ^= fnv1a64(s);
    h *= 0x100000001b3ULL;
  };
  mix("seed:" + std::to_string(split.seed));
  for (const Corpus* part : {&split.train, &split.validation, &split.test}) {
    mix("|part|");
    for (const Biography& bio : part->biographies()) mix(bio.id);
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

OptScores score_corpus_with_norm(const NormClassifier& g, const Corpus& corpus,
                                 const EmbeddingTable& table,
                                 const IndicatorSet& indicators,
                                 const std::vector<std::string>& extra_excluded) {
  IndicatorSet exclusions = indicators;
  exclusions.insert(extra_excluded.begin(), extra_excluded.end());
  FeatureContext ctx;
  ctx.table = &table;
  ctx.scrub = &exclusions;
  FeaturizedCorpus fc = featurize_corpus(corpus, Repr::We, ctx);
  OptScores out(corpus.size());
  for (std::size_t r = 0; r < fc.features.rows(); ++r) {
    out[fc.bio_index[r]] = predict_margin_row(g.model, fc.features, r);
  }
  return out;
}

Pipeline build_pipeline(const AuditConfig& config) {
  config.validate();
  Pipeline p;
  p.config = config;
  p.cfg_hash = config_hash(config);
  p.corpus = load_corpus(config.corpus_path);
  p.split = stratified_split(p.corpus, config.ratios, config.seed);
  p.split_id = compute_split_id(p.split);
  p.indicator_set = make_indicator_set(config.indicators);
  p.vocab = build_vocabulary(p.split.train, config.min_df, p.indicator_set);

  std::optional<Corpus> nb_external;
  if (!config.nb_corpus_path.empty()) {
    nb_external = load_corpus(config.nb_corpus_path);
  }

  // Restrict the embedding load to words that can actually occur.
  std::unordered_set<std::string> keep;
  for (const Biography& bio : p.corpus.biographies()) {
    keep.insert(bio.tokens.begin(), bio.tokens.end());
  }
  if (nb_external) {
    for (const Biography& bio : nb_external->biographies()) {
      keep.insert(bio.tokens.begin(), bio.tokens.end());
    }
  }
  GenderLexicon lexicon;
  if (!config.lexicon_path.empty()) {
    lexicon = GenderLexicon::load(config.lexicon_path);
    for (const auto& [word, _] : lexicon.entries()) keep.insert(word);
  }
  p.table = load_embedding_table(config.embedding_path, keep);

  p.g = train_norm_classifier(p.split, p.table, config.indicators, config.train);
  p.g_test = score_corpus_with_norm(p.g, p.split.test, p.table, p.indicator_set, {});

  // G test accuracy over she/he bios with a defined score.
  {
    double correct = 0;
    std::size_t n = 0;
    const auto& bios = p.split.test.biographies();
    for (std::size_t i = 0; i < bios.size(); ++i) {
      if (bios[i].group == PronounGroup::Nb || !p.g_test[i]) continue;
      const bool predicted_she = *p.g_test[i] >= 0.0;
      correct += predicted_she == (bios[i].group == PronounGroup::She) ? 1 : 0;
      ++n;
    }
    p.g_accuracy = n ? correct / static_cast<double>(n) : 0.0;
  }

  if (config.compute_irrev) {
    p.relevance = build_task_relevance_map(p.split.train, config.chi_level, p.vocab);
    for (const std::string& occ : p.corpus.occupations()) {
      if (!p.relevance.relevant.count(occ)) continue;  // occupation absent from train
      NormClassifier g_irrev = train_irrelevant_norm_classifier(
          p.split, occ, p.relevance, p.table, config.indicators, config.train);
      p.g_irrev_test[occ] =
          score_corpus_with_norm(g_irrev, p.split.test, p.table, p.indicator_set,
                                 p.relevance.relevant.at(occ));
    }
  }

  // Nonbinary evaluation set: test-split NB bios plus the external NB corpus.
  for (const Biography& bio : p.split.test.biographies()) {
    if (bio.group == PronounGroup::Nb) p.nb_bios.push_back(bio);
  }
  if (nb_external) {
    for (const Biography& bio : nb_external->biographies()) {
      if (bio.group == PronounGroup::Nb) p.nb_bios.push_back(bio);
    }
  }
  if (!p.nb_bios.empty()) {
    Corpus nb_corpus = Corpus::from_biographies(p.nb_bios);
    p.g_nb = score_corpus_with_norm(p.g, nb_corpus, p.table, p.indicator_set, {});
  }

  for (const OccupationStats& s : group_stats(p.corpus)) p.p_c[s.occupation] = s.p;
  return p;
}

ScoresByOcc score_with_models(const OccupationModelSet& models,
                              const FeaturizedCorpus& fc, std::size_t n_bios) {
  ScoresByOcc out;
  for (const auto& [occ, model] : models.models) {
    OptScores col(n_bios);
    for (std::size_t r = 0; r < fc.features.rows(); ++r) {
      col[fc.bio_index[r]] = predict_margin_row(model, fc.features, r);
    }
    out[occ] = std::move(col);
  }
  return out;
}

ScoresByOcc score_with_decoupled(const DecoupledModels& de, const Corpus& corpus,
                                 const FeaturizedCorpus& fc) {
  ScoresByOcc out;
  const auto& bios = corpus.biographies();
  for (const auto& [occ, she_model] : de.she.models) {
    const LinearModel& he_model = de.he.model_for(occ);
    OptScores col(corpus.size());
    for (std::size_t r = 0; r < fc.features.rows(); ++r) {
      const Biography& bio = bios[fc.bio_index[r]];
      if (bio.group == PronounGroup::Nb) continue;  // handled in the NB section
      const LinearModel& m =
          bio.group == PronounGroup::She ? she_model : he_model;
      col[fc.bio_index[r]] = predict_margin_row(m, fc.features, r);
    }
    out[occ] = std::move(col);
  }
  return out;
}

GroupThresholds fit_thresholds_for(const ScoresByOcc& calib_scores,
                                   const Corpus& calib, bool randomize,
                                   double base) {
  GroupThresholds thresholds;
  const auto& bios = calib.biographies();
  for (const auto& [occ, col] : calib_scores) {
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<PronounGroup> groups;
    for (std::size_t i = 0; i < bios.size(); ++i) {
      if (!col[i] || bios[i].group == PronounGroup::Nb) continue;
      scores.push_back(*col[i]);
      labels.push_back(bios[i].occupation == occ ? 1 : 0);
      groups.push_back(bios[i].group);
    }
    thresholds.by_occupation[occ] =
        fit_equalized_thresholds(scores, labels, groups, randomize, base);
  }
  return thresholds;
}

ScoresByOcc decisions_at(const ScoresByOcc& scores, double cut) {
  ScoresByOcc out;
  for (const auto& [occ, col] : scores) {
    OptScores d(col.size());
    for (std::size_t i = 0; i < col.size(); ++i) {
      if (col[i]) d[i] = *col[i] >= cut ? 1.0 : 0.0;
    }
    out[occ] = std::move(d);
  }
  return out;
}

ScoresByOcc decisions_with_thresholds(const ScoresByOcc& scores,
                                      const Corpus& corpus,
                                      const GroupThresholds& thresholds) {
  ScoresByOcc out;
  const auto& bios = corpus.biographies();
  for (const auto& [occ, col] : scores) {
    const OccupationThresholds& occ_thr = thresholds.by_occupation.at(occ);
    OptScores d(col.size());
    for (std::size_t i = 0; i < col.size(); ++i) {
      if (!col[i]) continue;
      d[i] = occ_thr.for_group(bios[i].group).decision_prob(*col[i]);
    }
    out[occ] = std::move(d);
  }
  return out;
}

struct AccuracyPair {
  double binary_macro = 0.0;
  double multiclass = 0.0;
};

AccuracyPair compute_accuracy(const ScoresByOcc& scores,
                              const ScoresByOcc& decisions, const Corpus& test) {
  const auto& bios = test.biographies();
  double macro_sum = 0;
  std::size_t macro_n = 0;
  for (const auto& [occ, probs] : decisions) {
    double correct = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < bios.size(); ++i) {
      if (bios[i].group == PronounGroup::Nb || !probs[i]) continue;
      const double dp = *probs[i];
      correct += bios[i].occupation == occ ? dp : 1.0 - dp;
      ++n;
    }
    if (n) {
      macro_sum += correct / static_cast<double>(n);
      ++macro_n;
    }
  }

  double mc_correct = 0;
  std::size_t mc_n = 0;
  for (std::size_t i = 0; i < bios.size(); ++i) {
    if (bios[i].group == PronounGroup::Nb) continue;
    const std::string* best = nullptr;
    double best_score = -1;
    for (const auto& [occ, col] : scores) {
      if (col[i] && *col[i] > best_score) {
        best_score = *col[i];
        best = &occ;
      }
    }
    if (!best) continue;
    mc_correct += *best == bios[i].occupation ? 1 : 0;
    ++mc_n;
  }

  AccuracyPair out;
  out.binary_macro = macro_n ? macro_sum / static_cast<double>(macro_n) : 0.0;
  out.multiclass = mc_n ? mc_correct / static_cast<double>(mc_n) : 0.0;
  return out;
}

std::vector<OccupationRun> per_occupation_audits(const Pipeline& p,
                                                 const ScoresByOcc& scores,
                                                 const ScoresByOcc& decisions) {
  const Corpus& test = p.split.test;
  const auto& bios = test.biographies();
  std::vector<OccupationRun> runs;
  for (const std::string& occ : p.corpus.occupations()) {
    OccupationRun run;
    run.split_id = p.split_id;
    run.config_hash = p.cfg_hash;
    OccupationAudit& a = run.audit;
    a.occupation = occ;
    a.p_c = p.p_c.at(occ);
    if (!a.p_c) a.notes.push_back("p_c undefined: no she/he biographies");

    auto score_it = scores.find(occ);
    auto dec_it = decisions.find(occ);
    if (score_it == scores.end() || dec_it == decisions.end()) {
      a.notes.push_back("no trained model or scores for this occupation");
      runs.push_back(std::move(run));
      continue;
    }
    const OptScores& col = score_it->second;
    const OptScores& dec = dec_it->second;

    std::vector<double> dvals;
    std::vector<int> labels;
    std::vector<unsigned char> she_mask, he_mask;
    std::vector<double> g_vec, y_vec;
    for (std::size_t i = 0; i < bios.size(); ++i) {
      if (bios[i].group == PronounGroup::Nb) continue;
      if (dec[i]) {
        dvals.push_back(*dec[i]);
        labels.push_back(bios[i].occupation == occ ? 1 : 0);
        she_mask.push_back(bios[i].group == PronounGroup::She);
        he_mask.push_back(bios[i].group == PronounGroup::He);
      }
      if (bios[i].group == PronounGroup::She && bios[i].occupation == occ &&
          col[i] && p.g_test[i]) {
        y_vec.push_back(*col[i]);
        g_vec.push_back(*p.g_test[i]);
      }
    }
    a.tpr_she = tpr(dvals, labels, she_mask);
    a.tpr_he = tpr(dvals, labels, he_mask);
    if (a.tpr_she && a.tpr_he) {
      a.gap = *a.tpr_she - *a.tpr_he;
    } else {
      a.notes.push_back("gap undefined: a group has no positives in test");
    }
    a.n_she_used = g_vec.size();
    if (g_vec.size() >= 3) {
      a.r = snob_single(g_vec, y_vec);
      if (!a.r->defined) a.notes.push_back("r_c undefined: constant scores");
    } else {
      a.notes.push_back("r_c undefined: fewer than 3 she biographies in test");
    }

    auto irrev_it = p.g_irrev_test.find(occ);
    if (irrev_it != p.g_irrev_test.end()) {
      std::vector<double> gi_vec, yi_vec;
      for (std::size_t i = 0; i < bios.size(); ++i) {
        if (bios[i].group == PronounGroup::She && bios[i].occupation == occ &&
            col[i] && irrev_it->second[i]) {
          yi_vec.push_back(*col[i]);
          gi_vec.push_back(*irrev_it->second[i]);
        }
      }
      if (gi_vec.size() >= 3) a.r_irrev = snob_single(gi_vec, yi_vec);
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

std::vector<NonbinaryAudit> nonbinary_audits(
    const Pipeline& p, Repr repr, const FeatureContext& ctx,
    const OccupationModelSet* pooled, const DecoupledModels* decoupled) {
  std::vector<NonbinaryAudit> out;
  if (p.nb_bios.empty()) return out;

  Corpus nb_corpus = Corpus::from_biographies(p.nb_bios);
  FeaturizedCorpus fc = featurize_corpus(nb_corpus, repr, ctx);

  struct Tagged {
    std::string tag;
    const OccupationModelSet* models;
  };
  std::vector<Tagged> model_sets;
  if (pooled) model_sets.push_back({"pooled", pooled});
  if (decoupled) {
    model_sets.push_back({"she", &decoupled->she});
    model_sets.push_back({"he", &decoupled->he});
  }

  for (const std::string& occ : nb_corpus.occupations()) {
    for (const Tagged& tagged : model_sets) {
      NonbinaryAudit audit;
      audit.occupation = occ;
      audit.model_tag = tagged.tag;
      if (!tagged.models->models.count(occ)) {
        audit.notes.push_back("skipped: no model for occupation");
        out.push_back(std::move(audit));
        continue;
      }
      const LinearModel& model = tagged.models->model_for(occ);
      std::vector<double> g_vec, y_vec;
      for (std::size_t r = 0; r < fc.features.rows(); ++r) {
        const std::size_t bi = fc.bio_index[r];
        if (nb_corpus.biographies()[bi].occupation != occ || !p.g_nb[bi]) continue;
        y_vec.push_back(predict_margin_row(model, fc.features, r));
        g_vec.push_back(*p.g_nb[bi]);
      }
      audit.n = g_vec.size();
      if (g_vec.size() < 3) {
        audit.notes.push_back("skipped: fewer than 3 nonbinary biographies");
      } else {
        audit.r = snob_nonbinary(
            g_vec, y_vec,
            derive_seed(p.config.seed, "nb-perm:" + occ + ":" + tagged.tag));
      }
      out.push_back(std::move(audit));
    }
  }
  return out;
}

nlohmann::json report_settings(const Pipeline& p, Repr repr,
                               std::size_t we_excluded) {
  nlohmann::json s;
  s["indicators"] = p.config.indicators;
  s["min_df"] = p.config.min_df;
  s["reg_strength"] = p.config.train.reg_strength;
  s["tol"] = p.config.train.tol;
  s["max_iter"] = p.config.train.max_iter;
  s["chi_level"] = p.config.chi_level;
  s["po_calibration"] = p.config.po_calibration;
  s["po_randomize"] = p.config.po_randomize;
  s["ratios"] = p.config.ratios;
  s["seed"] = p.config.seed;
  s["lexicon_orientation"] = "masculine_positive";
  s["repr"] = to_string(repr);
  s["g_excluded_train_docs"] = p.g.excluded_train_ids.size();
  s["we_excluded_test_docs"] = we_excluded;
  return s;
}

void write_scores_csv(const fs::path& path, const ScoresByOcc& scores,
                      const Corpus& test) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write scores file: " + path.string());
  out << "bio_id,occupation,score\n";
  char buf[40];
  for (const auto& [occ, col] : scores) {
    for (std::size_t i = 0; i < col.size(); ++i) {
      if (!col[i]) continue;
      std::snprintf(buf, sizeof(buf), "%.17g", stats::sigmoid(*col[i]));
      out << test.biographies()[i].id << ',' << occ << ',' << buf << '\n';
    }
  }
}

void remove_outputs(const std::vector<fs::path>& files) {
  for (const fs::path& f : files) {
    std::error_code ec;
    fs::remove(f, ec);
  }
}

}  // namespace

std::vector<fs::path> export_plot_data(const AuditReport& report,
                                       const fs::path& out_dir) {
  std::vector<fs::path> written;
  char buf[40];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };

  const fs::path main_path =
      out_dir / ("plot_" + report.repr + "_" + report.intervention + ".csv");
  {
    std::ofstream out(main_path);
    if (!out) throw DataError("cannot write plot file: " + main_path.string());
    out << "occupation,p_c,r_c,p_value,approach,repr,note\n";
    for (const OccupationAudit& a : report.occupations) {
      std::string note;
      if (!a.p_c || !a.r || !a.r->defined) note = "undefined";
      out << a.occupation << ',' << (a.p_c ? fmt(*a.p_c) : "") << ','
          << (a.r && a.r->defined ? fmt(a.r->rho) : "") << ','
          << (a.r && a.r->defined ? fmt(a.r->p_value) : "") << ','
          << report.approach << ',' << report.repr << ',' << note << '\n';
    }
  }
  written.push_back(main_path);

  const bool any_irrev =
      std::any_of(report.occupations.begin(), report.occupations.end(),
                  [](const OccupationAudit& a) { return a.r_irrev.has_value(); });
  if (any_irrev) {
    const fs::path irrev_path =
        out_dir /
        ("plot_irrev_" + report.repr + "_" + report.intervention + ".csv");
    std::ofstream out(irrev_path);
    if (!out) throw DataError("cannot write plot file: " + irrev_path.string());
    out << "occupation,p_c,r_irrev_c,p_value,approach,repr,note\n";
    for (const OccupationAudit& a : report.occupations) {
      std::string note;
      if (!a.p_c || !a.r_irrev || !a.r_irrev->defined) note = "undefined";
      out << a.occupation << ',' << (a.p_c ? fmt(*a.p_c) : "") << ','
          << (a.r_irrev && a.r_irrev->defined ? fmt(a.r_irrev->rho) : "") << ','
          << (a.r_irrev && a.r_irrev->defined ? fmt(a.r_irrev->p_value) : "")
          << ',' << report.approach << ',' << report.repr << ',' << note << '\n';
    }
    written.push_back(irrev_path);
  }
  return written;
}

void write_split_assignments(const DatasetSplit& split, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split file: " + path.string());
  out << "bio_id,part\n";
  const std::array<std::pair<const char*, const Corpus*>, 3> parts{
      {{"train", &split.train},
       {"validation", &split.validation},
       {"test", &split.test}}};
  for (const auto& [part, corpus] : parts) {
    for (const Biography& bio : corpus->biographies()) {
      out << bio.id << ',' << part << '\n';
    }
  }
}

AuditOutcome run_audit(const AuditConfig& config) {
  AuditOutcome outcome;
  try {
    Pipeline p = build_pipeline(config);
    fs::create_directories(config.out_dir);

    nlohmann::json manifest;
    manifest["config"] = config_to_json(config);
    manifest["config_hash"] = p.cfg_hash;
    manifest["split_id"] = p.split_id;
    manifest["corpus"] = {{"biographies", p.corpus.size()},
                          {"occupations", p.corpus.occupations().size()},
                          {"train", p.split.train.size()},
                          {"validation", p.split.validation.size()},
                          {"test", p.split.test.size()},
                          {"nonbinary_evaluated", p.nb_bios.size()}};
    manifest["g_accuracy"] = p.g_accuracy;

    if (!config.lexicon_path.empty()) {
      GenderLexicon lexicon = GenderLexicon::load(config.lexicon_path);
      LexiconValidation v = validate_against_lexicon(p.g, lexicon, p.table);
      manifest["lexicon_validation"] = {{"spearman", v.correlation},
                                        {"p_value", v.p_value},
                                        {"n_words", v.n},
                                        {"orientation", "masculine_positive"}};
    }
    if (config.compute_irrev) {
      nlohmann::json rel = nlohmann::json::object();
      for (const auto& [occ, words] : p.relevance.relevant) {
        rel[occ] = {{"relevant", words.size()},
                    {"irrelevant_fraction",
                     1.0 - static_cast<double>(words.size()) /
                               static_cast<double>(p.vocab.size())}};
      }
      manifest["task_relevance"] = std::move(rel);
      manifest["vocabulary_size"] = p.vocab.size();
    }

    nlohmann::json report_files = nlohmann::json::array();
    std::map<std::string, OccupationModelSet> kept_de_she;  // per repr tag
    std::map<std::string, OccupationModelSet> kept_none;

    for (Repr repr : config.reprs) {
      FeatureContext ctx;
      ctx.vocab = &p.vocab;
      ctx.table = &p.table;

      FeaturizedCorpus fc_test = featurize_corpus(p.split.test, repr, ctx);
      const std::size_t we_excluded = fc_test.excluded_ids.size();

      const bool needs_pooled =
          std::any_of(config.interventions.begin(), config.interventions.end(),
                      [](InterventionKind k) {
                        return k == InterventionKind::None ||
                               k == InterventionKind::Po;
                      });
      OccupationModelSet models_none;
      ScoresByOcc scores_none;
      if (needs_pooled) {
        models_none = train_one_vs_all(p.split, repr, ctx, config.train);
        scores_none = score_with_models(models_none, fc_test, p.split.test.size());
        const fs::path scores_path =
            config.out_dir / ("scores_" + to_string(repr) + ".csv");
        write_scores_csv(scores_path, scores_none, p.split.test);
        outcome.written_files.push_back(scores_path);
        kept_none[to_string(repr)] = models_none;
      }

      for (InterventionKind kind : config.interventions) {
        ScoresByOcc scores;
        ScoresByOcc decisions;
        const OccupationModelSet* pooled = nullptr;
        const DecoupledModels* de_ptr = nullptr;
        DecoupledModels de;
        OccupationModelSet models_pr;

        switch (kind) {
          case InterventionKind::None:
            scores = scores_none;
            decisions = decisions_at(scores, 0.0);
            pooled = &models_none;
            break;
          case InterventionKind::Pr: {
            models_pr = train_preprocessed_models(p.split, repr, ctx, config.train);
            scores = score_with_models(models_pr, fc_test, p.split.test.size());
            decisions = decisions_at(scores, 0.0);
            pooled = &models_pr;
            break;
          }
          case InterventionKind::Po: {
            scores = scores_none;  // PO never changes scores, only decisions
            const Corpus& calib = config.po_calibration == "test"
                                      ? p.split.test
                                      : p.split.validation;
            ScoresByOcc calib_scores;
            if (config.po_calibration == "test") {
              calib_scores = scores_none;
            } else {
              FeaturizedCorpus fc_calib = featurize_corpus(calib, repr, ctx);
              calib_scores = score_with_models(models_none, fc_calib, calib.size());
            }
            GroupThresholds thresholds = fit_thresholds_for(
                calib_scores, calib, config.po_randomize, 0.0);
            decisions = decisions_with_thresholds(scores, p.split.test, thresholds);
            pooled = &models_none;
            break;
          }
          case InterventionKind::De: {
            de = train_decoupled(p.split, repr, ctx, config.train);
            scores = score_with_decoupled(de, p.split.test, fc_test);
            decisions = decisions_at(scores, 0.0);
            de_ptr = &de;
            if (repr == Repr::Bow) kept_de_she[to_string(repr)] = de.she;
            break;
          }
        }

        const AccuracyPair acc = compute_accuracy(scores, decisions, p.split.test);
        std::vector<OccupationRun> runs = per_occupation_audits(p, scores, decisions);
        std::vector<NonbinaryAudit> nb =
            nonbinary_audits(p, repr, ctx, pooled, de_ptr);
        AuditReport report = assemble_report(
            to_string(repr), to_string(kind), runs, acc.binary_macro,
            acc.multiclass, std::move(nb), report_settings(p, repr, we_excluded));

        const fs::path report_path =
            config.out_dir /
            ("report_" + to_string(repr) + "_" + to_string(kind) + ".json");
        write_report(report, report_path);
        outcome.written_files.push_back(report_path);
        report_files.push_back(report_path.filename().string());
        for (const fs::path& f : export_plot_data(report, config.out_dir)) {
          outcome.written_files.push_back(f);
          report_files.push_back(f.filename().string());
        }
        outcome.reports.push_back(std::move(report));
      }
    }

    // Word-level comparison of the pooled (threshold-based) and decoupled
    // classifiers over the most imbalanced occupations.
    if (kept_none.count("bow") && kept_de_she.count("bow")) {
      std::vector<std::pair<double, std::string>> imbalanced;
      for (const auto& [occ, pc] : p.p_c) {
        if (pc) imbalanced.emplace_back(std::fabs(*pc - 0.5), occ);
      }
      std::sort(imbalanced.begin(), imbalanced.end(),
                [](const auto& a, const auto& b) {
                  if (a.first != b.first) return a.first > b.first;
                  return a.second < b.second;
                });
      nlohmann::json words = nlohmann::json::object();
      const std::size_t top = std::min<std::size_t>(6, imbalanced.size());
      for (std::size_t i = 0; i < top; ++i) {
        const std::string& occ = imbalanced[i].second;
        words[occ] = comparative_gendered_words(
            kept_none.at("bow").model_for(occ),
            kept_de_she.at("bow").model_for(occ), p.g, config.comparative_t,
            config.comparative_t_prime, p.vocab, &p.table);
      }
      manifest["comparative_gendered_words"] = {
          {"yc", "bow+po"},
          {"yc_prime", "bow+de(she)"},
          {"t", config.comparative_t},
          {"t_prime", config.comparative_t_prime},
          {"words", std::move(words)}};
    }

    manifest["files"] = std::move(report_files);
    const fs::path manifest_path = config.out_dir / "manifest.json";
    {
      std::ofstream out(manifest_path);
      if (!out) throw DataError("cannot write manifest: " + manifest_path.string());
      out << manifest.dump(2) << '\n';
    }
    outcome.written_files.push_back(manifest_path);
    outcome.manifest = std::move(manifest);
    return outcome;
  } catch (...) {
    remove_outputs(outcome.written_files);
    throw;
  }
}

AuditOutcome run_score_audit(const AuditConfig& config, const ScoreTable& table,
                             bool apply_po) {
  AuditOutcome outcome;
  try {
    Pipeline p = build_pipeline(config);
    fs::create_directories(config.out_dir);

    auto scores_over = [&table](const Corpus& corpus) {
      ScoresByOcc out;
      for (const auto& [occ, _] : table.scores) {
        OptScores col(corpus.size());
        for (std::size_t i = 0; i < corpus.size(); ++i) {
          col[i] = table.lookup(occ, corpus.biographies()[i].id);
        }
        out[occ] = std::move(col);
      }
      return out;
    };

    ScoresByOcc scores = scores_over(p.split.test);
    ScoresByOcc decisions;
    std::string intervention_tag = "none";
    if (apply_po) {
      intervention_tag = "po";
      const Corpus& calib = config.po_calibration == "test" ? p.split.test
                                                            : p.split.validation;
      ScoresByOcc calib_scores = scores_over(calib);
      bool any = false;
      for (const auto& [_, col] : calib_scores) {
        for (const auto& v : col) {
          if (v) any = true;
        }
      }
      if (!any) {
        throw ConfigError(
            "imported scores do not cover the \"" + config.po_calibration +
            "\" calibration split; rerun with po_calibration=test");
      }
      GroupThresholds thresholds =
          fit_thresholds_for(calib_scores, calib, config.po_randomize, 0.5);
      decisions = decisions_with_thresholds(scores, p.split.test, thresholds);
    } else {
      decisions = decisions_at(scores, 0.5);
    }

    const AccuracyPair acc = compute_accuracy(scores, decisions, p.split.test);
    std::vector<OccupationRun> runs = per_occupation_audits(p, scores, decisions);
    nlohmann::json settings = report_settings(p, Repr::We, 0);
    settings["external_provenance"] = table.provenance;
    settings.erase("repr");
    settings["repr"] = "external";
    AuditReport report =
        assemble_report("external", intervention_tag, runs, acc.binary_macro,
                        acc.multiclass, {}, std::move(settings));

    const fs::path report_path =
        config.out_dir / ("report_external_" + intervention_tag + ".json");
    write_report(report, report_path);
    outcome.written_files.push_back(report_path);
    for (const fs::path& f : export_plot_data(report, config.out_dir)) {
      outcome.written_files.push_back(f);
    }

    nlohmann::json manifest;
    manifest["config"] = config_to_json(config);
    manifest["config_hash"] = p.cfg_hash;
    manifest["split_id"] = p.split_id;
    manifest["external_provenance"] = table.provenance;
    manifest["g_accuracy"] = p.g_accuracy;
    const fs::path manifest_path =
        config.out_dir / ("manifest_external_" + intervention_tag + ".json");
    {
      std::ofstream out(manifest_path);
      if (!out) throw DataError("cannot write manifest: " + manifest_path.string());
      out << manifest.dump(2) << '\n';
    }
    outcome.written_files.push_back(manifest_path);
    outcome.manifest = std::move(manifest);
    outcome.reports.push_back(std::move(report));
    return outcome;
  } catch (...) {
    remove_outputs(outcome.written_files);
    throw;
  }
}

}  // namespace snob
