#include <cstdlib>
#include <optional>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "snob/audit.hpp"
#include "snob/errors.hpp"
#include "snob/synth.hpp"

namespace fs = std::filesystem;

namespace {

struct CliOptions {
  std::string config_file;
  snob::AuditConfig config;
  std::vector<std::string> repr_flags;
  std::vector<std::string> intervention_flags;
  std::string indicator_csv;
  bool po_deterministic = false;
};

void add_config_flags(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--config", opt.config_file,
                  "JSON config file; its values override flags");
  cmd->add_option("--corpus", opt.config.corpus_path, "corpus JSONL file");
  cmd->add_option("--embeddings", opt.config.embedding_path,
                  "pretrained word-vector text file");
  cmd->add_option("--lexicon", opt.config.lexicon_path,
                  "gender-score lexicon CSV (word,score)");
  cmd->add_option("--nb-corpus", opt.config.nb_corpus_path,
                  "extra nonbinary corpus JSONL, audited without splitting");
  cmd->add_option("--out", opt.config.out_dir, "output directory");
  cmd->add_option("--seed", opt.config.seed, "root seed for all substreams");
  cmd->add_option("--repr", opt.repr_flags, "representations: bow, we")
      ->delimiter(',');
  cmd->add_option("--intervention", opt.intervention_flags,
                  "interventions: none, pr, po, de")
      ->delimiter(',');
  cmd->add_option("--reg", opt.config.train.reg_strength, "L2 strength");
  cmd->add_option("--tol", opt.config.train.tol, "gradient stopping tolerance");
  cmd->add_option("--max-iter", opt.config.train.max_iter, "solver iteration cap");
  cmd->add_option("--indicators", opt.indicator_csv,
                  "comma-separated explicit gender indicators");
  cmd->add_option("--min-df", opt.config.min_df, "vocabulary document frequency");
  cmd->add_option("--chi-level", opt.config.chi_level,
                  "task-relevance significance level");
  cmd->add_option("--comparative-t", opt.config.comparative_t, "threshold T");
  cmd->add_option("--comparative-t-prime", opt.config.comparative_t_prime,
                  "threshold T'");
  cmd->add_option("--po-calibration", opt.config.po_calibration,
                  "threshold calibration split: validation or test");
  cmd->add_flag("--po-deterministic", opt.po_deterministic,
                "disable randomized boundary thresholds");
  cmd->add_flag("--irrev", opt.config.compute_irrev,
                "also compute task-irrelevant norm classifiers");
}

snob::AuditConfig resolve_config(CliOptions& opt) {
  snob::AuditConfig config = opt.config;
  if (!opt.repr_flags.empty()) {
    config.reprs.clear();
    for (const std::string& r : opt.repr_flags) {
      config.reprs.push_back(snob::repr_from_string(r));
    }
  }
  if (!opt.intervention_flags.empty()) {
    config.interventions.clear();
    for (const std::string& k : opt.intervention_flags) {
      config.interventions.push_back(snob::intervention_from_string(k));
    }
  }
  if (!opt.indicator_csv.empty()) {
    config.indicators.clear();
    std::size_t start = 0;
    while (start <= opt.indicator_csv.size()) {
      const auto comma = opt.indicator_csv.find(',', start);
      const auto end = comma == std::string::npos ? opt.indicator_csv.size() : comma;
      if (end > start) {
        config.indicators.push_back(opt.indicator_csv.substr(start, end - start));
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  if (opt.po_deterministic) config.po_randomize = false;
  if (!opt.config_file.empty()) {
    config = snob::load_config(opt.config_file, std::move(config));
  }
  if (const char* env = std::getenv("SNOB_OUT_DIR")) config.out_dir = env;
  if (config.out_dir.empty()) config.out_dir = "snob-out";
  return config;
}

int run_synth(const std::string& spec_file, const std::string& occupations,
              int docs, int nb_docs, double coupling,
              const std::optional<std::uint64_t>& seed, const fs::path& out,
              const fs::path& embeddings_out) {
  snob::PlantedSpec spec;
  if (!spec_file.empty()) {
    std::ifstream in(spec_file);
    if (!in) throw snob::ConfigError("cannot open spec file: " + spec_file);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw snob::ConfigError(std::string("malformed spec: ") + e.what());
    }
    spec = snob::planted_spec_from_json(j);
  } else if (!occupations.empty()) {
    std::size_t start = 0;
    while (start < occupations.size()) {
      const auto comma = occupations.find(',', start);
      const auto end = comma == std::string::npos ? occupations.size() : comma;
      const std::string item = occupations.substr(start, end - start);
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        throw snob::ConfigError("expected name:p in --occupations, got " + item);
      }
      spec.occupations.push_back(
          {item.substr(0, colon), std::stod(item.substr(colon + 1))});
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  } else {
    throw snob::ConfigError("synth requires --spec or --occupations");
  }
  if (docs > 0) spec.docs_per_occupation = docs;
  if (nb_docs >= 0) spec.nb_docs_per_occupation = nb_docs;
  if (coupling >= 0) spec.coupling = coupling;
  if (seed) spec.seed = *seed;
  spec.validate();

  snob::Corpus corpus = snob::generate_planted_corpus(spec);
  snob::save_corpus(corpus, out);
  std::cout << "wrote " << corpus.size() << " biographies to " << out << "\n";
  if (!embeddings_out.empty()) {
    snob::save_embedding_table(snob::generate_planted_embeddings(spec),
                               embeddings_out);
    std::cout << "wrote embeddings to " << embeddings_out << "\n";
  }
  return 0;
}

void save_model_dir(const snob::AuditConfig& config) {
  // Trains the pooled, pre-processed and decoupled model sets plus the norm
  // classifier and serializes them with the config hash stamped in.
  const std::string hash = snob::config_hash(config);
  snob::Corpus corpus = snob::load_corpus(config.corpus_path);
  snob::DatasetSplit split =
      snob::stratified_split(corpus, config.ratios, config.seed);
  const snob::IndicatorSet indicators = snob::make_indicator_set(config.indicators);
  snob::Vocabulary vocab =
      snob::build_vocabulary(split.train, config.min_df, indicators);

  std::unordered_set<std::string> keep;
  for (const snob::Biography& bio : corpus.biographies()) {
    keep.insert(bio.tokens.begin(), bio.tokens.end());
  }
  snob::EmbeddingTable table =
      snob::load_embedding_table(config.embedding_path, keep);

  const fs::path dir = config.out_dir / "models";
  fs::create_directories(dir);
  auto dump_set = [&](const snob::OccupationModelSet& set, const std::string& tag) {
    for (const auto& [occ, model] : set.models) {
      snob::LinearModel stamped = model;
      stamped.config_hash = hash;
      snob::save_model(stamped, dir / ("model_" + tag + "_" + occ + ".json"));
    }
  };
  for (snob::Repr repr : config.reprs) {
    snob::FeatureContext ctx;
    ctx.vocab = &vocab;
    ctx.table = &table;
    for (snob::InterventionKind kind : config.interventions) {
      switch (kind) {
        case snob::InterventionKind::None:
        case snob::InterventionKind::Po:
          dump_set(snob::train_one_vs_all(split, repr, ctx, config.train),
                   to_string(repr) + "_none");
          break;
        case snob::InterventionKind::Pr:
          dump_set(snob::train_preprocessed_models(split, repr, ctx, config.train),
                   to_string(repr) + "_pr");
          break;
        case snob::InterventionKind::De: {
          snob::DecoupledModels de =
              snob::train_decoupled(split, repr, ctx, config.train);
          dump_set(de.she, to_string(repr) + "_de_she");
          dump_set(de.he, to_string(repr) + "_de_he");
          break;
        }
      }
    }
  }
  snob::NormClassifier g =
      snob::train_norm_classifier(split, table, config.indicators, config.train);
  g.model.config_hash = hash;
  snob::save_model(g.model, dir / "model_g.json");
  std::cout << "wrote models to " << dir << " (config " << hash << ")\n";
}

void verify_model_dir(const snob::AuditConfig& config, const fs::path& dir) {
  const std::string hash = snob::config_hash(config);
  std::size_t checked = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    snob::LinearModel model = snob::load_model(entry.path());
    if (model.config_hash != hash) {
      throw snob::ConfigError("artifact " + entry.path().filename().string() +
                              " was built under config " + model.config_hash +
                              ", current config is " + hash);
    }
    ++checked;
  }
  if (checked == 0) throw snob::ConfigError("no model artifacts in " + dir.string());
  std::cout << "verified " << checked << " artifact(s) against config " << hash
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Social-norm-bias audit toolkit for text classifiers"};
  app.require_subcommand(1);

  CliOptions opt;

  auto* cmd_split = app.add_subcommand("split", "write the stratified split");
  add_config_flags(cmd_split, opt);

  auto* cmd_train = app.add_subcommand("train", "train and serialize models");
  add_config_flags(cmd_train, opt);

  auto* cmd_audit = app.add_subcommand("audit", "run the full audit pipeline");
  add_config_flags(cmd_audit, opt);
  std::string models_dir;
  cmd_audit->add_option("--models", models_dir,
                        "verify serialized artifacts against this config");

  auto* cmd_robust = app.add_subcommand(
      "robustness", "audit with task-irrelevant norm classifiers");
  add_config_flags(cmd_robust, opt);

  auto* cmd_import =
      app.add_subcommand("import-scores", "audit externally produced scores");
  add_config_flags(cmd_import, opt);
  std::string scores_file, provenance = "external";
  bool import_po = false;
  cmd_import->add_option("--scores", scores_file, "CSV bio_id,occupation,score")
      ->required();
  cmd_import->add_option("--provenance", provenance, "label for the score source");
  cmd_import->add_flag("--po", import_po, "apply threshold equalization on top");

  auto* cmd_export =
      app.add_subcommand("export-plots", "write plot CSVs from a report");
  std::string report_file, export_dir = ".";
  cmd_export->add_option("--report", report_file, "report JSON")->required();
  cmd_export->add_option("--out", export_dir, "output directory");

  auto* cmd_synth = app.add_subcommand("synth", "generate a planted corpus");
  std::string spec_file, occupations;
  int docs = 0, nb_docs = -1;
  double coupling = -1;
  std::uint64_t synth_seed = 0;
  std::string synth_out = "synthetic.jsonl", synth_emb;
  cmd_synth->add_option("--spec", spec_file, "planted-spec JSON file");
  cmd_synth->add_option("--occupations", occupations,
                        "comma-separated name:p pairs");
  cmd_synth->add_option("--docs", docs, "documents per occupation");
  cmd_synth->add_option("--nb-docs", nb_docs, "nonbinary documents per occupation");
  cmd_synth->add_option("--coupling", coupling, "norm-occupation coupling in [0,1]");
  cmd_synth->add_option("--seed", synth_seed, "generator seed");
  cmd_synth->add_option("--out", synth_out, "corpus output path");
  cmd_synth->add_option("--embeddings-out", synth_emb,
                        "also write synthetic embeddings here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_synth->parsed()) {
      std::optional<std::uint64_t> seed_override;
      if (cmd_synth->count("--seed")) seed_override = synth_seed;
      return run_synth(spec_file, occupations, docs, nb_docs, coupling,
                       seed_override, synth_out, synth_emb);
    }
    if (cmd_export->parsed()) {
      snob::AuditReport report = snob::read_report(report_file);
      fs::create_directories(export_dir);
      for (const fs::path& f : snob::export_plot_data(report, export_dir)) {
        std::cout << "wrote " << f << "\n";
      }
      return 0;
    }

    snob::AuditConfig config = resolve_config(opt);
    if (cmd_split->parsed()) {
      config.validate();
      snob::Corpus corpus = snob::load_corpus(config.corpus_path);
      snob::DatasetSplit split =
          snob::stratified_split(corpus, config.ratios, config.seed);
      fs::create_directories(config.out_dir);
      const fs::path path = config.out_dir / "splits.csv";
      snob::write_split_assignments(split, path);
      std::cout << "wrote " << path << "\n";
      return 0;
    }
    if (cmd_train->parsed()) {
      config.validate();
      save_model_dir(config);
      return 0;
    }
    if (cmd_audit->parsed() || cmd_robust->parsed()) {
      if (cmd_robust->parsed()) config.compute_irrev = true;
      if (!models_dir.empty()) verify_model_dir(config, models_dir);
      snob::AuditOutcome outcome = snob::run_audit(config);
      for (const auto& report : outcome.reports) {
        std::cout << report.approach << ": accuracy "
                  << report.accuracy_binary_macro << ", gap_rms "
                  << report.gap_rms_value;
        if (report.rho && report.rho->defined) {
          std::cout << ", rho " << report.rho->rho << " (p "
                    << report.rho->p_value << ")";
        }
        std::cout << "\n";
      }
      std::cout << "wrote " << outcome.written_files.size() << " file(s) to "
                << config.out_dir << "\n";
      return 0;
    }
    if (cmd_import->parsed()) {
      config.validate();
      snob::Corpus corpus = snob::load_corpus(config.corpus_path);
      snob::ScoreTable table =
          snob::import_external_scores(scores_file, corpus, provenance);
      snob::AuditOutcome outcome = snob::run_score_audit(config, table, import_po);
      for (const auto& report : outcome.reports) {
        std::cout << report.approach << ": gap_rms " << report.gap_rms_value;
        if (report.rho && report.rho->defined) {
          std::cout << ", rho " << report.rho->rho;
        }
        std::cout << "\n";
      }
      return 0;
    }
  } catch (const snob::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return snob::ConfigError::exit_code;
  } catch (const snob::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return snob::DataError::exit_code;
  } catch (const snob::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return snob::NumericalError::exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
