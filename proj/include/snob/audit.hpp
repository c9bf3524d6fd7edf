#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "snob/corpus.hpp"
#include "snob/interventions.hpp"
#include "snob/linear_model.hpp"
#include "snob/metrics.hpp"
#include "snob/norm_model.hpp"

namespace snob {

// Every knob of an audit run in one place. The canonical JSON form (sorted
// keys, out_dir excluded) is hashed and stamped into every artifact.
struct AuditConfig {
  std::filesystem::path corpus_path;
  std::filesystem::path embedding_path;
  std::filesystem::path lexicon_path;    // optional
  std::filesystem::path nb_corpus_path;  // optional, audited without splitting
  std::filesystem::path out_dir;

  std::array<double, 3> ratios{0.65, 0.10, 0.25};
  std::uint64_t seed = 0;
  std::vector<Repr> reprs{Repr::Bow, Repr::We};
  std::vector<InterventionKind> interventions{
      InterventionKind::None, InterventionKind::Pr, InterventionKind::Po,
      InterventionKind::De};
  TrainConfig train;
  std::vector<std::string> indicators = default_gender_indicators();
  int min_df = 5;
  double chi_level = 0.99;
  double comparative_t = 0.5;
  double comparative_t_prime = 0.7;
  std::string po_calibration = "validation";  // or "test"
  bool po_randomize = true;
  bool compute_irrev = false;

  void validate() const;
};

nlohmann::json config_to_json(const AuditConfig& config);
// Keys present in the JSON override the base; absent keys keep base values.
AuditConfig config_from_json(const nlohmann::json& j, AuditConfig base = {});
AuditConfig load_config(const std::filesystem::path& path, AuditConfig base = {});
std::string config_hash(const AuditConfig& config);

// Externally produced (bio, occupation) -> score table, the import path for
// auditing predictions trained elsewhere.
struct ScoreTable {
  std::string provenance;
  std::map<std::string, std::unordered_map<std::string, double>> scores;

  std::optional<double> lookup(const std::string& occupation,
                               const std::string& bio_id) const;
};

// CSV "bio_id,occupation,score" with header; every bio_id must resolve
// against the corpus and scores must lie in [0, 1].
ScoreTable import_external_scores(const std::filesystem::path& path,
                                  const Corpus& corpus,
                                  const std::string& provenance);

struct AuditOutcome {
  std::vector<AuditReport> reports;
  nlohmann::json manifest;
  std::vector<std::filesystem::path> written_files;
};

// The full pipeline: load -> split -> features -> norm model -> per
// (repr x intervention) training -> metrics -> report files. Deterministic
// per (config, seed); on any stage failure partial outputs are removed.
AuditOutcome run_audit(const AuditConfig& config);

// Audits an imported score table in place of trained occupation models.
AuditOutcome run_score_audit(const AuditConfig& config, const ScoreTable& table,
                             bool apply_po);

// One CSV row per occupation: occupation, p_c, r_c, p_value, approach, repr,
// note (empty r_c cell and a note when undefined); plus the irrev analogue
// when present.
std::vector<std::filesystem::path> export_plot_data(
    const AuditReport& report, const std::filesystem::path& out_dir);

void write_split_assignments(const DatasetSplit& split,
                             const std::filesystem::path& path);

}  // namespace snob
