#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snob/corpus.hpp"
#include "snob/linear_model.hpp"

namespace snob {

enum class InterventionKind { None, Pr, Po, De };

std::string to_string(InterventionKind k);
InterventionKind intervention_from_string(const std::string& s);

// A decision rule for one (occupation, group): positive when score >=
// threshold; with randomization, scores in [lower, threshold) are positive
// with probability mix_prob, so the expected TPR hits the target exactly.
struct ThresholdEntry {
  double threshold = 0.5;
  bool randomized = false;
  double lower = 0.5;
  double mix_prob = 0.0;

  double decision_prob(double score) const {
    if (score >= threshold) return 1.0;
    if (randomized && score >= lower) return mix_prob;
    return 0.0;
  }
};

struct OccupationThresholds {
  ThresholdEntry she;
  ThresholdEntry he;
  ThresholdEntry nb;  // always the unadjusted base threshold
  double base = 0.5;  // the decision threshold the fit started from

  const ThresholdEntry& for_group(PronounGroup g) const;
};

struct GroupThresholds {
  std::map<std::string, OccupationThresholds> by_occupation;
};

struct InterventionSpec {
  InterventionKind kind = InterventionKind::None;
  Repr repr = Repr::Bow;
  bool randomize_thresholds = false;
  std::string calibration_split = "validation";
};

// Equalizes the TPR of the two groups for one occupation: the group with the
// lower TPR at the base threshold keeps it, the other group's threshold rises
// to the smallest score whose TPR does not exceed that target. With
// randomize, the two adjacent thresholds are mixed so the expected TPR equals
// the target. Scores may be probabilities (base 0.5) or raw decision margins
// (base 0); the fitted thresholds live on the same scale as the scores.
OccupationThresholds fit_equalized_thresholds(std::span<const double> scores,
                                              std::span<const int> labels,
                                              std::span<const PronounGroup> groups,
                                              bool randomize,
                                              double base_threshold = 0.5);

// One-vs-all training with the per-occupation alpha weights applied to each
// model's positive class; negatives keep weight 1.
OccupationModelSet train_preprocessed_models(const DatasetSplit& split, Repr repr,
                                             const FeatureContext& ctx,
                                             const TrainConfig& cfg);

struct DecoupledModels {
  OccupationModelSet she;
  OccupationModelSet he;

  const OccupationModelSet& for_group(PronounGroup g) const;
};

// Separate model sets trained on the she and he biographies respectively. An
// occupation with an empty (occupation, group) cell falls back to pooled
// training data for that group's model, with a warning.
DecoupledModels train_decoupled(const DatasetSplit& split, Repr repr,
                                const FeatureContext& ctx, const TrainConfig& cfg);

struct InterventionResources {
  const OccupationModelSet* pooled = nullptr;      // NONE / PR / PO
  const DecoupledModels* decoupled = nullptr;      // DE
  const GroupThresholds* thresholds = nullptr;     // PO
};

struct PredictionOutcome {
  double score = 0.0;          // unchanged model score, also under PO
  double decision_prob = 0.0;  // expected decision in [0, 1]
  int decision = 0;            // deterministic resolution of the coin
};

// Scores a biography for one occupation under the given intervention. PO
// returns the unchanged underlying score with the group-threshold decision,
// so within-group rankings are untouched; nonbinary bios use threshold 0.5.
PredictionOutcome predict_with_intervention(const Biography& bio,
                                            const InterventionSpec& spec,
                                            const FeatureContext& ctx,
                                            const InterventionResources& res,
                                            const std::string& occupation);

// Deterministic per-biography coin for randomized boundary decisions.
int resolve_decision(double decision_prob, const std::string& bio_id,
                     const std::string& occupation);

}  // namespace snob
