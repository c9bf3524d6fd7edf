#include "snob/interventions.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <set>

#include "snob/errors.hpp"
#include "snob/norm_model.hpp"
#include "snob/rng.hpp"

namespace snob {

std::string to_string(InterventionKind k) {
  switch (k) {
    case InterventionKind::None:
      return "none";
    case InterventionKind::Pr:
      return "pr";
    case InterventionKind::Po:
      return "po";
    case InterventionKind::De:
      return "de";
  }
  return "?";
}

InterventionKind intervention_from_string(const std::string& s) {
  if (s == "none") return InterventionKind::None;
  if (s == "pr") return InterventionKind::Pr;
  if (s == "po") return InterventionKind::Po;
  if (s == "de") return InterventionKind::De;
  throw ConfigError("unknown intervention: \"" + s + "\"");
}

const ThresholdEntry& OccupationThresholds::for_group(PronounGroup g) const {
  switch (g) {
    case PronounGroup::She:
      return she;
    case PronounGroup::He:
      return he;
    case PronounGroup::Nb:
      return nb;  // thresholds are fitted for she/he only
  }
  return nb;
}

namespace {

double tpr_at(std::span<const double> positives, double threshold) {
  std::size_t hits = 0;
  for (double s : positives) {
    if (s >= threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(positives.size());
}

ThresholdEntry raise_threshold(std::span<const double> positives, double target,
                               bool randomize) {
  // Candidate thresholds are the attained score values; TPR(v) is
  // nonincreasing in v, so pick the smallest value that reaches the target.
  std::vector<double> values(positives.begin(), positives.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  ThresholdEntry entry;
  double chosen = std::nextafter(values.back(),
                                 std::numeric_limits<double>::infinity());
  double chosen_tpr = 0.0;  // fallback just above the largest score
  double below = values.back();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    const double t = tpr_at(positives, v);
    if (t <= target) {
      chosen = v;
      chosen_tpr = t;
      below = i > 0 ? values[i - 1] : v;
      break;
    }
    below = v;
  }
  entry.threshold = chosen;
  if (randomize && chosen_tpr < target && below < chosen) {
    const double lower_tpr = tpr_at(positives, below);
    if (lower_tpr > chosen_tpr) {
      entry.randomized = true;
      entry.lower = below;
      entry.mix_prob = (target - chosen_tpr) / (lower_tpr - chosen_tpr);
    }
  }
  return entry;
}

}  // namespace

OccupationThresholds fit_equalized_thresholds(std::span<const double> scores,
                                              std::span<const int> labels,
                                              std::span<const PronounGroup> groups,
                                              bool randomize,
                                              double base_threshold) {
  if (scores.size() != labels.size() || labels.size() != groups.size()) {
    throw DataError("fit_equalized_thresholds input length mismatch");
  }
  std::vector<double> she_pos, he_pos;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    if (groups[i] == PronounGroup::She) she_pos.push_back(scores[i]);
    if (groups[i] == PronounGroup::He) he_pos.push_back(scores[i]);
  }

  OccupationThresholds out;
  out.base = base_threshold;
  const ThresholdEntry neutral{base_threshold, false, base_threshold, 0.0};
  out.she = out.he = out.nb = neutral;
  if (she_pos.empty() || he_pos.empty()) {
    std::cerr << "warning: a group has no positives; thresholds left at base\n";
    return out;
  }
  const double tpr_she = tpr_at(she_pos, base_threshold);
  const double tpr_he = tpr_at(he_pos, base_threshold);
  if (tpr_she == tpr_he) return out;  // already equal

  if (tpr_she > tpr_he) {
    out.she = raise_threshold(she_pos, tpr_he, randomize);
  } else {
    out.he = raise_threshold(he_pos, tpr_she, randomize);
  }
  return out;
}

OccupationModelSet train_preprocessed_models(const DatasetSplit& split, Repr repr,
                                             const FeatureContext& ctx,
                                             const TrainConfig& cfg) {
  const Corpus& train = split.train;
  SampleWeightFn weight_fn = [&train](const Biography& bio,
                                      const std::string& occupation) {
    if (bio.occupation != occupation) return 1.0;  // negatives keep weight 1
    const GroupCounts& counts = train.counts(occupation);
    if (counts.she < 1 || counts.he < 1) return 1.0;
    return alpha_weight(bio.group, counts.she, counts.he);
  };
  return train_one_vs_all(split, repr, ctx, cfg, weight_fn);
}

const OccupationModelSet& DecoupledModels::for_group(PronounGroup g) const {
  switch (g) {
    case PronounGroup::She:
      return she;
    case PronounGroup::He:
      return he;
    case PronounGroup::Nb:
      throw ConfigError("nonbinary bios have no dedicated decoupled model");
  }
  throw ConfigError("bad group");
}

DecoupledModels train_decoupled(const DatasetSplit& split, Repr repr,
                                const FeatureContext& ctx, const TrainConfig& cfg) {
  const Corpus& train = split.train;
  if (train.empty()) throw DataError("empty train split");
  FeaturizedCorpus fc = featurize_corpus(train, repr, ctx);
  const auto& bios = train.biographies();
  const std::string space_id = ctx.space_id(repr);

  DecoupledModels out;
  for (PronounGroup group : {PronounGroup::She, PronounGroup::He}) {
    OccupationModelSet& set = group == PronounGroup::She ? out.she : out.he;
    set.repr = repr;
    for (const std::string& occ : train.occupations()) {
      const GroupCounts& counts = train.counts(occ);
      const std::int64_t cell = group == PronounGroup::She ? counts.she : counts.he;
      const bool pooled_fallback = cell == 0;
      if (pooled_fallback) {
        std::cerr << "warning: empty (" << occ << ", " << to_string(group)
                  << ") cell; decoupled model trained on pooled data\n";
      }
      TrainingSet ts;
      ts.features = std::move(fc.features);
      ts.labels.resize(ts.features.rows());
      ts.weights.resize(ts.features.rows());
      for (std::size_t r = 0; r < ts.features.rows(); ++r) {
        const Biography& bio = bios[fc.bio_index[r]];
        ts.labels[r] = bio.occupation == occ ? 1 : 0;
        double w = 0.0;
        if (bio.group == group || (pooled_fallback && bio.group != PronounGroup::Nb)) {
          w = 1.0;
        }
        ts.weights[r] = w;
      }
      LinearModel model = train_logistic(ts, cfg);
      model.repr = repr;
      model.feature_space_id = space_id;
      set.models[occ] = std::move(model);
      fc.features = std::move(ts.features);
    }
  }
  return out;
}

int resolve_decision(double decision_prob, const std::string& bio_id,
                     const std::string& occupation) {
  if (decision_prob >= 1.0) return 1;
  if (decision_prob <= 0.0) return 0;
  const std::uint64_t h =
      derive_seed(fnv1a64(bio_id), "po:boundary-coin:" + occupation);
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < decision_prob ? 1 : 0;
}

PredictionOutcome predict_with_intervention(const Biography& bio,
                                            const InterventionSpec& spec,
                                            const FeatureContext& ctx,
                                            const InterventionResources& res,
                                            const std::string& occupation) {
  const LinearModel* model = nullptr;
  switch (spec.kind) {
    case InterventionKind::None:
    case InterventionKind::Pr:
    case InterventionKind::Po:
      if (!res.pooled) throw ConfigError("intervention requires pooled models");
      model = &res.pooled->model_for(occupation);
      break;
    case InterventionKind::De:
      if (!res.decoupled) throw ConfigError("DE requires decoupled model sets");
      if (bio.group == PronounGroup::Nb) {
        // Reported for both group models elsewhere; default to the she set.
        model = &res.decoupled->she.model_for(occupation);
      } else {
        model = &res.decoupled->for_group(bio.group).model_for(occupation);
      }
      break;
  }

  double score;
  if (spec.repr == Repr::Bow) {
    if (!ctx.vocab) throw ConfigError("BOW prediction requires a vocabulary");
    score = predict_proba(*model, featurize_bow(bio.tokens, *ctx.vocab));
  } else {
    if (!ctx.table) throw ConfigError("WE prediction requires an embedding table");
    auto vec = featurize_we(bio.tokens, *ctx.table);
    if (!vec) throw DataError("biography \"" + bio.id + "\" has no in-table tokens");
    score = predict_proba(*model, *vec);
  }

  PredictionOutcome out;
  out.score = score;
  if (spec.kind == InterventionKind::Po) {
    if (!res.thresholds) throw ConfigError("PO requires fitted thresholds");
    auto it = res.thresholds->by_occupation.find(occupation);
    if (it == res.thresholds->by_occupation.end()) {
      throw ConfigError("no thresholds fitted for occupation \"" + occupation +
                        "\"");
    }
    out.decision_prob = it->second.for_group(bio.group).decision_prob(score);
  } else {
    out.decision_prob = score >= 0.5 ? 1.0 : 0.0;
  }
  out.decision = resolve_decision(out.decision_prob, bio.id, occupation);
  return out;
}

}  // namespace snob
