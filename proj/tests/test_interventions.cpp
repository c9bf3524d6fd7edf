#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "snob/errors.hpp"
#include "snob/interventions.hpp"
#include "snob/rng.hpp"
#include "snob/synth.hpp"
#include "test_util.hpp"

using namespace snob;

namespace {

double expected_tpr(const ThresholdEntry& entry, std::span<const double> positives) {
  double sum = 0;
  for (double s : positives) sum += entry.decision_prob(s);
  return sum / static_cast<double>(positives.size());
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST_SUITE("interventions") {

TEST_CASE("threshold fit reproduces the hand-worked example") {
  // she positives {0.9, 0.8}, he positives {0.9, 0.4}: he TPR at 0.5 is 0.5,
  // so the she threshold moves to 0.9 and the gap closes.
  const std::vector<double> scores = {0.9, 0.8, 0.9, 0.4};
  const std::vector<int> labels = {1, 1, 1, 1};
  const std::vector<PronounGroup> groups = {PronounGroup::She, PronounGroup::She,
                                            PronounGroup::He, PronounGroup::He};
  OccupationThresholds t = fit_equalized_thresholds(scores, labels, groups, false);
  CHECK(t.he.threshold == 0.5);
  CHECK(t.she.threshold == doctest::Approx(0.9));
  const std::vector<double> she_pos = {0.9, 0.8};
  const std::vector<double> he_pos = {0.9, 0.4};
  CHECK(expected_tpr(t.she, she_pos) == doctest::Approx(0.5));
  CHECK(expected_tpr(t.he, he_pos) == doctest::Approx(0.5));
}

TEST_CASE("already-equal groups keep the base threshold") {
  const std::vector<double> scores = {0.8, 0.3, 0.7, 0.2};
  const std::vector<int> labels = {1, 1, 1, 1};
  const std::vector<PronounGroup> groups = {PronounGroup::She, PronounGroup::She,
                                            PronounGroup::He, PronounGroup::He};
  OccupationThresholds t = fit_equalized_thresholds(scores, labels, groups, true);
  CHECK(t.she.threshold == 0.5);
  CHECK(t.he.threshold == 0.5);
  CHECK_FALSE(t.she.randomized);
}

TEST_CASE("a group without positives leaves thresholds at the base") {
  const std::vector<double> scores = {0.9, 0.1};
  const std::vector<int> labels = {1, 0};
  const std::vector<PronounGroup> groups = {PronounGroup::She, PronounGroup::He};
  OccupationThresholds t = fit_equalized_thresholds(scores, labels, groups, false);
  CHECK(t.she.threshold == 0.5);
  CHECK(t.he.threshold == 0.5);
}

TEST_CASE("randomized thresholds hit the target TPR exactly in expectation") {
  Prng prng(7);
  for (int iter = 0; iter < 40; ++iter) {
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<PronounGroup> groups;
    const auto n_she = 3 + prng.below(40);
    const auto n_he = 3 + prng.below(40);
    std::vector<double> she_pos, he_pos;
    for (std::uint64_t i = 0; i < n_she + n_he; ++i) {
      const double s = prng.uniform();
      scores.push_back(s);
      labels.push_back(1);
      const bool she = i < n_she;
      groups.push_back(she ? PronounGroup::She : PronounGroup::He);
      (she ? she_pos : he_pos).push_back(s);
    }
    OccupationThresholds t = fit_equalized_thresholds(scores, labels, groups, true);
    const double tpr_she = expected_tpr(t.she, she_pos);
    const double tpr_he = expected_tpr(t.he, he_pos);
    CHECK(std::fabs(tpr_she - tpr_he) < 1e-12);
  }
}

TEST_CASE("deterministic thresholds stay within one positive of the target") {
  Prng prng(15);
  for (int iter = 0; iter < 40; ++iter) {
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<PronounGroup> groups;
    std::vector<double> she_pos, he_pos;
    const auto n_she = 5 + prng.below(60);
    const auto n_he = 5 + prng.below(60);
    for (std::uint64_t i = 0; i < n_she + n_he; ++i) {
      const double s = prng.uniform();
      scores.push_back(s);
      labels.push_back(1);
      const bool she = i < n_she;
      groups.push_back(she ? PronounGroup::She : PronounGroup::He);
      (she ? she_pos : he_pos).push_back(s);
    }
    OccupationThresholds t = fit_equalized_thresholds(scores, labels, groups, false);
    const double gap =
        expected_tpr(t.she, she_pos) - expected_tpr(t.he, he_pos);
    const double adjusted_n = static_cast<double>(
        t.she.threshold != 0.5 ? she_pos.size() : he_pos.size());
    CHECK(std::fabs(gap) <= 1.0 / adjusted_n + 1e-12);
  }
}

TEST_CASE("raising a threshold never raises the TPR") {
  Prng prng(19);
  std::vector<double> positives(30);
  for (double& s : positives) s = prng.uniform();
  double prev = 1.0;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    ThresholdEntry entry{t, false, t, 0.0};
    const double cur = expected_tpr(entry, positives);
    CHECK(cur <= prev + 1e-15);
    prev = cur;
  }
}

TEST_CASE("preprocessing on a balanced occupation equals plain training") {
  std::vector<Biography> bios;
  Prng prng(33);
  for (int i = 0; i < 30; ++i) {
    const char* texts[2] = {"alpha beta gamma", "delta epsilon zeta"};
    bios.push_back(testutil::bio("a" + std::to_string(i), "law",
                                 i % 2 ? PronounGroup::She : PronounGroup::He,
                                 texts[0]));
    bios.push_back(testutil::bio("b" + std::to_string(i), "med",
                                 i % 2 ? PronounGroup::She : PronounGroup::He,
                                 texts[1]));
  }
  DatasetSplit split =
      stratified_split(Corpus::from_biographies(bios), {0.65, 0.10, 0.25}, 9);
  Vocabulary vocab = build_vocabulary(
      split.train, 1, make_indicator_set(default_gender_indicators()));
  FeatureContext ctx;
  ctx.vocab = &vocab;
  OccupationModelSet plain = train_one_vs_all(split, Repr::Bow, ctx, {});
  OccupationModelSet pr = train_preprocessed_models(split, Repr::Bow, ctx, {});
  for (const auto& [occ, model] : plain.models) {
    const LinearModel& other = pr.model_for(occ);
    for (std::size_t k = 0; k < model.weights.size(); ++k) {
      CHECK(model.weights[k] ==
            doctest::Approx(other.weights[k]).epsilon(1e-6).scale(1.0));
    }
    CHECK(model.intercept ==
          doctest::Approx(other.intercept).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("decoupled training on a single-group corpus equals pooled training") {
  std::vector<Biography> bios;
  for (int i = 0; i < 20; ++i) {
    bios.push_back(testutil::bio("a" + std::to_string(i), "law",
                                 PronounGroup::She, "court filings brief"));
    bios.push_back(testutil::bio("b" + std::to_string(i), "med",
                                 PronounGroup::She, "clinic patient chart"));
  }
  DatasetSplit split =
      stratified_split(Corpus::from_biographies(bios), {0.65, 0.10, 0.25}, 10);
  Vocabulary vocab = build_vocabulary(
      split.train, 1, make_indicator_set(default_gender_indicators()));
  FeatureContext ctx;
  ctx.vocab = &vocab;
  OccupationModelSet pooled = train_one_vs_all(split, Repr::Bow, ctx, {});
  DecoupledModels de = train_decoupled(split, Repr::Bow, ctx, {});
  for (const auto& [occ, model] : pooled.models) {
    CHECK(de.she.model_for(occ).weights == model.weights);
    CHECK(de.he.model_for(occ).weights == model.weights);  // pooled fallback
  }
}

TEST_CASE("permuting he rows never changes the she model") {
  PlantedSpec spec;
  spec.occupations = {{"ajob", 0.5}, {"bjob", 0.5}};
  spec.docs_per_occupation = 80;
  spec.seed = 41;
  Corpus corpus = generate_planted_corpus(spec);

  // Move all he bios to the end, preserving she order.
  std::vector<Biography> reordered;
  for (const Biography& bio : corpus.biographies()) {
    if (bio.group == PronounGroup::She) reordered.push_back(bio);
  }
  std::vector<Biography> he_bios;
  for (const Biography& bio : corpus.biographies()) {
    if (bio.group != PronounGroup::She) he_bios.push_back(bio);
  }
  std::reverse(he_bios.begin(), he_bios.end());
  reordered.insert(reordered.end(), he_bios.begin(), he_bios.end());

  EmbeddingTable table = generate_planted_embeddings(spec);
  FeatureContext ctx;
  ctx.table = &table;

  // Compare she models trained on the two orderings without re-splitting
  // (splits shuffle cells; the invariant is about the training routine).
  DatasetSplit direct;
  direct.train = corpus;
  direct.validation = corpus;
  direct.test = corpus;
  DatasetSplit shuffled;
  shuffled.train = Corpus::from_biographies(reordered);
  shuffled.validation = shuffled.train;
  shuffled.test = shuffled.train;
  DecoupledModels a = train_decoupled(direct, Repr::We, ctx, {});
  DecoupledModels b = train_decoupled(shuffled, Repr::We, ctx, {});
  for (const auto& [occ, model] : a.she.models) {
    CHECK(model.weights == b.she.model_for(occ).weights);
    CHECK(model.intercept == b.she.model_for(occ).intercept);
  }
}

TEST_CASE("symmetric groups produce nearly identical decoupled models") {
  PlantedSpec spec;
  spec.occupations = {{"ajob", 0.5}, {"bjob", 0.5}};
  spec.docs_per_occupation = 1200;
  spec.style_gap = 0.0;  // groups share one style distribution
  spec.coupling = 0.0;
  spec.seed = 47;
  Corpus corpus = generate_planted_corpus(spec);
  EmbeddingTable table = generate_planted_embeddings(spec);
  DatasetSplit split = stratified_split(corpus, {0.65, 0.10, 0.25}, 11);
  FeatureContext ctx;
  ctx.table = &table;
  DecoupledModels de = train_decoupled(split, Repr::We, ctx, {});
  for (const auto& [occ, she_model] : de.she.models) {
    CHECK(cosine(she_model.weights, de.he.model_for(occ).weights) > 0.95);
  }
}

TEST_CASE("predict_with_intervention: neutral thresholds reduce PO to NONE") {
  std::vector<Biography> bios;
  for (int i = 0; i < 20; ++i) {
    bios.push_back(testutil::bio("a" + std::to_string(i), "law",
                                 i % 2 ? PronounGroup::She : PronounGroup::He,
                                 "court filings brief"));
    bios.push_back(testutil::bio("b" + std::to_string(i), "med",
                                 i % 2 ? PronounGroup::She : PronounGroup::He,
                                 "clinic patient chart"));
  }
  DatasetSplit split =
      stratified_split(Corpus::from_biographies(bios), {0.65, 0.10, 0.25}, 12);
  Vocabulary vocab = build_vocabulary(
      split.train, 1, make_indicator_set(default_gender_indicators()));
  FeatureContext ctx;
  ctx.vocab = &vocab;
  OccupationModelSet models = train_one_vs_all(split, Repr::Bow, ctx, {});

  GroupThresholds neutral;
  for (const auto& [occ, _] : models.models) {
    neutral.by_occupation[occ] = OccupationThresholds{};
  }
  InterventionResources res;
  res.pooled = &models;
  res.thresholds = &neutral;

  InterventionSpec spec_none;
  spec_none.kind = InterventionKind::None;
  spec_none.repr = Repr::Bow;
  InterventionSpec spec_po;
  spec_po.kind = InterventionKind::Po;
  spec_po.repr = Repr::Bow;

  for (const Biography& bio : split.test.biographies()) {
    for (const auto& [occ, _] : models.models) {
      PredictionOutcome a = predict_with_intervention(bio, spec_none, ctx, res, occ);
      PredictionOutcome b = predict_with_intervention(bio, spec_po, ctx, res, occ);
      CHECK(a.score == b.score);  // PO never changes scores
      CHECK(a.decision == b.decision);
      CHECK(a.decision_prob == b.decision_prob);
    }
  }
}

TEST_CASE("predict_with_intervention rejects missing resources") {
  Biography bio = testutil::bio("x", "law", PronounGroup::She, "court brief");
  Vocabulary vocab({"brief", "court"}, 1);
  FeatureContext ctx;
  ctx.vocab = &vocab;
  InterventionSpec spec;
  spec.kind = InterventionKind::Po;
  spec.repr = Repr::Bow;
  InterventionResources res;  // nothing fitted
  CHECK_THROWS_AS(predict_with_intervention(bio, spec, ctx, res, "law"),
                  ConfigError);
}

TEST_CASE("boundary decisions are deterministic per biography") {
  const double q = 0.37;
  const int a = resolve_decision(q, "bio-1", "law");
  for (int i = 0; i < 5; ++i) CHECK(resolve_decision(q, "bio-1", "law") == a);
  // Across many bios the coin lands near the mixing probability.
  int ones = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    ones += resolve_decision(q, "bio-" + std::to_string(i), "law");
  }
  CHECK(std::fabs(static_cast<double>(ones) / n - q) < 0.03);
}

}  // TEST_SUITE
