#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snob/corpus.hpp"
#include "snob/linear_model.hpp"

namespace snob {

// Re-weighting so that, within every occupation, the she and he biographies
// carry equal total weight: alpha = |H_c|/max(|S_c|,|H_c|) for she bios and
// |S_c|/max(|S_c|,|H_c|) for he bios. Nonbinary bios get weight 0; an
// occupation missing one group gets all-ones with a warning.
std::vector<double> balance_weights(const Corpus& train);

double alpha_weight(PronounGroup group, std::int64_t n_she, std::int64_t n_he);

// Binary she(1)-vs-he(0) classifier over scrubbed features, trained with the
// per-occupation balancing weights. G(x) is the predicted probability of she.
struct NormClassifier {
  LinearModel model;
  std::vector<std::string> indicators;
  std::string weight_scheme = "per-occupation-balanced";
  std::vector<std::string> excluded_train_ids;

  // nullopt when no token survives scrubbing/table lookup.
  std::optional<double> score(std::span<const std::string> tokens,
                              const EmbeddingTable& table) const;
  std::optional<double> score(std::span<const std::string> tokens,
                              const Vocabulary& vocab) const;
};

NormClassifier train_norm_classifier(const DatasetSplit& split,
                                     const EmbeddingTable& table,
                                     std::span<const std::string> indicators,
                                     const TrainConfig& cfg = {});

// Diagnostic-only BOW variant, never used in headline metrics.
NormClassifier train_norm_classifier_bow(const DatasetSplit& split,
                                         const Vocabulary& vocab,
                                         std::span<const std::string> indicators,
                                         const TrainConfig& cfg = {});

// Human gender-score lexicon, scores in [1, 5] (1 most feminine, 5 most
// masculine). File format: CSV "word,score" with a header line.
class GenderLexicon {
 public:
  static GenderLexicon load(const std::filesystem::path& path);
  static GenderLexicon from_entries(std::vector<std::pair<std::string, double>> e);

  const std::vector<std::pair<std::string, double>>& entries() const {
    return entries_;
  }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<std::pair<std::string, double>> entries_;
};

struct LexiconValidation {
  double correlation = 0.0;  // Spearman, masculine oriented positive
  double p_value = 1.0;
  std::size_t n = 0;             // shared words compared
  bool masculine_positive = true;  // orientation applied to beta_w(G)
};

// Correlates human scores with the model's word weights, negating beta_w(G)
// first so the masculine direction is positive on both scales. Requires at
// least 10 shared words.
LexiconValidation validate_against_lexicon(const NormClassifier& g,
                                           const GenderLexicon& lexicon,
                                           const EmbeddingTable& table,
                                           const Vocabulary* vocab = nullptr);

// 2x2 counts: rows {occupation c', all other occupations}, columns
// {occurrences of w, occurrences of all other words}, per pronoun population.
struct ContingencyTable {
  // [row][col]; row 0 = occupation c', col 0 = word w.
  std::array<std::array<std::int64_t, 2>, 2> n{{{0, 0}, {0, 0}}};

  // Pearson statistic with Yates continuity correction, df = 1.
  double chi_squared_yates() const;
  // Survival probability of the statistic; degenerate tables give 1.
  double p_value() const;
  bool degenerate() const;
};

struct TaskRelevanceMap {
  std::map<std::string, std::vector<std::string>> relevant;  // occ -> words
  double level = 0.99;

  bool is_relevant(const std::string& occupation, const std::string& word) const;
};

// A word is task-relevant for c' when either pronoun population's frequency
// table rejects independence at the level: deliberately the OR of the two
// tests, over-labeling words as relevant.
std::vector<std::string> task_relevant_words(const Corpus& train,
                                             const std::string& occupation,
                                             double level,
                                             const Vocabulary& vocab);

TaskRelevanceMap build_task_relevance_map(const Corpus& train, double level,
                                          const Vocabulary& vocab);

// Identical pipeline to train_norm_classifier with featurization additionally
// restricted to words task-irrelevant for the occupation.
NormClassifier train_irrelevant_norm_classifier(
    const DatasetSplit& split, const std::string& occupation,
    const TaskRelevanceMap& relevance, const EmbeddingTable& table,
    std::span<const std::string> indicators, const TrainConfig& cfg = {});

// Words w with |beta_w(Yc)| > T, |beta_w(G)| > T and
// |beta_w(Yc)| > T' * |beta_w(Yc')|, ordered by |beta_w(Yc)| descending.
std::vector<std::string> comparative_gendered_words(
    const LinearModel& yc, const LinearModel& yc_prime, const NormClassifier& g,
    double t, double t_prime, const Vocabulary& vocab,
    const EmbeddingTable* table);

}  // namespace snob
