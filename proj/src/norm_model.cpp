#include "snob/norm_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include "snob/errors.hpp"
#include "snob/metrics.hpp"
#include "snob/stats.hpp"

namespace snob {

double alpha_weight(PronounGroup group, std::int64_t n_she, std::int64_t n_he) {
  const auto mx = static_cast<double>(std::max(n_she, n_he));
  switch (group) {
    case PronounGroup::She:
      return static_cast<double>(n_he) / mx;
    case PronounGroup::He:
      return static_cast<double>(n_she) / mx;
    case PronounGroup::Nb:
      return 0.0;
  }
  return 0.0;
}

std::vector<double> balance_weights(const Corpus& train) {
  std::vector<double> weights(train.size(), 1.0);
  const auto& bios = train.biographies();
  std::unordered_set<std::string> warned;
  for (std::size_t i = 0; i < bios.size(); ++i) {
    const GroupCounts& counts = train.counts(bios[i].occupation);
    if (bios[i].group == PronounGroup::Nb) {
      weights[i] = 0.0;
      continue;
    }
    if (counts.she < 1 || counts.he < 1) {
      if (warned.insert(bios[i].occupation).second) {
        std::cerr << "warning: occupation \"" << bios[i].occupation
                  << "\" lacks one pronoun group; weights left at 1\n";
      }
      continue;
    }
    weights[i] = alpha_weight(bios[i].group, counts.she, counts.he);
  }
  return weights;
}

std::optional<double> NormClassifier::score(std::span<const std::string> tokens,
                                            const EmbeddingTable& table) const {
  const IndicatorSet set(indicators.begin(), indicators.end());
  auto vec = featurize_we(scrub_tokens(tokens, set), table);
  if (!vec) return std::nullopt;
  return predict_proba(model, *vec);
}

std::optional<double> NormClassifier::score(std::span<const std::string> tokens,
                                            const Vocabulary& vocab) const {
  const IndicatorSet set(indicators.begin(), indicators.end());
  SparseVector v = featurize_bow(scrub_tokens(tokens, set), vocab);
  return predict_proba(model, v);
}

namespace {

NormClassifier train_norm_impl(const DatasetSplit& split, Repr repr,
                               const Vocabulary* vocab,
                               const EmbeddingTable* table,
                               const IndicatorSet& exclusions,
                               std::span<const std::string> indicator_list,
                               const TrainConfig& cfg) {
  const Corpus& train = split.train;
  if (train.empty()) throw DataError("empty train split");

  FeatureContext ctx;
  ctx.vocab = vocab;
  ctx.table = table;
  ctx.scrub = &exclusions;
  FeaturizedCorpus fc = featurize_corpus(train, repr, ctx);

  const std::vector<double> alphas = balance_weights(train);
  const auto& bios = train.biographies();

  TrainingSet ts;
  ts.features = std::move(fc.features);
  ts.labels.resize(ts.features.rows());
  ts.weights.resize(ts.features.rows());
  for (std::size_t r = 0; r < ts.features.rows(); ++r) {
    const Biography& bio = bios[fc.bio_index[r]];
    ts.labels[r] = bio.group == PronounGroup::She ? 1 : 0;
    ts.weights[r] = alphas[fc.bio_index[r]];  // 0 for nonbinary bios
  }

  NormClassifier g;
  g.model = train_logistic(ts, cfg);
  g.model.repr = repr;
  ctx.scrub = nullptr;
  g.model.feature_space_id = ctx.space_id(repr);
  g.indicators.assign(indicator_list.begin(), indicator_list.end());
  g.excluded_train_ids = std::move(fc.excluded_ids);
  return g;
}

}  // namespace

NormClassifier train_norm_classifier(const DatasetSplit& split,
                                     const EmbeddingTable& table,
                                     std::span<const std::string> indicators,
                                     const TrainConfig& cfg) {
  const IndicatorSet set = make_indicator_set(indicators);
  return train_norm_impl(split, Repr::We, nullptr, &table, set, indicators, cfg);
}

NormClassifier train_norm_classifier_bow(const DatasetSplit& split,
                                         const Vocabulary& vocab,
                                         std::span<const std::string> indicators,
                                         const TrainConfig& cfg) {
  const IndicatorSet set = make_indicator_set(indicators);
  return train_norm_impl(split, Repr::Bow, &vocab, nullptr, set, indicators, cfg);
}

GenderLexicon GenderLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon file: " + path.string());
  std::vector<std::pair<std::string, double>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;  // header
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw DataError("lexicon parse error at line " + std::to_string(line_no));
    }
    std::string word = line.substr(0, comma);
    double score;
    try {
      score = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw DataError("lexicon parse error at line " + std::to_string(line_no));
    }
    if (score < 1.0 || score > 5.0) {
      throw DataError("lexicon score out of [1,5] at line " +
                      std::to_string(line_no));
    }
    entries.emplace_back(std::move(word), score);
  }
  return from_entries(std::move(entries));
}

GenderLexicon GenderLexicon::from_entries(
    std::vector<std::pair<std::string, double>> e) {
  for (const auto& [word, score] : e) {
    if (score < 1.0 || score > 5.0) {
      throw DataError("lexicon score out of [1,5] for word \"" + word + "\"");
    }
  }
  GenderLexicon lex;
  lex.entries_ = std::move(e);
  return lex;
}

LexiconValidation validate_against_lexicon(const NormClassifier& g,
                                           const GenderLexicon& lexicon,
                                           const EmbeddingTable& table,
                                           const Vocabulary* vocab) {
  std::vector<double> human, oriented;
  for (const auto& [word, score] : lexicon.entries()) {
    double beta;
    if (g.model.repr == Repr::We) {
      if (!table.contains(word)) continue;
      beta = word_weight(word, g.model, nullptr, &table);
    } else {
      if (!vocab || !vocab->index_of(word)) continue;
      beta = word_weight(word, g.model, vocab, nullptr);
    }
    human.push_back(score);
    // G's positive class is she, so negate: masculine becomes positive,
    // matching the 1(feminine)..5(masculine) human scale.
    oriented.push_back(-beta);
  }
  if (human.size() < 10) {
    throw DataError("too few lexicon words shared with the feature space (" +
                    std::to_string(human.size()) + ")");
  }
  CorrelationResult corr = spearman(human, oriented);
  LexiconValidation out;
  out.correlation = corr.defined ? corr.rho : 0.0;
  out.p_value = corr.defined ? corr.p_value : 1.0;
  out.n = human.size();
  out.masculine_positive = true;
  return out;
}

bool ContingencyTable::degenerate() const {
  const std::int64_t r0 = n[0][0] + n[0][1];
  const std::int64_t r1 = n[1][0] + n[1][1];
  const std::int64_t c0 = n[0][0] + n[1][0];
  const std::int64_t c1 = n[0][1] + n[1][1];
  return r0 == 0 || r1 == 0 || c0 == 0 || c1 == 0;
}

double ContingencyTable::chi_squared_yates() const {
  if (degenerate()) return 0.0;
  const double a = static_cast<double>(n[0][0]);
  const double b = static_cast<double>(n[0][1]);
  const double c = static_cast<double>(n[1][0]);
  const double d = static_cast<double>(n[1][1]);
  const double total = a + b + c + d;
  double adj = std::fabs(a * d - b * c) - total / 2.0;
  if (adj < 0) adj = 0;
  return total * adj * adj / ((a + b) * (c + d) * (a + c) * (b + d));
}

double ContingencyTable::p_value() const {
  if (degenerate()) return 1.0;
  return stats::chi2_sf_df1(chi_squared_yates());
}

bool TaskRelevanceMap::is_relevant(const std::string& occupation,
                                   const std::string& word) const {
  auto it = relevant.find(occupation);
  if (it == relevant.end()) return false;
  return std::binary_search(it->second.begin(), it->second.end(), word);
}

namespace {

// Per-word occurrence counts within one pronoun population, split into the
// target occupation versus all other occupations.
struct PopulationCounts {
  std::vector<std::int64_t> in_occ;   // indexed by vocab id
  std::vector<std::int64_t> out_occ;
  std::int64_t total_in = 0;
  std::int64_t total_out = 0;
};

void accumulate(const Corpus& train, const std::string& occupation,
                const Vocabulary& vocab, PronounGroup group,
                PopulationCounts& counts) {
  counts.in_occ.assign(vocab.size(), 0);
  counts.out_occ.assign(vocab.size(), 0);
  for (const Biography& bio : train.biographies()) {
    if (bio.group != group) continue;
    const bool inside = bio.occupation == occupation;
    for (const std::string& t : bio.tokens) {
      if (auto idx = vocab.index_of(t)) {
        if (inside) {
          ++counts.in_occ[*idx];
          ++counts.total_in;
        } else {
          ++counts.out_occ[*idx];
          ++counts.total_out;
        }
      }
    }
  }
}

bool rejects_independence(const PopulationCounts& counts, std::uint32_t word,
                          double level) {
  ContingencyTable table;
  table.n[0][0] = counts.in_occ[word];
  table.n[0][1] = counts.total_in - counts.in_occ[word];
  table.n[1][0] = counts.out_occ[word];
  table.n[1][1] = counts.total_out - counts.out_occ[word];
  if (table.degenerate()) return false;
  return table.p_value() < 1.0 - level;
}

}  // namespace

std::vector<std::string> task_relevant_words(const Corpus& train,
                                             const std::string& occupation,
                                             double level,
                                             const Vocabulary& vocab) {
  if (!train.has_occupation(occupation)) {
    throw DataError("occupation \"" + occupation + "\" not in corpus");
  }
  if (level <= 0 || level >= 1) throw ConfigError("significance level must be in (0,1)");

  PopulationCounts she_counts, he_counts;
  accumulate(train, occupation, vocab, PronounGroup::She, she_counts);
  accumulate(train, occupation, vocab, PronounGroup::He, he_counts);

  std::vector<std::string> relevant;
  for (std::uint32_t w = 0; w < vocab.size(); ++w) {
    if (rejects_independence(she_counts, w, level) ||
        rejects_independence(he_counts, w, level)) {
      relevant.push_back(vocab.word_at(w));
    }
  }
  std::sort(relevant.begin(), relevant.end());
  return relevant;
}

TaskRelevanceMap build_task_relevance_map(const Corpus& train, double level,
                                          const Vocabulary& vocab) {
  TaskRelevanceMap map;
  map.level = level;
  for (const std::string& occ : train.occupations()) {
    map.relevant[occ] = task_relevant_words(train, occ, level, vocab);
  }
  return map;
}

NormClassifier train_irrelevant_norm_classifier(
    const DatasetSplit& split, const std::string& occupation,
    const TaskRelevanceMap& relevance, const EmbeddingTable& table,
    std::span<const std::string> indicators, const TrainConfig& cfg) {
  IndicatorSet exclusions = make_indicator_set(indicators);
  auto it = relevance.relevant.find(occupation);
  if (it == relevance.relevant.end()) {
    throw ConfigError("task relevance not computed for occupation \"" +
                      occupation + "\"");
  }
  exclusions.insert(it->second.begin(), it->second.end());
  NormClassifier g = train_norm_impl(split, Repr::We, nullptr, &table,
                                     exclusions, indicators, cfg);
  g.weight_scheme = "per-occupation-balanced/irrev:" + occupation;
  return g;
}

std::vector<std::string> comparative_gendered_words(
    const LinearModel& yc, const LinearModel& yc_prime, const NormClassifier& g,
    double t, double t_prime, const Vocabulary& vocab,
    const EmbeddingTable* table) {
  std::vector<std::pair<double, std::string>> hits;
  for (const std::string& word : vocab.words()) {
    if (g.model.repr == Repr::We && (!table || !table->contains(word))) continue;
    const double b_yc = std::fabs(word_weight(word, yc, &vocab, table));
    if (!(b_yc > t)) continue;
    const double b_g = std::fabs(word_weight(word, g.model, &vocab, table));
    if (!(b_g > t)) continue;
    const double b_ycp = std::fabs(word_weight(word, yc_prime, &vocab, table));
    if (!(b_yc > t_prime * b_ycp)) continue;
    hits.emplace_back(b_yc, word);
  }
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> words;
  words.reserve(hits.size());
  for (auto& [_, w] : hits) words.push_back(std::move(w));
  return words;
}

}  // namespace snob
