#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "snob/corpus.hpp"
#include "snob/text_features.hpp"

namespace snob {

struct PlantedOccupation {
  std::string name;      // lowercase letters only
  double target_p = 0.5; // she share among she+he
};

// Generator for corpora with a planted norm signal and planted occupation
// imbalance. Every document draws a latent style f in [0, 1] (1 = most
// feminine): feminine/masculine signal tokens are emitted at rates f and 1-f
// times norm_rate. Group style means are chosen so the pooled per-occupation
// style mean is exactly 1/2 regardless of p_c, which removes any marginal
// norm-occupation association. Occupation tokens are emitted at
// occupation_rate scaled by
//   1 + coupling * (1-2p_c) * (style_coupling * s + group_coupling * h),
// where s in [-1, 1] is the document's masculine lean relative to its own
// group's mean and h is +1 for he, -1 for she. At coupling 0 occupation
// tokens are independent of style and group; at coupling > 0 documents
// leaning toward the over-represented group's norms carry a stronger
// occupation signal (the within-group bias) and the over-represented group
// itself carries more signal (the TPR-gap driver).
struct PlantedSpec {
  std::vector<PlantedOccupation> occupations;
  int docs_per_occupation = 2000;
  int nb_docs_per_occupation = 0;

  int feminine_vocab = 8;
  int masculine_vocab = 8;
  int occupation_vocab = 6;   // signal tokens per occupation
  int background_vocab = 200;

  double norm_rate = 0.30;       // token mass split between fem/masc signal
  double occupation_rate = 0.25; // token mass on the occupation signal
  double coupling = 0.0;         // kappa in [0, 1]

  double style_gap = 0.35;       // mean style separation between she and he
  double style_width = 0.30;     // uniform style spread within a group
  double style_coupling = 0.75;  // weight of within-group style in the signal
  double group_coupling = 0.25;  // weight of group membership in the signal
  int occupation_count_noise = 4;  // +- uniform jitter on the signal budget
  // Share of the background budget emitted as random occupation tokens from
  // the whole occupation set, blurring the class boundary.
  double occupation_crosstalk = 0.0;

  int doc_len_min = 20;
  int doc_len_max = 40;
  int embedding_dim = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

Corpus generate_planted_corpus(const PlantedSpec& spec);

// Deterministic random unit vectors for every synthetic token, so the WE
// pipeline runs end to end on generated data.
EmbeddingTable generate_planted_embeddings(const PlantedSpec& spec);

std::vector<std::string> planted_feminine_tokens(const PlantedSpec& spec);
std::vector<std::string> planted_masculine_tokens(const PlantedSpec& spec);
std::vector<std::string> planted_occupation_tokens(const PlantedSpec& spec,
                                                   const std::string& occupation);
std::vector<std::string> planted_background_tokens(const PlantedSpec& spec);

PlantedSpec planted_spec_from_json(const nlohmann::json& j);
nlohmann::json planted_spec_to_json(const PlantedSpec& spec);

// Independent Spearman implementation for cross-checks: naive O(n^2) average
// ranks and the direct Pearson formula, sharing no code with the production
// path.
double oracle_spearman(std::span<const double> xs, std::span<const double> ys);

}  // namespace snob
