#include "snob/synth.hpp"

#include <algorithm>
#include <cmath>

#include "snob/errors.hpp"
#include "snob/rng.hpp"

namespace snob {

namespace {

std::string letter_suffix(int index) {
  std::string s;
  do {
    s.insert(s.begin(), static_cast<char>('a' + index % 26));
    index /= 26;
  } while (index > 0);
  return s;
}

std::vector<std::string> token_set(const std::string& prefix, int count) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(prefix + letter_suffix(i));
  return out;
}

bool letters_only(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return c >= 'a' && c <= 'z';
  });
}

struct StyleParams {
  double she_mu = 0.5;
  double he_mu = 0.5;
  double nb_mu = 0.5;
};

// Group style means with a constant she-he gap for every occupation and
// coupling level. At coupling 0, mu_she = 1/2 + (1-p)*gap and
// mu_he = 1/2 - p*gap make the pooled per-occupation style mean exactly 1/2,
// so the corpus carries no marginal norm-occupation association at all. As
// coupling rises the means interpolate toward the occupation-independent
// 1/2 +- gap/2, which lets the pooled style mean drift with p_c: feminine
// writing really is more common in she-dominated occupations, the
// association a fairness-unaware learner exploits.
StyleParams style_params(const PlantedSpec& spec, double p) {
  const double k = spec.coupling;
  StyleParams sp;
  sp.she_mu = 0.5 + spec.style_gap * ((1.0 - k) * (1.0 - p) + k / 2.0);
  sp.he_mu = 0.5 - spec.style_gap * ((1.0 - k) * p + k / 2.0);
  sp.nb_mu = 0.5;
  return sp;
}

}  // namespace

void PlantedSpec::validate() const {
  if (occupations.empty()) throw ConfigError("planted spec needs occupations");
  for (const auto& occ : occupations) {
    if (!letters_only(occ.name)) {
      throw ConfigError("occupation name must be lowercase letters: \"" +
                        occ.name + "\"");
    }
    if (occ.target_p < 0 || occ.target_p > 1) {
      throw ConfigError("target_p out of [0,1] for \"" + occ.name + "\"");
    }
  }
  if (docs_per_occupation < 1) throw ConfigError("docs_per_occupation must be >= 1");
  if (nb_docs_per_occupation < 0) throw ConfigError("nb docs must be >= 0");
  if (feminine_vocab < 1 || masculine_vocab < 1 || occupation_vocab < 1 ||
      background_vocab < 1) {
    throw ConfigError("vocabulary sizes must be >= 1");
  }
  if (norm_rate < 0 || norm_rate > 1 || occupation_rate < 0 || occupation_rate > 1) {
    throw ConfigError("emission rates must be in [0,1]");
  }
  // The occupation budget can swell to occupation_rate * (1 + coupling).
  if (norm_rate + occupation_rate * (1.0 + coupling) >= 1.0) {
    throw ConfigError("norm_rate + occupation_rate must leave background mass");
  }
  if (coupling < 0 || coupling > 1) throw ConfigError("coupling must be in [0,1]");
  if (doc_len_min < 1 || doc_len_max < doc_len_min) {
    throw ConfigError("bad document length range");
  }
  if (occupation_count_noise < 0) {
    throw ConfigError("occupation_count_noise must be >= 0");
  }
  if (occupation_crosstalk < 0 || occupation_crosstalk > 1) {
    throw ConfigError("occupation_crosstalk must be in [0,1]");
  }
  if (embedding_dim < 2) throw ConfigError("embedding_dim must be >= 2");
  if (style_gap < 0 || style_width <= 0) {
    throw ConfigError("style parameters must be positive");
  }
  if (style_coupling < 0 || group_coupling < 0 ||
      style_coupling + group_coupling > 1.0) {
    throw ConfigError("style_coupling + group_coupling must lie in [0,1]");
  }
  // Style supports must stay inside [0,1]; clipping would bias the means.
  for (const auto& occ : occupations) {
    const StyleParams sp = style_params(*this, occ.target_p);
    for (double mu : {sp.she_mu, sp.he_mu, sp.nb_mu}) {
      if (mu - style_width / 2 < 0.0 || mu + style_width / 2 > 1.0) {
        throw ConfigError("infeasible style distribution for \"" + occ.name +
                          "\": support leaves [0,1]");
      }
    }
  }
}

std::vector<std::string> planted_feminine_tokens(const PlantedSpec& spec) {
  return token_set("fem", spec.feminine_vocab);
}

std::vector<std::string> planted_masculine_tokens(const PlantedSpec& spec) {
  return token_set("masc", spec.masculine_vocab);
}

std::vector<std::string> planted_occupation_tokens(const PlantedSpec& spec,
                                                   const std::string& occupation) {
  return token_set(occupation + "sig", spec.occupation_vocab);
}

std::vector<std::string> planted_background_tokens(const PlantedSpec& spec) {
  return token_set("bg", spec.background_vocab);
}

Corpus generate_planted_corpus(const PlantedSpec& spec) {
  spec.validate();
  const auto fem = planted_feminine_tokens(spec);
  const auto masc = planted_masculine_tokens(spec);
  const auto bg = planted_background_tokens(spec);
  std::vector<std::vector<std::string>> all_occ_tokens;
  for (const auto& occ : spec.occupations) {
    all_occ_tokens.push_back(planted_occupation_tokens(spec, occ.name));
  }

  std::vector<Biography> bios;
  for (const PlantedOccupation& occ : spec.occupations) {
    Prng prng(derive_seed(spec.seed, "synth:occ:" + occ.name));
    const auto occ_tokens = planted_occupation_tokens(spec, occ.name);
    const StyleParams sp = style_params(spec, occ.target_p);

    const int n_she = static_cast<int>(
        std::llround(occ.target_p * spec.docs_per_occupation));
    const int total = spec.docs_per_occupation + spec.nb_docs_per_occupation;
    for (int j = 0; j < total; ++j) {
      Biography bio;
      bio.occupation = occ.name;
      if (j < n_she) {
        bio.group = PronounGroup::She;
      } else if (j < spec.docs_per_occupation) {
        bio.group = PronounGroup::He;
      } else {
        bio.group = PronounGroup::Nb;
      }
      bio.id = occ.name + "-" + std::to_string(j);

      const double mu = bio.group == PronounGroup::She  ? sp.she_mu
                        : bio.group == PronounGroup::He ? sp.he_mu
                                                        : sp.nb_mu;
      const double f = mu + spec.style_width * (prng.uniform() - 0.5);
      // Masculine lean relative to the group's own mean, in [-1, 1].
      const double lean = 2.0 * (mu - f) / spec.style_width;
      const double group_sign = bio.group == PronounGroup::He    ? 1.0
                                : bio.group == PronounGroup::She ? -1.0
                                                                 : 0.0;
      const double g = 1.0 + spec.coupling * (1.0 - 2.0 * occ.target_p) *
                                 (spec.style_coupling * lean +
                                  spec.group_coupling * group_sign);

      const int len = spec.doc_len_min +
                      static_cast<int>(prng.below(static_cast<std::uint64_t>(
                          spec.doc_len_max - spec.doc_len_min + 1)));
      // Category budgets are rounded shares. The occupation budget is based
      // on the mean length, so document-length variation never masquerades as
      // occupation signal; holding it fixed given the style also keeps
      // category competition from leaking occupation information into the
      // norm channel. The only sampling noise inside a document is the
      // feminine/masculine split of the norm budget.
      const double mean_len = 0.5 * (spec.doc_len_min + spec.doc_len_max);
      const auto norm_count =
          static_cast<int>(std::llround(len * spec.norm_rate));
      int occ_count =
          static_cast<int>(std::llround(mean_len * spec.occupation_rate * g));
      if (spec.occupation_count_noise > 0) {
        const int k = spec.occupation_count_noise;
        occ_count += static_cast<int>(
                         prng.below(static_cast<std::uint64_t>(2 * k + 1))) -
                     k;
      }
      occ_count = std::clamp(occ_count, 0, len - norm_count);
      const int bg_count = len - norm_count - occ_count;

      bio.tokens.reserve(static_cast<std::size_t>(len));
      for (int t = 0; t < norm_count; ++t) {
        if (prng.uniform() < f) {
          bio.tokens.push_back(fem[prng.below(fem.size())]);
        } else {
          bio.tokens.push_back(masc[prng.below(masc.size())]);
        }
      }
      for (int t = 0; t < occ_count; ++t) {
        bio.tokens.push_back(occ_tokens[prng.below(occ_tokens.size())]);
      }
      for (int t = 0; t < bg_count; ++t) {
        if (spec.occupation_crosstalk > 0 &&
            prng.uniform() < spec.occupation_crosstalk) {
          const auto& set = all_occ_tokens[prng.below(all_occ_tokens.size())];
          bio.tokens.push_back(set[prng.below(set.size())]);
        } else {
          bio.tokens.push_back(bg[prng.below(bg.size())]);
        }
      }
      bios.push_back(std::move(bio));
    }
  }
  return Corpus::from_biographies(std::move(bios));
}

EmbeddingTable generate_planted_embeddings(const PlantedSpec& spec) {
  spec.validate();
  std::vector<std::string> all;
  auto append = [&all](std::vector<std::string> v) {
    all.insert(all.end(), v.begin(), v.end());
  };
  append(planted_feminine_tokens(spec));
  append(planted_masculine_tokens(spec));
  for (const auto& occ : spec.occupations) {
    append(planted_occupation_tokens(spec, occ.name));
  }
  append(planted_background_tokens(spec));

  EmbeddingTable table(static_cast<std::size_t>(spec.embedding_dim));
  for (const std::string& word : all) {
    Prng prng(derive_seed(spec.seed, "synth:emb:" + word));
    std::vector<double> vec(static_cast<std::size_t>(spec.embedding_dim));
    double norm = 0;
    for (double& v : vec) {
      // Box-Muller from two uniforms; isotropic direction after normalizing.
      const double u1 = std::max(prng.uniform(), 1e-12);
      const double u2 = prng.uniform();
      v = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : vec) v /= norm;
    table.insert(word, vec);
  }
  return table;
}

PlantedSpec planted_spec_from_json(const nlohmann::json& j) {
  PlantedSpec spec;
  for (const auto& o : j.at("occupations")) {
    spec.occupations.push_back(
        {o.at("name").get<std::string>(), o.at("target_p").get<double>()});
  }
  spec.docs_per_occupation = j.value("docs_per_occupation", spec.docs_per_occupation);
  spec.nb_docs_per_occupation =
      j.value("nb_docs_per_occupation", spec.nb_docs_per_occupation);
  spec.feminine_vocab = j.value("feminine_vocab", spec.feminine_vocab);
  spec.masculine_vocab = j.value("masculine_vocab", spec.masculine_vocab);
  spec.occupation_vocab = j.value("occupation_vocab", spec.occupation_vocab);
  spec.background_vocab = j.value("background_vocab", spec.background_vocab);
  spec.norm_rate = j.value("norm_rate", spec.norm_rate);
  spec.occupation_rate = j.value("occupation_rate", spec.occupation_rate);
  spec.coupling = j.value("coupling", spec.coupling);
  spec.style_gap = j.value("style_gap", spec.style_gap);
  spec.style_width = j.value("style_width", spec.style_width);
  spec.style_coupling = j.value("style_coupling", spec.style_coupling);
  spec.group_coupling = j.value("group_coupling", spec.group_coupling);
  spec.occupation_count_noise =
      j.value("occupation_count_noise", spec.occupation_count_noise);
  spec.occupation_crosstalk =
      j.value("occupation_crosstalk", spec.occupation_crosstalk);
  spec.doc_len_min = j.value("doc_len_min", spec.doc_len_min);
  spec.doc_len_max = j.value("doc_len_max", spec.doc_len_max);
  spec.embedding_dim = j.value("embedding_dim", spec.embedding_dim);
  spec.seed = j.value("seed", spec.seed);
  spec.validate();
  return spec;
}

nlohmann::json planted_spec_to_json(const PlantedSpec& spec) {
  nlohmann::json j;
  j["occupations"] = nlohmann::json::array();
  for (const auto& occ : spec.occupations) {
    j["occupations"].push_back({{"name", occ.name}, {"target_p", occ.target_p}});
  }
  j["docs_per_occupation"] = spec.docs_per_occupation;
  j["nb_docs_per_occupation"] = spec.nb_docs_per_occupation;
  j["feminine_vocab"] = spec.feminine_vocab;
  j["masculine_vocab"] = spec.masculine_vocab;
  j["occupation_vocab"] = spec.occupation_vocab;
  j["background_vocab"] = spec.background_vocab;
  j["norm_rate"] = spec.norm_rate;
  j["occupation_rate"] = spec.occupation_rate;
  j["coupling"] = spec.coupling;
  j["style_gap"] = spec.style_gap;
  j["style_width"] = spec.style_width;
  j["style_coupling"] = spec.style_coupling;
  j["group_coupling"] = spec.group_coupling;
  j["occupation_count_noise"] = spec.occupation_count_noise;
  j["occupation_crosstalk"] = spec.occupation_crosstalk;
  j["doc_len_min"] = spec.doc_len_min;
  j["doc_len_max"] = spec.doc_len_max;
  j["embedding_dim"] = spec.embedding_dim;
  j["seed"] = spec.seed;
  return j;
}

double oracle_spearman(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = xs.size();
  if (n != ys.size()) throw DataError("oracle_spearman input length mismatch");
  if (n < 3) throw DataError("oracle_spearman requires n >= 3");

  auto naive_ranks = [n](std::span<const double> v) {
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t less = 0, equal = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (v[j] < v[i]) ++less;
        if (v[j] == v[i]) ++equal;
      }
      ranks[i] = static_cast<double>(less) + 1.0 +
                 (static_cast<double>(equal) - 1.0) / 2.0;
    }
    return ranks;
  };
  const std::vector<double> rx = naive_ranks(xs);
  const std::vector<double> ry = naive_ranks(ys);

  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += rx[i];
    sy += ry[i];
    sxx += rx[i] * rx[i];
    syy += ry[i] * ry[i];
    sxy += rx[i] * ry[i];
  }
  const double dn = static_cast<double>(n);
  const double cov = sxy - sx * sy / dn;
  const double vx = sxx - sx * sx / dn;
  const double vy = syy - sy * sy / dn;
  if (vx <= 0 || vy <= 0) throw DataError("oracle_spearman: constant input");
  return cov / std::sqrt(vx * vy);
}

}  // namespace snob
