#include "snob/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "snob/errors.hpp"
#include "snob/rng.hpp"
#include "snob/text_features.hpp"

namespace snob {

std::string to_string(PronounGroup g) {
  switch (g) {
    case PronounGroup::She:
      return "she";
    case PronounGroup::He:
      return "he";
    case PronounGroup::Nb:
      return "nb";
  }
  return "?";
}

PronounGroup pronoun_group_from_string(const std::string& s) {
  if (s == "she") return PronounGroup::She;
  if (s == "he") return PronounGroup::He;
  if (s == "nb") return PronounGroup::Nb;
  throw DataError("unknown pronoun_group value: \"" + s + "\"");
}

Corpus Corpus::from_biographies(std::vector<Biography> bios) {
  Corpus c;
  c.bios_ = std::move(bios);
  std::unordered_set<std::string> seen_ids;
  seen_ids.reserve(c.bios_.size());
  for (const Biography& bio : c.bios_) {
    if (bio.tokens.empty()) {
      throw DataError("biography \"" + bio.id + "\" has no tokens");
    }
    if (!seen_ids.insert(bio.id).second) {
      throw DataError("duplicate biography id \"" + bio.id + "\"");
    }
    GroupCounts& counts = c.counts_[bio.occupation];
    switch (bio.group) {
      case PronounGroup::She:
        ++counts.she;
        break;
      case PronounGroup::He:
        ++counts.he;
        break;
      case PronounGroup::Nb:
        ++counts.nb;
        break;
    }
  }
  c.occupations_.reserve(c.counts_.size());
  for (const auto& [occ, _] : c.counts_) c.occupations_.push_back(occ);
  return c;
}

const GroupCounts& Corpus::counts(const std::string& occupation) const {
  auto it = counts_.find(occupation);
  if (it == counts_.end()) {
    throw DataError("unknown occupation \"" + occupation + "\"");
  }
  return it->second;
}

bool Corpus::has_occupation(const std::string& occupation) const {
  return counts_.count(occupation) > 0;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  (void)format;  // Jsonl is the only format
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path.string());

  std::vector<Biography> bios;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("parse error at line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    for (const char* field : {"id", "occupation", "pronoun_group", "text"}) {
      if (!rec.contains(field)) {
        throw DataError("parse error at line " + std::to_string(line_no) +
                        ": missing field \"" + field + "\"");
      }
    }
    Biography bio;
    try {
      bio.id = rec.at("id").get<std::string>();
      bio.occupation = rec.at("occupation").get<std::string>();
      bio.group = pronoun_group_from_string(rec.at("pronoun_group").get<std::string>());
      bio.tokens = tokenize(rec.at("text").get<std::string>());
      if (rec.contains("name")) bio.name = rec.at("name").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("parse error at line " + std::to_string(line_no) + ": " +
                      e.what());
    } catch (const DataError& e) {
      throw DataError("validation error at line " + std::to_string(line_no) +
                      ": " + e.what());
    }
    if (bio.tokens.empty()) {
      throw DataError("validation error at line " + std::to_string(line_no) +
                      ": text has no tokens");
    }
    bios.push_back(std::move(bio));
  }
  return Corpus::from_biographies(std::move(bios));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file: " + path.string());
  for (const Biography& bio : corpus.biographies()) {
    nlohmann::json rec;
    rec["id"] = bio.id;
    rec["occupation"] = bio.occupation;
    rec["pronoun_group"] = to_string(bio.group);
    std::string text;
    for (std::size_t i = 0; i < bio.tokens.size(); ++i) {
      if (i) text += ' ';
      text += bio.tokens[i];
    }
    rec["text"] = text;
    if (!bio.name.empty()) rec["name"] = bio.name;
    out << rec.dump() << '\n';
  }
}

DatasetSplit stratified_split(const Corpus& corpus,
                              const std::array<double, 3>& ratios,
                              std::uint64_t seed) {
  double sum = 0;
  for (double r : ratios) {
    if (r <= 0) throw ConfigError("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (corpus.empty()) throw DataError("cannot split an empty corpus");

  // Group biography indices by (occupation, pronoun group) cell.
  std::map<std::pair<std::string, PronounGroup>, std::vector<std::size_t>> cells;
  const auto& bios = corpus.biographies();
  for (std::size_t i = 0; i < bios.size(); ++i) {
    cells[{bios[i].occupation, bios[i].group}].push_back(i);
  }

  std::array<std::vector<Biography>, 3> parts;
  for (auto& [key, members] : cells) {
    if (members.size() < 3) {
      std::cerr << "warning: cell (" << key.first << ", "
                << to_string(key.second) << ") has " << members.size()
                << " member(s); assigned wholly to train\n";
      for (std::size_t idx : members) parts[0].push_back(bios[idx]);
      continue;
    }
    Prng prng(derive_seed(seed, "split:" + key.first + "|" + to_string(key.second)));
    prng.shuffle(members);

    // Largest-remainder apportionment keeps every part within one biography
    // of its exact share.
    const auto n = static_cast<double>(members.size());
    std::array<std::size_t, 3> take{};
    std::array<std::pair<double, int>, 3> frac;
    std::size_t assigned = 0;
    for (int p = 0; p < 3; ++p) {
      const double exact = ratios[static_cast<std::size_t>(p)] * n;
      take[static_cast<std::size_t>(p)] = static_cast<std::size_t>(exact);
      frac[static_cast<std::size_t>(p)] = {exact - std::floor(exact), p};
      assigned += take[static_cast<std::size_t>(p)];
    }
    std::stable_sort(frac.begin(), frac.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < members.size(); ++k, ++assigned) {
      ++take[static_cast<std::size_t>(frac[k % 3].second)];
    }

    std::size_t offset = 0;
    for (int p = 0; p < 3; ++p) {
      for (std::size_t k = 0; k < take[static_cast<std::size_t>(p)]; ++k) {
        parts[static_cast<std::size_t>(p)].push_back(bios[members[offset + k]]);
      }
      offset += take[static_cast<std::size_t>(p)];
    }
  }

  DatasetSplit split;
  split.train = Corpus::from_biographies(std::move(parts[0]));
  split.validation = Corpus::from_biographies(std::move(parts[1]));
  split.test = Corpus::from_biographies(std::move(parts[2]));
  split.ratios = ratios;
  split.seed = seed;
  return split;
}

const std::vector<std::string>& default_gender_indicators() {
  static const std::vector<std::string> words = {
      "she", "he",  "her", "his", "him",  "hers", "herself",
      "himself", "mr", "mrs", "ms", "mx", "miss"};
  return words;
}

IndicatorSet make_indicator_set(std::span<const std::string> words) {
  return IndicatorSet(words.begin(), words.end());
}

std::vector<std::string> scrub_tokens(std::span<const std::string> tokens,
                                      const IndicatorSet& indicators) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) {
    if (!indicators.count(t)) out.push_back(t);
  }
  return out;
}

std::vector<OccupationStats> group_stats(const Corpus& corpus) {
  if (corpus.empty()) throw DataError("group_stats on empty corpus");
  std::vector<OccupationStats> stats;
  stats.reserve(corpus.occupations().size());
  for (const std::string& occ : corpus.occupations()) {
    const GroupCounts& counts = corpus.counts(occ);
    OccupationStats s;
    s.occupation = occ;
    s.n_she = counts.she;
    s.n_he = counts.he;
    s.n_nb = counts.nb;
    if (counts.she + counts.he > 0) {
      s.p = static_cast<double>(counts.she) /
            static_cast<double>(counts.she + counts.he);
    } else {
      std::cerr << "warning: occupation \"" << occ
                << "\" has no she/he biographies; p_c undefined\n";
    }
    stats.push_back(std::move(s));
  }
  return stats;
}

}  // namespace snob
