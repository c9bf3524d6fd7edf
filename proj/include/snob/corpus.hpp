#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace snob {

enum class PronounGroup { She, He, Nb };

std::string to_string(PronounGroup g);
PronounGroup pronoun_group_from_string(const std::string& s);

// One labeled document. Group membership is fixed at ingestion.
struct Biography {
  std::string id;
  std::string occupation;
  PronounGroup group = PronounGroup::She;
  std::vector<std::string> tokens;
  std::string name;  // optional, empty when absent
};

struct GroupCounts {
  std::int64_t she = 0;
  std::int64_t he = 0;
  std::int64_t nb = 0;
};

// Immutable collection of biographies with a declared occupation set and
// cached per-occupation group counts.
class Corpus {
 public:
  Corpus() = default;
  static Corpus from_biographies(std::vector<Biography> bios);

  const std::vector<Biography>& biographies() const { return bios_; }
  // Lexicographically ordered occupation set C.
  const std::vector<std::string>& occupations() const { return occupations_; }
  const GroupCounts& counts(const std::string& occupation) const;
  bool has_occupation(const std::string& occupation) const;
  std::size_t size() const { return bios_.size(); }
  bool empty() const { return bios_.empty(); }

 private:
  std::vector<Biography> bios_;
  std::vector<std::string> occupations_;
  std::map<std::string, GroupCounts> counts_;
};

struct DatasetSplit {
  Corpus train;
  Corpus validation;
  Corpus test;
  std::array<double, 3> ratios{0.65, 0.10, 0.25};
  std::uint64_t seed = 0;
};

enum class CorpusFormat { Jsonl };

// Reads one JSON object per line: {"id", "occupation", "pronoun_group",
// "text", "name"?}. Text is tokenized on load; duplicate ids are rejected.
Corpus load_corpus(const std::filesystem::path& path,
                   CorpusFormat format = CorpusFormat::Jsonl);

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// Deterministic per-(occupation, group)-cell split. Each part's share of a
// cell stays within one biography of its ratio; cells with fewer than three
// members go wholly to train with a warning.
DatasetSplit stratified_split(const Corpus& corpus,
                              const std::array<double, 3>& ratios,
                              std::uint64_t seed);

using IndicatorSet = std::unordered_set<std::string>;

// she, he, her, his, him, hers, herself, himself, mr, mrs, ms, mx, miss.
// The exact list is configurable and logged into every report.
const std::vector<std::string>& default_gender_indicators();
IndicatorSet make_indicator_set(std::span<const std::string> words);

std::vector<std::string> scrub_tokens(std::span<const std::string> tokens,
                                      const IndicatorSet& indicators);

struct OccupationStats {
  std::string occupation;
  std::int64_t n_she = 0;
  std::int64_t n_he = 0;
  std::int64_t n_nb = 0;
  // |S_c| / (|S_c| + |H_c|); empty when the occupation has no she/he bios.
  std::optional<double> p;
};

std::vector<OccupationStats> group_stats(const Corpus& corpus);

}  // namespace snob
