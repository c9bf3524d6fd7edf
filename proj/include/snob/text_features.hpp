#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "snob/corpus.hpp"

namespace snob {

struct LinearModel;

// Lowercased maximal runs of ASCII letters; digits and punctuation dropped.
std::vector<std::string> tokenize(std::string_view text);

// Word -> contiguous feature index map built from the training split only;
// indicator words never enter the vocabulary.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> words, int min_df);

  std::optional<std::uint32_t> index_of(const std::string& word) const;
  const std::string& word_at(std::uint32_t index) const { return words_[index]; }
  const std::vector<std::string>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }
  int min_document_frequency() const { return min_df_; }
  // Stable content hash used as a feature-space id.
  std::string content_hash() const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::uint32_t> index_;
  int min_df_ = 1;
};

// (index, count) pairs sorted by strictly increasing index; counts > 0.
struct SparseVector {
  std::vector<std::pair<std::uint32_t, double>> entries;

  double total() const {
    double s = 0;
    for (const auto& [_, v] : entries) s += v;
    return s;
  }
};

using DenseVector = std::vector<double>;

// Word -> dense vector of fixed dimension d, the pretrained-vector text format.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t dim) : dim_(dim) {}

  void insert(const std::string& word, std::span<const double> vec);
  const double* find(const std::string& word) const;
  std::span<const double> vector_of(const std::string& word) const;
  bool contains(const std::string& word) const { return index_.count(word) > 0; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return index_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  std::string content_hash() const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;  // word -> offset/dim
  std::vector<double> data_;
};

Vocabulary build_vocabulary(const Corpus& train, int min_df,
                            const IndicatorSet& indicators);

// Term counts over the vocabulary; out-of-vocabulary words ignored.
SparseVector featurize_bow(std::span<const std::string> tokens,
                           const Vocabulary& vocab);

// Text format: optional "<count> <dim>" first line, then "word v1 ... vd".
EmbeddingTable load_embedding_table(const std::filesystem::path& path,
                                    const Vocabulary* restrict_to = nullptr);
EmbeddingTable load_embedding_table(const std::filesystem::path& path,
                                    const std::unordered_set<std::string>& keep);
void save_embedding_table(const EmbeddingTable& table,
                          const std::filesystem::path& path);

// Multiplicity-weighted mean of in-table token vectors; tokens missing from
// the table are skipped. Empty result (no token in table) -> nullopt, caller
// excludes and logs the document.
std::optional<DenseVector> featurize_we(std::span<const std::string> tokens,
                                        const EmbeddingTable& table);

// Per-word model weight beta_w: the raw coefficient for a BOW model, the
// cosine between the word's embedding and the coefficient vector for WE.
double word_weight(const std::string& word, const LinearModel& model,
                   const Vocabulary* vocab, const EmbeddingTable* table);

}  // namespace snob
