#include "snob/text_features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "snob/errors.hpp"
#include "snob/linear_model.hpp"
#include "snob/rng.hpp"

namespace snob {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    if (ch >= 'a' && ch <= 'z') {
      current.push_back(ch);
    } else if (ch >= 'A' && ch <= 'Z') {
      current.push_back(static_cast<char>(ch - 'A' + 'a'));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> words, int min_df)
    : words_(std::move(words)), min_df_(min_df) {
  index_.reserve(words_.size());
  for (std::uint32_t i = 0; i < words_.size(); ++i) index_[words_[i]] = i;
}

std::optional<std::uint32_t> Vocabulary::index_of(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::string& w : words_) {
    h ^= fnv1a64(w);
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Vocabulary build_vocabulary(const Corpus& train, int min_df,
                            const IndicatorSet& indicators) {
  if (train.empty()) throw ConfigError("cannot build vocabulary from empty corpus");
  if (min_df < 1) throw ConfigError("min_df must be >= 1");

  std::map<std::string, int> doc_freq;  // ordered map -> deterministic indices
  for (const Biography& bio : train.biographies()) {
    std::unordered_set<std::string> seen;
    for (const std::string& t : bio.tokens) {
      if (indicators.count(t)) continue;
      if (seen.insert(t).second) ++doc_freq[t];
    }
  }
  std::vector<std::string> words;
  for (const auto& [word, df] : doc_freq) {
    if (df >= min_df) words.push_back(word);
  }
  if (words.empty()) {
    throw ConfigError("vocabulary is empty (min_df=" + std::to_string(min_df) + ")");
  }
  return Vocabulary(std::move(words), min_df);
}

SparseVector featurize_bow(std::span<const std::string> tokens,
                           const Vocabulary& vocab) {
  std::map<std::uint32_t, double> counts;
  for (const std::string& t : tokens) {
    if (auto idx = vocab.index_of(t)) counts[*idx] += 1.0;
  }
  SparseVector v;
  v.entries.assign(counts.begin(), counts.end());
  return v;
}

void EmbeddingTable::insert(const std::string& word, std::span<const double> vec) {
  if (dim_ == 0) dim_ = vec.size();
  if (vec.size() != dim_) {
    throw DataError("embedding dimension mismatch for word \"" + word + "\"");
  }
  for (double v : vec) {
    if (!std::isfinite(v)) {
      throw DataError("non-finite embedding component for word \"" + word + "\"");
    }
  }
  if (index_.count(word)) return;  // first occurrence wins
  index_[word] = data_.size();
  words_.push_back(word);
  data_.insert(data_.end(), vec.begin(), vec.end());
}

const double* EmbeddingTable::find(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return nullptr;
  return data_.data() + it->second;
}

std::span<const double> EmbeddingTable::vector_of(const std::string& word) const {
  const double* p = find(word);
  if (!p) throw DataError("word \"" + word + "\" not in embedding table");
  return {p, dim_};
}

std::string EmbeddingTable::content_hash() const {
  std::uint64_t h = fnv1a64("we") ^ (dim_ * 0x9e3779b97f4a7c15ULL);
  for (const std::string& w : words_) {
    h ^= fnv1a64(w);
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EmbeddingTable load_embedding_table(const std::filesystem::path& path,
                                    const Vocabulary* restrict_to) {
  if (!restrict_to) {
    return load_embedding_table(path, std::unordered_set<std::string>{});
  }
  std::unordered_set<std::string> keep(restrict_to->words().begin(),
                                       restrict_to->words().end());
  return load_embedding_table(path, keep);
}

EmbeddingTable load_embedding_table(const std::filesystem::path& path,
                                    const std::unordered_set<std::string>& keep) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file: " + path.string());

  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  std::size_t declared_dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    std::vector<double> vec;
    double v;
    while (ss >> v) vec.push_back(v);

    // Optional "<count> <dim>" header.
    if (line_no == 1 && vec.size() == 1 &&
        word.find_first_not_of("0123456789") == std::string::npos) {
      declared_dim = static_cast<std::size_t>(vec[0]);
      continue;
    }
    if (vec.empty()) {
      throw DataError("format error at line " + std::to_string(line_no) +
                      " of " + path.string() + ": no vector components");
    }
    if (declared_dim != 0 && vec.size() != declared_dim) {
      throw DataError("format error at line " + std::to_string(line_no) +
                      " of " + path.string() + ": expected dimension " +
                      std::to_string(declared_dim) + ", got " +
                      std::to_string(vec.size()));
    }
    if (!keep.empty() && !keep.count(word)) continue;
    try {
      table.insert(word, vec);
    } catch (const DataError& e) {
      throw DataError("format error at line " + std::to_string(line_no) +
                      " of " + path.string() + ": " + e.what());
    }
  }
  if (table.size() == 0) throw DataError("embedding file has no usable vectors");
  return table;
}

void save_embedding_table(const EmbeddingTable& table,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write embedding file: " + path.string());
  out << table.size() << ' ' << table.dim() << '\n';
  char buf[32];
  for (const std::string& w : table.words()) {
    out << w;
    for (double v : table.vector_of(w)) {
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      out << ' ' << buf;
    }
    out << '\n';
  }
}

std::optional<DenseVector> featurize_we(std::span<const std::string> tokens,
                                        const EmbeddingTable& table) {
  DenseVector sum(table.dim(), 0.0);
  std::size_t n = 0;
  for (const std::string& t : tokens) {
    if (const double* vec = table.find(t)) {
      for (std::size_t k = 0; k < table.dim(); ++k) sum[k] += vec[k];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  for (double& v : sum) v /= static_cast<double>(n);
  return sum;
}

double word_weight(const std::string& word, const LinearModel& model,
                   const Vocabulary* vocab, const EmbeddingTable* table) {
  if (model.repr == Repr::Bow) {
    if (!vocab) throw ConfigError("word_weight(BOW) requires a vocabulary");
    auto idx = vocab->index_of(word);
    if (!idx) throw DataError("word \"" + word + "\" not in vocabulary");
    return model.weights[*idx];
  }
  if (!table) throw ConfigError("word_weight(WE) requires an embedding table");
  const double* e = table->find(word);
  if (!e) throw DataError("word \"" + word + "\" not in embedding table");
  if (model.weights.size() != table->dim()) {
    throw ConfigError("model dimension does not match embedding table");
  }
  double dot = 0, ne = 0, nw = 0;
  for (std::size_t k = 0; k < table->dim(); ++k) {
    dot += e[k] * model.weights[k];
    ne += e[k] * e[k];
    nw += model.weights[k] * model.weights[k];
  }
  if (ne <= 0 || nw <= 0) return 0.0;
  return dot / std::sqrt(ne * nw);
}

}  // namespace snob
