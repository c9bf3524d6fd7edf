#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snob/corpus.hpp"
#include "snob/text_features.hpp"

namespace snob {

enum class Repr { Bow, We };

std::string to_string(Repr r);
Repr repr_from_string(const std::string& s);

// Weight vector plus intercept over a feature space. Used for both the
// occupation classifiers Y_c and the gender-norm classifiers G.
struct LinearModel {
  std::vector<double> weights;
  double intercept = 0.0;
  Repr repr = Repr::Bow;
  std::string feature_space_id;
  std::string config_hash;
};

// Row container for either sparse (BOW) or dense (WE) feature vectors.
class FeatureMatrix {
 public:
  static FeatureMatrix make_sparse(std::size_t dim);
  static FeatureMatrix make_dense(std::size_t dim);

  void add_row(SparseVector row);
  void add_row(std::span<const double> row);

  std::size_t rows() const { return n_rows_; }
  std::size_t dim() const { return dim_; }
  bool is_sparse() const { return sparse_; }

  double dot_row(std::size_t i, std::span<const double> w) const;
  // out += scale * row_i
  void add_scaled_row(std::size_t i, double scale, std::span<double> out) const;
  const SparseVector& sparse_row(std::size_t i) const { return sparse_rows_[i]; }
  std::span<const double> dense_row(std::size_t i) const;

 private:
  bool sparse_ = true;
  std::size_t dim_ = 0;
  std::size_t n_rows_ = 0;
  std::vector<SparseVector> sparse_rows_;
  std::vector<double> dense_data_;  // row-major
};

// Features, binary labels and nonnegative per-sample weights (default 1).
struct TrainingSet {
  FeatureMatrix features;
  std::vector<int> labels;      // 0/1
  std::vector<double> weights;  // empty means all ones

  void validate() const;
  double weight(std::size_t i) const {
    return weights.empty() ? 1.0 : weights[i];
  }
};

struct TrainConfig {
  double reg_strength = 1.0;  // L2 on weights, intercept unregularized
  double tol = 1e-8;          // gradient max-norm stopping rule
  int max_iter = 1000;
};

struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad_weights;
  double grad_intercept = 0.0;
};

// Weighted negative log-likelihood + (reg/2)*||w||^2, with the analytic
// gradient. Loss at zero weights with balanced unit-weight labels is N*ln 2.
LossGradient loss_and_gradient(const LinearModel& model, const TrainingSet& data,
                               double reg_strength);

// Deterministic full-batch training: zero initialization, L-BFGS with
// backtracking line search, stop when the gradient max-norm drops below tol.
LinearModel train_logistic(const TrainingSet& data, const TrainConfig& cfg);

double predict_proba(const LinearModel& model, const SparseVector& features);
double predict_proba(const LinearModel& model, std::span<const double> features);
double predict_proba_row(const LinearModel& model, const FeatureMatrix& m,
                         std::size_t row);
// The raw decision margin w.x + b. Rank statistics are computed on margins:
// the sigmoid is strictly monotone, so ranks are unchanged, but saturated
// probabilities collapse to 1.0 in double precision and would tie.
double predict_margin_row(const LinearModel& model, const FeatureMatrix& m,
                          std::size_t row);

// What a corpus is featurized against. `scrub` is applied before
// featurization when set (the gender-norm path).
struct FeatureContext {
  const Vocabulary* vocab = nullptr;
  const EmbeddingTable* table = nullptr;
  const IndicatorSet* scrub = nullptr;

  std::string space_id(Repr repr) const;
};

struct FeaturizedCorpus {
  FeatureMatrix features;
  std::vector<std::size_t> bio_index;       // row -> index into corpus
  std::vector<std::string> excluded_ids;    // WE documents with no in-table token
};

FeaturizedCorpus featurize_corpus(const Corpus& corpus, Repr repr,
                                  const FeatureContext& ctx);

// One binary model per occupation, all sharing one feature space.
struct OccupationModelSet {
  std::map<std::string, LinearModel> models;
  Repr repr = Repr::Bow;

  const LinearModel& model_for(const std::string& occupation) const;
};

// Per-(biography, occupation) sample weight; nullptr = all ones.
using SampleWeightFn =
    std::function<double(const Biography&, const std::string& occupation)>;

// Trains one one-vs-all model per occupation in the train split (positive =
// that occupation). Nonbinary biographies never enter training.
OccupationModelSet train_one_vs_all(const DatasetSplit& split, Repr repr,
                                    const FeatureContext& ctx,
                                    const TrainConfig& cfg,
                                    const SampleWeightFn& weight_fn = nullptr);

void save_model(const LinearModel& model, const std::filesystem::path& path);
LinearModel load_model(const std::filesystem::path& path);

}  // namespace snob
