#include "snob/linear_model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "snob/errors.hpp"
#include "snob/stats.hpp"

namespace snob {

std::string to_string(Repr r) { return r == Repr::Bow ? "bow" : "we"; }

Repr repr_from_string(const std::string& s) {
  if (s == "bow") return Repr::Bow;
  if (s == "we") return Repr::We;
  throw ConfigError("unknown representation: \"" + s + "\"");
}

FeatureMatrix FeatureMatrix::make_sparse(std::size_t dim) {
  FeatureMatrix m;
  m.sparse_ = true;
  m.dim_ = dim;
  return m;
}

FeatureMatrix FeatureMatrix::make_dense(std::size_t dim) {
  FeatureMatrix m;
  m.sparse_ = false;
  m.dim_ = dim;
  return m;
}

void FeatureMatrix::add_row(SparseVector row) {
  if (!sparse_) throw ConfigError("sparse row added to dense matrix");
  for (const auto& [idx, v] : row.entries) {
    if (idx >= dim_) throw DataError("feature index out of range");
    if (v <= 0) throw DataError("sparse counts must be positive");
  }
  sparse_rows_.push_back(std::move(row));
  ++n_rows_;
}

void FeatureMatrix::add_row(std::span<const double> row) {
  if (sparse_) throw ConfigError("dense row added to sparse matrix");
  if (row.size() != dim_) throw DataError("dense row dimension mismatch");
  dense_data_.insert(dense_data_.end(), row.begin(), row.end());
  ++n_rows_;
}

double FeatureMatrix::dot_row(std::size_t i, std::span<const double> w) const {
  if (w.size() != dim_) throw DataError("weight dimension mismatch");
  double z = 0;
  if (sparse_) {
    for (const auto& [idx, v] : sparse_rows_[i].entries) z += w[idx] * v;
  } else {
    const double* row = dense_data_.data() + i * dim_;
    for (std::size_t k = 0; k < dim_; ++k) z += w[k] * row[k];
  }
  return z;
}

void FeatureMatrix::add_scaled_row(std::size_t i, double scale,
                                   std::span<double> out) const {
  if (sparse_) {
    for (const auto& [idx, v] : sparse_rows_[i].entries) out[idx] += scale * v;
  } else {
    const double* row = dense_data_.data() + i * dim_;
    for (std::size_t k = 0; k < dim_; ++k) out[k] += scale * row[k];
  }
}

std::span<const double> FeatureMatrix::dense_row(std::size_t i) const {
  return {dense_data_.data() + i * dim_, dim_};
}

void TrainingSet::validate() const {
  const std::size_t n = features.rows();
  if (labels.size() != n) throw DataError("labels/features length mismatch");
  if (!weights.empty() && weights.size() != n) {
    throw DataError("weights/features length mismatch");
  }
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("labels must be 0/1");
    const double w = weight(i);
    if (w < 0) throw DataError("sample weights must be nonnegative");
    if (w > 0) (labels[i] ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    throw DataError("training set needs positively-weighted samples of both labels");
  }
}

LossGradient loss_and_gradient(const LinearModel& model, const TrainingSet& data,
                               double reg_strength) {
  if (reg_strength < 0) throw ConfigError("reg_strength must be >= 0");
  const std::size_t n = data.features.rows();
  const std::size_t d = data.features.dim();
  if (model.weights.size() != d) throw DataError("model dimension mismatch");

  LossGradient out;
  out.grad_weights.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = data.weight(i);
    if (w == 0) continue;
    const double z = data.features.dot_row(i, model.weights) + model.intercept;
    const double y = data.labels[i];
    // nll = log(1 + e^z) - y z, computed stably
    out.loss += w * (stats::log1pexp(z) - y * z);
    const double resid = w * (stats::sigmoid(z) - y);
    data.features.add_scaled_row(i, resid, out.grad_weights);
    out.grad_intercept += resid;
  }
  double sq = 0;
  for (std::size_t k = 0; k < d; ++k) {
    sq += model.weights[k] * model.weights[k];
    out.grad_weights[k] += reg_strength * model.weights[k];
  }
  out.loss += 0.5 * reg_strength * sq;
  return out;
}

namespace {

double max_abs(std::span<const double> v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

LinearModel train_logistic(const TrainingSet& data, const TrainConfig& cfg) {
  data.validate();
  const std::size_t d = data.features.dim();
  const std::size_t dim = d + 1;  // intercept appended last

  // The objective is a weighted sum, so the stopping rule is applied to the
  // per-unit-weight gradient; otherwise a fixed tol would tighten with corpus
  // size past what double precision can resolve.
  double total_weight = 0;
  for (std::size_t i = 0; i < data.features.rows(); ++i) {
    total_weight += data.weight(i);
  }
  const double grad_scale = std::max(total_weight, 1.0);

  // Parameter vector x = (weights..., intercept).
  std::vector<double> x(dim, 0.0);
  auto eval = [&](const std::vector<double>& params, std::vector<double>& grad) {
    LinearModel m;
    m.weights.assign(params.begin(), params.begin() + static_cast<long>(d));
    m.intercept = params[d];
    LossGradient lg = loss_and_gradient(m, data, cfg.reg_strength);
    grad.assign(lg.grad_weights.begin(), lg.grad_weights.end());
    grad.push_back(lg.grad_intercept);
    return lg.loss;
  };

  std::vector<double> grad(dim);
  double loss = eval(x, grad);

  // L-BFGS two-loop recursion with Armijo backtracking.
  constexpr std::size_t memory = 10;
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;

  int iter = 0;
  int stalled = 0;
  for (; iter < cfg.max_iter; ++iter) {
    if (!std::isfinite(loss)) {
      throw NumericalError("non-finite loss at iteration " + std::to_string(iter));
    }
    if (max_abs(grad) < cfg.tol * grad_scale) break;

    // Search direction.
    std::vector<double> q = grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * dot(s_hist[k], q);
      for (std::size_t j = 0; j < dim; ++j) q[j] -= alpha[k] * y_hist[k][j];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) {
      const auto& s = s_hist.back();
      const auto& y = y_hist.back();
      gamma = dot(s, y) / std::max(dot(y, y), 1e-300);
    }
    for (double& v : q) v *= gamma;
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], q);
      for (std::size_t j = 0; j < dim; ++j) q[j] += (alpha[k] - beta) * s_hist[k][j];
    }
    for (double& v : q) v = -v;  // descent direction

    double dir_deriv = dot(grad, q);
    if (dir_deriv >= 0) {  // fall back to steepest descent
      for (std::size_t j = 0; j < dim; ++j) q[j] = -grad[j];
      dir_deriv = -dot(grad, grad);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = 1.0;
    std::vector<double> x_new(dim), grad_new(dim);
    double loss_new = 0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t j = 0; j < dim; ++j) x_new[j] = x[j] + step * q[j];
      loss_new = eval(x_new, grad_new);
      if (std::isfinite(loss_new) && loss_new <= loss + 1e-4 * step * dir_deriv) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further progress at machine precision
    if (std::fabs(loss - loss_new) <= 4e-16 * std::max(1.0, std::fabs(loss))) {
      if (++stalled >= 3) {
        x.swap(x_new);
        grad.swap(grad_new);
        loss = loss_new;
        break;
      }
    } else {
      stalled = 0;
    }

    std::vector<double> s(dim), y(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      s[j] = x_new[j] - x[j];
      y[j] = grad_new[j] - grad[j];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12) {
      if (s_hist.size() == memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    x.swap(x_new);
    grad.swap(grad_new);
    loss = loss_new;
  }
  if (iter == cfg.max_iter) {
    std::cerr << "warning: logistic training hit max_iter=" << cfg.max_iter
              << " (scaled grad max-norm " << max_abs(grad) / grad_scale << ")\n";
  }

  LinearModel model;
  model.weights.assign(x.begin(), x.begin() + static_cast<long>(d));
  model.intercept = x[d];
  return model;
}

double predict_proba(const LinearModel& model, const SparseVector& features) {
  double z = model.intercept;
  for (const auto& [idx, v] : features.entries) {
    if (idx >= model.weights.size()) throw DataError("feature index out of range");
    z += model.weights[idx] * v;
  }
  return stats::sigmoid(z);
}

double predict_proba(const LinearModel& model, std::span<const double> features) {
  if (features.size() != model.weights.size()) {
    throw DataError("feature dimension mismatch");
  }
  double z = model.intercept;
  for (std::size_t k = 0; k < features.size(); ++k) {
    z += model.weights[k] * features[k];
  }
  return stats::sigmoid(z);
}

double predict_proba_row(const LinearModel& model, const FeatureMatrix& m,
                         std::size_t row) {
  return stats::sigmoid(m.dot_row(row, model.weights) + model.intercept);
}

double predict_margin_row(const LinearModel& model, const FeatureMatrix& m,
                          std::size_t row) {
  return m.dot_row(row, model.weights) + model.intercept;
}

std::string FeatureContext::space_id(Repr repr) const {
  if (repr == Repr::Bow) {
    if (!vocab) throw ConfigError("BOW featurization requires a vocabulary");
    return "bow:" + vocab->content_hash();
  }
  if (!table) throw ConfigError("WE featurization requires an embedding table");
  return "we:" + std::to_string(table->dim()) + ":" + table->content_hash();
}

FeaturizedCorpus featurize_corpus(const Corpus& corpus, Repr repr,
                                  const FeatureContext& ctx) {
  FeaturizedCorpus out;
  const auto& bios = corpus.biographies();
  if (repr == Repr::Bow) {
    if (!ctx.vocab) throw ConfigError("BOW featurization requires a vocabulary");
    out.features = FeatureMatrix::make_sparse(ctx.vocab->size());
    for (std::size_t i = 0; i < bios.size(); ++i) {
      if (ctx.scrub) {
        out.features.add_row(featurize_bow(scrub_tokens(bios[i].tokens, *ctx.scrub),
                                           *ctx.vocab));
      } else {
        out.features.add_row(featurize_bow(bios[i].tokens, *ctx.vocab));
      }
      out.bio_index.push_back(i);
    }
    return out;
  }
  if (!ctx.table) throw ConfigError("WE featurization requires an embedding table");
  out.features = FeatureMatrix::make_dense(ctx.table->dim());
  for (std::size_t i = 0; i < bios.size(); ++i) {
    std::optional<DenseVector> vec;
    if (ctx.scrub) {
      vec = featurize_we(scrub_tokens(bios[i].tokens, *ctx.scrub), *ctx.table);
    } else {
      vec = featurize_we(bios[i].tokens, *ctx.table);
    }
    if (!vec) {
      out.excluded_ids.push_back(bios[i].id);
      continue;
    }
    out.features.add_row(*vec);
    out.bio_index.push_back(i);
  }
  if (!out.excluded_ids.empty()) {
    std::cerr << "warning: " << out.excluded_ids.size()
              << " document(s) had no in-table tokens and were excluded (first: "
              << out.excluded_ids.front() << ")\n";
  }
  return out;
}

const LinearModel& OccupationModelSet::model_for(const std::string& occupation) const {
  auto it = models.find(occupation);
  if (it == models.end()) {
    throw DataError("no model for occupation \"" + occupation + "\"");
  }
  return it->second;
}

OccupationModelSet train_one_vs_all(const DatasetSplit& split, Repr repr,
                                    const FeatureContext& ctx,
                                    const TrainConfig& cfg,
                                    const SampleWeightFn& weight_fn) {
  const Corpus& train = split.train;
  if (train.empty()) throw DataError("empty train split");
  FeaturizedCorpus fc = featurize_corpus(train, repr, ctx);
  const auto& bios = train.biographies();

  OccupationModelSet set;
  set.repr = repr;
  const std::string space_id = ctx.space_id(repr);
  for (const std::string& occ : train.occupations()) {
    TrainingSet ts;
    ts.features = FeatureMatrix::make_sparse(0);  // replaced below
    // Reuse the shared featurization; rows are selected by weight/label only,
    // so build label and weight vectors aligned with fc rows.
    ts.features = std::move(fc.features);
    ts.labels.resize(ts.features.rows());
    ts.weights.resize(ts.features.rows());
    for (std::size_t r = 0; r < ts.features.rows(); ++r) {
      const Biography& bio = bios[fc.bio_index[r]];
      const bool positive = bio.occupation == occ;
      ts.labels[r] = positive ? 1 : 0;
      double w = bio.group == PronounGroup::Nb ? 0.0 : 1.0;
      if (w > 0 && weight_fn) w = weight_fn(bio, occ);
      ts.weights[r] = w;
    }
    LinearModel model = train_logistic(ts, cfg);
    model.repr = repr;
    model.feature_space_id = space_id;
    set.models[occ] = std::move(model);
    fc.features = std::move(ts.features);  // hand the matrix back
  }
  return set;
}

void save_model(const LinearModel& model, const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["repr"] = to_string(model.repr);
  j["feature_space_id"] = model.feature_space_id;
  j["config_hash"] = model.config_hash;
  j["intercept"] = model.intercept;
  j["weights"] = model.weights;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path.string());
  out << j.dump(2) << '\n';
}

LinearModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    LinearModel model;
    model.repr = repr_from_string(j.at("repr").get<std::string>());
    model.feature_space_id = j.at("feature_space_id").get<std::string>();
    model.config_hash = j.value("config_hash", std::string{});
    model.intercept = j.at("intercept").get<double>();
    model.weights = j.at("weights").get<std::vector<double>>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed model file " + path.string() + ": " + e.what());
  }
}

}  // namespace snob
