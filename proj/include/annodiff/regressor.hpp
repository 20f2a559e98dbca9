#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "annodiff/common.hpp"
#include "annodiff/corpus.hpp"
#include "annodiff/crf.hpp"
#include "annodiff/embedding.hpp"
#include "annodiff/rng.hpp"
#include "annodiff/scoring.hpp"
#include "annodiff/stats.hpp"

namespace annodiff {

struct RegressionExample {
    std::string sent_id;
    std::string doc_id;
    std::vector<std::string> tokens;
    double target = 0.0;
};

/// Joins corpus sentences with difficulty records by sent_id, in record order.
inline std::vector<RegressionExample> make_regression_examples(
    const Corpus& corpus, const std::vector<DifficultyRecord>& records) {
    std::vector<RegressionExample> examples;
    examples.reserve(records.size());
    for (const auto& r : records) {
        const Sentence& s = corpus.sentence(r.sent_id);
        RegressionExample ex;
        ex.sent_id = r.sent_id;
        ex.doc_id = s.doc_id;
        ex.tokens.reserve(s.tokens.size());
        for (const auto& t : s.tokens) ex.tokens.push_back(t.text);
        ex.target = r.score;
        examples.push_back(std::move(ex));
    }
    return examples;
}

// ---------------------------------------------------------------------------
// Hashed word n-gram features
// ---------------------------------------------------------------------------

struct NgramConfig {
    std::size_t n_max = 3;
    std::size_t hash_dim = 1u << 20;
};

using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

/// Lowercased word n-grams up to n_max, hashed into a power-of-two bucket
/// space. Values are raw occurrence counts.
inline SparseVector ngram_features(const std::vector<std::string>& tokens,
                                   const NgramConfig& config) {
    if (config.n_max == 0) throw ValidationError("n_max must be positive");
    if (config.hash_dim == 0 || (config.hash_dim & (config.hash_dim - 1)) != 0)
        throw ValidationError("hash_dim must be a power of two");
    std::unordered_map<std::uint32_t, double> counts;
    std::string gram;
    for (std::size_t n = 1; n <= config.n_max; ++n) {
        if (tokens.size() < n) break;
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            gram.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j > 0) gram += '\x1f';
                gram += detail::lower_ascii(tokens[i + j]);
            }
            const auto idx =
                static_cast<std::uint32_t>(fnv1a(gram) & (config.hash_dim - 1));
            counts[idx] += 1.0;
        }
    }
    SparseVector out(counts.begin(), counts.end());
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Linear support vector regression (epsilon-insensitive loss)
// ---------------------------------------------------------------------------

struct SvrConfig {
    double epsilon = 0.05;
    double lambda = 1e-4;
    double learning_rate = 0.1;
    std::size_t epochs = 200;
    NgramConfig ngrams;
};

struct SvrModel {
    LabelType label_type = LabelType::P;
    SvrConfig config;
    std::unordered_map<std::uint32_t, double> weights;
    double bias = 0.0;
};

inline double svr_raw_prediction(const SvrModel& model, const SparseVector& features) {
    double s = model.bias;
    for (const auto& [idx, v] : features) {
        auto it = model.weights.find(idx);
        if (it != model.weights.end()) s += it->second * v;
    }
    return s;
}

struct SvrGradient {
    std::unordered_map<std::uint32_t, double> weights;
    double bias = 0.0;
};

/// Mean epsilon-insensitive loss plus lambda * ||w||^2 (bias unregularized),
/// with its subgradient. At the hinge the zero subgradient is chosen.
inline double svr_loss_and_gradient(const SvrModel& model,
                                    const std::vector<SparseVector>& features,
                                    const std::vector<double>& targets, SvrGradient& grad) {
    if (features.size() != targets.size())
        throw ValidationError("svr_loss_and_gradient: feature/target size mismatch");
    if (features.empty()) throw ValidationError("svr_loss_and_gradient: empty batch");
    grad.weights.clear();
    grad.bias = 0.0;
    const double inv_n = 1.0 / static_cast<double>(features.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const double r = svr_raw_prediction(model, features[i]) - targets[i];
        const double excess = std::abs(r) - model.config.epsilon;
        if (excess <= 0.0) continue;
        loss += excess * inv_n;
        const double g = (r > 0.0 ? 1.0 : -1.0) * inv_n;
        for (const auto& [idx, v] : features[i]) grad.weights[idx] += g * v;
        grad.bias += g;
    }
    for (const auto& [idx, w] : model.weights) {
        loss += model.config.lambda * w * w;
        grad.weights[idx] += 2.0 * model.config.lambda * w;
    }
    return loss;
}

/// Full-batch per-coordinate adaptive subgradient descent. No randomness is
/// involved, so retraining on the same data is byte-identical.
inline SvrModel train_svr(const std::vector<RegressionExample>& examples, LabelType label,
                          const SvrConfig& config) {
    if (examples.empty()) throw ValidationError("train_svr: empty training set");
    SvrModel model;
    model.label_type = label;
    model.config = config;

    std::vector<SparseVector> features;
    std::vector<double> targets;
    features.reserve(examples.size());
    targets.reserve(examples.size());
    for (const auto& ex : examples) {
        features.push_back(ngram_features(ex.tokens, config.ngrams));
        targets.push_back(ex.target);
        for (const auto& [idx, v] : features.back()) model.weights.try_emplace(idx, 0.0);
    }

    std::unordered_map<std::uint32_t, double> accum;
    accum.reserve(model.weights.size());
    double accum_bias = 0.0;
    const double eps = 1e-8;
    SvrGradient grad;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        svr_loss_and_gradient(model, features, targets, grad);
        for (const auto& [idx, g] : grad.weights) {
            if (g == 0.0) continue;
            auto& acc = accum[idx];
            acc += g * g;
            model.weights[idx] -= config.learning_rate * g / (std::sqrt(acc) + eps);
        }
        if (grad.bias != 0.0) {
            accum_bias += grad.bias * grad.bias;
            model.bias -= config.learning_rate * grad.bias / (std::sqrt(accum_bias) + eps);
        }
    }
    return model;
}

inline double predict(const SvrModel& model, const std::vector<std::string>& tokens) {
    const double raw = svr_raw_prediction(model, ngram_features(tokens, model.config.ngrams));
    return std::clamp(raw, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Dense regressor over averaged word embeddings
// ---------------------------------------------------------------------------

struct DenseConfig {
    std::size_t hidden = 16;
    double lambda = 1e-4;
    double learning_rate = 0.1;
    std::size_t epochs = 300;
    std::uint64_t seed = 1;
};

struct DenseModel {
    LabelType label_type = LabelType::P;
    DenseConfig config;
    EmbeddingTable table;
    std::size_t input_dim = 0;
    std::vector<double> w1;  // hidden x input_dim, row-major
    std::vector<double> b1;  // hidden
    std::vector<double> w2;  // hidden
    double b2 = 0.0;
};

inline double dense_raw_prediction(const DenseModel& model, const std::vector<double>& x) {
    double out = model.b2;
    for (std::size_t h = 0; h < model.config.hidden; ++h) {
        double z = model.b1[h];
        const double* row = model.w1.data() + h * model.input_dim;
        for (std::size_t i = 0; i < model.input_dim; ++i) z += row[i] * x[i];
        out += model.w2[h] * std::tanh(z);
    }
    return out;
}

struct DenseGradient {
    std::vector<double> w1;
    std::vector<double> b1;
    std::vector<double> w2;
    double b2 = 0.0;
};

/// Mean squared error plus lambda * (||W1||^2 + ||w2||^2), biases free.
inline double dense_loss_and_gradient(const DenseModel& model,
                                      const std::vector<std::vector<double>>& inputs,
                                      const std::vector<double>& targets, DenseGradient& grad) {
    if (inputs.size() != targets.size())
        throw ValidationError("dense_loss_and_gradient: input/target size mismatch");
    if (inputs.empty()) throw ValidationError("dense_loss_and_gradient: empty batch");
    const std::size_t hidden = model.config.hidden;
    const std::size_t dim = model.input_dim;
    grad.w1.assign(hidden * dim, 0.0);
    grad.b1.assign(hidden, 0.0);
    grad.w2.assign(hidden, 0.0);
    grad.b2 = 0.0;

    const double inv_n = 1.0 / static_cast<double>(inputs.size());
    double loss = 0.0;
    std::vector<double> act(hidden);
    for (std::size_t e = 0; e < inputs.size(); ++e) {
        const auto& x = inputs[e];
        double out = model.b2;
        for (std::size_t h = 0; h < hidden; ++h) {
            double z = model.b1[h];
            const double* row = model.w1.data() + h * dim;
            for (std::size_t i = 0; i < dim; ++i) z += row[i] * x[i];
            act[h] = std::tanh(z);
            out += model.w2[h] * act[h];
        }
        const double err = out - targets[e];
        loss += err * err * inv_n;
        const double dout = 2.0 * err * inv_n;
        grad.b2 += dout;
        for (std::size_t h = 0; h < hidden; ++h) {
            grad.w2[h] += dout * act[h];
            const double dz = dout * model.w2[h] * (1.0 - act[h] * act[h]);
            grad.b1[h] += dz;
            double* grow = grad.w1.data() + h * dim;
            for (std::size_t i = 0; i < dim; ++i) grow[i] += dz * x[i];
        }
    }
    const double lambda = model.config.lambda;
    for (std::size_t i = 0; i < model.w1.size(); ++i) {
        loss += lambda * model.w1[i] * model.w1[i];
        grad.w1[i] += 2.0 * lambda * model.w1[i];
    }
    for (std::size_t h = 0; h < hidden; ++h) {
        loss += lambda * model.w2[h] * model.w2[h];
        grad.w2[h] += 2.0 * lambda * model.w2[h];
    }
    if (!std::isfinite(loss)) throw std::runtime_error("regressor loss diverged (non-finite)");
    return loss;
}

/// Full-batch AdaGrad on the dense objective with seeded uniform init.
inline DenseModel train_dense(const std::vector<RegressionExample>& examples, LabelType label,
                              const EmbeddingTable& table, const DenseConfig& config) {
    if (examples.empty()) throw ValidationError("train_dense: empty training set");
    if (config.hidden == 0) throw ValidationError("train_dense: hidden size must be positive");
    DenseModel model;
    model.label_type = label;
    model.config = config;
    model.table = table;
    model.input_dim = table.dim();

    Rng rng(config.seed);
    const double r1 = 1.0 / std::sqrt(static_cast<double>(model.input_dim));
    const double r2 = 1.0 / std::sqrt(static_cast<double>(config.hidden));
    model.w1.resize(config.hidden * model.input_dim);
    for (auto& w : model.w1) w = rng.real(-r1, r1);
    model.b1.assign(config.hidden, 0.0);
    model.w2.resize(config.hidden);
    for (auto& w : model.w2) w = rng.real(-r2, r2);
    model.b2 = 0.0;

    std::vector<std::vector<double>> inputs;
    std::vector<double> targets;
    inputs.reserve(examples.size());
    targets.reserve(examples.size());
    for (const auto& ex : examples) {
        inputs.push_back(table.mean_vector(ex.tokens));
        targets.push_back(ex.target);
    }

    DenseGradient grad;
    std::vector<double> acc_w1(model.w1.size(), 0.0), acc_b1(config.hidden, 0.0),
        acc_w2(config.hidden, 0.0);
    double acc_b2 = 0.0;
    const double eps = 1e-8;
    auto step = [&](double& w, double& acc, double g) {
        if (g == 0.0) return;
        acc += g * g;
        w -= config.learning_rate * g / (std::sqrt(acc) + eps);
    };
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        dense_loss_and_gradient(model, inputs, targets, grad);
        for (std::size_t i = 0; i < model.w1.size(); ++i) step(model.w1[i], acc_w1[i], grad.w1[i]);
        for (std::size_t h = 0; h < config.hidden; ++h) {
            step(model.b1[h], acc_b1[h], grad.b1[h]);
            step(model.w2[h], acc_w2[h], grad.w2[h]);
        }
        step(model.b2, acc_b2, grad.b2);
    }
    return model;
}

inline double predict(const DenseModel& model, const std::vector<std::string>& tokens) {
    return std::clamp(dense_raw_prediction(model, model.table.mean_vector(tokens)), 0.0, 1.0);
}

/// Predicted difficulty for every sentence, in corpus order.
template <typename Model>
std::vector<DifficultyRecord> predict_difficulty(const Model& model, const Corpus& corpus) {
    std::vector<DifficultyRecord> records;
    corpus.for_each_sentence([&](const Sentence& s) {
        std::vector<std::string> tokens;
        tokens.reserve(s.tokens.size());
        for (const auto& t : s.tokens) tokens.push_back(t.text);
        records.push_back(DifficultyRecord{s.sent_id, model.label_type, predict(model, tokens),
                                           DifficultySource::predicted});
    });
    return records;
}

// ---------------------------------------------------------------------------
// Model selection
// ---------------------------------------------------------------------------

inline std::optional<double> evaluate_regressor(const std::vector<double>& predictions,
                                                const std::vector<double>& targets) {
    return pearson(predictions, targets);
}

namespace detail {

/// Document-level contiguous folds over examples, mirroring corpus folds.
inline std::vector<std::size_t> example_folds(const std::vector<RegressionExample>& examples,
                                              std::size_t k, std::uint64_t seed) {
    std::vector<std::string> docs;
    for (const auto& ex : examples) docs.push_back(ex.doc_id);
    std::sort(docs.begin(), docs.end());
    docs.erase(std::unique(docs.begin(), docs.end()), docs.end());
    if (k < 2) throw ValidationError("grid search needs at least two folds");
    if (k > docs.size()) throw ValidationError("grid search has more folds than documents");
    Rng rng(seed);
    rng.shuffle(docs);
    std::map<std::string, std::size_t> fold_of_doc;
    const std::size_t n = docs.size();
    for (std::size_t f = 0; f < k; ++f)
        for (std::size_t i = f * n / k; i < (f + 1) * n / k; ++i) fold_of_doc[docs[i]] = f;
    std::vector<std::size_t> folds;
    folds.reserve(examples.size());
    for (const auto& ex : examples) folds.push_back(fold_of_doc.at(ex.doc_id));
    return folds;
}

}  // namespace detail

struct GridPoint {
    double lambda = 1e-4;
    double learning_rate = 0.1;
    std::size_t hidden = 16;  // dense only
};

struct GridResult {
    GridPoint best;
    double best_score = 0.0;
    std::vector<std::pair<GridPoint, double>> scores;
};

/// Mean held-out Pearson across document-level folds, maximized over the grid
/// in iteration order (strict improvement keeps the earliest best point).
/// Folds with an undefined correlation contribute zero.
template <typename TrainFn, typename PredictFn>
GridResult grid_search(const std::vector<RegressionExample>& examples,
                       const std::vector<GridPoint>& grid, std::size_t k, std::uint64_t seed,
                       TrainFn&& train_fn, PredictFn&& predict_fn) {
    if (grid.empty()) throw ValidationError("grid_search: empty grid");
    const auto folds = detail::example_folds(examples, k, seed);
    GridResult result;
    bool first = true;
    for (const auto& point : grid) {
        double sum = 0.0;
        for (std::size_t f = 0; f < k; ++f) {
            std::vector<RegressionExample> train;
            std::vector<RegressionExample> held;
            for (std::size_t i = 0; i < examples.size(); ++i)
                (folds[i] == f ? held : train).push_back(examples[i]);
            if (train.empty() || held.size() < 2) continue;
            const auto model = train_fn(train, point);
            std::vector<double> preds, targets;
            preds.reserve(held.size());
            targets.reserve(held.size());
            for (const auto& ex : held) {
                preds.push_back(predict_fn(model, ex.tokens));
                targets.push_back(ex.target);
            }
            if (auto rho = pearson(preds, targets)) sum += *rho;
        }
        const double mean = sum / static_cast<double>(k);
        result.scores.emplace_back(point, mean);
        if (first || mean > result.best_score) {
            result.best = point;
            result.best_score = mean;
            first = false;
        }
    }
    return result;
}

}  // namespace annodiff
