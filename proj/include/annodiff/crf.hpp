#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "annodiff/annotation.hpp"
#include "annodiff/common.hpp"
#include "annodiff/corpus.hpp"
#include "annodiff/rng.hpp"

namespace annodiff {

enum class Tag : int { O = 0, B = 1, I = 2 };
inline constexpr int kNumTags = 3;

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace detail {

inline std::string lower_ascii(const std::string& s) {
    std::string out = s;
    for (auto& c : out)
        if (static_cast<unsigned char>(c) < 0x80)
            c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::string word_shape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) {
        if (c >= 'A' && c <= 'Z') out += 'X';
        else if (c >= 'a' && c <= 'z') out += 'x';
        else if (c >= '0' && c <= '9') out += 'd';
        else out += static_cast<char>(c);
    }
    return out;
}

inline bool looks_numeric(const std::string& s) {
    bool digit = false;
    for (unsigned char c : s) {
        if (c >= '0' && c <= '9') digit = true;
        else if (c != '.' && c != ',') return false;
    }
    return digit;
}

}  // namespace detail

/// String features for one token position; hashed ids are what the model sees.
inline std::vector<std::string> token_features(const Sentence& sentence, std::size_t pos) {
    if (pos >= sentence.size())
        throw ValidationError("token_features: position out of range in sentence " +
                              sentence.sent_id);
    const std::string& raw = sentence.tokens[pos].text;
    const std::string word = detail::lower_ascii(raw);
    std::vector<std::string> feats;
    feats.reserve(10);
    feats.push_back("w=" + word);
    feats.push_back("p2=" + word.substr(0, 2));
    feats.push_back("p3=" + word.substr(0, 3));
    feats.push_back("s2=" + (word.size() > 2 ? word.substr(word.size() - 2) : word));
    feats.push_back("s3=" + (word.size() > 3 ? word.substr(word.size() - 3) : word));
    feats.push_back("shape=" + detail::word_shape(raw));
    if (detail::looks_numeric(raw)) feats.push_back("num");
    feats.push_back("prev=" + (pos == 0 ? std::string("<bos>")
                                        : detail::lower_ascii(sentence.tokens[pos - 1].text)));
    feats.push_back("next=" + (pos + 1 == sentence.size()
                                   ? std::string("<eos>")
                                   : detail::lower_ascii(sentence.tokens[pos + 1].text)));
    if (pos == 0) feats.push_back("first");
    if (pos + 1 == sentence.size()) feats.push_back("last");
    return feats;
}

inline std::vector<std::uint64_t> token_feature_ids(const Sentence& sentence, std::size_t pos) {
    std::vector<std::uint64_t> ids;
    for (const auto& f : token_features(sentence, pos)) ids.push_back(fnv1a(f));
    return ids;
}

/// Feature ids for every position of a sentence.
inline std::vector<std::vector<std::uint64_t>> sentence_feature_ids(const Sentence& sentence) {
    std::vector<std::vector<std::uint64_t>> out;
    out.reserve(sentence.size());
    for (std::size_t i = 0; i < sentence.size(); ++i) out.push_back(token_feature_ids(sentence, i));
    return out;
}

struct CrfConfig {
    double learning_rate = 0.1;
    double lambda = 1e-4;
    std::size_t epochs = 15;
    std::size_t batch_size = 20;
    std::uint64_t seed = 1;
};

struct TaggerModel {
    LabelType label_type = LabelType::P;
    CrfConfig config;
    std::unordered_map<std::uint64_t, std::array<double, 3>> emissions;
    std::array<std::array<double, 3>, 3> transitions{};

    double emission_score(const std::vector<std::uint64_t>& feats, int tag) const {
        double s = 0.0;
        for (auto f : feats) {
            auto it = emissions.find(f);
            if (it != emissions.end()) s += it->second[static_cast<std::size_t>(tag)];
        }
        return s;
    }
};

/// One training example: cached features, gold tags, instance weight.
struct TaggedSentence {
    std::string sent_id;
    std::vector<std::vector<std::uint64_t>> features;
    std::vector<Tag> tags;
    double weight = 1.0;
};

inline std::vector<Tag> spans_to_tags(const Sentence& sentence, const AnnotationLayer& layer) {
    std::vector<Tag> tags(sentence.size(), Tag::O);
    auto [lo, hi] = layer.spans_for(sentence.sent_id);
    for (auto it = lo; it != hi; ++it) {
        if (it->last > sentence.size())
            throw ValidationError("span out of bounds in sentence " + sentence.sent_id);
        tags[it->first] = Tag::B;
        for (std::size_t i = it->first + 1; i < it->last; ++i) tags[i] = Tag::I;
    }
    return tags;
}

inline std::vector<TokenSpan> tags_to_spans(const std::string& sent_id,
                                            const std::vector<Tag>& tags) {
    std::vector<TokenSpan> spans;
    std::size_t i = 0;
    while (i < tags.size()) {
        if (tags[i] == Tag::B) {
            std::size_t j = i + 1;
            while (j < tags.size() && tags[j] == Tag::I) ++j;
            spans.push_back(TokenSpan{sent_id, i, j});
            i = j;
        } else {
            ++i;
        }
    }
    return spans;
}

namespace detail {

inline double logsumexp3(const std::array<double, 3>& v) {
    const double m = std::max(v[0], std::max(v[1], v[2]));
    if (!std::isfinite(m)) return m;
    return m + std::log(std::exp(v[0] - m) + std::exp(v[1] - m) + std::exp(v[2] - m));
}

struct Lattice {
    std::vector<std::array<double, 3>> emit;   // emission scores per position
    std::vector<std::array<double, 3>> alpha;  // forward log scores
    std::vector<std::array<double, 3>> beta;   // backward log scores
    double log_z = 0.0;
};

inline Lattice build_lattice(const TaggerModel& model,
                             const std::vector<std::vector<std::uint64_t>>& features) {
    const std::size_t n = features.size();
    if (n == 0) throw ValidationError("cannot run a tagger on an empty sentence");
    Lattice lat;
    lat.emit.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        for (int t = 0; t < kNumTags; ++t)
            lat.emit[i][static_cast<std::size_t>(t)] = model.emission_score(features[i], t);

    lat.alpha.resize(n);
    lat.alpha[0] = lat.emit[0];
    for (std::size_t i = 1; i < n; ++i) {
        for (int t = 0; t < kNumTags; ++t) {
            std::array<double, 3> acc;
            for (int p = 0; p < kNumTags; ++p)
                acc[static_cast<std::size_t>(p)] =
                    lat.alpha[i - 1][static_cast<std::size_t>(p)] +
                    model.transitions[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)];
            lat.alpha[i][static_cast<std::size_t>(t)] =
                logsumexp3(acc) + lat.emit[i][static_cast<std::size_t>(t)];
        }
    }
    lat.log_z = logsumexp3(lat.alpha[n - 1]);

    lat.beta.resize(n);
    lat.beta[n - 1] = {0.0, 0.0, 0.0};
    for (std::size_t i = n - 1; i-- > 0;) {
        for (int t = 0; t < kNumTags; ++t) {
            std::array<double, 3> acc;
            for (int nx = 0; nx < kNumTags; ++nx)
                acc[static_cast<std::size_t>(nx)] =
                    model.transitions[static_cast<std::size_t>(t)][static_cast<std::size_t>(nx)] +
                    lat.emit[i + 1][static_cast<std::size_t>(nx)] +
                    lat.beta[i + 1][static_cast<std::size_t>(nx)];
            lat.beta[i][static_cast<std::size_t>(t)] = logsumexp3(acc);
        }
    }
    return lat;
}

}  // namespace detail

/// Log partition over all tag sequences (no transition constraint).
inline double log_partition(const TaggerModel& model,
                            const std::vector<std::vector<std::uint64_t>>& features) {
    return detail::build_lattice(model, features).log_z;
}

inline double sequence_score(const TaggerModel& model,
                             const std::vector<std::vector<std::uint64_t>>& features,
                             const std::vector<Tag>& tags) {
    if (features.size() != tags.size())
        throw ValidationError("sequence_score: tag/feature length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        s += model.emission_score(features[i], static_cast<int>(tags[i]));
        if (i > 0)
            s += model.transitions[static_cast<std::size_t>(tags[i - 1])]
                                  [static_cast<std::size_t>(tags[i])];
    }
    return s;
}

struct CrfGradient {
    std::unordered_map<std::uint64_t, std::array<double, 3>> emissions;
    std::array<std::array<double, 3>, 3> transitions{};
};

/// Weighted negative log likelihood over a batch plus reg_scale * ||theta||^2,
/// with the exact gradient. The regularizer covers every stored parameter, so
/// finite differences against this function must agree everywhere.
inline double loss_and_gradient(const TaggerModel& model, const std::vector<TaggedSentence>& batch,
                                double reg_scale, CrfGradient& grad) {
    grad.emissions.clear();
    grad.transitions = {};
    double loss = 0.0;

    for (const auto& ex : batch) {
        if (ex.weight == 0.0) continue;
        const auto lat = detail::build_lattice(model, ex.features);
        const std::size_t n = ex.features.size();
        if (ex.tags.size() != n) throw ValidationError("tag/feature length mismatch");
        loss += ex.weight * (lat.log_z - sequence_score(model, ex.features, ex.tags));

        for (std::size_t i = 0; i < n; ++i) {
            std::array<double, 3> marg;
            for (int t = 0; t < kNumTags; ++t)
                marg[static_cast<std::size_t>(t)] =
                    std::exp(lat.alpha[i][static_cast<std::size_t>(t)] +
                             lat.beta[i][static_cast<std::size_t>(t)] - lat.log_z);
            marg[static_cast<std::size_t>(static_cast<int>(ex.tags[i]))] -= 1.0;
            for (auto f : ex.features[i]) {
                auto& g = grad.emissions[f];
                for (int t = 0; t < kNumTags; ++t)
                    g[static_cast<std::size_t>(t)] +=
                        ex.weight * marg[static_cast<std::size_t>(t)];
            }
        }
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (int p = 0; p < kNumTags; ++p) {
                for (int t = 0; t < kNumTags; ++t) {
                    const double lp =
                        lat.alpha[i][static_cast<std::size_t>(p)] +
                        model.transitions[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)] +
                        lat.emit[i + 1][static_cast<std::size_t>(t)] +
                        lat.beta[i + 1][static_cast<std::size_t>(t)] - lat.log_z;
                    grad.transitions[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)] +=
                        ex.weight * std::exp(lp);
                }
            }
            grad.transitions[static_cast<std::size_t>(static_cast<int>(ex.tags[i]))]
                            [static_cast<std::size_t>(static_cast<int>(ex.tags[i + 1]))] -=
                ex.weight;
        }
    }

    if (reg_scale != 0.0) {
        for (const auto& [f, w] : model.emissions) {
            auto& g = grad.emissions[f];
            for (int t = 0; t < kNumTags; ++t) {
                loss += reg_scale * w[static_cast<std::size_t>(t)] * w[static_cast<std::size_t>(t)];
                g[static_cast<std::size_t>(t)] += 2.0 * reg_scale * w[static_cast<std::size_t>(t)];
            }
        }
        for (int p = 0; p < kNumTags; ++p) {
            for (int t = 0; t < kNumTags; ++t) {
                const double w =
                    model.transitions[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)];
                loss += reg_scale * w * w;
                grad.transitions[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)] +=
                    2.0 * reg_scale * w;
            }
        }
    }
    if (!std::isfinite(loss)) throw std::runtime_error("tagger loss diverged (non-finite)");
    return loss;
}

/// Best tag sequence subject to the decoding constraint that I may only
/// follow B or I. Ties resolve toward the earlier tag in the order O, B, I
/// at every maximization.
inline std::vector<Tag> viterbi_decode(const TaggerModel& model,
                                       const std::vector<std::vector<std::uint64_t>>& features) {
    const std::size_t n = features.size();
    if (n == 0) throw ValidationError("cannot decode an empty sentence");
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    std::vector<std::array<double, 3>> delta(n);
    std::vector<std::array<int, 3>> back(n);
    for (int t = 0; t < kNumTags; ++t)
        delta[0][static_cast<std::size_t>(t)] =
            t == static_cast<int>(Tag::I) ? kNegInf : model.emission_score(features[0], t);
    back[0] = {-1, -1, -1};

    for (std::size_t i = 1; i < n; ++i) {
        for (int t = 0; t < kNumTags; ++t) {
            double best = kNegInf;
            int best_prev = -1;
            for (int p = 0; p < kNumTags; ++p) {
                if (t == static_cast<int>(Tag::I) && p == static_cast<int>(Tag::O)) continue;
                const double cand =
                    delta[i - 1][static_cast<std::size_t>(p)] +
                    model.transitions[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)];
                if (cand > best) {
                    best = cand;
                    best_prev = p;
                }
            }
            delta[i][static_cast<std::size_t>(t)] =
                best == kNegInf ? kNegInf : best + model.emission_score(features[i], t);
            back[i][static_cast<std::size_t>(t)] = best_prev;
        }
    }

    int end = 0;
    double best = kNegInf;
    for (int t = 0; t < kNumTags; ++t) {
        if (delta[n - 1][static_cast<std::size_t>(t)] > best) {
            best = delta[n - 1][static_cast<std::size_t>(t)];
            end = t;
        }
    }
    std::vector<Tag> tags(n);
    int cur = end;
    for (std::size_t i = n; i-- > 0;) {
        tags[i] = static_cast<Tag>(cur);
        cur = back[i][static_cast<std::size_t>(cur)];
    }
    return tags;
}

struct CrfTrainResult {
    TaggerModel model;
    std::vector<double> epoch_loss;
};

/// Mini-batch AdaGrad on the weighted objective. The feature set is fixed up
/// front from the training data, so the parameter vector (and the regularizer)
/// does not move under the optimizer.
inline CrfTrainResult train_crf(const std::vector<TaggedSentence>& data, LabelType label,
                                const CrfConfig& config) {
    if (data.empty()) throw ValidationError("train_crf: empty training set");
    double total_weight = 0.0;
    for (const auto& ex : data) {
        if (ex.weight < 0.0) throw ValidationError("train_crf: negative instance weight");
        total_weight += ex.weight;
    }
    if (total_weight == 0.0)
        throw ValidationError("train_crf: degenerate training set, all instance weights are zero");
    if (config.batch_size == 0) throw ValidationError("train_crf: batch_size must be positive");

    CrfTrainResult result;
    result.model.label_type = label;
    result.model.config = config;
    for (const auto& ex : data)
        for (const auto& feats : ex.features)
            for (auto f : feats) result.model.emissions.try_emplace(f);

    std::unordered_map<std::uint64_t, std::array<double, 3>> accum;
    accum.reserve(result.model.emissions.size());
    for (const auto& [f, w] : result.model.emissions) accum.try_emplace(f);
    std::array<std::array<double, 3>, 3> accum_trans{};

    const double n = static_cast<double>(data.size());
    const double eps = 1e-8;
    Rng rng(config.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    CrfGradient grad;
    std::vector<TaggedSentence> batch;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(begin + config.batch_size, order.size());
            batch.clear();
            for (std::size_t k = begin; k < end; ++k) batch.push_back(data[order[k]]);
            const double reg_scale =
                config.lambda * static_cast<double>(end - begin) / n;
            epoch_loss += loss_and_gradient(result.model, batch, reg_scale, grad);

            for (const auto& [f, g] : grad.emissions) {
                auto& acc = accum[f];
                auto& w = result.model.emissions[f];
                for (int t = 0; t < kNumTags; ++t) {
                    const double gv = g[static_cast<std::size_t>(t)];
                    if (gv == 0.0) continue;
                    acc[static_cast<std::size_t>(t)] += gv * gv;
                    w[static_cast<std::size_t>(t)] -=
                        config.learning_rate * gv /
                        (std::sqrt(acc[static_cast<std::size_t>(t)]) + eps);
                }
            }
            for (int p = 0; p < kNumTags; ++p) {
                for (int t = 0; t < kNumTags; ++t) {
                    const double gv =
                        grad.transitions[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)];
                    if (gv == 0.0) continue;
                    auto& acc = accum_trans[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)];
                    acc += gv * gv;
                    result.model.transitions[static_cast<std::size_t>(p)]
                                            [static_cast<std::size_t>(t)] -=
                        config.learning_rate * gv / (std::sqrt(acc) + eps);
                }
            }
        }
        result.epoch_loss.push_back(epoch_loss);
    }
    return result;
}

/// Decodes every sentence of the corpus into a model annotation layer.
inline AnnotationLayer predict_layer(const TaggerModel& model, const Corpus& corpus,
                                     const std::string& annotator_id = "model") {
    std::vector<TokenSpan> spans;
    corpus.for_each_sentence([&](const Sentence& s) {
        const auto tags = viterbi_decode(model, sentence_feature_ids(s));
        for (auto& sp : tags_to_spans(s.sent_id, tags)) spans.push_back(std::move(sp));
    });
    return AnnotationLayer(annotator_id, Group::model, model.label_type, std::move(spans));
}

}  // namespace annodiff
