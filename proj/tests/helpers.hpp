#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "annodiff/annotation.hpp"
#include "annodiff/corpus.hpp"
#include "annodiff/crf.hpp"
#include "annodiff/rng.hpp"

namespace testutil {

// Quadratic-time fractional ranks: rank = (#smaller) + (#equal + 1) / 2.
inline std::vector<double> oracle_ranks(const std::vector<double>& v) {
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::size_t less = 0, equal = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++less;
            if (v[j] == v[i]) ++equal;
        }
        ranks[i] = static_cast<double>(less) + (static_cast<double>(equal) + 1.0) / 2.0;
    }
    return ranks;
}

inline std::optional<double> oracle_pearson(const std::vector<double>& x,
                                            const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) return std::nullopt;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

inline std::optional<double> oracle_spearman(const std::vector<double>& x,
                                             const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) return std::nullopt;
    return oracle_pearson(oracle_ranks(x), oracle_ranks(y));
}

// ---------------------------------------------------------------------------
// Exhaustive CRF oracles over all 3^n tag sequences
// ---------------------------------------------------------------------------

inline std::vector<std::vector<annodiff::Tag>> all_sequences(std::size_t n) {
    std::vector<std::vector<annodiff::Tag>> out;
    std::vector<annodiff::Tag> cur(n, annodiff::Tag::O);
    const std::size_t total = static_cast<std::size_t>(std::pow(3.0, static_cast<double>(n)));
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (std::size_t i = 0; i < n; ++i) {
            cur[i] = static_cast<annodiff::Tag>(c % 3);
            c /= 3;
        }
        out.push_back(cur);
    }
    return out;
}

inline bool valid_sequence(const std::vector<annodiff::Tag>& tags) {
    using annodiff::Tag;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        if (tags[i] != Tag::I) continue;
        if (i == 0 || tags[i - 1] == Tag::O) return false;
    }
    return true;
}

inline double oracle_log_partition(const annodiff::TaggerModel& model,
                                   const std::vector<std::vector<std::uint64_t>>& features) {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> scores;
    for (const auto& tags : all_sequences(features.size())) {
        scores.push_back(annodiff::sequence_score(model, features, tags));
        best = std::max(best, scores.back());
    }
    double sum = 0.0;
    for (double s : scores) sum += std::exp(s - best);
    return best + std::log(sum);
}

// Among score-maximizing valid sequences, picks the one whose reversal is
// lexicographically smallest, matching the decoder's backward tie-breaks.
inline std::vector<annodiff::Tag> oracle_viterbi(
    const annodiff::TaggerModel& model,
    const std::vector<std::vector<std::uint64_t>>& features) {
    std::vector<annodiff::Tag> best_tags;
    double best = -std::numeric_limits<double>::infinity();
    auto reversed_less = [](const std::vector<annodiff::Tag>& a,
                            const std::vector<annodiff::Tag>& b) {
        for (std::size_t i = a.size(); i-- > 0;) {
            if (a[i] != b[i]) return static_cast<int>(a[i]) < static_cast<int>(b[i]);
        }
        return false;
    };
    for (const auto& tags : all_sequences(features.size())) {
        if (!valid_sequence(tags)) continue;
        const double s = annodiff::sequence_score(model, features, tags);
        if (s > best + 1e-12 || best_tags.empty()) {
            best = s;
            best_tags = tags;
        } else if (std::abs(s - best) <= 1e-12 && reversed_less(tags, best_tags)) {
            best_tags = tags;
        }
    }
    return best_tags;
}

// Random model over a small feature universe, exercising ties when coarse.
inline annodiff::TaggerModel random_model(annodiff::Rng& rng, std::size_t num_features,
                                          bool coarse = false) {
    annodiff::TaggerModel model;
    auto draw = [&] {
        const double r = rng.real(-1.0, 1.0);
        return coarse ? std::round(r * 2.0) / 2.0 : r;
    };
    for (std::size_t f = 0; f < num_features; ++f) {
        auto& e = model.emissions[f];
        for (int t = 0; t < 3; ++t) e[static_cast<std::size_t>(t)] = draw();
    }
    for (int p = 0; p < 3; ++p)
        for (int t = 0; t < 3; ++t)
            model.transitions[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)] = draw();
    return model;
}

inline std::vector<std::vector<std::uint64_t>> random_features(annodiff::Rng& rng, std::size_t len,
                                                               std::size_t num_features) {
    std::vector<std::vector<std::uint64_t>> features(len);
    for (auto& fs : features) {
        const std::size_t k = 1 + rng.uniform(3);
        for (std::size_t i = 0; i < k; ++i) fs.push_back(rng.uniform(num_features));
    }
    return features;
}

// ---------------------------------------------------------------------------
// Small corpus builders
// ---------------------------------------------------------------------------

inline annodiff::Sentence make_sentence(const std::string& sent_id, const std::string& doc_id,
                                        const std::vector<std::string>& words) {
    annodiff::Sentence s;
    s.sent_id = sent_id;
    s.doc_id = doc_id;
    std::size_t offset = 0;
    for (const auto& w : words) {
        annodiff::Token t;
        t.text = w;
        t.start = offset;
        t.end = offset + w.size();
        s.tokens.push_back(std::move(t));
        offset += w.size() + 1;
    }
    return s;
}

inline annodiff::Corpus make_corpus(const std::vector<annodiff::Sentence>& sentences) {
    std::map<std::string, std::vector<annodiff::Sentence>> by_doc;
    std::vector<std::string> doc_order;
    for (const auto& s : sentences) {
        if (by_doc.find(s.doc_id) == by_doc.end()) doc_order.push_back(s.doc_id);
        by_doc[s.doc_id].push_back(s);
    }
    std::vector<annodiff::Document> docs;
    for (const auto& id : doc_order) {
        annodiff::Document doc;
        doc.doc_id = id;
        doc.sentences = by_doc[id];
        docs.push_back(std::move(doc));
    }
    return annodiff::Corpus(std::move(docs));
}

inline annodiff::AnnotationLayer make_layer(const std::string& annotator, annodiff::Group group,
                                            annodiff::LabelType label,
                                            std::vector<annodiff::TokenSpan> spans) {
    return annodiff::AnnotationLayer(annotator, group, label, std::move(spans));
}

}  // namespace testutil
