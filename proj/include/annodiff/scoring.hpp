#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "annodiff/annotation.hpp"
#include "annodiff/common.hpp"
#include "annodiff/corpus.hpp"
#include "annodiff/stats.hpp"

namespace annodiff {

enum class DifficultySource { reference, proxy, predicted };

inline std::string to_string(DifficultySource s) {
    switch (s) {
        case DifficultySource::reference: return "reference";
        case DifficultySource::proxy: return "proxy";
        case DifficultySource::predicted: return "predicted";
    }
    throw std::logic_error("unreachable");
}

inline DifficultySource difficulty_source_from(const std::string& s) {
    if (s == "reference") return DifficultySource::reference;
    if (s == "proxy") return DifficultySource::proxy;
    if (s == "predicted") return DifficultySource::predicted;
    throw ValidationError("unknown difficulty source: " + s);
}

struct DifficultyRecord {
    std::string sent_id;
    LabelType label_type = LabelType::P;
    double score = 0.0;
    DifficultySource source = DifficultySource::reference;
};

enum class ScoringMode { per_worker_mean, aggregate };

inline ScoringMode scoring_mode_from(const std::string& s) {
    if (s == "per_worker_mean") return ScoringMode::per_worker_mean;
    if (s == "aggregate") return ScoringMode::aggregate;
    throw ValidationError("unknown scoring mode: " + s);
}

inline std::string to_string(ScoringMode m) {
    return m == ScoringMode::per_worker_mean ? "per_worker_mean" : "aggregate";
}

struct ScoringConfig {
    ScoringMode mode = ScoringMode::per_worker_mean;
};

namespace detail {

inline bool is_constant(const std::vector<int>& v) {
    return std::all_of(v.begin(), v.end(), [&](int x) { return x == v.front(); });
}

/// Rank correlation with a total fallback for degenerate vectors: two equal
/// constant vectors correlate perfectly, any other degenerate pairing counts
/// as uninformative (zero).
inline double rank_corr_total(const std::vector<int>& a,
                              const std::vector<int>& b) {
    auto rho = spearman(to_doubles(a), to_doubles(b));
    if (rho) return *rho;
    if (is_constant(a) && is_constant(b)) return a.front() == b.front() ? 1.0 : 0.0;
    return 0.0;
}

inline bool all_zero(const std::vector<int>& v) {
    return std::all_of(v.begin(), v.end(), [](int x) { return x == 0; });
}

}  // namespace detail

/// Difficulty of one sentence for one label type: mean rank correlation
/// between each crowd worker's token count vector and the reference vector,
/// mapped through (1 - rho) / 2. A sentence nobody labels on either side is
/// maximally easy (0); one labeled on exactly one side is maximally hard (1).
inline DifficultyRecord sentence_difficulty(const Sentence& sentence,
                                            const std::vector<AnnotationLayer>& reference,
                                            const std::vector<AnnotationLayer>& crowd,
                                            const ScoringConfig& config,
                                            DifficultySource source = DifficultySource::reference) {
    if (reference.empty()) throw ValidationError("sentence_difficulty: no reference layers");
    if (crowd.empty()) throw ValidationError("sentence_difficulty: no crowd layers");
    const LabelType label = reference.front().label_type();
    for (const auto& l : reference)
        if (l.label_type() != label)
            throw ValidationError("sentence_difficulty: mixed label types in reference layers");
    for (const auto& l : crowd)
        if (l.label_type() != label)
            throw ValidationError("sentence_difficulty: crowd label type differs from reference");

    const auto ref_vec = token_count_vector(sentence, reference);
    std::vector<std::vector<int>> crowd_vecs;
    crowd_vecs.reserve(crowd.size());
    for (const auto& layer : crowd)
        crowd_vecs.push_back(token_count_vector(sentence, {layer}));

    const bool ref_zero = detail::all_zero(ref_vec);
    const bool crowd_zero = std::all_of(crowd_vecs.begin(), crowd_vecs.end(),
                                        [](const auto& v) { return detail::all_zero(v); });

    DifficultyRecord record;
    record.sent_id = sentence.sent_id;
    record.label_type = label;
    record.source = source;
    if (ref_zero && crowd_zero) {
        record.score = 0.0;
        return record;
    }
    if (ref_zero || crowd_zero) {
        record.score = 1.0;
        return record;
    }

    double mean_rho = 0.0;
    if (config.mode == ScoringMode::per_worker_mean) {
        for (const auto& v : crowd_vecs) mean_rho += detail::rank_corr_total(v, ref_vec);
        mean_rho /= static_cast<double>(crowd_vecs.size());
    } else {
        std::vector<int> total(sentence.size(), 0);
        for (const auto& v : crowd_vecs)
            for (std::size_t i = 0; i < v.size(); ++i) total[i] += v[i];
        mean_rho = detail::rank_corr_total(total, ref_vec);
    }
    record.score = (1.0 - mean_rho) / 2.0;
    return record;
}

/// Scores every sentence in corpus order for one label type. Layers not
/// matching the label type are filtered out before scoring.
inline std::vector<DifficultyRecord> corpus_difficulty(
    const Corpus& corpus, const std::vector<AnnotationLayer>& reference,
    const std::vector<AnnotationLayer>& crowd, LabelType label, const ScoringConfig& config,
    DifficultySource source = DifficultySource::reference) {
    const auto ref = layers_of(reference, label);
    const auto crd = layers_of(crowd, label);
    if (ref.empty())
        throw ValidationError("corpus_difficulty: no reference layers for label type " +
                              to_string(label));
    if (crd.empty())
        throw ValidationError("corpus_difficulty: no crowd layers for label type " +
                              to_string(label));
    std::vector<DifficultyRecord> records;
    corpus.for_each_sentence([&](const Sentence& s) {
        records.push_back(sentence_difficulty(s, ref, crd, config, source));
    });
    return records;
}

/// Mean pairwise rank correlation between annotators, averaged over every
/// (pair, sentence) cell where the correlation is defined. Cells where either
/// count vector is constant are skipped entirely.
inline double inter_annotator_agreement(const Corpus& corpus,
                                        const std::vector<AnnotationLayer>& layers,
                                        LabelType label) {
    const auto group = layers_of(layers, label);
    if (group.size() < 2)
        throw ValidationError("inter_annotator_agreement: fewer than two annotators for label type " +
                              to_string(label));
    double sum = 0.0;
    std::size_t cells = 0;
    corpus.for_each_sentence([&](const Sentence& s) {
        std::vector<std::vector<int>> vecs;
        vecs.reserve(group.size());
        for (const auto& layer : group) vecs.push_back(token_count_vector(s, {layer}));
        for (std::size_t i = 0; i < vecs.size(); ++i) {
            for (std::size_t j = i + 1; j < vecs.size(); ++j) {
                auto rho = spearman(to_doubles(vecs[i]), to_doubles(vecs[j]));
                if (rho) {
                    sum += *rho;
                    ++cells;
                }
            }
        }
    });
    if (cells == 0)
        throw ValidationError("inter_annotator_agreement: no sentence pair has a defined correlation");
    return sum / static_cast<double>(cells);
}

/// Per-sentence crowd disagreement used as a training target when no expert
/// reference exists: (1 - mean pairwise worker correlation) / 2, with the
/// total degenerate fallback so unanimous workers yield exactly 0.
inline std::map<std::string, double> crowd_disagreement_targets(
    const Corpus& corpus, const std::vector<AnnotationLayer>& crowd, LabelType label) {
    const auto group = layers_of(crowd, label);
    if (group.size() < 2)
        throw ValidationError("crowd_disagreement_targets: fewer than two crowd annotators");
    std::map<std::string, double> targets;
    corpus.for_each_sentence([&](const Sentence& s) {
        std::vector<std::vector<int>> vecs;
        vecs.reserve(group.size());
        for (const auto& layer : group) vecs.push_back(token_count_vector(s, {layer}));
        double sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < vecs.size(); ++i) {
            for (std::size_t j = i + 1; j < vecs.size(); ++j) {
                sum += detail::rank_corr_total(vecs[i], vecs[j]);
                ++pairs;
            }
        }
        targets[s.sent_id] = (1.0 - sum / static_cast<double>(pairs)) / 2.0;
    });
    return targets;
}

}  // namespace annodiff
