#pragma once

#include <map>
#include <string>
#include <vector>

#include "annodiff/annotation.hpp"
#include "annodiff/common.hpp"
#include "annodiff/corpus.hpp"
#include "annodiff/crf.hpp"
#include "annodiff/rng.hpp"

namespace annodiff {

struct FoldAssignment {
    std::size_t k = 0;
    std::map<std::string, std::size_t> fold_of_doc;
};

/// Document-level folds: documents are shuffled once with the seed, then cut
/// into k contiguous near-equal slices, so every sentence of a document lands
/// in the same fold.
inline FoldAssignment make_folds(const Corpus& corpus, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("make_folds: need at least two folds");
    if (k > corpus.num_documents())
        throw ValidationError("make_folds: more folds than documents");
    auto ids = corpus.doc_ids();
    Rng rng(seed);
    rng.shuffle(ids);
    FoldAssignment folds;
    folds.k = k;
    const std::size_t n = ids.size();
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t begin = f * n / k;
        const std::size_t end = (f + 1) * n / k;
        for (std::size_t i = begin; i < end; ++i) folds.fold_of_doc[ids[i]] = f;
    }
    return folds;
}

/// Per-token strict majority over crowd layers; tied tokens stay unannotated.
inline AnnotationLayer majority_layer(const Corpus& corpus,
                                      const std::vector<AnnotationLayer>& crowd, LabelType label,
                                      const std::string& annotator_id = "majority") {
    const auto group = layers_of(crowd, label);
    if (group.empty())
        throw ValidationError("majority_layer: no crowd layers for label type " + to_string(label));
    std::vector<TokenSpan> spans;
    corpus.for_each_sentence([&](const Sentence& s) {
        const auto mask = majority_mask(s, group);
        for (auto& sp : mask_to_spans(s.sent_id, mask)) spans.push_back(std::move(sp));
    });
    return AnnotationLayer(annotator_id, Group::crowd, label, std::move(spans));
}

inline std::vector<TaggedSentence> make_tagged_sentences(
    const Corpus& corpus, const AnnotationLayer& tags,
    const std::map<std::string, double>* weights = nullptr) {
    std::vector<TaggedSentence> data;
    corpus.for_each_sentence([&](const Sentence& s) {
        TaggedSentence ex;
        ex.sent_id = s.sent_id;
        ex.features = sentence_feature_ids(s);
        ex.tags = spans_to_tags(s, tags);
        if (weights != nullptr) {
            auto it = weights->find(s.sent_id);
            ex.weight = it == weights->end() ? 1.0 : it->second;
        }
        data.push_back(std::move(ex));
    });
    return data;
}

/// For every fold, trains a tagger on the other folds and decodes the held-out
/// documents, so each sentence's predicted spans come from a model that never
/// saw its document.
inline AnnotationLayer out_of_fold_tagger_layer(const Corpus& corpus, const AnnotationLayer& tags,
                                                std::size_t k, const CrfConfig& config,
                                                std::uint64_t fold_seed, std::size_t threads = 1,
                                                const std::string& annotator_id = "model") {
    const auto folds = make_folds(corpus, k, fold_seed);
    std::vector<std::vector<TokenSpan>> fold_spans(k);
    parallel_for(k, threads, [&](std::size_t f) {
        std::vector<TaggedSentence> train;
        std::vector<const Sentence*> held_out;
        corpus.for_each_sentence([&](const Sentence& s) {
            if (folds.fold_of_doc.at(s.doc_id) == f) {
                held_out.push_back(&s);
                return;
            }
            TaggedSentence ex;
            ex.sent_id = s.sent_id;
            ex.features = sentence_feature_ids(s);
            ex.tags = spans_to_tags(s, tags);
            train.push_back(std::move(ex));
        });
        const auto trained = train_crf(train, tags.label_type(), config);
        for (const auto* s : held_out) {
            const auto decoded = viterbi_decode(trained.model, sentence_feature_ids(*s));
            for (auto& sp : tags_to_spans(s->sent_id, decoded))
                fold_spans[f].push_back(std::move(sp));
        }
    });
    std::vector<TokenSpan> spans;
    for (auto& fs : fold_spans)
        for (auto& sp : fs) spans.push_back(std::move(sp));
    return AnnotationLayer(annotator_id, Group::model, tags.label_type(), std::move(spans));
}

}  // namespace annodiff
