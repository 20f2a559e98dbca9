#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "annodiff/common.hpp"
#include "annodiff/corpus.hpp"

namespace annodiff {

/// Token-index span inside one sentence, end-exclusive.
struct TokenSpan {
    std::string sent_id;
    std::size_t first = 0;
    std::size_t last = 0;  // exclusive

    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// One annotator's span markings for one label type over a corpus.
/// Spans are kept sorted by (sent_id, first) and non-overlapping per sentence.
class AnnotationLayer {
public:
    AnnotationLayer() = default;
    AnnotationLayer(std::string annotator_id, Group group, LabelType label_type,
                    std::vector<TokenSpan> spans)
        : annotator_id_(std::move(annotator_id)),
          group_(group),
          label_type_(label_type),
          spans_(std::move(spans)) {
        normalize();
    }

    const std::string& annotator_id() const { return annotator_id_; }
    Group group() const { return group_; }
    LabelType label_type() const { return label_type_; }
    const std::vector<TokenSpan>& spans() const { return spans_; }

    /// Spans belonging to one sentence (contiguous slice of the sorted list).
    std::pair<std::vector<TokenSpan>::const_iterator, std::vector<TokenSpan>::const_iterator>
    spans_for(const std::string& sent_id) const {
        TokenSpan probe{sent_id, 0, 0};
        auto lo = std::lower_bound(spans_.begin(), spans_.end(), probe,
                                   [](const TokenSpan& a, const TokenSpan& b) {
                                       return a.sent_id < b.sent_id;
                                   });
        auto hi = std::upper_bound(spans_.begin(), spans_.end(), probe,
                                   [](const TokenSpan& a, const TokenSpan& b) {
                                       return a.sent_id < b.sent_id;
                                   });
        return {lo, hi};
    }

    bool covers(const std::string& sent_id, std::size_t token) const {
        auto [lo, hi] = spans_for(sent_id);
        for (auto it = lo; it != hi; ++it)
            if (token >= it->first && token < it->last) return true;
        return false;
    }

    /// New layer keeping only spans whose sentence satisfies the predicate.
    template <typename Pred>
    AnnotationLayer filtered(Pred&& keep_sent) const {
        std::vector<TokenSpan> kept;
        for (const auto& s : spans_)
            if (keep_sent(s.sent_id)) kept.push_back(s);
        return AnnotationLayer(annotator_id_, group_, label_type_, std::move(kept));
    }

    friend bool operator==(const AnnotationLayer& a, const AnnotationLayer& b) {
        return a.annotator_id_ == b.annotator_id_ && a.group_ == b.group_ &&
               a.label_type_ == b.label_type_ && a.spans_ == b.spans_;
    }

private:
    void normalize() {
        for (const auto& s : spans_) {
            if (s.first >= s.last)
                throw ValidationError("empty span in sentence " + s.sent_id);
        }
        std::sort(spans_.begin(), spans_.end(), [](const TokenSpan& a, const TokenSpan& b) {
            return std::tie(a.sent_id, a.first, a.last) < std::tie(b.sent_id, b.first, b.last);
        });
        for (std::size_t i = 1; i < spans_.size(); ++i) {
            if (spans_[i].sent_id == spans_[i - 1].sent_id && spans_[i].first < spans_[i - 1].last)
                throw ValidationError("overlapping spans in sentence " + spans_[i].sent_id);
        }
    }

    std::string annotator_id_;
    Group group_ = Group::crowd;
    LabelType label_type_ = LabelType::P;
    std::vector<TokenSpan> spans_;
};

/// Checks every span of the layer against sentence bounds of the corpus.
inline void validate_layer(const Corpus& corpus, const AnnotationLayer& layer) {
    for (const auto& s : layer.spans()) {
        if (!corpus.has_sentence(s.sent_id))
            throw ValidationError("annotation references unknown sent_id: " + s.sent_id);
        const auto& sent = corpus.sentence(s.sent_id);
        if (s.last > sent.size())
            throw ValidationError("span out of bounds in sentence " + s.sent_id);
    }
}

/// Entry t counts the layers whose spans cover token t of the sentence.
inline std::vector<int> token_count_vector(const Sentence& sentence,
                                           const std::vector<AnnotationLayer>& layers) {
    for (std::size_t i = 1; i < layers.size(); ++i)
        if (layers[i].label_type() != layers[0].label_type())
            throw ValidationError("token_count_vector: mixed label types");
    std::vector<int> counts(sentence.size(), 0);
    for (const auto& layer : layers) {
        auto [lo, hi] = layer.spans_for(sentence.sent_id);
        for (auto it = lo; it != hi; ++it) {
            const std::size_t last = std::min<std::size_t>(it->last, counts.size());
            for (std::size_t t = it->first; t < last; ++t) ++counts[t];
        }
    }
    return counts;
}

/// Per-token strict majority over the layers: marked iff more than half the
/// layers cover the token. Ties count as not annotated.
inline std::vector<bool> majority_mask(const Sentence& sentence,
                                       const std::vector<AnnotationLayer>& layers) {
    const auto counts = token_count_vector(sentence, layers);
    std::vector<bool> mask(counts.size(), false);
    for (std::size_t t = 0; t < counts.size(); ++t)
        mask[t] = 2 * counts[t] > static_cast<int>(layers.size());
    return mask;
}

/// Contiguous marked runs as end-exclusive token spans.
inline std::vector<TokenSpan> mask_to_spans(const std::string& sent_id,
                                            const std::vector<bool>& mask) {
    std::vector<TokenSpan> spans;
    std::size_t t = 0;
    while (t < mask.size()) {
        if (!mask[t]) {
            ++t;
            continue;
        }
        std::size_t e = t;
        while (e < mask.size() && mask[e]) ++e;
        spans.push_back(TokenSpan{sent_id, t, e});
        t = e;
    }
    return spans;
}

inline std::vector<AnnotationLayer> layers_of(const std::vector<AnnotationLayer>& layers,
                                              Group group, LabelType label_type) {
    std::vector<AnnotationLayer> out;
    for (const auto& l : layers)
        if (l.group() == group && l.label_type() == label_type) out.push_back(l);
    return out;
}

inline std::vector<AnnotationLayer> layers_of(const std::vector<AnnotationLayer>& layers,
                                              LabelType label_type) {
    std::vector<AnnotationLayer> out;
    for (const auto& l : layers)
        if (l.label_type() == label_type) out.push_back(l);
    return out;
}

}  // namespace annodiff
