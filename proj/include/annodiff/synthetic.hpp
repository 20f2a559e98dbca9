#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "annodiff/annotation.hpp"
#include "annodiff/common.hpp"
#include "annodiff/corpus.hpp"
#include "annodiff/rng.hpp"

namespace annodiff {

struct SyntheticConfig {
    std::size_t num_docs = 200;
    std::size_t sentences_per_doc = 8;
    std::size_t vocab_size = 120;
    double gold_span_rate = 0.18;
    double difficult_fraction = 0.20;
    std::size_t crowd_workers_per_sentence = 3;
    double easy_noise_rate = 0.05;
    double hard_noise_rate = 0.60;
    double expert_noise_rate = 0.02;
    std::uint64_t seed = 1;

    void validate() const {
        auto rate = [](double r, const char* name) {
            if (r < 0.0 || r > 1.0) throw ValidationError(std::string(name) + " must be in [0,1]");
        };
        rate(gold_span_rate, "gold_span_rate");
        rate(difficult_fraction, "difficult_fraction");
        rate(easy_noise_rate, "easy_noise_rate");
        rate(hard_noise_rate, "hard_noise_rate");
        rate(expert_noise_rate, "expert_noise_rate");
        if (hard_noise_rate < easy_noise_rate)
            throw ValidationError("hard_noise_rate must be >= easy_noise_rate");
        if (vocab_size < 10) throw ValidationError("vocab_size must be >= 10");
        if (num_docs == 0 || sentences_per_doc == 0)
            throw ValidationError("num_docs and sentences_per_doc must be positive");
        if (crowd_workers_per_sentence == 0)
            throw ValidationError("crowd_workers_per_sentence must be positive");
    }
};

inline SyntheticConfig synthetic_preset(const std::string& name) {
    SyntheticConfig cfg;
    if (name == "small") {
        // defaults above
    } else if (name == "medium") {
        cfg.num_docs = 1000;
        cfg.sentences_per_doc = 10;
        cfg.vocab_size = 400;
    } else {
        throw ValidationError("unknown preset: " + name);
    }
    return cfg;
}

struct SyntheticCorpus {
    Corpus corpus;
    std::vector<AnnotationLayer> gold;    // one per label type, annotator "gold"
    std::vector<AnnotationLayer> crowd;   // workers x label types
    std::vector<AnnotationLayer> expert;  // 3 experts x label types
    std::map<std::string, bool> difficult;  // planted per-sentence flags
};

namespace detail {

// Pronounceable, distinct, letters-only word per vocabulary index.
inline std::string synth_word(std::size_t index) {
    static const std::array<const char*, 40> syll = {
        "ba", "be", "bi", "bo", "bu", "da", "de", "di", "do", "du", "ka", "ke", "ki", "ko",
        "ku", "la", "le", "li", "lo", "lu", "ma", "me", "mi", "mo", "mu", "na", "ne", "ni",
        "no", "nu", "ra", "re", "ri", "ro", "ru", "sa", "se", "si", "so", "su"};
    std::string w;
    w += syll[index % syll.size()];
    w += syll[(index / syll.size()) % syll.size()];
    w += syll[(index / (syll.size() * syll.size())) % syll.size()];
    return w;
}

// Vocabulary regions: plain words, jargon words (marking difficult
// sentences), and one span-word region per label type.
struct VocabLayout {
    std::size_t easy_begin, easy_end;
    std::size_t hard_begin, hard_end;
    std::array<std::pair<std::size_t, std::size_t>, 3> span;  // per LabelType

    explicit VocabLayout(std::size_t v) {
        easy_begin = 0;
        easy_end = std::max<std::size_t>(1, v * 40 / 100);
        hard_begin = easy_end;
        hard_end = std::max(hard_begin + 1, v * 55 / 100);
        std::size_t b = hard_end;
        const std::size_t remain = v > b ? v - b : 3;
        for (int t = 0; t < 3; ++t) {
            std::size_t e = (t == 2) ? std::max(v, b + 1) : b + std::max<std::size_t>(1, remain / 3);
            span[t] = {b, e};
            b = e;
        }
    }
};

enum class NoiseEvent { none, erase, shift_left, shift_right, extend };

inline NoiseEvent draw_event(Rng& rng) {
    switch (rng.uniform(4)) {
        case 0: return NoiseEvent::erase;
        case 1: return NoiseEvent::shift_left;
        case 2: return NoiseEvent::shift_right;
        default: return NoiseEvent::extend;
    }
}

// Applies one event to a span inside a sentence of len tokens. Events that
// would leave the sentence bounds keep the span unchanged.
inline bool apply_event(NoiseEvent e, std::size_t len, std::size_t& first, std::size_t& last) {
    switch (e) {
        case NoiseEvent::none:
            return true;
        case NoiseEvent::erase:
            return false;
        case NoiseEvent::shift_left:
            if (first >= 1) {
                --first;
                --last;
            }
            return true;
        case NoiseEvent::shift_right:
            if (last < len) {
                ++first;
                ++last;
            }
            return true;
        case NoiseEvent::extend:
            if (last < len)
                ++last;
            else if (first >= 1)
                --first;
            return true;
    }
    return true;
}

struct SkeletonSentence {
    std::string sent_id;
    std::size_t length = 0;
    bool flagged = false;
    std::vector<std::size_t> word_ids;                                  // per token
    std::array<std::vector<std::pair<std::size_t, std::size_t>>, 3> gold;  // spans per label
    // Noise shared by all workers of a group, drawn once per gold span.
    std::array<std::vector<NoiseEvent>, 3> crowd_shared;
    std::array<std::vector<NoiseEvent>, 3> expert_shared;
};

inline std::vector<TokenSpan> clip_overlaps(const std::string& sent_id,
                                            std::vector<std::pair<std::size_t, std::size_t>> spans) {
    std::sort(spans.begin(), spans.end());
    std::vector<TokenSpan> out;
    std::size_t prev_end = 0;
    for (auto [f, l] : spans) {
        if (f < prev_end) f = prev_end;
        if (f >= l) continue;
        out.push_back(TokenSpan{sent_id, f, l});
        prev_end = l;
    }
    return out;
}

}  // namespace detail

/// Builds a corpus with planted difficulty. A fixed fraction of sentences is
/// flagged difficult: their text leans on a jargon vocabulary region and their
/// crowd annotations are corrupted at hard_noise_rate instead of
/// easy_noise_rate. Most of the corruption probability (0.9) is spent on
/// events shared by every annotator of a group, so it survives majority
/// aggregation; the rest lands on per-annotator events, which keep annotators
/// visibly disagreeing with each other. Expert layers (3 annotators) are
/// corrupted uniformly at expert_noise_rate. The output is a pure function of
/// the config.
inline SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const detail::VocabLayout vocab(cfg.vocab_size);

    const std::size_t total = cfg.num_docs * cfg.sentences_per_doc;
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const auto flagged_count =
        static_cast<std::size_t>(cfg.difficult_fraction * static_cast<double>(total) + 0.5);
    std::vector<char> flagged(total, 0);
    for (std::size_t i = 0; i < flagged_count && i < total; ++i) flagged[order[i]] = 1;

    auto pad = [](std::size_t v, int width) {
        std::string s = std::to_string(v);
        while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
        return s;
    };
    const int doc_w = std::max<int>(4, static_cast<int>(std::to_string(cfg.num_docs).size()));
    const int sent_w = std::max<int>(2, static_cast<int>(std::to_string(cfg.sentences_per_doc).size()));

    // Skeleton pass: lengths, gold spans, words, shared noise events.
    std::vector<detail::SkeletonSentence> skel(total);
    for (std::size_t d = 0; d < cfg.num_docs; ++d) {
        for (std::size_t s = 0; s < cfg.sentences_per_doc; ++s) {
            const std::size_t idx = d * cfg.sentences_per_doc + s;
            auto& sk = skel[idx];
            sk.sent_id = "d" + pad(d, doc_w) + "-s" + pad(s, sent_w);
            sk.flagged = flagged[idx] != 0;
            sk.length = 6 + rng.uniform(7);  // 6..12 tokens

            // Gold spans over disjoint positions, one free token of gap.
            std::size_t pos = 0;
            while (pos < sk.length) {
                if (rng.bernoulli(cfg.gold_span_rate)) {
                    const std::size_t len = 1 + rng.uniform(3);
                    const std::size_t end = std::min(sk.length, pos + len);
                    const auto label = static_cast<std::size_t>(rng.uniform(3));
                    sk.gold[label].emplace_back(pos, end);
                    pos = end + 1;
                } else {
                    ++pos;
                }
            }

            // Words: span positions lean on the label's span region and
            // background positions on easy or (for flagged sentences) mostly
            // jargon words, but both leak into each other so that lexical
            // identity alone cannot decide membership and the quality of the
            // training labels stays material.
            std::vector<int> label_at(sk.length, -1);
            for (int t = 0; t < 3; ++t)
                for (auto [f, l] : sk.gold[t])
                    for (std::size_t p = f; p < l; ++p) label_at[p] = t;
            sk.word_ids.resize(sk.length);
            auto background_word = [&]() {
                if (sk.flagged && rng.bernoulli(0.7))
                    return vocab.hard_begin + rng.uniform(vocab.hard_end - vocab.hard_begin);
                return vocab.easy_begin + rng.uniform(vocab.easy_end - vocab.easy_begin);
            };
            for (std::size_t p = 0; p < sk.length; ++p) {
                if (label_at[p] >= 0 && !rng.bernoulli(0.15)) {
                    const auto [b, e] = vocab.span[static_cast<std::size_t>(label_at[p])];
                    sk.word_ids[p] = b + rng.uniform(e - b);
                } else if (label_at[p] < 0 && rng.bernoulli(0.05)) {
                    const auto [b, e] = vocab.span[static_cast<std::size_t>(rng.uniform(3))];
                    sk.word_ids[p] = b + rng.uniform(e - b);
                } else {
                    sk.word_ids[p] = background_word();
                }
            }

            const double crowd_rate = sk.flagged ? cfg.hard_noise_rate : cfg.easy_noise_rate;
            for (int t = 0; t < 3; ++t) {
                sk.crowd_shared[t].resize(sk.gold[t].size(), detail::NoiseEvent::none);
                sk.expert_shared[t].resize(sk.gold[t].size(), detail::NoiseEvent::none);
                for (std::size_t g = 0; g < sk.gold[t].size(); ++g) {
                    if (rng.bernoulli(crowd_rate * 0.9)) sk.crowd_shared[t][g] = detail::draw_event(rng);
                    if (rng.bernoulli(cfg.expert_noise_rate * 0.9))
                        sk.expert_shared[t][g] = detail::draw_event(rng);
                }
            }
        }
    }

    // Assemble documents.
    std::vector<Document> docs(cfg.num_docs);
    for (std::size_t d = 0; d < cfg.num_docs; ++d) {
        Document& doc = docs[d];
        doc.doc_id = "d" + pad(d, doc_w);
        for (std::size_t s = 0; s < cfg.sentences_per_doc; ++s) {
            const auto& sk = skel[d * cfg.sentences_per_doc + s];
            Sentence sent;
            sent.sent_id = sk.sent_id;
            sent.doc_id = doc.doc_id;
            if (!doc.text.empty()) doc.text += ' ';
            sent.start = doc.text.size();
            for (std::size_t p = 0; p < sk.length; ++p) {
                if (p > 0) doc.text += ' ';
                const std::string w = detail::synth_word(sk.word_ids[p]);
                Token tok{w, doc.text.size(), doc.text.size() + w.size()};
                doc.text += w;
                sent.tokens.push_back(std::move(tok));
            }
            sent.end = doc.text.size();
            doc.sentences.push_back(std::move(sent));
        }
    }

    SyntheticCorpus out;
    out.corpus = Corpus(std::move(docs));
    for (const auto& sk : skel) out.difficult[sk.sent_id] = sk.flagged;

    // Gold layers.
    for (int t = 0; t < 3; ++t) {
        std::vector<TokenSpan> spans;
        for (const auto& sk : skel)
            for (auto [f, l] : sk.gold[t]) spans.push_back(TokenSpan{sk.sent_id, f, l});
        out.gold.emplace_back("gold", Group::expert, kAllLabelTypes[t], std::move(spans));
    }

    // Noisy layers for one annotator of a group.
    auto make_noisy_layer = [&](const std::string& annotator, Group group, int t,
                                bool is_crowd) -> AnnotationLayer {
        std::vector<TokenSpan> spans;
        for (const auto& sk : skel) {
            const double rate = is_crowd ? (sk.flagged ? cfg.hard_noise_rate : cfg.easy_noise_rate)
                                         : cfg.expert_noise_rate;
            const auto& shared = is_crowd ? sk.crowd_shared[t] : sk.expert_shared[t];
            std::vector<std::pair<std::size_t, std::size_t>> sent_spans;
            for (std::size_t g = 0; g < sk.gold[t].size(); ++g) {
                auto [f, l] = sk.gold[t][g];
                detail::NoiseEvent ev = shared[g];
                if (ev == detail::NoiseEvent::none && rng.bernoulli(rate * 0.1))
                    ev = detail::draw_event(rng);
                if (detail::apply_event(ev, sk.length, f, l)) sent_spans.emplace_back(f, l);
            }
            if (rng.bernoulli(rate * 0.25)) {
                const std::size_t len = 1 + rng.uniform(3);
                const std::size_t f = rng.uniform(sk.length);
                const std::size_t l = std::min(sk.length, f + len);
                const bool overlaps = std::any_of(
                    sent_spans.begin(), sent_spans.end(),
                    [&](const auto& sp) { return f < sp.second && sp.first < l; });
                if (!overlaps && f < l) sent_spans.emplace_back(f, l);
            }
            for (auto& sp : detail::clip_overlaps(sk.sent_id, std::move(sent_spans)))
                spans.push_back(std::move(sp));
        }
        return AnnotationLayer(annotator, group, kAllLabelTypes[t], std::move(spans));
    };

    for (std::size_t w = 0; w < cfg.crowd_workers_per_sentence; ++w)
        for (int t = 0; t < 3; ++t)
            out.crowd.push_back(make_noisy_layer("crowd" + pad(w, 2), Group::crowd, t, true));
    constexpr std::size_t kExpertAnnotators = 3;
    for (std::size_t w = 0; w < kExpertAnnotators; ++w)
        for (int t = 0; t < 3; ++t)
            out.expert.push_back(make_noisy_layer("expert" + pad(w, 2), Group::expert, t, false));

    return out;
}

}  // namespace annodiff
