#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "annodiff/common.hpp"

namespace annodiff {

struct Token {
    std::string text;
    std::size_t start = 0;  // char offset into the document text
    std::size_t end = 0;    // exclusive
};

struct Sentence {
    std::string sent_id;
    std::string doc_id;
    std::size_t start = 0;  // char range of the sentence in the document text
    std::size_t end = 0;
    std::vector<Token> tokens;

    std::size_t size() const { return tokens.size(); }
};

struct Document {
    std::string doc_id;
    std::string text;
    std::vector<Sentence> sentences;
};

class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<Document> docs) : docs_(std::move(docs)) { reindex(); }

    const std::vector<Document>& documents() const { return docs_; }
    std::size_t num_documents() const { return docs_.size(); }

    std::size_t num_sentences() const {
        std::size_t n = 0;
        for (const auto& d : docs_) n += d.sentences.size();
        return n;
    }

    bool has_sentence(const std::string& sent_id) const { return by_sent_.count(sent_id) != 0; }

    const Sentence& sentence(const std::string& sent_id) const {
        auto it = by_sent_.find(sent_id);
        if (it == by_sent_.end()) throw ValidationError("unknown sent_id: " + sent_id);
        return docs_[it->second.first].sentences[it->second.second];
    }

    const Document& document(const std::string& doc_id) const {
        auto it = by_doc_.find(doc_id);
        if (it == by_doc_.end()) throw ValidationError("unknown doc_id: " + doc_id);
        return docs_[it->second];
    }

    bool has_document(const std::string& doc_id) const { return by_doc_.count(doc_id) != 0; }

    /// Sentences in corpus order (documents in order, sentences within each).
    template <typename Fn>
    void for_each_sentence(Fn&& fn) const {
        for (const auto& d : docs_)
            for (const auto& s : d.sentences) fn(s);
    }

    std::vector<std::string> doc_ids() const {
        std::vector<std::string> ids;
        ids.reserve(docs_.size());
        for (const auto& d : docs_) ids.push_back(d.doc_id);
        return ids;
    }

    /// New corpus holding copies of the named documents, in this corpus's
    /// document order regardless of the order ids are given in.
    template <typename Container>
    Corpus subset(const Container& keep_doc_ids) const {
        std::set<std::string> keep(keep_doc_ids.begin(), keep_doc_ids.end());
        for (const auto& id : keep)
            if (by_doc_.count(id) == 0) throw ValidationError("unknown doc_id: " + id);
        std::vector<Document> docs;
        for (const auto& d : docs_)
            if (keep.count(d.doc_id) != 0) docs.push_back(d);
        return Corpus(std::move(docs));
    }

private:
    void reindex() {
        by_doc_.clear();
        by_sent_.clear();
        for (std::size_t di = 0; di < docs_.size(); ++di) {
            if (!by_doc_.emplace(docs_[di].doc_id, di).second)
                throw ValidationError("duplicate doc_id: " + docs_[di].doc_id);
            for (std::size_t si = 0; si < docs_[di].sentences.size(); ++si) {
                const auto& s = docs_[di].sentences[si];
                if (!by_sent_.emplace(s.sent_id, std::make_pair(di, si)).second)
                    throw ValidationError("duplicate sent_id: " + s.sent_id);
            }
        }
    }

    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> by_doc_;
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> by_sent_;
};

namespace detail {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
inline bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
inline bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }

// Multi-byte UTF-8 units are treated like letters so they never split.
inline bool is_wordchar(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) != 0 || u >= 0x80;
}

inline std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace detail

/// Whitespace + punctuation tokenization of text[begin, end). Punctuation
/// chars become single-char tokens, except '.'/',' flanked by digits, which
/// stay inside the token ("2.5" is one token).
inline std::vector<Token> tokenize(std::string_view text, std::size_t begin, std::size_t end) {
    std::vector<Token> tokens;
    std::size_t i = begin;
    while (i < end) {
        const char c = text[i];
        if (detail::is_space(c)) {
            ++i;
            continue;
        }
        std::size_t j = i;
        if (detail::is_wordchar(c)) {
            while (j < end) {
                if (detail::is_wordchar(text[j])) {
                    ++j;
                    continue;
                }
                if ((text[j] == '.' || text[j] == ',') && j > i && detail::is_digit(text[j - 1]) &&
                    j + 1 < end && detail::is_digit(text[j + 1])) {
                    ++j;
                    continue;
                }
                break;
            }
        } else {
            j = i + 1;
        }
        tokens.push_back(Token{std::string(text.substr(i, j - i)), i, j});
        i = j;
    }
    return tokens;
}

inline std::vector<Token> tokenize(std::string_view text) { return tokenize(text, 0, text.size()); }

namespace detail {

inline const std::set<std::string>& abbreviations() {
    static const std::set<std::string> abbr = {
        "dr",  "mr",   "mrs", "ms",  "prof", "fig", "figs", "eg",  "ie",     "etc",
        "vs",  "al",   "st",  "no",  "inc",  "ltd", "co",   "jr",  "sr",     "ca",
        "cf",  "resp", "approx", "dept", "univ", "vol", "pp", "ed", "eds"};
    return abbr;
}

// Word immediately preceding position i (scanning back over word chars).
inline std::string word_before(std::string_view text, std::size_t i) {
    std::size_t e = i;
    std::size_t b = e;
    while (b > 0 && is_wordchar(text[b - 1])) --b;
    return lowercase(text.substr(b, e - b));
}

}  // namespace detail

/// Rule-based sentence splitting: a terminal '.', '?' or '!' ends a sentence
/// when followed by whitespace and then an uppercase letter or digit.
/// Protected: known abbreviations before '.', and '.' inside digit.digit.
/// Ranges are trimmed of surrounding whitespace and cover all non-whitespace.
inline std::vector<std::pair<std::size_t, std::size_t>> split_sentences(std::string_view text) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    const std::size_t n = text.size();

    auto emit = [&](std::size_t b, std::size_t e) {
        while (b < e && detail::is_space(text[b])) ++b;
        while (e > b && detail::is_space(text[e - 1])) --e;
        if (b < e) ranges.emplace_back(b, e);
    };

    std::size_t start = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const char c = text[i];
        if (c != '.' && c != '?' && c != '!') continue;
        if (c == '.') {
            if (i > 0 && detail::is_digit(text[i - 1]) && i + 1 < n && detail::is_digit(text[i + 1]))
                continue;  // decimal point
            if (detail::abbreviations().count(detail::word_before(text, i)) != 0) continue;
        }
        // Absorb any run of closing punctuation after the terminal.
        std::size_t j = i + 1;
        while (j < n && (text[j] == ')' || text[j] == ']' || text[j] == '"' || text[j] == '\'')) ++j;
        if (j >= n) continue;  // end of text closes the final sentence below
        if (!detail::is_space(text[j])) continue;
        std::size_t k = j;
        while (k < n && detail::is_space(text[k])) ++k;
        if (k < n && !(detail::is_upper(text[k]) || detail::is_digit(text[k]))) continue;
        emit(start, j);
        start = k;
        i = k > 0 ? k - 1 : 0;
    }
    emit(start, n);
    return ranges;
}

}  // namespace annodiff
