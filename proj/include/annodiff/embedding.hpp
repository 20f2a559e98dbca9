#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "annodiff/common.hpp"
#include "annodiff/crf.hpp"
#include "annodiff/rng.hpp"

namespace annodiff {

/// Fixed word vectors. Lookups are lowercased; unknown words act as zero
/// vectors and still count toward the mean, so heavily out-of-vocabulary
/// sentences shrink toward the origin.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::size_t dim, std::unordered_map<std::string, std::vector<double>> vectors)
        : dim_(dim), vectors_(std::move(vectors)) {
        for (const auto& [w, v] : vectors_)
            if (v.size() != dim_)
                throw ValidationError("embedding dimension mismatch for word: " + w);
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return vectors_.size(); }
    const std::unordered_map<std::string, std::vector<double>>& vectors() const { return vectors_; }

    const std::vector<double>* find(const std::string& word) const {
        auto it = vectors_.find(detail::lower_ascii(word));
        return it == vectors_.end() ? nullptr : &it->second;
    }

    std::vector<double> mean_vector(const std::vector<std::string>& tokens) const {
        std::vector<double> mean(dim_, 0.0);
        if (tokens.empty()) return mean;
        for (const auto& tok : tokens) {
            if (const auto* v = find(tok))
                for (std::size_t i = 0; i < dim_; ++i) mean[i] += (*v)[i];
        }
        for (auto& x : mean) x /= static_cast<double>(tokens.size());
        return mean;
    }

    /// Text format: one word per line followed by its components; an optional
    /// first line with just "count dim" is accepted and skipped.
    static EmbeddingTable load_text(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open embeddings file: " + path);
        std::unordered_map<std::string, std::vector<double>> vectors;
        std::size_t dim = 0;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string word;
            ss >> word;
            std::vector<double> v;
            double x;
            while (ss >> x) v.push_back(x);
            if (lineno == 1 && v.size() == 1 && !word.empty() &&
                word.find_first_not_of("0123456789") == std::string::npos)
                continue;  // header line "count dim"
            if (v.empty())
                throw ValidationError(path + ":" + std::to_string(lineno) +
                                      ": no vector components");
            if (dim == 0) dim = v.size();
            if (v.size() != dim)
                throw ValidationError(path + ":" + std::to_string(lineno) +
                                      ": inconsistent embedding dimension");
            vectors[detail::lower_ascii(word)] = std::move(v);
        }
        if (vectors.empty()) throw ValidationError("empty embeddings file: " + path);
        return EmbeddingTable(dim, std::move(vectors));
    }

    std::string to_text() const {
        std::vector<std::string> words;
        words.reserve(vectors_.size());
        for (const auto& [w, v] : vectors_) words.push_back(w);
        std::sort(words.begin(), words.end());
        std::ostringstream out;
        out << words.size() << ' ' << dim_ << '\n';
        for (const auto& w : words) {
            out << w;
            for (double x : vectors_.at(w)) {
                char buf[64];
                auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
                out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
            }
            out << '\n';
        }
        return out.str();
    }

    /// Deterministic random vectors for a vocabulary, components uniform in
    /// [-0.5, 0.5]. Words are sorted first so the seed alone fixes the table.
    static EmbeddingTable seeded_random(std::vector<std::string> vocab, std::size_t dim,
                                        std::uint64_t seed) {
        if (dim == 0) throw ValidationError("embedding dimension must be positive");
        for (auto& w : vocab) w = detail::lower_ascii(w);
        std::sort(vocab.begin(), vocab.end());
        vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
        Rng rng(seed);
        std::unordered_map<std::string, std::vector<double>> vectors;
        vectors.reserve(vocab.size());
        for (const auto& w : vocab) {
            std::vector<double> v(dim);
            for (auto& x : v) x = rng.real() - 0.5;
            vectors[w] = std::move(v);
        }
        return EmbeddingTable(dim, std::move(vectors));
    }

private:
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::vector<double>> vectors_;
};

}  // namespace annodiff
