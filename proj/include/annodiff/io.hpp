#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "annodiff/annotation.hpp"
#include "annodiff/common.hpp"
#include "annodiff/corpus.hpp"
#include "annodiff/scoring.hpp"

namespace annodiff {

using Json = nlohmann::ordered_json;

/// Shortest round-trip decimal form, used for CSV cells.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) return std::to_string(v);
    return std::string(buf, ptr);
}

/// Writes content to a temp file in the same directory, then renames it over
/// the target so readers never observe a partial file.
inline void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
        out << content;
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw std::runtime_error("rename failed for " + path + ": " + ec.message());
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace detail {

inline Json meta_line(const Json& plan) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["meta"] = Json{{"plan", plan}};
    return j;
}

/// Calls fn(parsed json, line number) for every data line. Lines carrying a
/// "meta" key are headers and skipped. Parse errors name file and line.
inline void for_each_jsonl(const std::string& path,
                           const std::function<void(const Json&, std::size_t)>& fn,
                           bool require_schema = true) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": malformed JSON: " + e.what());
        }
        if (!j.is_object())
            throw ValidationError(path + ":" + std::to_string(lineno) + ": expected a JSON object");
        if (j.contains("meta")) continue;
        if (require_schema && (!j.contains("schema_version") || j["schema_version"] != kSchemaVersion))
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": missing or unsupported schema_version");
        fn(j, lineno);
    }
}

template <typename T>
T require(const Json& j, const char* key, const std::string& path, std::size_t lineno) {
    if (!j.contains(key))
        throw ValidationError(path + ":" + std::to_string(lineno) + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ":" + std::to_string(lineno) + ": bad field '" + key +
                              "': " + e.what());
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Corpus JSONL
// ---------------------------------------------------------------------------

inline std::string corpus_to_jsonl(const Corpus& corpus, const std::optional<Json>& plan = {}) {
    std::ostringstream out;
    if (plan) out << detail::meta_line(*plan).dump() << '\n';
    for (const auto& doc : corpus.documents()) {
        Json sentences = Json::array();
        for (const auto& s : doc.sentences) {
            Json tokens = Json::array();
            for (const auto& t : s.tokens) tokens.push_back(Json{{"start", t.start}, {"end", t.end}});
            sentences.push_back(Json{{"sent_id", s.sent_id},
                                     {"start", s.start},
                                     {"end", s.end},
                                     {"tokens", std::move(tokens)}});
        }
        Json j{{"schema_version", kSchemaVersion},
               {"doc_id", doc.doc_id},
               {"text", doc.text},
               {"sentences", std::move(sentences)}};
        out << j.dump() << '\n';
    }
    return out.str();
}

struct CorpusLoadResult {
    Corpus corpus;
    std::vector<AnnotationLayer> layers;
    std::size_t dropped_sentences = 0;  // fewer than two tokens
    std::size_t dropped_spans = 0;      // referenced a dropped sentence
    std::set<std::string> dropped_sent_ids;
};

namespace detail {

inline Document parse_document(const Json& j, const std::string& path, std::size_t lineno,
                               CorpusLoadResult& result) {
    Document doc;
    doc.doc_id = require<std::string>(j, "doc_id", path, lineno);
    doc.text = require<std::string>(j, "text", path, lineno);
    const Json sentences = require<Json>(j, "sentences", path, lineno);
    std::size_t prev_sent_end = 0;
    for (const auto& sj : sentences) {
        Sentence s;
        s.doc_id = doc.doc_id;
        s.sent_id = require<std::string>(sj, "sent_id", path, lineno);
        s.start = require<std::size_t>(sj, "start", path, lineno);
        s.end = require<std::size_t>(sj, "end", path, lineno);
        if (s.start >= s.end || s.end > doc.text.size() || s.start < prev_sent_end)
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": bad sentence range for " + s.sent_id);
        prev_sent_end = s.end;
        std::size_t prev_tok_end = s.start;
        for (const auto& tj : require<Json>(sj, "tokens", path, lineno)) {
            Token t;
            t.start = require<std::size_t>(tj, "start", path, lineno);
            t.end = require<std::size_t>(tj, "end", path, lineno);
            if (t.start >= t.end || t.start < prev_tok_end || t.end > s.end)
                throw ValidationError(path + ":" + std::to_string(lineno) +
                                      ": bad token range in " + s.sent_id);
            prev_tok_end = t.end;
            t.text = doc.text.substr(t.start, t.end - t.start);
            s.tokens.push_back(std::move(t));
        }
        if (s.tokens.size() < 2) {
            ++result.dropped_sentences;
            result.dropped_sent_ids.insert(s.sent_id);
            continue;
        }
        doc.sentences.push_back(std::move(s));
    }
    return doc;
}

}  // namespace detail

inline std::vector<TokenSpan> parse_layer_spans(const Json& j, const std::string& path,
                                                std::size_t lineno) {
    std::vector<TokenSpan> spans;
    for (const auto& sp : detail::require<Json>(j, "spans", path, lineno)) {
        TokenSpan s;
        s.sent_id = detail::require<std::string>(sp, "sent_id", path, lineno);
        s.first = detail::require<std::size_t>(sp, "first", path, lineno);
        s.last = detail::require<std::size_t>(sp, "last", path, lineno);
        spans.push_back(std::move(s));
    }
    return spans;
}

/// Loads a corpus and annotation layers. Sentences with fewer than two tokens
/// are dropped (counted in the result); spans referencing them are discarded.
/// Spans referencing a sent_id the corpus never contained are an error.
inline CorpusLoadResult load_corpus(const std::string& corpus_path,
                                    const std::vector<std::string>& annotation_paths) {
    CorpusLoadResult result;
    std::vector<Document> docs;
    detail::for_each_jsonl(corpus_path, [&](const Json& j, std::size_t lineno) {
        docs.push_back(detail::parse_document(j, corpus_path, lineno, result));
    });
    result.corpus = Corpus(std::move(docs));

    for (const auto& path : annotation_paths) {
        detail::for_each_jsonl(path, [&](const Json& j, std::size_t lineno) {
            const auto annotator = detail::require<std::string>(j, "annotator_id", path, lineno);
            const auto group = group_from(detail::require<std::string>(j, "group", path, lineno));
            const auto label =
                label_type_from(detail::require<std::string>(j, "label_type", path, lineno));
            std::vector<TokenSpan> kept;
            for (auto& s : parse_layer_spans(j, path, lineno)) {
                if (result.dropped_sent_ids.count(s.sent_id) != 0) {
                    ++result.dropped_spans;
                    continue;
                }
                if (!result.corpus.has_sentence(s.sent_id))
                    throw ValidationError(path + ":" + std::to_string(lineno) +
                                          ": span references unknown sent_id: " + s.sent_id);
                if (s.last > result.corpus.sentence(s.sent_id).size() || s.first >= s.last)
                    throw ValidationError(path + ":" + std::to_string(lineno) +
                                          ": span out of bounds in sentence " + s.sent_id);
                kept.push_back(std::move(s));
            }
            try {
                result.layers.emplace_back(annotator, group, label, std::move(kept));
            } catch (const ValidationError& e) {
                throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
        });
    }
    return result;
}

inline std::string layers_to_jsonl(const std::vector<AnnotationLayer>& layers,
                                   const std::optional<Json>& plan = {}) {
    std::ostringstream out;
    if (plan) out << detail::meta_line(*plan).dump() << '\n';
    for (const auto& layer : layers) {
        Json spans = Json::array();
        for (const auto& s : layer.spans())
            spans.push_back(Json{{"sent_id", s.sent_id}, {"first", s.first}, {"last", s.last}});
        Json j{{"schema_version", kSchemaVersion},
               {"annotator_id", layer.annotator_id()},
               {"group", to_string(layer.group())},
               {"label_type", to_string(layer.label_type())},
               {"spans", std::move(spans)}};
        out << j.dump() << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Difficulty records: JSONL and CSV
// ---------------------------------------------------------------------------

inline std::string records_to_jsonl(const std::vector<DifficultyRecord>& records,
                                    const std::optional<Json>& plan = {}) {
    std::ostringstream out;
    if (plan) out << detail::meta_line(*plan).dump() << '\n';
    for (const auto& r : records) {
        Json j{{"schema_version", kSchemaVersion},
               {"sent_id", r.sent_id},
               {"label_type", to_string(r.label_type)},
               {"score", r.score},
               {"source", to_string(r.source)}};
        out << j.dump() << '\n';
    }
    return out.str();
}

inline std::string records_to_csv(const std::vector<DifficultyRecord>& records,
                                  const std::optional<Json>& plan = {}) {
    std::ostringstream out;
    out << "# schema_version=" << kSchemaVersion << '\n';
    if (plan) out << "# plan=" << plan->dump() << '\n';
    out << "sent_id,label_type,score,source\n";
    for (const auto& r : records) {
        out << r.sent_id << ',' << to_string(r.label_type) << ',' << format_double(r.score) << ','
            << to_string(r.source) << '\n';
    }
    return out.str();
}

inline std::vector<DifficultyRecord> load_records(const std::string& path) {
    std::vector<DifficultyRecord> records;
    detail::for_each_jsonl(path, [&](const Json& j, std::size_t lineno) {
        DifficultyRecord r;
        r.sent_id = detail::require<std::string>(j, "sent_id", path, lineno);
        r.label_type = label_type_from(detail::require<std::string>(j, "label_type", path, lineno));
        r.score = detail::require<double>(j, "score", path, lineno);
        r.source = difficulty_source_from(detail::require<std::string>(j, "source", path, lineno));
        if (r.score < 0.0 || r.score > 1.0)
            throw ValidationError(path + ":" + std::to_string(lineno) + ": score outside [0,1]");
        records.push_back(std::move(r));
    });
    return records;
}

// ---------------------------------------------------------------------------
// Planted difficulty flags
// ---------------------------------------------------------------------------

inline std::string flags_to_jsonl(const std::map<std::string, bool>& flags,
                                  const std::optional<Json>& plan = {}) {
    std::ostringstream out;
    if (plan) out << detail::meta_line(*plan).dump() << '\n';
    for (const auto& [sent_id, difficult] : flags) {
        Json j{{"schema_version", kSchemaVersion}, {"sent_id", sent_id}, {"difficult", difficult}};
        out << j.dump() << '\n';
    }
    return out.str();
}

inline std::map<std::string, bool> load_flags(const std::string& path) {
    std::map<std::string, bool> flags;
    detail::for_each_jsonl(path, [&](const Json& j, std::size_t lineno) {
        flags[detail::require<std::string>(j, "sent_id", path, lineno)] =
            detail::require<bool>(j, "difficult", path, lineno);
    });
    return flags;
}

// ---------------------------------------------------------------------------
// Raw document JSONL (ingest input): {"doc_id", "text"}
// ---------------------------------------------------------------------------

struct RawDocument {
    std::string doc_id;
    std::string text;
};

inline std::vector<RawDocument> load_raw_documents(const std::string& path) {
    std::vector<RawDocument> docs;
    detail::for_each_jsonl(
        path,
        [&](const Json& j, std::size_t lineno) {
            docs.push_back(RawDocument{detail::require<std::string>(j, "doc_id", path, lineno),
                                       detail::require<std::string>(j, "text", path, lineno)});
        },
        /*require_schema=*/false);
    return docs;
}

struct IngestResult {
    Corpus corpus;
    std::size_t dropped_sentences = 0;
};

/// Splits and tokenizes raw documents into a corpus. Sentence ids are the
/// doc_id plus a zero-padded sentence index; sentences with fewer than two
/// tokens are dropped and counted.
inline IngestResult ingest_documents(const std::vector<RawDocument>& raw) {
    IngestResult result;
    std::vector<Document> docs;
    for (const auto& rd : raw) {
        Document doc;
        doc.doc_id = rd.doc_id;
        doc.text = rd.text;
        std::size_t index = 0;
        for (const auto& [begin, end] : split_sentences(doc.text)) {
            Sentence s;
            s.doc_id = doc.doc_id;
            s.start = begin;
            s.end = end;
            s.tokens = tokenize(doc.text, begin, end);
            if (s.tokens.size() < 2) {
                ++result.dropped_sentences;
                continue;
            }
            char suffix[16];
            std::snprintf(suffix, sizeof(suffix), "-s%04zu", index++);
            s.sent_id = doc.doc_id + suffix;
            doc.sentences.push_back(std::move(s));
        }
        docs.push_back(std::move(doc));
    }
    result.corpus = Corpus(std::move(docs));
    return result;
}

inline Json load_json_file(const std::string& path) {
    try {
        return Json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path + ": malformed JSON: " + std::string(e.what()));
    }
}

}  // namespace annodiff
