#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "annodiff/annotation.hpp"
#include "annodiff/corpus.hpp"
#include "annodiff/io.hpp"

#include "helpers.hpp"

using namespace annodiff;

namespace {

std::vector<std::string> words(const std::vector<Token>& tokens) {
    std::vector<std::string> out;
    for (const auto& t : tokens) out.push_back(t.text);
    return out;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("annodiff_corpus_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

}  // namespace

TEST_CASE("tokenize keeps decimals together and splits punctuation") {
    const auto tokens = tokenize("Dose was 2.5 mg daily.");
    CHECK(words(tokens) == std::vector<std::string>{"Dose", "was", "2.5", "mg", "daily", "."});
}

TEST_CASE("tokenize records character offsets") {
    const std::string text = "Ab, cd!";
    const auto tokens = tokenize(text);
    REQUIRE(tokens.size() == 4);
    CHECK(tokens[0].text == "Ab");
    CHECK(tokens[0].start == 0);
    CHECK(tokens[0].end == 2);
    CHECK(tokens[1].text == ",");
    CHECK(tokens[1].start == 2);
    CHECK(tokens[2].text == "cd");
    CHECK(tokens[2].start == 4);
    CHECK(tokens[3].text == "!");
    CHECK(tokens[3].end == text.size());
}

TEST_CASE("tokenize handles thousands separators and trailing dots") {
    CHECK(words(tokenize("1,000 units")) == std::vector<std::string>{"1,000", "units"});
    CHECK(words(tokenize("end.")) == std::vector<std::string>{"end", "."});
    CHECK(words(tokenize("")) == std::vector<std::string>{});
    CHECK(words(tokenize("   ")) == std::vector<std::string>{});
}

TEST_CASE("split_sentences breaks on terminators followed by uppercase") {
    const std::string text = "Hello world. Goodbye now.";
    const auto ranges = split_sentences(text);
    REQUIRE(ranges.size() == 2);
    CHECK(text.substr(ranges[0].first, ranges[0].second - ranges[0].first) == "Hello world.");
    CHECK(text.substr(ranges[1].first, ranges[1].second - ranges[1].first) == "Goodbye now.");
}

TEST_CASE("split_sentences keeps decimals inside one sentence") {
    const auto ranges = split_sentences("Dose was 2.5 mg daily.");
    CHECK(ranges.size() == 1);
}

TEST_CASE("corpus lookups and subsetting") {
    auto corpus = testutil::make_corpus({
        testutil::make_sentence("d1-s1", "d1", {"a", "b"}),
        testutil::make_sentence("d1-s2", "d1", {"c", "d"}),
        testutil::make_sentence("d2-s1", "d2", {"e", "f"}),
    });
    CHECK(corpus.num_documents() == 2);
    CHECK(corpus.num_sentences() == 3);
    CHECK(corpus.has_sentence("d1-s2"));
    CHECK_FALSE(corpus.has_sentence("nope"));
    CHECK(corpus.sentence("d2-s1").doc_id == "d2");
    CHECK_THROWS_AS(corpus.sentence("nope"), ValidationError);

    const auto sub = corpus.subset(std::vector<std::string>{"d2"});
    CHECK(sub.num_documents() == 1);
    CHECK(sub.has_sentence("d2-s1"));
    CHECK_FALSE(sub.has_sentence("d1-s1"));
    CHECK_THROWS_AS(corpus.subset(std::vector<std::string>{"ghost"}), ValidationError);
}

TEST_CASE("corpus rejects duplicate identifiers") {
    std::vector<Document> docs(2);
    docs[0].doc_id = "same";
    docs[1].doc_id = "same";
    CHECK_THROWS_AS(Corpus(std::move(docs)), ValidationError);
}

TEST_CASE("annotation layer normalizes and validates spans") {
    AnnotationLayer layer("w1", Group::crowd, LabelType::P,
                          {TokenSpan{"s1", 3, 5}, TokenSpan{"s1", 0, 2}});
    const auto& spans = layer.spans();
    REQUIRE(spans.size() == 2);
    CHECK(spans[0].first == 0);
    CHECK(spans[1].first == 3);
    CHECK(layer.covers("s1", 1));
    CHECK_FALSE(layer.covers("s1", 2));
    CHECK(layer.covers("s1", 4));

    CHECK_THROWS_AS(AnnotationLayer("w", Group::crowd, LabelType::P,
                                    {TokenSpan{"s1", 2, 2}}),
                    ValidationError);
    CHECK_THROWS_AS(AnnotationLayer("w", Group::crowd, LabelType::P,
                                    {TokenSpan{"s1", 0, 3}, TokenSpan{"s1", 2, 4}}),
                    ValidationError);
}

TEST_CASE("token count vector and majority mask") {
    const auto s = testutil::make_sentence("s1", "d1", {"a", "b", "c", "d"});
    AnnotationLayer w1("w1", Group::crowd, LabelType::P, {TokenSpan{"s1", 0, 2}});
    AnnotationLayer w2("w2", Group::crowd, LabelType::P, {TokenSpan{"s1", 1, 3}});
    AnnotationLayer w3("w3", Group::crowd, LabelType::P, {TokenSpan{"s1", 1, 2}});

    CHECK(token_count_vector(s, {w1, w2, w3}) == std::vector<int>{1, 3, 1, 0});

    const auto mask = majority_mask(s, {w1, w2, w3});
    CHECK(mask == std::vector<bool>{false, true, false, false});

    const auto spans = mask_to_spans("s1", mask);
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].first == 1);
    CHECK(spans[0].last == 2);
}

TEST_CASE("strict majority means ties stay unannotated") {
    const auto s = testutil::make_sentence("s1", "d1", {"a", "b"});
    AnnotationLayer w1("w1", Group::crowd, LabelType::P, {TokenSpan{"s1", 0, 1}});
    AnnotationLayer w2("w2", Group::crowd, LabelType::P, {});
    const auto mask = majority_mask(s, {w1, w2});
    CHECK(mask == std::vector<bool>{false, false});
}

TEST_CASE("ingest builds sentence ids and round-trips through jsonl") {
    std::vector<RawDocument> raw{
        {"a1", "Dose was 2.5 mg daily. Patients improved."},
        {"a2", "Placebo group showed no change."},
    };
    const auto result = ingest_documents(raw);
    CHECK(result.corpus.num_documents() == 2);
    CHECK(result.corpus.num_sentences() == 3);
    CHECK(result.corpus.has_sentence("a1-s0000"));
    CHECK(result.corpus.has_sentence("a1-s0001"));
    const auto& s = result.corpus.sentence("a1-s0000");
    CHECK(words(s.tokens) == std::vector<std::string>{"Dose", "was", "2.5", "mg", "daily", "."});

    TempDir dir;
    const auto path = dir.file("corpus.jsonl");
    atomic_write(path, corpus_to_jsonl(result.corpus, Json{{"command", "test"}}));
    const auto loaded = load_corpus(path, {});
    CHECK(loaded.corpus.num_documents() == 2);
    CHECK(loaded.corpus.num_sentences() == 3);
    const auto& s2 = loaded.corpus.sentence("a1-s0000");
    CHECK(words(s2.tokens) == words(s.tokens));
    CHECK(s2.tokens[2].start == s.tokens[2].start);
}

TEST_CASE("ingest drops sentences shorter than two tokens") {
    std::vector<RawDocument> raw{{"a1", "This one stays. Bye"}};
    const auto result = ingest_documents(raw);
    CHECK(result.dropped_sentences == 1);
    CHECK(result.corpus.num_sentences() == 1);
}

TEST_CASE("corpus loader drops short sentences and their spans") {
    TempDir dir;
    const auto corpus_path = dir.file("c.jsonl");
    const auto ann_path = dir.file("a.jsonl");
    {
        std::ofstream out(corpus_path);
        out << R"({"schema_version":"1","doc_id":"d1","text":"Hi. Both tokens stay here.",)"
            << R"("sentences":[{"sent_id":"d1-s0","start":0,"end":3,"tokens":[{"start":0,"end":2}]},)"
            << R"({"sent_id":"d1-s1","start":4,"end":26,"tokens":[{"start":4,"end":8},{"start":9,"end":15},{"start":16,"end":20},{"start":21,"end":25},{"start":25,"end":26}]}]})"
            << "\n";
    }
    {
        std::ofstream out(ann_path);
        out << R"({"schema_version":"1","annotator_id":"w1","group":"crowd","label_type":"P",)"
            << R"("spans":[{"sent_id":"d1-s0","first":0,"last":1},{"sent_id":"d1-s1","first":0,"last":2}]})"
            << "\n";
    }
    const auto loaded = load_corpus(corpus_path, {ann_path});
    CHECK(loaded.dropped_sentences == 1);
    CHECK(loaded.dropped_spans == 1);
    CHECK(loaded.corpus.num_sentences() == 1);
    REQUIRE(loaded.layers.size() == 1);
    CHECK(loaded.layers[0].spans().size() == 1);
    CHECK(loaded.layers[0].spans()[0].sent_id == "d1-s1");
}

TEST_CASE("loader reports file and line on malformed input") {
    TempDir dir;
    const auto path = dir.file("bad.jsonl");
    {
        std::ofstream out(path);
        out << R"({"schema_version":"1","doc_id":"d1","text":"ok","sentences":[]})" << "\n";
        out << "not json\n";
    }
    try {
        load_corpus(path, {});
        FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(":2") != std::string::npos);
        CHECK(msg.find("bad.jsonl") != std::string::npos);
    }
}

TEST_CASE("annotation loader requires schema version") {
    TempDir dir;
    const auto path = dir.file("a.jsonl");
    {
        std::ofstream out(path);
        out << R"({"annotator_id":"w1","group":"crowd","label_type":"P","spans":[]})" << "\n";
    }
    CHECK_THROWS_AS(load_corpus(dir.file("missing.jsonl"), {}), ValidationError);
    TempDir dir2;
    const auto corpus_path = dir2.file("c.jsonl");
    {
        std::ofstream out(corpus_path);
        out << R"({"schema_version":"1","doc_id":"d1","text":"a b",)"
            << R"("sentences":[{"sent_id":"s1","start":0,"end":3,"tokens":[{"start":0,"end":1},{"start":2,"end":3}]}]})"
            << "\n";
    }
    CHECK_THROWS_AS(load_corpus(corpus_path, {path}), ValidationError);
}

TEST_CASE("atomic_write replaces content completely") {
    TempDir dir;
    const auto path = dir.file("out.txt");
    atomic_write(path, "first version, long enough to notice truncation\n");
    atomic_write(path, "second\n");
    CHECK(read_file(path) == "second\n");
}

TEST_CASE("difficulty records round-trip through jsonl and csv comments echo the plan") {
    std::vector<DifficultyRecord> records{
        {"s1", LabelType::P, 0.25, DifficultySource::reference},
        {"s2", LabelType::P, 1.0, DifficultySource::reference},
    };
    const Json plan{{"command", "score"}};
    TempDir dir;
    const auto jsonl_path = dir.file("r.jsonl");
    atomic_write(jsonl_path, records_to_jsonl(records, plan));
    const auto loaded = load_records(jsonl_path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].sent_id == "s1");
    CHECK(loaded[0].score == 0.25);
    CHECK(loaded[1].score == 1.0);

    const auto csv = records_to_csv(records, plan);
    CHECK(csv.find("# schema_version=1") != std::string::npos);
    CHECK(csv.find("# plan=") != std::string::npos);
    CHECK(csv.find("sent_id,label_type,score,source") != std::string::npos);
}

TEST_CASE("layers round-trip through jsonl") {
    std::vector<AnnotationLayer> layers{
        AnnotationLayer("w1", Group::crowd, LabelType::P,
                        {TokenSpan{"s1", 0, 2}, TokenSpan{"s2", 1, 4}}),
        AnnotationLayer("e1", Group::expert, LabelType::I, {TokenSpan{"s1", 2, 3}}),
    };
    TempDir dir;
    const auto path = dir.file("layers.jsonl");
    atomic_write(path, layers_to_jsonl(layers, Json{{"command", "test"}}));

    const auto corpus_path = dir.file("c.jsonl");
    {
        std::ofstream out(corpus_path);
        out << R"({"schema_version":"1","doc_id":"d1","text":"a b c d a b c d",)"
            << R"("sentences":[{"sent_id":"s1","start":0,"end":7,"tokens":[{"start":0,"end":1},{"start":2,"end":3},{"start":4,"end":5},{"start":6,"end":7}]},)"
            << R"({"sent_id":"s2","start":8,"end":15,"tokens":[{"start":8,"end":9},{"start":10,"end":11},{"start":12,"end":13},{"start":14,"end":15}]}]})"
            << "\n";
    }
    const auto loaded = load_corpus(corpus_path, {path});
    REQUIRE(loaded.layers.size() == 2);
    CHECK(loaded.layers[0].annotator_id() == "w1");
    CHECK(loaded.layers[0].group() == Group::crowd);
    CHECK(loaded.layers[0].spans().size() == 2);
    CHECK(loaded.layers[1].label_type() == LabelType::I);
}
