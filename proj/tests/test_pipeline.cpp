#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "annodiff/pipeline.hpp"
#include "annodiff/synthetic.hpp"

#include "helpers.hpp"

using namespace annodiff;

namespace {

std::vector<DifficultyRecord> records_from(const std::vector<std::pair<std::string, double>>& v) {
    std::vector<DifficultyRecord> out;
    for (const auto& [id, score] : v)
        out.push_back(DifficultyRecord{id, LabelType::P, score, DifficultySource::reference});
    return out;
}

}  // namespace

TEST_CASE("removal set takes the ceil of the fraction, hardest first") {
    const auto records = records_from({{"s1", 0.1}, {"s2", 0.9}, {"s3", 0.5}, {"s4", 0.7}});
    const auto removed = removal_set(records, 0.5);
    CHECK(removed == std::set<std::string>{"s2", "s4"});
    // ceil(0.3 * 4) = 2 as well.
    CHECK(removal_set(records, 0.3).size() == 2);
    CHECK(removal_set(records, 0.0).empty());
    CHECK(removal_set({}, 0.5).empty());
    CHECK_THROWS_AS(removal_set(records, 1.0), ValidationError);
    CHECK_THROWS_AS(removal_set(records, -0.1), ValidationError);
}

TEST_CASE("removal ties break toward the smaller sentence id") {
    const auto records = records_from({{"s9", 0.5}, {"s1", 0.5}, {"s5", 0.5}, {"s2", 0.1}});
    const auto removed = removal_set(records, 0.5);
    CHECK(removed == std::set<std::string>{"s1", "s5"});
}

TEST_CASE("quantile threshold uses the nearest-rank rule") {
    std::vector<double> v{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    CHECK(quantile_threshold(v, 0.0) == 0.1);
    CHECK(quantile_threshold(v, 10.0) == 0.1);
    CHECK(quantile_threshold(v, 50.0) == 0.5);
    CHECK(quantile_threshold(v, 95.0) == 1.0);
    CHECK(quantile_threshold(v, 100.0) == 1.0);
    CHECK(quantile_threshold({3.0}, 37.0) == 3.0);
    CHECK_THROWS_AS(quantile_threshold({}, 50.0), ValidationError);
    CHECK_THROWS_AS(quantile_threshold(v, 101.0), ValidationError);
}

TEST_CASE("reweight keeps easy sentences at one and fades hard ones linearly") {
    ReweightConfig config;
    config.tau = 0.8;
    config.a = 0.5;
    const auto records =
        records_from({{"s1", 0.0}, {"s2", 0.8}, {"s3", 0.9}, {"s4", 1.0}, {"s5", 0.5}});
    const auto weights = reweight_map(records, config);
    CHECK(weights.at("s1") == 1.0);
    CHECK(weights.at("s2") == 1.0);
    CHECK(weights.at("s3") == Catch::Approx(0.75).margin(1e-12));
    CHECK(weights.at("s4") == Catch::Approx(0.5).margin(1e-12));
    CHECK(weights.at("s5") == 1.0);
}

TEST_CASE("reweight slope controls the floor at difficulty one") {
    ReweightConfig config;
    config.tau = 0.5;
    config.a = 1.0;
    const auto weights = reweight_map(records_from({{"s1", 1.0}, {"s2", 0.75}}), config);
    CHECK(weights.at("s1") == Catch::Approx(0.0).margin(1e-12));
    CHECK(weights.at("s2") == Catch::Approx(0.5).margin(1e-12));

    config.a = 0.0;
    const auto flat = reweight_map(records_from({{"s1", 1.0}}), config);
    CHECK(flat.at("s1") == 1.0);
}

TEST_CASE("percentile tau resolves the threshold from the score distribution") {
    ReweightConfig config;
    config.tau = 0.8;
    config.tau_mode = TauMode::percentile;
    config.a = 0.5;
    // Scores 0.1..1.0; the 80th percentile by nearest rank is 0.8.
    std::vector<std::pair<std::string, double>> v;
    for (int i = 1; i <= 10; ++i)
        v.emplace_back("s" + std::to_string(i), static_cast<double>(i) / 10.0);
    const auto weights = reweight_map(records_from(v), config);
    CHECK(weights.at("s8") == 1.0);
    CHECK(weights.at("s9") == Catch::Approx(0.75).margin(1e-12));
    CHECK(weights.at("s10") == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("reweight validates its parameters") {
    CHECK_THROWS_AS(reweight_map({}, ReweightConfig{1.0, 0.5, TauMode::score}),
                    ValidationError);
    CHECK_THROWS_AS(reweight_map({}, ReweightConfig{0.5, 1.5, TauMode::score}),
                    ValidationError);
}

TEST_CASE("difficulty routing ranks documents by difficult-sentence count") {
    auto corpus = testutil::make_corpus({
        testutil::make_sentence("d1-s1", "d1", {"a", "b"}),
        testutil::make_sentence("d1-s2", "d1", {"a", "b"}),
        testutil::make_sentence("d2-s1", "d2", {"a", "b"}),
        testutil::make_sentence("d2-s2", "d2", {"a", "b"}),
        testutil::make_sentence("d3-s1", "d3", {"a", "b"}),
        testutil::make_sentence("d3-s2", "d3", {"a", "b"}),
    });
    // Top 50% threshold: scores >= the 50th percentile count as difficult.
    const auto records = records_from({
        {"d1-s1", 0.9}, {"d1-s2", 0.8},  // two difficult sentences
        {"d2-s1", 0.7}, {"d2-s2", 0.1},
        {"d3-s1", 0.2}, {"d3-s2", 0.3},
    });
    const auto plan = route_top_difficulty(corpus, records, 2, 50.0);
    REQUIRE(plan.routed_doc_ids.size() == 2);
    CHECK(plan.routed_doc_ids[0] == "d1");
    CHECK(plan.routed_doc_ids[1] == "d2");
    CHECK(plan.strategy == "difficulty");
    CHECK(plan.budget == 2);
}

TEST_CASE("routing ties break toward the smaller document id") {
    auto corpus = testutil::make_corpus({
        testutil::make_sentence("db-s1", "db", {"a", "b"}),
        testutil::make_sentence("da-s1", "da", {"a", "b"}),
        testutil::make_sentence("dc-s1", "dc", {"a", "b"}),
    });
    const auto records = records_from({{"db-s1", 0.9}, {"da-s1", 0.9}, {"dc-s1", 0.9}});
    const auto plan = route_top_difficulty(corpus, records, 2, 5.0);
    CHECK(plan.routed_doc_ids == std::vector<std::string>{"da", "db"});
}

TEST_CASE("routing validates the budget") {
    auto corpus = testutil::make_corpus({testutil::make_sentence("d1-s1", "d1", {"a", "b"})});
    const auto records = records_from({{"d1-s1", 0.5}});
    CHECK_THROWS_AS(route_top_difficulty(corpus, records, 2, 5.0), ValidationError);
    CHECK_THROWS_AS(route_random(corpus, 2, 1), ValidationError);
    CHECK(route_top_difficulty(corpus, records, 0, 5.0).routed_doc_ids.empty());
}

TEST_CASE("random routing is a seeded sample without replacement") {
    std::vector<Sentence> sentences;
    for (int d = 0; d < 20; ++d)
        sentences.push_back(testutil::make_sentence("d" + std::to_string(d) + "-s1",
                                                    "d" + std::to_string(d), {"a", "b"}));
    auto corpus = testutil::make_corpus(sentences);
    const auto p1 = route_random(corpus, 8, 7);
    const auto p2 = route_random(corpus, 8, 7);
    CHECK(p1.routed_doc_ids == p2.routed_doc_ids);
    const auto p3 = route_random(corpus, 8, 8);
    CHECK(p1.routed_doc_ids != p3.routed_doc_ids);
    std::set<std::string> unique(p1.routed_doc_ids.begin(), p1.routed_doc_ids.end());
    CHECK(unique.size() == 8);
    CHECK(p1.strategy == "random");
}

TEST_CASE("routing plan json round-trips") {
    RoutingPlan plan;
    plan.strategy = "difficulty";
    plan.budget = 3;
    plan.percentile = 10.0;
    plan.seed = 9;
    plan.routed_doc_ids = {"d1", "d2", "d3"};
    const auto j = routing_plan_to_json(plan);
    const auto back = routing_plan_from_json(Json::parse(j.dump()), "test");
    CHECK(back.strategy == plan.strategy);
    CHECK(back.budget == plan.budget);
    CHECK(back.percentile == plan.percentile);
    CHECK(back.seed == plan.seed);
    CHECK(back.routed_doc_ids == plan.routed_doc_ids);
    CHECK_THROWS_AS(routing_plan_from_json(Json{{"strategy", "x"}}, "test"), ValidationError);
}

TEST_CASE("merge keeps crowd outside and expert inside the routed set") {
    auto corpus = testutil::make_corpus({
        testutil::make_sentence("d1-s1", "d1", {"a", "b"}),
        testutil::make_sentence("d2-s1", "d2", {"a", "b"}),
    });
    std::vector<AnnotationLayer> crowd{
        AnnotationLayer("w1", Group::crowd, LabelType::P,
                        {TokenSpan{"d1-s1", 0, 1}, TokenSpan{"d2-s1", 0, 1}}),
    };
    std::vector<AnnotationLayer> expert{
        AnnotationLayer("e1", Group::expert, LabelType::P,
                        {TokenSpan{"d1-s1", 1, 2}, TokenSpan{"d2-s1", 1, 2}}),
    };
    const auto merged = merge_expert(corpus, crowd, expert, {"d2"});
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].annotator_id() == "w1");
    REQUIRE(merged[0].spans().size() == 1);
    CHECK(merged[0].spans()[0].sent_id == "d1-s1");
    CHECK(merged[1].annotator_id() == "e1");
    REQUIRE(merged[1].spans().size() == 1);
    CHECK(merged[1].spans()[0].sent_id == "d2-s1");

    CHECK_THROWS_AS(merge_expert(corpus, crowd, expert, {"ghost"}), ValidationError);
}

TEST_CASE("merge drops layers left without spans") {
    auto corpus = testutil::make_corpus({
        testutil::make_sentence("d1-s1", "d1", {"a", "b"}),
        testutil::make_sentence("d2-s1", "d2", {"a", "b"}),
    });
    std::vector<AnnotationLayer> crowd{
        AnnotationLayer("w1", Group::crowd, LabelType::P, {TokenSpan{"d2-s1", 0, 1}}),
    };
    std::vector<AnnotationLayer> expert{
        AnnotationLayer("e1", Group::expert, LabelType::P, {TokenSpan{"d1-s1", 0, 1}}),
    };
    // Routing d2 strips the crowd layer's only span and the expert layer
    // holds nothing inside the routed set, so both collapse.
    CHECK(merge_expert(corpus, crowd, expert, {"d2"}).empty());
    const auto none_routed = merge_expert(corpus, crowd, expert, {});
    REQUIRE(none_routed.size() == 1);
    CHECK(none_routed[0].annotator_id() == "w1");
    const auto all_routed = merge_expert(corpus, crowd, expert, {"d1", "d2"});
    REQUIRE(all_routed.size() == 1);
    CHECK(all_routed[0].annotator_id() == "e1");
}

TEST_CASE("merged training layer switches vote pools per document") {
    auto corpus = testutil::make_corpus({
        testutil::make_sentence("d1-s1", "d1", {"a", "b", "c"}),
        testutil::make_sentence("d2-s1", "d2", {"a", "b", "c"}),
    });
    std::vector<AnnotationLayer> crowd{
        AnnotationLayer("w1", Group::crowd, LabelType::P,
                        {TokenSpan{"d1-s1", 0, 1}, TokenSpan{"d2-s1", 0, 1}}),
        AnnotationLayer("w2", Group::crowd, LabelType::P,
                        {TokenSpan{"d1-s1", 0, 1}, TokenSpan{"d2-s1", 0, 1}}),
        AnnotationLayer("w3", Group::crowd, LabelType::P, {}),
    };
    std::vector<AnnotationLayer> expert{
        AnnotationLayer("e1", Group::expert, LabelType::P, {TokenSpan{"d2-s1", 2, 3}}),
    };
    const auto layer = merged_training_layer(corpus, crowd, expert, {"d2"}, LabelType::P);
    REQUIRE(layer.spans().size() == 2);
    // d1 keeps the crowd majority [0,1); d2 uses the expert span [2,3).
    CHECK(layer.spans()[0].sent_id == "d1-s1");
    CHECK(layer.spans()[0].first == 0);
    CHECK(layer.spans()[1].sent_id == "d2-s1");
    CHECK(layer.spans()[1].first == 2);

    CHECK_THROWS_AS(merged_training_layer(corpus, crowd, {}, {"d2"}, LabelType::P),
                    ValidationError);
}

TEST_CASE("token prf handles empty cases by convention") {
    auto corpus = testutil::make_corpus({testutil::make_sentence("s1", "d1", {"a", "b"})});
    AnnotationLayer empty_pred("p", Group::crowd, LabelType::P, {});
    AnnotationLayer empty_gold("g", Group::expert, LabelType::P, {});
    const auto both = token_prf(corpus, empty_pred, empty_gold);
    CHECK(both.overall.precision == 1.0);
    CHECK(both.overall.recall == 1.0);
    CHECK(both.overall.f1 == 1.0);

    AnnotationLayer some_gold("g", Group::expert, LabelType::P, {TokenSpan{"s1", 0, 1}});
    const auto miss = token_prf(corpus, empty_pred, some_gold);
    CHECK(miss.overall.precision == 0.0);
    CHECK(miss.overall.recall == 0.0);
    CHECK(miss.overall.f1 == 0.0);

    AnnotationLayer some_pred("p", Group::crowd, LabelType::P, {TokenSpan{"s1", 0, 1}});
    const auto spurious = token_prf(corpus, some_pred, empty_gold);
    CHECK(spurious.overall.precision == 0.0);
    CHECK(spurious.overall.recall == 0.0);
}

TEST_CASE("token prf counts per document and overall") {
    auto corpus = testutil::make_corpus({
        testutil::make_sentence("d1-s1", "d1", {"a", "b", "c", "d"}),
        testutil::make_sentence("d2-s1", "d2", {"a", "b", "c", "d"}),
    });
    AnnotationLayer pred("p", Group::crowd, LabelType::P,
                         {TokenSpan{"d1-s1", 0, 2}, TokenSpan{"d2-s1", 0, 1}});
    AnnotationLayer gold("g", Group::expert, LabelType::P,
                         {TokenSpan{"d1-s1", 1, 3}, TokenSpan{"d2-s1", 0, 1}});
    const auto eval = token_prf(corpus, pred, gold);
    // d1: tp=1 fp=1 fn=1 -> P=R=F=0.5. d2: exact -> 1.
    CHECK(eval.per_document.at("d1").f1 == Catch::Approx(0.5).margin(1e-12));
    CHECK(eval.per_document.at("d2").f1 == 1.0);
    CHECK(eval.overall.precision == Catch::Approx(2.0 / 3.0).margin(1e-12));
    CHECK(eval.overall.recall == Catch::Approx(2.0 / 3.0).margin(1e-12));

    AnnotationLayer other("x", Group::crowd, LabelType::I, {});
    CHECK_THROWS_AS(token_prf(corpus, pred, other), ValidationError);
}

TEST_CASE("eval split is seeded and covers all documents") {
    std::vector<Sentence> sentences;
    for (int d = 0; d < 10; ++d)
        sentences.push_back(testutil::make_sentence("d" + std::to_string(d) + "-s1",
                                                    "d" + std::to_string(d), {"a", "b"}));
    auto corpus = testutil::make_corpus(sentences);
    const auto s1 = make_eval_split(corpus, 0.2, 5);
    const auto s2 = make_eval_split(corpus, 0.2, 5);
    CHECK(s1.eval_doc_ids == s2.eval_doc_ids);
    CHECK(s1.eval_doc_ids.size() == 2);
    CHECK(s1.train_doc_ids.size() == 8);
    std::set<std::string> all(s1.eval_doc_ids.begin(), s1.eval_doc_ids.end());
    all.insert(s1.train_doc_ids.begin(), s1.train_doc_ids.end());
    CHECK(all.size() == 10);
    CHECK_THROWS_AS(make_eval_split(corpus, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(make_eval_split(corpus, 1.0, 1), ValidationError);
}

TEST_CASE("training experiment produces a full report on synthetic data") {
    SyntheticConfig cfg = synthetic_preset("small");
    cfg.num_docs = 24;
    cfg.sentences_per_doc = 4;
    cfg.seed = 3;
    const auto data = generate_synthetic(cfg);

    ExperimentConfig config;
    config.strategy = TrainStrategy::baseline;
    config.crf.epochs = 5;
    config.seed = 3;
    const auto report = run_training_experiment(data.corpus, data.crowd, data.expert, {}, config);
    CHECK(report.strategy == "baseline");
    CHECK(report.metrics.f1 >= 0.0);
    CHECK(report.metrics.f1 <= 1.0);
    CHECK(report.per_document_f1.size() == 5);  // ceil(0.2 * 24)
    CHECK_FALSE(report.budget.has_value());
    CHECK_FALSE(report.p_value.has_value());

    // Reweight with valid scores runs end to end.
    const auto scores =
        corpus_difficulty(data.corpus, data.gold, data.crowd, LabelType::P, ScoringConfig{});
    ExperimentConfig rw = config;
    rw.strategy = TrainStrategy::reweight;
    const auto report2 =
        run_training_experiment(data.corpus, data.crowd, data.expert, scores, rw);
    CHECK(report2.strategy == "reweight");

    ExperimentConfig bad = config;
    bad.strategy = TrainStrategy::removal;
    CHECK_THROWS_AS(run_training_experiment(data.corpus, data.crowd, data.expert, {}, bad),
                    ValidationError);
}

TEST_CASE("agreement weighting runs without a reference and downweights disagreement") {
    SyntheticConfig cfg = synthetic_preset("small");
    cfg.num_docs = 16;
    cfg.sentences_per_doc = 4;
    cfg.seed = 11;
    const auto data = generate_synthetic(cfg);

    SvrConfig svr;
    svr.epochs = 40;
    ReweightConfig rw;
    rw.tau = 0.5;
    rw.tau_mode = TauMode::percentile;
    const auto result = agreement_weighting(data.corpus, data.crowd, LabelType::P, svr, rw);
    CHECK(result.weights.size() == data.corpus.num_sentences());
    double lo = 2.0, hi = -1.0;
    for (const auto& [id, w] : result.weights) {
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
        lo = std::min(lo, w);
        hi = std::max(hi, w);
    }
    CHECK(hi == 1.0);
    CHECK(lo < 1.0);
    for (const auto& r : result.records) CHECK(r.source == DifficultySource::predicted);
}

TEST_CASE("budget curve rows follow the requested budgets") {
    SyntheticConfig cfg = synthetic_preset("small");
    cfg.num_docs = 20;
    cfg.sentences_per_doc = 4;
    cfg.seed = 4;
    const auto data = generate_synthetic(cfg);
    const auto scores =
        corpus_difficulty(data.corpus, data.gold, data.crowd, LabelType::P, ScoringConfig{});

    CurveConfig config;
    config.budgets = {0, 8, 16};
    config.crf.epochs = 4;
    config.seed = 4;
    const auto curve =
        simulate_budget_curve(data.corpus, data.crowd, data.expert, scores, config);
    REQUIRE(curve.size() == 3);
    CHECK(curve[0].budget == 0);
    CHECK(curve[1].budget == 8);
    CHECK(curve[2].budget == 16);
    for (const auto& p : curve) {
        CHECK(p.metrics.f1 >= 0.0);
        CHECK(p.metrics.f1 <= 1.0);
    }
    // Threaded evaluation returns the same rows.
    CurveConfig threaded = config;
    threaded.threads = 3;
    const auto curve2 =
        simulate_budget_curve(data.corpus, data.crowd, data.expert, scores, threaded);
    REQUIRE(curve2.size() == curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
        CHECK(curve2[i].budget == curve[i].budget);
        CHECK(curve2[i].metrics.f1 == curve[i].metrics.f1);
    }

    const auto csv = curve_to_csv(curve, Json{{"command", "curve"}});
    CHECK(csv.find("budget,precision,recall,f1") != std::string::npos);
    CHECK(csv.find("# plan=") != std::string::npos);

    CurveConfig bad = config;
    bad.budgets = {100};
    CHECK_THROWS_AS(simulate_budget_curve(data.corpus, data.crowd, data.expert, scores, bad),
                    ValidationError);
}

TEST_CASE("synthetic corpus plants difficulty where it says it does") {
    SyntheticConfig cfg = synthetic_preset("small");
    cfg.num_docs = 40;
    cfg.sentences_per_doc = 5;
    cfg.seed = 6;
    const auto data = generate_synthetic(cfg);

    CHECK(data.corpus.num_documents() == 40);
    CHECK(data.corpus.num_sentences() == 200);
    CHECK(data.gold.size() == 3);    // one layer per label type
    CHECK(data.crowd.size() == 9);   // 3 workers x 3 labels
    CHECK(data.expert.size() == 9);  // 3 experts x 3 labels

    std::size_t difficult = 0;
    for (const auto& [id, flag] : data.difficult)
        if (flag) ++difficult;
    CHECK(difficult == 40);  // 20% of 200

    // Flagged sentences really are harder to score against the gold.
    const auto scores =
        corpus_difficulty(data.corpus, data.gold, data.crowd, LabelType::P, ScoringConfig{});
    double hard_sum = 0.0, easy_sum = 0.0;
    std::size_t hard_n = 0, easy_n = 0;
    for (const auto& r : scores) {
        if (data.difficult.at(r.sent_id)) {
            hard_sum += r.score;
            ++hard_n;
        } else {
            easy_sum += r.score;
            ++easy_n;
        }
    }
    CHECK(hard_sum / static_cast<double>(hard_n) > easy_sum / static_cast<double>(easy_n) + 0.1);

    // Same seed, same corpus; different seed, different corpus.
    const auto again = generate_synthetic(cfg);
    CHECK(corpus_to_jsonl(again.corpus, Json{}) == corpus_to_jsonl(data.corpus, Json{}));
    SyntheticConfig other = cfg;
    other.seed = 7;
    CHECK(corpus_to_jsonl(generate_synthetic(other).corpus, Json{}) !=
          corpus_to_jsonl(data.corpus, Json{}));
}
