#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "annodiff/annotation.hpp"
#include "annodiff/common.hpp"
#include "annodiff/corpus.hpp"
#include "annodiff/crf.hpp"
#include "annodiff/crossfold.hpp"
#include "annodiff/embedding.hpp"
#include "annodiff/io.hpp"
#include "annodiff/model_io.hpp"
#include "annodiff/pipeline.hpp"
#include "annodiff/regressor.hpp"
#include "annodiff/scoring.hpp"
#include "annodiff/stats.hpp"
#include "annodiff/synthetic.hpp"

namespace {

using namespace annodiff;

bool log_quiet() {
    static const bool quiet = [] {
        const char* v = std::getenv("ANNODIFF_LOG");
        return v != nullptr && (std::string(v) == "quiet" || std::string(v) == "0");
    }();
    return quiet;
}

void info(const std::string& msg) {
    if (!log_quiet()) std::cerr << msg << '\n';
}

struct Loaded {
    Corpus corpus;
    std::vector<AnnotationLayer> layers;
};

Loaded load_inputs(const std::string& corpus_path, const std::vector<std::string>& annotations) {
    auto r = load_corpus(corpus_path, annotations);
    if (r.dropped_sentences > 0)
        info("note: dropped " + std::to_string(r.dropped_sentences) +
             " sentences with fewer than two tokens");
    if (r.dropped_spans > 0)
        info("note: discarded " + std::to_string(r.dropped_spans) +
             " spans referencing dropped sentences");
    return Loaded{std::move(r.corpus), std::move(r.layers)};
}

struct CrfFlags {
    double learning_rate = 0.1;
    double lambda = 1e-4;
    std::size_t epochs = 15;
    std::size_t batch_size = 20;

    CrfConfig to_config(std::uint64_t seed) const {
        CrfConfig c;
        c.learning_rate = learning_rate;
        c.lambda = lambda;
        c.epochs = epochs;
        c.batch_size = batch_size;
        c.seed = seed;
        return c;
    }

    Json plan() const {
        return Json{{"learning_rate", learning_rate},
                    {"lambda", lambda},
                    {"epochs", epochs},
                    {"batch_size", batch_size}};
    }
};

void add_crf_flags(CLI::App* sub, CrfFlags& f) {
    sub->add_option("--crf-lr", f.learning_rate, "Tagger learning rate")->capture_default_str();
    sub->add_option("--crf-lambda", f.lambda, "Tagger L2 strength")->capture_default_str();
    sub->add_option("--crf-epochs", f.epochs, "Tagger training epochs")->capture_default_str();
    sub->add_option("--crf-batch", f.batch_size, "Tagger mini-batch size")->capture_default_str();
}

std::string records_output(const std::vector<DifficultyRecord>& records, const std::string& format,
                           const Json& plan) {
    if (format == "jsonl") return records_to_jsonl(records, plan);
    if (format == "csv") return records_to_csv(records, plan);
    throw ValidationError("unknown output format: " + format);
}

LabelType records_label(const std::vector<DifficultyRecord>& records) {
    if (records.empty()) throw ValidationError("difficulty file contains no records");
    const LabelType label = records.front().label_type;
    for (const auto& r : records)
        if (r.label_type != label)
            throw ValidationError("difficulty file mixes label types");
    return label;
}

std::vector<std::string> corpus_vocab(const Corpus& corpus) {
    std::vector<std::string> words;
    corpus.for_each_sentence([&](const Sentence& s) {
        for (const auto& t : s.tokens) words.push_back(t.text);
    });
    return words;
}

// ---------------------------------------------------------------------------

struct IngestOpts {
    std::string in, out;
};

void run_ingest(const IngestOpts& o) {
    const auto raw = load_raw_documents(o.in);
    auto result = ingest_documents(raw);
    if (result.dropped_sentences > 0)
        info("note: dropped " + std::to_string(result.dropped_sentences) +
             " sentences with fewer than two tokens");
    Json plan{{"command", "ingest"},
              {"input", o.in},
              {"documents", result.corpus.num_documents()},
              {"sentences", result.corpus.num_sentences()},
              {"dropped_sentences", result.dropped_sentences}};
    atomic_write(o.out, corpus_to_jsonl(result.corpus, plan));
    info("wrote " + o.out);
}

struct SynthOpts {
    std::string preset = "small";
    std::string out_dir;
    SyntheticConfig cfg;
    CLI::App* sub = nullptr;
};

void run_synth(SynthOpts& o) {
    SyntheticConfig cfg = synthetic_preset(o.preset);
    auto take = [&](const char* flag, auto& dst, const auto& src) {
        if (o.sub->count(flag) > 0) dst = src;
    };
    take("--docs", cfg.num_docs, o.cfg.num_docs);
    take("--sentences-per-doc", cfg.sentences_per_doc, o.cfg.sentences_per_doc);
    take("--vocab", cfg.vocab_size, o.cfg.vocab_size);
    take("--workers", cfg.crowd_workers_per_sentence, o.cfg.crowd_workers_per_sentence);
    take("--gold-span-rate", cfg.gold_span_rate, o.cfg.gold_span_rate);
    take("--difficult-fraction", cfg.difficult_fraction, o.cfg.difficult_fraction);
    take("--easy-noise", cfg.easy_noise_rate, o.cfg.easy_noise_rate);
    take("--hard-noise", cfg.hard_noise_rate, o.cfg.hard_noise_rate);
    take("--expert-noise", cfg.expert_noise_rate, o.cfg.expert_noise_rate);
    cfg.seed = o.cfg.seed;

    const auto data = generate_synthetic(cfg);
    Json plan{{"command", "synth"},
              {"preset", o.preset},
              {"num_docs", cfg.num_docs},
              {"sentences_per_doc", cfg.sentences_per_doc},
              {"vocab_size", cfg.vocab_size},
              {"gold_span_rate", cfg.gold_span_rate},
              {"difficult_fraction", cfg.difficult_fraction},
              {"crowd_workers_per_sentence", cfg.crowd_workers_per_sentence},
              {"easy_noise_rate", cfg.easy_noise_rate},
              {"hard_noise_rate", cfg.hard_noise_rate},
              {"expert_noise_rate", cfg.expert_noise_rate},
              {"seed", cfg.seed}};
    std::filesystem::create_directories(o.out_dir);
    const auto path = [&](const char* name) {
        return (std::filesystem::path(o.out_dir) / name).string();
    };
    atomic_write(path("corpus.jsonl"), corpus_to_jsonl(data.corpus, plan));
    atomic_write(path("gold.jsonl"), layers_to_jsonl(data.gold, plan));
    atomic_write(path("crowd.jsonl"), layers_to_jsonl(data.crowd, plan));
    atomic_write(path("expert.jsonl"), layers_to_jsonl(data.expert, plan));
    atomic_write(path("flags.jsonl"), flags_to_jsonl(data.difficult, plan));
    info("wrote corpus, gold, crowd, expert, flags under " + o.out_dir);
}

struct ScoreOpts {
    std::string corpus;
    std::vector<std::string> crowd;
    std::vector<std::string> ref;
    std::vector<std::string> ref_from_model;
    std::string label = "P";
    std::string mode = "per_worker_mean";
    std::string format = "jsonl";
    std::string out;
};

void run_score(const ScoreOpts& o) {
    if (o.ref.empty() == o.ref_from_model.empty())
        throw ValidationError("score: provide exactly one of --ref or --ref-from-model");
    const bool proxy = !o.ref_from_model.empty();
    const auto& ref_files = proxy ? o.ref_from_model : o.ref;
    auto ref_load = load_inputs(o.corpus, ref_files);
    auto crowd_load = load_corpus(o.corpus, o.crowd);

    ScoringConfig config;
    config.mode = scoring_mode_from(o.mode);
    const LabelType label = label_type_from(o.label);
    const auto records = corpus_difficulty(
        ref_load.corpus, ref_load.layers, crowd_load.layers, label, config,
        proxy ? DifficultySource::proxy : DifficultySource::reference);
    Json plan{{"command", "score"},       {"corpus", o.corpus},
              {"crowd", o.crowd},         {"reference", ref_files},
              {"source", proxy ? "proxy" : "reference"},
              {"label_type", o.label},    {"mode", o.mode},
              {"format", o.format}};
    atomic_write(o.out, records_output(records, o.format, plan));
    info("wrote " + std::to_string(records.size()) + " difficulty records to " + o.out);
}

struct ProxyOpts {
    std::string corpus;
    std::vector<std::string> crowd;
    std::string label = "P";
    std::size_t k = 10;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    CrfFlags crf;
    std::string out;
};

void run_proxy(const ProxyOpts& o) {
    auto loaded = load_inputs(o.corpus, o.crowd);
    const LabelType label = label_type_from(o.label);
    const auto majority = majority_layer(loaded.corpus, loaded.layers, label);
    const auto layer = out_of_fold_tagger_layer(loaded.corpus, majority, o.k,
                                                o.crf.to_config(o.seed), o.seed, o.threads);
    Json plan{{"command", "proxy"}, {"corpus", o.corpus}, {"crowd", o.crowd},
              {"label_type", o.label}, {"k", o.k}, {"seed", o.seed},
              {"crf", o.crf.plan()}};
    atomic_write(o.out, layers_to_jsonl({layer}, plan));
    info("wrote out-of-fold predicted layer to " + o.out);
}

struct AgreeOpts {
    std::string corpus;
    std::vector<std::string> annotations;
    std::string label = "P";
    std::string out;
};

void run_agree(const AgreeOpts& o) {
    auto loaded = load_inputs(o.corpus, o.annotations);
    const LabelType label = label_type_from(o.label);
    const double agreement = inter_annotator_agreement(loaded.corpus, loaded.layers, label);
    Json plan{{"command", "agree"},
              {"corpus", o.corpus},
              {"annotations", o.annotations},
              {"label_type", o.label}};
    Json out{{"schema_version", kSchemaVersion},
             {"label_type", o.label},
             {"num_annotators", layers_of(loaded.layers, label).size()},
             {"agreement", agreement},
             {"meta", Json{{"plan", plan}}}};
    atomic_write(o.out, out.dump(2) + "\n");
    info("agreement " + format_double(agreement) + " written to " + o.out);
}

struct TrainDifficultyOpts {
    std::string corpus;
    std::string scores;
    std::string model = "svr";
    bool grid = false;
    std::size_t k = 10;
    std::uint64_t seed = 1;
    double lambda = 1e-4;
    double learning_rate = 0.1;
    std::size_t epochs = 0;  // 0 keeps the model default
    double epsilon = 0.05;
    std::size_t n_max = 3;
    std::size_t hash_dim = 1u << 20;
    std::size_t hidden = 16;
    std::string embeddings;
    std::size_t embedding_dim = 32;
    std::string out;
};

void run_train_difficulty(const TrainDifficultyOpts& o) {
    auto loaded = load_inputs(o.corpus, {});
    const auto records = load_records(o.scores);
    const LabelType label = records_label(records);
    const auto examples = make_regression_examples(loaded.corpus, records);

    Json plan{{"command", "train-difficulty"}, {"corpus", o.corpus}, {"scores", o.scores},
              {"model", o.model},              {"grid", o.grid},     {"k", o.k},
              {"seed", o.seed}};
    Json model_json;
    if (o.model == "svr") {
        SvrConfig cfg;
        cfg.epsilon = o.epsilon;
        cfg.lambda = o.lambda;
        cfg.learning_rate = o.learning_rate;
        if (o.epochs > 0) cfg.epochs = o.epochs;
        cfg.ngrams.n_max = o.n_max;
        cfg.ngrams.hash_dim = o.hash_dim;
        if (o.grid) {
            std::vector<GridPoint> grid;
            for (double lambda : {1e-5, 1e-4, 1e-3})
                for (double lr : {0.05, 0.1, 0.5})
                    grid.push_back(GridPoint{lambda, lr, 0});
            auto result = grid_search(
                examples, grid, o.k, o.seed,
                [&](const std::vector<RegressionExample>& train, const GridPoint& p) {
                    SvrConfig c = cfg;
                    c.lambda = p.lambda;
                    c.learning_rate = p.learning_rate;
                    return train_svr(train, label, c);
                },
                [](const SvrModel& m, const std::vector<std::string>& toks) {
                    return predict(m, toks);
                });
            cfg.lambda = result.best.lambda;
            cfg.learning_rate = result.best.learning_rate;
            plan["chosen"] = Json{{"lambda", cfg.lambda}, {"learning_rate", cfg.learning_rate}};
            plan["grid_mean_pearson"] = result.best_score;
            info("grid search chose lambda=" + format_double(cfg.lambda) +
                 " lr=" + format_double(cfg.learning_rate) + " (mean held-out pearson " +
                 format_double(result.best_score) + ")");
        }
        model_json = svr_to_json(train_svr(examples, label, cfg));
    } else if (o.model == "dense") {
        EmbeddingTable table = o.embeddings.empty()
                                   ? EmbeddingTable::seeded_random(corpus_vocab(loaded.corpus),
                                                                   o.embedding_dim, o.seed)
                                   : EmbeddingTable::load_text(o.embeddings);
        DenseConfig cfg;
        cfg.hidden = o.hidden;
        cfg.lambda = o.lambda;
        cfg.learning_rate = o.learning_rate;
        if (o.epochs > 0) cfg.epochs = o.epochs;
        cfg.seed = o.seed;
        if (o.grid) {
            std::vector<GridPoint> grid;
            for (double lambda : {1e-4, 1e-3})
                for (double lr : {0.05, 0.1})
                    for (std::size_t hidden : {std::size_t{8}, std::size_t{16}})
                        grid.push_back(GridPoint{lambda, lr, hidden});
            auto result = grid_search(
                examples, grid, o.k, o.seed,
                [&](const std::vector<RegressionExample>& train, const GridPoint& p) {
                    DenseConfig c = cfg;
                    c.lambda = p.lambda;
                    c.learning_rate = p.learning_rate;
                    c.hidden = p.hidden;
                    return train_dense(train, label, table, c);
                },
                [](const DenseModel& m, const std::vector<std::string>& toks) {
                    return predict(m, toks);
                });
            cfg.lambda = result.best.lambda;
            cfg.learning_rate = result.best.learning_rate;
            cfg.hidden = result.best.hidden;
            plan["chosen"] = Json{{"lambda", cfg.lambda},
                                  {"learning_rate", cfg.learning_rate},
                                  {"hidden", cfg.hidden}};
            plan["grid_mean_pearson"] = result.best_score;
        }
        model_json = dense_to_json(train_dense(examples, label, table, cfg));
    } else {
        throw ValidationError("unknown difficulty model: " + o.model);
    }
    model_json["meta"] = Json{{"plan", plan}};
    atomic_write(o.out, model_json.dump() + "\n");
    info("wrote difficulty model to " + o.out);
}

struct PredictDifficultyOpts {
    std::string corpus;
    std::string model;
    std::string format = "jsonl";
    std::string out;
};

void run_predict_difficulty(const PredictDifficultyOpts& o) {
    auto loaded = load_inputs(o.corpus, {});
    const Json j = load_json_file(o.model);
    if (!j.contains("model_type")) throw ValidationError(o.model + ": missing model_type");
    const std::string type = j["model_type"].get<std::string>();
    std::vector<DifficultyRecord> records;
    if (type == "svr") {
        records = predict_difficulty(svr_from_json(j, o.model), loaded.corpus);
    } else if (type == "dense") {
        records = predict_difficulty(dense_from_json(j, o.model), loaded.corpus);
    } else {
        throw ValidationError(o.model + ": expected a difficulty regressor, got model_type '" +
                              type + "'");
    }
    Json plan{{"command", "predict-difficulty"},
              {"corpus", o.corpus},
              {"model", o.model},
              {"format", o.format}};
    atomic_write(o.out, records_output(records, o.format, plan));
    info("wrote " + std::to_string(records.size()) + " predicted records to " + o.out);
}

struct TrainTaggerOpts {
    std::string corpus;
    std::vector<std::string> annotations;
    std::string label = "P";
    std::string strategy = "baseline";
    std::string scores;
    double removal_fraction = 0.1;
    double tau = 0.8;
    double a = 0.5;
    std::string tau_mode = "score";
    std::uint64_t seed = 1;
    CrfFlags crf;
    std::string out;
};

void run_train_tagger(const TrainTaggerOpts& o) {
    const TrainStrategy strategy = train_strategy_from(o.strategy);
    if ((strategy == TrainStrategy::removal || strategy == TrainStrategy::reweight) &&
        o.scores.empty())
        throw ValidationError("train-tagger: --strategy " + o.strategy + " requires --scores");

    auto loaded = load_inputs(o.corpus, o.annotations);
    const LabelType label = label_type_from(o.label);
    const auto majority = majority_layer(loaded.corpus, loaded.layers, label);

    ReweightConfig reweight;
    reweight.tau = o.tau;
    reweight.a = o.a;
    reweight.tau_mode = tau_mode_from(o.tau_mode);

    std::map<std::string, double> weights;
    std::set<std::string> removed;
    switch (strategy) {
        case TrainStrategy::baseline: break;
        case TrainStrategy::removal:
            removed = removal_set(load_records(o.scores), o.removal_fraction);
            break;
        case TrainStrategy::reweight:
            weights = reweight_map(load_records(o.scores), reweight);
            break;
        case TrainStrategy::agreement:
            weights =
                agreement_weighting(loaded.corpus, loaded.layers, label, SvrConfig{}, reweight)
                    .weights;
            break;
    }

    std::vector<TaggedSentence> data;
    loaded.corpus.for_each_sentence([&](const Sentence& s) {
        if (removed.count(s.sent_id) != 0) return;
        TaggedSentence ex;
        ex.sent_id = s.sent_id;
        ex.features = sentence_feature_ids(s);
        ex.tags = spans_to_tags(s, majority);
        auto it = weights.find(s.sent_id);
        ex.weight = it == weights.end() ? 1.0 : it->second;
        data.push_back(std::move(ex));
    });
    const auto trained = train_crf(data, label, o.crf.to_config(o.seed));

    Json plan{{"command", "train-tagger"},
              {"corpus", o.corpus},
              {"annotations", o.annotations},
              {"label_type", o.label},
              {"strategy", o.strategy},
              {"scores", o.scores},
              {"removal_fraction", o.removal_fraction},
              {"tau", o.tau},
              {"a", o.a},
              {"tau_mode", o.tau_mode},
              {"seed", o.seed},
              {"crf", o.crf.plan()}};
    Json model_json = tagger_to_json(trained.model);
    model_json["meta"] = Json{{"plan", plan}};
    atomic_write(o.out, model_json.dump() + "\n");
    info("final epoch loss " + format_double(trained.epoch_loss.back()) + "; wrote " + o.out);
}

struct RouteOpts {
    std::string corpus;
    std::string scores;
    std::size_t budget = 0;
    double percentile = 5.0;
    std::string strategy = "difficulty";
    std::uint64_t seed = 1;
    std::string out;
};

void run_route(const RouteOpts& o) {
    auto loaded = load_inputs(o.corpus, {});
    RoutingPlan plan;
    if (route_strategy_from(o.strategy) == RouteStrategy::difficulty) {
        if (o.scores.empty())
            throw ValidationError("route: --strategy difficulty requires --scores");
        plan = route_top_difficulty(loaded.corpus, load_records(o.scores), o.budget, o.percentile);
    } else {
        plan = route_random(loaded.corpus, o.budget, o.seed);
    }
    plan.seed = o.seed;
    Json echo{{"command", "route"},    {"corpus", o.corpus},       {"scores", o.scores},
              {"budget", o.budget},    {"percentile", o.percentile},
              {"strategy", o.strategy}, {"seed", o.seed}};
    Json j = routing_plan_to_json(plan);
    j["meta"] = Json{{"plan", echo}};
    atomic_write(o.out, j.dump(2) + "\n");
    info("routed " + std::to_string(plan.routed_doc_ids.size()) + " documents to experts");
}

struct MergeOpts {
    std::string corpus;
    std::vector<std::string> crowd;
    std::vector<std::string> expert;
    std::string plan;
    std::string out;
};

void run_merge(const MergeOpts& o) {
    auto crowd_load = load_inputs(o.corpus, o.crowd);
    auto expert_load = load_corpus(o.corpus, o.expert);
    const auto plan = routing_plan_from_json(load_json_file(o.plan), o.plan);
    const auto merged = merge_expert(crowd_load.corpus, crowd_load.layers, expert_load.layers,
                                     plan.routed_doc_ids);
    Json echo{{"command", "merge"},
              {"corpus", o.corpus},
              {"crowd", o.crowd},
              {"expert", o.expert},
              {"plan", o.plan},
              {"routed", plan.routed_doc_ids.size()}};
    atomic_write(o.out, layers_to_jsonl(merged, echo));
    info("wrote " + std::to_string(merged.size()) + " merged layers to " + o.out);
}

struct CurveOpts {
    std::string corpus;
    std::vector<std::string> crowd;
    std::vector<std::string> expert;
    std::string scores;
    std::vector<std::size_t> budgets;
    double percentile = 5.0;
    std::string strategy = "difficulty";
    std::string label = "P";
    double eval_fraction = 0.2;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    CrfFlags crf;
    std::string out;
};

void run_curve(const CurveOpts& o) {
    auto crowd_load = load_inputs(o.corpus, o.crowd);
    auto expert_load = load_corpus(o.corpus, o.expert);
    CurveConfig cfg;
    cfg.label = label_type_from(o.label);
    cfg.route = route_strategy_from(o.strategy);
    cfg.budgets = o.budgets;
    cfg.percentile = o.percentile;
    cfg.crf = o.crf.to_config(o.seed);
    cfg.eval_fraction = o.eval_fraction;
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    const auto records = load_records(o.scores);
    const auto curve = simulate_budget_curve(crowd_load.corpus, crowd_load.layers,
                                             expert_load.layers, records, cfg);
    Json plan{{"command", "curve"},       {"corpus", o.corpus},
              {"crowd", o.crowd},         {"expert", o.expert},
              {"scores", o.scores},       {"budgets", o.budgets},
              {"percentile", o.percentile}, {"strategy", o.strategy},
              {"label_type", o.label},    {"eval_fraction", o.eval_fraction},
              {"seed", o.seed},           {"crf", o.crf.plan()}};
    atomic_write(o.out, curve_to_csv(curve, plan));
    info("wrote " + std::to_string(curve.size()) + " curve rows to " + o.out);
}

struct ReportOpts {
    std::string corpus;
    std::vector<std::string> crowd;
    std::vector<std::string> expert;
    std::string strategy = "baseline";
    std::string scores;
    std::string plan_path;
    double removal_fraction = 0.1;
    double tau = 0.8;
    double a = 0.5;
    std::string tau_mode = "score";
    std::string label = "P";
    double eval_fraction = 0.2;
    std::uint64_t seed = 1;
    bool compare_baseline = false;
    CrfFlags crf;
    std::string out;
};

ExperimentReport run_route_report(const ReportOpts& o, const Corpus& corpus,
                                  const std::vector<AnnotationLayer>& crowd,
                                  const std::vector<AnnotationLayer>& expert) {
    const auto plan = routing_plan_from_json(load_json_file(o.plan_path), o.plan_path);
    const LabelType label = label_type_from(o.label);
    const auto split = make_eval_split(corpus, o.eval_fraction, o.seed);
    const Corpus train_corpus = corpus.subset(split.train_doc_ids);
    const Corpus eval_corpus = corpus.subset(split.eval_doc_ids);
    std::vector<std::string> routed_in_train;
    for (const auto& id : plan.routed_doc_ids)
        if (train_corpus.has_document(id)) routed_in_train.push_back(id);

    const auto tags = merged_training_layer(train_corpus, crowd, expert, routed_in_train, label);
    auto data = make_tagged_sentences(train_corpus, tags);
    const auto trained = train_crf(data, label, o.crf.to_config(o.seed));
    const auto predicted = predict_layer(trained.model, eval_corpus);
    const auto gold = detail::eval_gold_layer(eval_corpus, expert, label);
    const auto eval = token_prf(eval_corpus, predicted, gold);

    ExperimentReport report;
    report.label_type = label;
    report.strategy = "route_" + plan.strategy;
    report.metrics = eval.overall;
    report.budget = plan.budget;
    report.seed = o.seed;
    for (const auto& [doc, prf] : eval.per_document) report.per_document_f1[doc] = prf.f1;
    return report;
}

void run_report(const ReportOpts& o) {
    auto crowd_load = load_inputs(o.corpus, o.crowd);
    auto expert_load = load_corpus(o.corpus, o.expert);
    const Corpus& corpus = crowd_load.corpus;

    Json plan{{"command", "report"},
              {"corpus", o.corpus},
              {"crowd", o.crowd},
              {"expert", o.expert},
              {"strategy", o.strategy},
              {"scores", o.scores},
              {"routing_plan", o.plan_path},
              {"removal_fraction", o.removal_fraction},
              {"tau", o.tau},
              {"a", o.a},
              {"tau_mode", o.tau_mode},
              {"label_type", o.label},
              {"eval_fraction", o.eval_fraction},
              {"seed", o.seed},
              {"compare_baseline", o.compare_baseline},
              {"crf", o.crf.plan()}};

    ExperimentConfig base_cfg;
    base_cfg.label = label_type_from(o.label);
    base_cfg.removal_fraction = o.removal_fraction;
    base_cfg.reweight.tau = o.tau;
    base_cfg.reweight.a = o.a;
    base_cfg.reweight.tau_mode = tau_mode_from(o.tau_mode);
    base_cfg.crf = o.crf.to_config(o.seed);
    base_cfg.eval_fraction = o.eval_fraction;
    base_cfg.seed = o.seed;

    ExperimentReport report;
    if (o.strategy == "route") {
        if (o.plan_path.empty()) throw ValidationError("report: --strategy route requires --plan");
        report = run_route_report(o, corpus, crowd_load.layers, expert_load.layers);
    } else {
        ExperimentConfig cfg = base_cfg;
        cfg.strategy = train_strategy_from(o.strategy);
        if ((cfg.strategy == TrainStrategy::removal || cfg.strategy == TrainStrategy::reweight) &&
            o.scores.empty())
            throw ValidationError("report: --strategy " + o.strategy + " requires --scores");
        const auto records = o.scores.empty() ? std::vector<DifficultyRecord>{}
                                              : load_records(o.scores);
        report = run_training_experiment(corpus, crowd_load.layers, expert_load.layers, records,
                                         cfg);
    }

    if (o.compare_baseline && o.strategy != "baseline") {
        ExperimentConfig cfg = base_cfg;
        cfg.strategy = TrainStrategy::baseline;
        const auto baseline = run_training_experiment(corpus, crowd_load.layers,
                                                      expert_load.layers, {}, cfg);
        std::vector<double> a, b;
        for (const auto& [doc, f1] : report.per_document_f1) {
            auto it = baseline.per_document_f1.find(doc);
            if (it != baseline.per_document_f1.end()) {
                a.push_back(f1);
                b.push_back(it->second);
            }
        }
        try {
            report.p_value = sign_test(a, b).p_value;
        } catch (const ValidationError&) {
            info("note: all per-document F1 pairs tied; omitting p_value");
        }
    }

    report.config = plan;
    atomic_write(o.out, report_to_json(report).dump(2) + "\n");
    info("strategy " + report.strategy + ": f1 " + format_double(report.metrics.f1) +
         " written to " + o.out);
}

struct SignTestOpts {
    std::string report_a;
    std::string report_b;
    std::string out;
};

void run_sign_test(const SignTestOpts& o) {
    auto per_doc = [](const std::string& path) {
        const Json j = load_json_file(path);
        if (!j.contains("per_document_f1"))
            throw ValidationError(path + ": report has no per_document_f1 map");
        std::map<std::string, double> out;
        for (const auto& [doc, f1] : j["per_document_f1"].items())
            out[doc] = f1.get<double>();
        return out;
    };
    const auto fa = per_doc(o.report_a);
    const auto fb = per_doc(o.report_b);
    std::vector<double> a, b;
    for (const auto& [doc, f1] : fa) {
        auto it = fb.find(doc);
        if (it != fb.end()) {
            a.push_back(f1);
            b.push_back(it->second);
        }
    }
    if (a.empty()) throw ValidationError("sign-test: reports share no documents");
    Json plan{{"command", "sign-test"}, {"report_a", o.report_a}, {"report_b", o.report_b}};
    Json j{{"schema_version", kSchemaVersion}, {"n_pairs", a.size()}};
    try {
        const auto result = sign_test(a, b);
        j["wins_a"] = result.wins_a;
        j["wins_b"] = result.wins_b;
        j["ties"] = result.ties;
        j["p_value"] = result.p_value;
        info("p_value " + format_double(result.p_value) + " written to " + o.out);
    } catch (const ValidationError&) {
        j["wins_a"] = 0;
        j["wins_b"] = 0;
        j["ties"] = a.size();
        info("all pairs tied; p_value omitted");
    }
    j["meta"] = Json{{"plan", plan}};
    atomic_write(o.out, j.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"annodiff: annotation difficulty scoring, prediction and exploitation"};
    app.require_subcommand(1);

    auto ingest = std::make_shared<IngestOpts>();
    {
        auto* sub = app.add_subcommand("ingest", "Split and tokenize raw documents into a corpus");
        sub->add_option("--in", ingest->in, "Raw document JSONL")->required();
        sub->add_option("--out", ingest->out, "Corpus JSONL output")->required();
        sub->callback([ingest] { run_ingest(*ingest); });
    }

    auto synth = std::make_shared<SynthOpts>();
    {
        auto* sub = app.add_subcommand("synth", "Generate a synthetic corpus with planted difficulty");
        synth->sub = sub;
        sub->add_option("--preset", synth->preset, "small or medium")->capture_default_str();
        sub->add_option("--out", synth->out_dir, "Output directory")->required();
        sub->add_option("--docs", synth->cfg.num_docs, "Number of documents");
        sub->add_option("--sentences-per-doc", synth->cfg.sentences_per_doc, "Sentences per document");
        sub->add_option("--vocab", synth->cfg.vocab_size, "Vocabulary size");
        sub->add_option("--workers", synth->cfg.crowd_workers_per_sentence, "Crowd workers");
        sub->add_option("--gold-span-rate", synth->cfg.gold_span_rate, "Gold span start rate");
        sub->add_option("--difficult-fraction", synth->cfg.difficult_fraction,
                        "Fraction of difficult sentences");
        sub->add_option("--easy-noise", synth->cfg.easy_noise_rate, "Crowd noise on easy sentences");
        sub->add_option("--hard-noise", synth->cfg.hard_noise_rate, "Crowd noise on difficult sentences");
        sub->add_option("--expert-noise", synth->cfg.expert_noise_rate, "Expert noise rate");
        sub->add_option("--seed", synth->cfg.seed, "Random seed")->capture_default_str();
        sub->callback([synth] { run_synth(*synth); });
    }

    auto score = std::make_shared<ScoreOpts>();
    {
        auto* sub = app.add_subcommand("score", "Score per-sentence annotation difficulty");
        sub->add_option("--corpus", score->corpus, "Corpus JSONL")->required();
        sub->add_option("--crowd", score->crowd, "Crowd annotation JSONL")->required();
        sub->add_option("--ref", score->ref, "Reference annotation JSONL");
        sub->add_option("--ref-from-model", score->ref_from_model,
                        "Model-predicted layer JSONL used as reference (source becomes proxy)");
        sub->add_option("--label", score->label, "Label type P, I or O")->capture_default_str();
        sub->add_option("--mode", score->mode, "per_worker_mean or aggregate")->capture_default_str();
        sub->add_option("--format", score->format, "jsonl or csv")->capture_default_str();
        sub->add_option("--out", score->out, "Output path")->required();
        sub->callback([score] { run_score(*score); });
    }

    auto proxy = std::make_shared<ProxyOpts>();
    {
        auto* sub = app.add_subcommand(
            "proxy", "Out-of-fold tagger predictions for reference-free difficulty");
        sub->add_option("--corpus", proxy->corpus, "Corpus JSONL")->required();
        sub->add_option("--crowd", proxy->crowd, "Crowd annotation JSONL")->required();
        sub->add_option("--label", proxy->label, "Label type")->capture_default_str();
        sub->add_option("--k", proxy->k, "Number of folds")->capture_default_str();
        sub->add_option("--seed", proxy->seed, "Random seed")->capture_default_str();
        sub->add_option("--threads", proxy->threads, "Worker threads")->capture_default_str();
        add_crf_flags(sub, proxy->crf);
        sub->add_option("--out", proxy->out, "Predicted layer JSONL output")->required();
        sub->callback([proxy] { run_proxy(*proxy); });
    }

    auto agree = std::make_shared<AgreeOpts>();
    {
        auto* sub = app.add_subcommand("agree", "Mean pairwise inter-annotator rank correlation");
        sub->add_option("--corpus", agree->corpus, "Corpus JSONL")->required();
        sub->add_option("--annotations", agree->annotations, "Annotation JSONL")->required();
        sub->add_option("--label", agree->label, "Label type")->capture_default_str();
        sub->add_option("--out", agree->out, "Output JSON")->required();
        sub->callback([agree] { run_agree(*agree); });
    }

    auto traind = std::make_shared<TrainDifficultyOpts>();
    {
        auto* sub = app.add_subcommand("train-difficulty", "Fit a difficulty regressor to scores");
        sub->add_option("--corpus", traind->corpus, "Corpus JSONL")->required();
        sub->add_option("--scores", traind->scores, "Difficulty records JSONL")->required();
        sub->add_option("--model", traind->model, "svr or dense")->capture_default_str();
        sub->add_flag("--grid", traind->grid, "Grid-search hyperparameters");
        sub->add_option("--k", traind->k, "Folds for the grid search")->capture_default_str();
        sub->add_option("--seed", traind->seed, "Random seed")->capture_default_str();
        sub->add_option("--lambda", traind->lambda, "L2 strength")->capture_default_str();
        sub->add_option("--lr", traind->learning_rate, "Learning rate")->capture_default_str();
        sub->add_option("--epochs", traind->epochs, "Training epochs (0 keeps the default)");
        sub->add_option("--epsilon", traind->epsilon, "SVR insensitive-loss width")
            ->capture_default_str();
        sub->add_option("--n-max", traind->n_max, "Largest n-gram order")->capture_default_str();
        sub->add_option("--hash-dim", traind->hash_dim, "Feature hashing buckets (power of two)")
            ->capture_default_str();
        sub->add_option("--hidden", traind->hidden, "Dense hidden units")->capture_default_str();
        sub->add_option("--embeddings", traind->embeddings, "Word embeddings (text format)");
        sub->add_option("--embedding-dim", traind->embedding_dim,
                        "Random embedding dimension when --embeddings is absent")
            ->capture_default_str();
        sub->add_option("--out", traind->out, "Model JSON output")->required();
        sub->callback([traind] { run_train_difficulty(*traind); });
    }

    auto predictd = std::make_shared<PredictDifficultyOpts>();
    {
        auto* sub = app.add_subcommand("predict-difficulty", "Predict difficulty from text");
        sub->add_option("--corpus", predictd->corpus, "Corpus JSONL")->required();
        sub->add_option("--model", predictd->model, "Difficulty model JSON")->required();
        sub->add_option("--format", predictd->format, "jsonl or csv")->capture_default_str();
        sub->add_option("--out", predictd->out, "Output path")->required();
        sub->callback([predictd] { run_predict_difficulty(*predictd); });
    }

    auto traint = std::make_shared<TrainTaggerOpts>();
    {
        auto* sub = app.add_subcommand("train-tagger", "Train a sequence tagger on crowd labels");
        sub->add_option("--corpus", traint->corpus, "Corpus JSONL")->required();
        sub->add_option("--annotations", traint->annotations, "Crowd annotation JSONL")->required();
        sub->add_option("--label", traint->label, "Label type")->capture_default_str();
        sub->add_option("--strategy", traint->strategy,
                        "baseline, removal, reweight or agreement")
            ->capture_default_str();
        sub->add_option("--scores", traint->scores, "Difficulty records (removal/reweight)");
        sub->add_option("--removal-fraction", traint->removal_fraction,
                        "Fraction of most-difficult sentences to drop")
            ->capture_default_str();
        sub->add_option("--tau", traint->tau, "Reweighting threshold")->capture_default_str();
        sub->add_option("--a", traint->a, "Reweighting slope")->capture_default_str();
        sub->add_option("--tau-mode", traint->tau_mode, "score or percentile")
            ->capture_default_str();
        sub->add_option("--seed", traint->seed, "Random seed")->capture_default_str();
        add_crf_flags(sub, traint->crf);
        sub->add_option("--out", traint->out, "Tagger model JSON output")->required();
        sub->callback([traint] { run_train_tagger(*traint); });
    }

    auto route = std::make_shared<RouteOpts>();
    {
        auto* sub = app.add_subcommand("route", "Pick documents to route to expert annotators");
        sub->add_option("--corpus", route->corpus, "Corpus JSONL")->required();
        sub->add_option("--scores", route->scores, "Difficulty records (difficulty strategy)");
        sub->add_option("--budget", route->budget, "Documents to route")->required();
        sub->add_option("--percentile", route->percentile,
                        "Top difficulty percentile defining difficult sentences")
            ->capture_default_str();
        sub->add_option("--strategy", route->strategy, "difficulty or random")
            ->capture_default_str();
        sub->add_option("--seed", route->seed, "Random seed")->capture_default_str();
        sub->add_option("--out", route->out, "Routing plan JSON output")->required();
        sub->callback([route] { run_route(*route); });
    }

    auto merge = std::make_shared<MergeOpts>();
    {
        auto* sub = app.add_subcommand("merge", "Apply a routing plan to annotation layers");
        sub->add_option("--corpus", merge->corpus, "Corpus JSONL")->required();
        sub->add_option("--crowd", merge->crowd, "Crowd annotation JSONL")->required();
        sub->add_option("--expert", merge->expert, "Expert annotation JSONL")->required();
        sub->add_option("--plan", merge->plan, "Routing plan JSON")->required();
        sub->add_option("--out", merge->out, "Merged annotation JSONL output")->required();
        sub->callback([merge] { run_merge(*merge); });
    }

    auto curve = std::make_shared<CurveOpts>();
    {
        auto* sub = app.add_subcommand("curve", "F1 as a function of expert budget");
        sub->add_option("--corpus", curve->corpus, "Corpus JSONL")->required();
        sub->add_option("--crowd", curve->crowd, "Crowd annotation JSONL")->required();
        sub->add_option("--expert", curve->expert, "Expert annotation JSONL")->required();
        sub->add_option("--scores", curve->scores, "Difficulty records")->required();
        sub->add_option("--budgets", curve->budgets, "Comma-separated document budgets")
            ->required()
            ->delimiter(',');
        sub->add_option("--percentile", curve->percentile, "Difficulty percentile")
            ->capture_default_str();
        sub->add_option("--strategy", curve->strategy, "difficulty or random")
            ->capture_default_str();
        sub->add_option("--label", curve->label, "Label type")->capture_default_str();
        sub->add_option("--eval-fraction", curve->eval_fraction, "Held-out fraction")
            ->capture_default_str();
        sub->add_option("--seed", curve->seed, "Random seed")->capture_default_str();
        sub->add_option("--threads", curve->threads, "Worker threads")->capture_default_str();
        add_crf_flags(sub, curve->crf);
        sub->add_option("--out", curve->out, "Curve CSV output")->required();
        sub->callback([curve] { run_curve(*curve); });
    }

    auto report = std::make_shared<ReportOpts>();
    {
        auto* sub = app.add_subcommand("report", "Train, evaluate and report one strategy");
        sub->add_option("--corpus", report->corpus, "Corpus JSONL")->required();
        sub->add_option("--crowd", report->crowd, "Crowd annotation JSONL")->required();
        sub->add_option("--expert", report->expert, "Expert annotation JSONL")->required();
        sub->add_option("--strategy", report->strategy,
                        "baseline, removal, reweight, agreement or route")
            ->capture_default_str();
        sub->add_option("--scores", report->scores, "Difficulty records (removal/reweight)");
        sub->add_option("--plan", report->plan_path, "Routing plan JSON (route strategy)");
        sub->add_option("--removal-fraction", report->removal_fraction, "Removal fraction")
            ->capture_default_str();
        sub->add_option("--tau", report->tau, "Reweighting threshold")->capture_default_str();
        sub->add_option("--a", report->a, "Reweighting slope")->capture_default_str();
        sub->add_option("--tau-mode", report->tau_mode, "score or percentile")
            ->capture_default_str();
        sub->add_option("--label", report->label, "Label type")->capture_default_str();
        sub->add_option("--eval-fraction", report->eval_fraction, "Held-out fraction")
            ->capture_default_str();
        sub->add_option("--seed", report->seed, "Random seed")->capture_default_str();
        sub->add_flag("--compare-baseline", report->compare_baseline,
                      "Also run the baseline and attach a sign-test p-value");
        add_crf_flags(sub, report->crf);
        sub->add_option("--out", report->out, "Report JSON output")->required();
        sub->callback([report] { run_report(*report); });
    }

    auto signt = std::make_shared<SignTestOpts>();
    {
        auto* sub = app.add_subcommand("sign-test",
                                       "Exact two-sided sign test over paired per-document F1");
        sub->add_option("--report-a", signt->report_a, "First report JSON")->required();
        sub->add_option("--report-b", signt->report_b, "Second report JSON")->required();
        sub->add_option("--out", signt->out, "Result JSON output")->required();
        sub->callback([signt] { run_sign_test(*signt); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
