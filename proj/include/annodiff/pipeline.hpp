#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "annodiff/annotation.hpp"
#include "annodiff/common.hpp"
#include "annodiff/corpus.hpp"
#include "annodiff/crf.hpp"
#include "annodiff/crossfold.hpp"
#include "annodiff/io.hpp"
#include "annodiff/regressor.hpp"
#include "annodiff/rng.hpp"
#include "annodiff/scoring.hpp"
#include "annodiff/stats.hpp"

namespace annodiff {

// ---------------------------------------------------------------------------
// Difficulty-driven training-set operations
// ---------------------------------------------------------------------------

/// The ceil(fraction * N) highest-scored sentences; equal scores break toward
/// the lexicographically smaller sent_id so the removed set is reproducible.
inline std::set<std::string> removal_set(std::vector<DifficultyRecord> records, double fraction) {
    if (fraction < 0.0 || fraction >= 1.0)
        throw ValidationError("removal fraction must lie in [0, 1)");
    if (fraction == 0.0 || records.empty()) return {};
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.sent_id < b.sent_id;
    });
    const auto m = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(records.size())));
    std::set<std::string> removed;
    for (std::size_t i = 0; i < std::min(m, records.size()); ++i)
        removed.insert(records[i].sent_id);
    return removed;
}

/// Nearest-rank quantile: the smallest value with at least q percent of the
/// sample at or below it.
inline double quantile_threshold(std::vector<double> values, double q) {
    if (values.empty()) throw ValidationError("quantile of an empty sample");
    if (q < 0.0 || q > 100.0) throw ValidationError("quantile must lie in [0, 100]");
    std::sort(values.begin(), values.end());
    if (q == 0.0) return values.front();
    const auto rank = static_cast<std::size_t>(
        std::ceil(q / 100.0 * static_cast<double>(values.size())));
    return values[rank - 1];
}

enum class TauMode { score, percentile };

inline TauMode tau_mode_from(const std::string& s) {
    if (s == "score") return TauMode::score;
    if (s == "percentile") return TauMode::percentile;
    throw ValidationError("unknown tau mode: " + s);
}

struct ReweightConfig {
    double tau = 0.8;
    double a = 0.5;
    TauMode tau_mode = TauMode::score;  // percentile: tau names a score quantile

    void validate() const {
        if (tau < 0.0 || tau >= 1.0) throw ValidationError("tau must lie in [0, 1)");
        if (a < 0.0 || a > 1.0) throw ValidationError("a must lie in [0, 1]");
    }
};

/// Inverse-difficulty weights: full weight up to tau, then a linear ramp down
/// to 1 - a at difficulty 1. In percentile mode the threshold is the tau
/// quantile of the observed scores instead of tau itself.
inline std::map<std::string, double> reweight_map(const std::vector<DifficultyRecord>& records,
                                                  const ReweightConfig& config) {
    config.validate();
    double tau = config.tau;
    if (config.tau_mode == TauMode::percentile) {
        std::vector<double> scores;
        scores.reserve(records.size());
        for (const auto& r : records) scores.push_back(r.score);
        tau = quantile_threshold(scores, config.tau * 100.0);
    }
    std::map<std::string, double> weights;
    for (const auto& r : records) {
        const double d = r.score;
        weights[r.sent_id] = d <= tau ? 1.0 : 1.0 - config.a * (d - tau) / (1.0 - tau);
    }
    return weights;
}

struct AgreementWeighting {
    std::vector<DifficultyRecord> records;  // predicted difficulty, corpus order
    std::map<std::string, double> weights;
};

/// Reference-free variant: per-sentence crowd disagreement becomes the target
/// for a text regressor, whose predictions then feed the usual reweighting.
inline AgreementWeighting agreement_weighting(const Corpus& corpus,
                                              const std::vector<AnnotationLayer>& crowd,
                                              LabelType label, const SvrConfig& svr,
                                              const ReweightConfig& reweight) {
    const auto targets = crowd_disagreement_targets(corpus, crowd, label);
    std::vector<DifficultyRecord> target_records;
    corpus.for_each_sentence([&](const Sentence& s) {
        target_records.push_back(
            DifficultyRecord{s.sent_id, label, targets.at(s.sent_id), DifficultySource::proxy});
    });
    const auto examples = make_regression_examples(corpus, target_records);
    const auto model = train_svr(examples, label, svr);
    AgreementWeighting out;
    out.records = predict_difficulty(model, corpus);
    out.weights = reweight_map(out.records, reweight);
    return out;
}

// ---------------------------------------------------------------------------
// Expert routing
// ---------------------------------------------------------------------------

struct RoutingPlan {
    std::string strategy;  // "difficulty" or "random"
    std::size_t budget = 0;
    double percentile = 5.0;
    std::uint64_t seed = 1;
    std::vector<std::string> routed_doc_ids;
};

/// Ranks documents by how many of their sentences sit in the top `percentile`
/// percent of difficulty, and routes the `budget` highest to experts. Equal
/// counts break toward the smaller doc_id.
inline RoutingPlan route_top_difficulty(const Corpus& corpus,
                                        const std::vector<DifficultyRecord>& records,
                                        std::size_t budget, double percentile) {
    if (budget > corpus.num_documents())
        throw ValidationError("routing budget exceeds document count");
    if (records.empty()) throw ValidationError("route_top_difficulty: no difficulty records");
    std::vector<double> scores;
    scores.reserve(records.size());
    for (const auto& r : records) scores.push_back(r.score);
    const double threshold = quantile_threshold(scores, 100.0 - percentile);

    std::map<std::string, std::size_t> difficult_count;
    for (const auto& id : corpus.doc_ids()) difficult_count[id] = 0;
    for (const auto& r : records) {
        if (r.score >= threshold) ++difficult_count.at(corpus.sentence(r.sent_id).doc_id);
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(difficult_count.begin(),
                                                            difficult_count.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    RoutingPlan plan;
    plan.strategy = "difficulty";
    plan.budget = budget;
    plan.percentile = percentile;
    for (std::size_t i = 0; i < budget; ++i) plan.routed_doc_ids.push_back(ranked[i].first);
    return plan;
}

inline RoutingPlan route_random(const Corpus& corpus, std::size_t budget, std::uint64_t seed) {
    if (budget > corpus.num_documents())
        throw ValidationError("routing budget exceeds document count");
    auto ids = corpus.doc_ids();
    Rng rng(seed);
    rng.shuffle(ids);
    RoutingPlan plan;
    plan.strategy = "random";
    plan.budget = budget;
    plan.seed = seed;
    plan.routed_doc_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(budget));
    return plan;
}

inline Json routing_plan_to_json(const RoutingPlan& plan) {
    return Json{{"schema_version", kSchemaVersion},
                {"strategy", plan.strategy},
                {"budget", plan.budget},
                {"percentile", plan.percentile},
                {"seed", plan.seed},
                {"routed_doc_ids", plan.routed_doc_ids}};
}

inline RoutingPlan routing_plan_from_json(const Json& j, const std::string& context) {
    if (!j.contains("schema_version") || j["schema_version"] != kSchemaVersion)
        throw ValidationError(context + ": missing or unsupported schema_version");
    RoutingPlan plan;
    try {
        plan.strategy = j.at("strategy").get<std::string>();
        plan.budget = j.at("budget").get<std::size_t>();
        plan.percentile = j.at("percentile").get<double>();
        plan.seed = j.at("seed").get<std::uint64_t>();
        plan.routed_doc_ids = j.at("routed_doc_ids").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(context + ": bad routing plan: " + e.what());
    }
    return plan;
}

/// Annotation set after routing: crowd layers keep only unrouted documents,
/// expert layers keep only routed ones. Layers left without any spans drop
/// out entirely.
inline std::vector<AnnotationLayer> merge_expert(const Corpus& corpus,
                                                 const std::vector<AnnotationLayer>& crowd,
                                                 const std::vector<AnnotationLayer>& expert,
                                                 const std::vector<std::string>& routed_doc_ids) {
    std::set<std::string> routed(routed_doc_ids.begin(), routed_doc_ids.end());
    for (const auto& id : routed)
        if (!corpus.has_document(id)) throw ValidationError("routing plan names unknown doc_id: " + id);
    auto in_routed = [&](const std::string& sent_id) {
        return routed.count(corpus.sentence(sent_id).doc_id) != 0;
    };
    std::vector<AnnotationLayer> merged;
    for (const auto& layer : crowd) {
        auto kept = layer.filtered([&](const std::string& sent_id) { return !in_routed(sent_id); });
        if (!kept.spans().empty()) merged.push_back(std::move(kept));
    }
    for (const auto& layer : expert) {
        auto kept = layer.filtered(in_routed);
        if (!kept.spans().empty()) merged.push_back(std::move(kept));
    }
    return merged;
}

/// Majority-voted training tags under a routing plan: expert majority inside
/// routed documents, crowd majority elsewhere.
inline AnnotationLayer merged_training_layer(const Corpus& corpus,
                                             const std::vector<AnnotationLayer>& crowd,
                                             const std::vector<AnnotationLayer>& expert,
                                             const std::vector<std::string>& routed_doc_ids,
                                             LabelType label) {
    const auto crowd_group = layers_of(crowd, label);
    const auto expert_group = layers_of(expert, label);
    if (crowd_group.empty())
        throw ValidationError("merged_training_layer: no crowd layers for label type " +
                              to_string(label));
    if (!routed_doc_ids.empty() && expert_group.empty())
        throw ValidationError("merged_training_layer: routing requires expert layers");
    std::set<std::string> routed(routed_doc_ids.begin(), routed_doc_ids.end());
    std::vector<TokenSpan> spans;
    corpus.for_each_sentence([&](const Sentence& s) {
        const auto& group = routed.count(s.doc_id) != 0 ? expert_group : crowd_group;
        const auto mask = majority_mask(s, group);
        for (auto&sp : mask_to_spans(s.sent_id, mask)) spans.push_back(std::move(sp));
    });
    return AnnotationLayer("merged", Group::crowd, label, std::move(spans));
}

// ---------------------------------------------------------------------------
// Token-level evaluation
// ---------------------------------------------------------------------------

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    /// Empty against empty counts as perfect; empty against non-empty as zero.
    static PRF from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
        PRF out;
        out.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                                      : (fn == 0 ? 1.0 : 0.0);
        out.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn)
                                   : (fp == 0 ? 1.0 : 0.0);
        out.f1 = (out.precision + out.recall) > 0.0
                     ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                     : 0.0;
        return out;
    }
};

struct TokenEval {
    PRF overall;
    std::map<std::string, PRF> per_document;
};

/// Token-level precision/recall/F1 of predicted spans against gold spans.
inline TokenEval token_prf(const Corpus& corpus, const AnnotationLayer& predicted,
                           const AnnotationLayer& gold) {
    if (predicted.label_type() != gold.label_type())
        throw ValidationError("token_prf: label type mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    std::map<std::string, std::array<std::size_t, 3>> per_doc;
    corpus.for_each_sentence([&](const Sentence& s) {
        auto& c = per_doc[s.doc_id];
        for (std::size_t i = 0; i < s.size(); ++i) {
            const bool p = predicted.covers(s.sent_id, i);
            const bool g = gold.covers(s.sent_id, i);
            if (p && g) ++c[0];
            else if (p) ++c[1];
            else if (g) ++c[2];
        }
    });
    TokenEval eval;
    for (const auto& [doc, c] : per_doc) {
        eval.per_document[doc] = PRF::from_counts(c[0], c[1], c[2]);
        tp += c[0];
        fp += c[1];
        fn += c[2];
    }
    eval.overall = PRF::from_counts(tp, fp, fn);
    return eval;
}

// ---------------------------------------------------------------------------
// End-to-end training experiments
// ---------------------------------------------------------------------------

struct EvalSplit {
    std::vector<std::string> train_doc_ids;
    std::vector<std::string> eval_doc_ids;
};

/// Seeded shuffle, then the first ceil(eval_fraction * N) documents are held
/// out for evaluation.
inline EvalSplit make_eval_split(const Corpus& corpus, double eval_fraction, std::uint64_t seed) {
    if (eval_fraction <= 0.0 || eval_fraction >= 1.0)
        throw ValidationError("eval fraction must lie in (0, 1)");
    auto ids = corpus.doc_ids();
    if (ids.size() < 2) throw ValidationError("need at least two documents to split");
    Rng rng(seed);
    rng.shuffle(ids);
    const auto m = std::min(
        ids.size() - 1, static_cast<std::size_t>(std::ceil(
                            eval_fraction * static_cast<double>(ids.size()))));
    EvalSplit split;
    split.eval_doc_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(m));
    split.train_doc_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(m), ids.end());
    return split;
}

enum class TrainStrategy { baseline, removal, reweight, agreement };

inline TrainStrategy train_strategy_from(const std::string& s) {
    if (s == "baseline") return TrainStrategy::baseline;
    if (s == "removal") return TrainStrategy::removal;
    if (s == "reweight") return TrainStrategy::reweight;
    if (s == "agreement") return TrainStrategy::agreement;
    throw ValidationError("unknown training strategy: " + s);
}

inline std::string to_string(TrainStrategy s) {
    switch (s) {
        case TrainStrategy::baseline: return "baseline";
        case TrainStrategy::removal: return "removal";
        case TrainStrategy::reweight: return "reweight";
        case TrainStrategy::agreement: return "agreement";
    }
    throw std::logic_error("unreachable");
}

struct ExperimentConfig {
    LabelType label = LabelType::P;
    TrainStrategy strategy = TrainStrategy::baseline;
    double removal_fraction = 0.1;
    ReweightConfig reweight;
    SvrConfig svr;  // agreement weighting regressor
    CrfConfig crf;
    double eval_fraction = 0.2;
    std::uint64_t seed = 1;
};

struct ExperimentReport {
    LabelType label_type = LabelType::P;
    std::string strategy;
    PRF metrics;
    std::optional<std::size_t> budget;
    std::optional<double> p_value;
    Json config;
    std::uint64_t seed = 1;
    std::map<std::string, double> per_document_f1;
};

inline Json report_to_json(const ExperimentReport& report) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["label_type"] = to_string(report.label_type);
    j["strategy"] = report.strategy;
    j["precision"] = report.metrics.precision;
    j["recall"] = report.metrics.recall;
    j["f1"] = report.metrics.f1;
    if (report.budget) j["budget"] = *report.budget;
    if (report.p_value) j["p_value"] = *report.p_value;
    j["config"] = report.config;
    j["seed"] = report.seed;
    Json per_doc = Json::object();
    for (const auto& [doc, f1] : report.per_document_f1) per_doc[doc] = f1;
    j["per_document_f1"] = std::move(per_doc);
    return j;
}

namespace detail {

inline AnnotationLayer eval_gold_layer(const Corpus& eval_corpus,
                                       const std::vector<AnnotationLayer>& expert,
                                       LabelType label) {
    const auto group = layers_of(expert, label);
    if (group.empty())
        throw ValidationError("evaluation requires expert layers for label type " +
                              to_string(label));
    std::vector<TokenSpan> spans;
    eval_corpus.for_each_sentence([&](const Sentence& s) {
        for (auto& sp : mask_to_spans(s.sent_id, majority_mask(s, group)))
            spans.push_back(std::move(sp));
    });
    return AnnotationLayer("gold", Group::expert, label, std::move(spans));
}

}  // namespace detail

/// Trains a tagger on crowd-derived tags under the chosen strategy and scores
/// it on held-out documents against the expert majority.
inline ExperimentReport run_training_experiment(const Corpus& corpus,
                                                const std::vector<AnnotationLayer>& crowd,
                                                const std::vector<AnnotationLayer>& expert,
                                                const std::vector<DifficultyRecord>& records,
                                                const ExperimentConfig& config) {
    const auto split = make_eval_split(corpus, config.eval_fraction, config.seed);
    const Corpus train_corpus = corpus.subset(split.train_doc_ids);
    const Corpus eval_corpus = corpus.subset(split.eval_doc_ids);

    const auto train_tags = majority_layer(train_corpus, crowd, config.label);

    std::map<std::string, double> weights;
    std::set<std::string> removed;
    switch (config.strategy) {
        case TrainStrategy::baseline: break;
        case TrainStrategy::removal: {
            if (records.empty())
                throw ValidationError("removal strategy requires difficulty records");
            std::vector<DifficultyRecord> train_records;
            for (const auto& r : records)
                if (train_corpus.has_sentence(r.sent_id)) train_records.push_back(r);
            removed = removal_set(std::move(train_records), config.removal_fraction);
            break;
        }
        case TrainStrategy::reweight: {
            if (records.empty())
                throw ValidationError("reweight strategy requires difficulty records");
            weights = reweight_map(records, config.reweight);
            break;
        }
        case TrainStrategy::agreement: {
            weights = agreement_weighting(train_corpus, crowd, config.label, config.svr,
                                          config.reweight)
                          .weights;
            break;
        }
    }

    std::vector<TaggedSentence> data;
    train_corpus.for_each_sentence([&](const Sentence& s) {
        if (removed.count(s.sent_id) != 0) return;
        TaggedSentence ex;
        ex.sent_id = s.sent_id;
        ex.features = sentence_feature_ids(s);
        ex.tags = spans_to_tags(s, train_tags);
        auto it = weights.find(s.sent_id);
        ex.weight = it == weights.end() ? 1.0 : it->second;
        data.push_back(std::move(ex));
    });
    const auto trained = train_crf(data, config.label, config.crf);

    const auto predicted = predict_layer(trained.model, eval_corpus);
    const auto gold = detail::eval_gold_layer(eval_corpus, expert, config.label);
    const auto eval = token_prf(eval_corpus, predicted, gold);

    ExperimentReport report;
    report.label_type = config.label;
    report.strategy = to_string(config.strategy);
    report.metrics = eval.overall;
    report.seed = config.seed;
    for (const auto& [doc, prf] : eval.per_document) report.per_document_f1[doc] = prf.f1;
    report.config = Json{{"strategy", to_string(config.strategy)},
                         {"label_type", to_string(config.label)},
                         {"eval_fraction", config.eval_fraction},
                         {"removal_fraction", config.removal_fraction},
                         {"tau", config.reweight.tau},
                         {"a", config.reweight.a},
                         {"epochs", config.crf.epochs},
                         {"batch_size", config.crf.batch_size},
                         {"learning_rate", config.crf.learning_rate},
                         {"lambda", config.crf.lambda}};
    return report;
}

// ---------------------------------------------------------------------------
// Budget curves
// ---------------------------------------------------------------------------

enum class RouteStrategy { difficulty, random };

inline RouteStrategy route_strategy_from(const std::string& s) {
    if (s == "difficulty") return RouteStrategy::difficulty;
    if (s == "random") return RouteStrategy::random;
    throw ValidationError("unknown routing strategy: " + s);
}

struct CurveConfig {
    LabelType label = LabelType::P;
    RouteStrategy route = RouteStrategy::difficulty;
    std::vector<std::size_t> budgets;
    double percentile = 5.0;
    CrfConfig crf;
    double eval_fraction = 0.2;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
};

struct CurvePoint {
    std::size_t budget = 0;
    PRF metrics;
};

/// For each expert budget, routes that many training documents, retrains on
/// the merged annotations and evaluates on the fixed held-out split.
inline std::vector<CurvePoint> simulate_budget_curve(const Corpus& corpus,
                                                     const std::vector<AnnotationLayer>& crowd,
                                                     const std::vector<AnnotationLayer>& expert,
                                                     const std::vector<DifficultyRecord>& records,
                                                     const CurveConfig& config) {
    if (config.budgets.empty()) throw ValidationError("budget curve needs at least one budget");
    const auto split = make_eval_split(corpus, config.eval_fraction, config.seed);
    const Corpus train_corpus = corpus.subset(split.train_doc_ids);
    const Corpus eval_corpus = corpus.subset(split.eval_doc_ids);
    const auto gold = detail::eval_gold_layer(eval_corpus, expert, config.label);

    std::vector<DifficultyRecord> train_records;
    for (const auto& r : records)
        if (train_corpus.has_sentence(r.sent_id)) train_records.push_back(r);

    for (const auto budget : config.budgets)
        if (budget > train_corpus.num_documents())
            throw ValidationError("budget exceeds training document count");

    std::vector<CurvePoint> curve(config.budgets.size());
    parallel_for(config.budgets.size(), config.threads, [&](std::size_t bi) {
        const std::size_t budget = config.budgets[bi];
        RoutingPlan plan;
        if (budget == 0) {
            plan.strategy = config.route == RouteStrategy::difficulty ? "difficulty" : "random";
            plan.budget = 0;
        } else if (config.route == RouteStrategy::difficulty) {
            plan = route_top_difficulty(train_corpus, train_records, budget, config.percentile);
        } else {
            plan = route_random(train_corpus, budget, config.seed);
        }
        const auto tags = merged_training_layer(train_corpus, crowd, expert, plan.routed_doc_ids,
                                                config.label);
        std::vector<TaggedSentence> data = make_tagged_sentences(train_corpus, tags);
        const auto trained = train_crf(data, config.label, config.crf);
        const auto predicted = predict_layer(trained.model, eval_corpus);
        curve[bi].budget = budget;
        curve[bi].metrics = token_prf(eval_corpus, predicted, gold).overall;
    });
    return curve;
}

inline std::string curve_to_csv(const std::vector<CurvePoint>& curve,
                                const std::optional<Json>& plan = {}) {
    std::ostringstream out;
    out << "# schema_version=" << kSchemaVersion << '\n';
    if (plan) out << "# plan=" << plan->dump() << '\n';
    out << "budget,precision,recall,f1\n";
    for (const auto& p : curve) {
        out << p.budget << ',' << format_double(p.metrics.precision) << ','
            << format_double(p.metrics.recall) << ',' << format_double(p.metrics.f1) << '\n';
    }
    return out.str();
}

}  // namespace annodiff
