#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "annodiff/crf.hpp"
#include "annodiff/embedding.hpp"
#include "annodiff/io.hpp"
#include "annodiff/regressor.hpp"

namespace annodiff {

namespace detail {

inline void check_model_header(const Json& j, const char* expected_type,
                               const std::string& context) {
    if (!j.contains("schema_version") || j["schema_version"] != kSchemaVersion)
        throw ValidationError(context + ": missing or unsupported schema_version");
    if (!j.contains("model_type") || j["model_type"] != expected_type)
        throw ValidationError(context + ": expected model_type '" + expected_type + "'");
}

}  // namespace detail

inline Json tagger_to_json(const TaggerModel& model) {
    Json config{{"learning_rate", model.config.learning_rate},
                {"lambda", model.config.lambda},
                {"epochs", model.config.epochs},
                {"batch_size", model.config.batch_size},
                {"seed", model.config.seed}};
    Json transitions = Json::array();
    for (const auto& row : model.transitions)
        transitions.push_back(Json{row[0], row[1], row[2]});
    std::vector<std::pair<std::uint64_t, std::array<double, 3>>> sorted(
        model.emissions.begin(), model.emissions.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    Json emissions = Json::array();
    for (const auto& [id, w] : sorted)
        emissions.push_back(Json{id, Json{w[0], w[1], w[2]}});
    return Json{{"schema_version", kSchemaVersion},
                {"model_type", "tagger"},
                {"label_type", to_string(model.label_type)},
                {"config", std::move(config)},
                {"transitions", std::move(transitions)},
                {"emissions", std::move(emissions)}};
}

inline TaggerModel tagger_from_json(const Json& j, const std::string& context) {
    detail::check_model_header(j, "tagger", context);
    TaggerModel model;
    try {
        model.label_type = label_type_from(j.at("label_type").get<std::string>());
        const auto& c = j.at("config");
        model.config.learning_rate = c.at("learning_rate").get<double>();
        model.config.lambda = c.at("lambda").get<double>();
        model.config.epochs = c.at("epochs").get<std::size_t>();
        model.config.batch_size = c.at("batch_size").get<std::size_t>();
        model.config.seed = c.at("seed").get<std::uint64_t>();
        const auto& trans = j.at("transitions");
        if (trans.size() != 3) throw ValidationError(context + ": transitions must be 3x3");
        for (std::size_t p = 0; p < 3; ++p) {
            if (trans[p].size() != 3) throw ValidationError(context + ": transitions must be 3x3");
            for (std::size_t t = 0; t < 3; ++t)
                model.transitions[p][t] = trans[p][t].get<double>();
        }
        for (const auto& e : j.at("emissions")) {
            if (e.size() != 2 || e[1].size() != 3)
                throw ValidationError(context + ": bad emission entry");
            auto& w = model.emissions[e[0].get<std::uint64_t>()];
            for (std::size_t t = 0; t < 3; ++t) w[t] = e[1][t].get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(context + ": bad tagger model: " + e.what());
    }
    return model;
}

inline Json svr_to_json(const SvrModel& model) {
    Json config{{"epsilon", model.config.epsilon},
                {"lambda", model.config.lambda},
                {"learning_rate", model.config.learning_rate},
                {"epochs", model.config.epochs},
                {"n_max", model.config.ngrams.n_max},
                {"hash_dim", model.config.ngrams.hash_dim}};
    std::vector<std::pair<std::uint32_t, double>> sorted(model.weights.begin(),
                                                         model.weights.end());
    std::sort(sorted.begin(), sorted.end());
    Json weights = Json::array();
    for (const auto& [idx, w] : sorted) weights.push_back(Json{idx, w});
    return Json{{"schema_version", kSchemaVersion},
                {"model_type", "svr"},
                {"label_type", to_string(model.label_type)},
                {"config", std::move(config)},
                {"bias", model.bias},
                {"weights", std::move(weights)}};
}

inline SvrModel svr_from_json(const Json& j, const std::string& context) {
    detail::check_model_header(j, "svr", context);
    SvrModel model;
    try {
        model.label_type = label_type_from(j.at("label_type").get<std::string>());
        const auto& c = j.at("config");
        model.config.epsilon = c.at("epsilon").get<double>();
        model.config.lambda = c.at("lambda").get<double>();
        model.config.learning_rate = c.at("learning_rate").get<double>();
        model.config.epochs = c.at("epochs").get<std::size_t>();
        model.config.ngrams.n_max = c.at("n_max").get<std::size_t>();
        model.config.ngrams.hash_dim = c.at("hash_dim").get<std::size_t>();
        model.bias = j.at("bias").get<double>();
        for (const auto& e : j.at("weights")) {
            if (e.size() != 2) throw ValidationError(context + ": bad weight entry");
            model.weights[e[0].get<std::uint32_t>()] = e[1].get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(context + ": bad svr model: " + e.what());
    }
    return model;
}

inline Json dense_to_json(const DenseModel& model) {
    Json config{{"hidden", model.config.hidden},
                {"lambda", model.config.lambda},
                {"learning_rate", model.config.learning_rate},
                {"epochs", model.config.epochs},
                {"seed", model.config.seed}};
    std::vector<std::string> words;
    words.reserve(model.table.size());
    for (const auto& [w, v] : model.table.vectors()) words.push_back(w);
    std::sort(words.begin(), words.end());
    Json vectors = Json::array();
    for (const auto& w : words) vectors.push_back(Json{w, *model.table.find(w)});
    return Json{{"schema_version", kSchemaVersion},
                {"model_type", "dense"},
                {"label_type", to_string(model.label_type)},
                {"config", std::move(config)},
                {"input_dim", model.input_dim},
                {"w1", model.w1},
                {"b1", model.b1},
                {"w2", model.w2},
                {"b2", model.b2},
                {"embeddings", Json{{"dim", model.table.dim()}, {"vectors", std::move(vectors)}}}};
}

inline DenseModel dense_from_json(const Json& j, const std::string& context) {
    detail::check_model_header(j, "dense", context);
    DenseModel model;
    try {
        model.label_type = label_type_from(j.at("label_type").get<std::string>());
        const auto& c = j.at("config");
        model.config.hidden = c.at("hidden").get<std::size_t>();
        model.config.lambda = c.at("lambda").get<double>();
        model.config.learning_rate = c.at("learning_rate").get<double>();
        model.config.epochs = c.at("epochs").get<std::size_t>();
        model.config.seed = c.at("seed").get<std::uint64_t>();
        model.input_dim = j.at("input_dim").get<std::size_t>();
        model.w1 = j.at("w1").get<std::vector<double>>();
        model.b1 = j.at("b1").get<std::vector<double>>();
        model.w2 = j.at("w2").get<std::vector<double>>();
        model.b2 = j.at("b2").get<double>();
        const auto& emb = j.at("embeddings");
        const auto dim = emb.at("dim").get<std::size_t>();
        std::unordered_map<std::string, std::vector<double>> vectors;
        for (const auto& e : emb.at("vectors")) {
            if (e.size() != 2) throw ValidationError(context + ": bad embedding entry");
            vectors[e[0].get<std::string>()] = e[1].get<std::vector<double>>();
        }
        model.table = EmbeddingTable(dim, std::move(vectors));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(context + ": bad dense model: " + e.what());
    }
    if (model.w1.size() != model.config.hidden * model.input_dim ||
        model.b1.size() != model.config.hidden || model.w2.size() != model.config.hidden)
        throw ValidationError(context + ": dense model shape mismatch");
    return model;
}

}  // namespace annodiff
