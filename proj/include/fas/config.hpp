#pragma once

// JSON mapping for trainer configurations. Reading is strict: unknown keys
// and values of the wrong type are rejected.

#include <functional>
#include <map>
#include <string>

#include <json.hpp>

#include "fas/error.hpp"
#include "fas/fas_cd.hpp"
#include "fas/fas_pl.hpp"
#include "fas/fas_simple.hpp"

namespace fas::config {

using json = nlohmann::json;

namespace detail {

template <typename T>
void read_field(const json& j, const std::string& key, T& out) {
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!j.is_boolean()) throw InvalidInput("");
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!j.is_number_integer() || (j.is_number_integer() && j.get<std::int64_t>() < 0)) throw InvalidInput("");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!j.is_number()) throw InvalidInput("");
        }
        out = j.get<T>();
    } catch (const std::exception&) {
        throw InvalidInput("config key '" + key + "' has invalid value " + j.dump());
    }
}

using FieldTable = std::map<std::string, std::function<void(const json&)>>;

inline void apply(const json& j, const FieldTable& fields, const char* what) {
    if (!j.is_object()) {
        throw InvalidInput(std::string(what) + " config must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        const auto it = fields.find(key);
        if (it == fields.end()) {
            throw InvalidInput(std::string("unknown ") + what + " config key '" + key + "'");
        }
        it->second(value);
    }
}

#define FAS_FIELD(cfg, name) \
    { #name, [&cfg](const json& v) { read_field(v, #name, cfg.name); } }

}  // namespace detail

inline json to_json(const simple::SimpleTrainConfig& c) {
    return {{"experts", c.experts},
            {"stiffness", c.stiffness},
            {"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"batch_size", c.batch_size},
            {"updates", c.updates},
            {"reweight_by_energy", c.reweight_by_energy},
            {"project_gradient", c.project_gradient},
            {"seed", c.seed}};
}

inline void apply_json(simple::SimpleTrainConfig& c, const json& j) {
    using namespace detail;
    apply(j,
          {FAS_FIELD(c, experts), FAS_FIELD(c, stiffness), FAS_FIELD(c, learning_rate), FAS_FIELD(c, momentum),
           FAS_FIELD(c, batch_size), FAS_FIELD(c, updates), FAS_FIELD(c, reweight_by_energy),
           FAS_FIELD(c, project_gradient), FAS_FIELD(c, seed)},
          "train-simple");
}

inline std::string to_string(pl::PlOptimizer o) { return o == pl::PlOptimizer::momentum ? "momentum" : "cg"; }

inline pl::PlOptimizer optimizer_from_string(const std::string& s) {
    if (s == "momentum") return pl::PlOptimizer::momentum;
    if (s == "cg") return pl::PlOptimizer::conjugate_gradient;
    throw InvalidInput("unknown optimizer '" + s + "' (expected momentum or cg)");
}

inline json to_json(const pl::PlTrainConfig& c) {
    return {{"experts", c.experts},
            {"stiffness", c.stiffness},
            {"levels", c.levels},
            {"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"iterations", c.iterations},
            {"line_search", c.line_search},
            {"max_backtracks", c.max_backtracks},
            {"optimizer", to_string(c.optimizer)},
            {"seed", c.seed}};
}

inline void apply_json(pl::PlTrainConfig& c, const json& j) {
    using namespace detail;
    apply(j,
          {FAS_FIELD(c, experts), FAS_FIELD(c, stiffness), FAS_FIELD(c, levels), FAS_FIELD(c, learning_rate),
           FAS_FIELD(c, momentum), FAS_FIELD(c, iterations), FAS_FIELD(c, line_search),
           FAS_FIELD(c, max_backtracks), FAS_FIELD(c, seed),
           {"optimizer",
            [&c](const json& v) {
                if (!v.is_string()) throw InvalidInput("config key 'optimizer' must be a string");
                c.optimizer = optimizer_from_string(v.get<std::string>());
            }}},
          "train-pl");
}

inline json to_json(const cd::CdTrainConfig& c) {
    return {{"experts", c.experts},
            {"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"batch_size", c.batch_size},
            {"updates", c.updates},
            {"seed", c.seed},
            {"lambda_scale", c.lambda_scale},
            {"mixing_scale", c.mixing_scale},
            {"variance_scale", c.variance_scale},
            {"checkpoint_every", c.checkpoint_every}};
}

inline void apply_json(cd::CdTrainConfig& c, const json& j) {
    using namespace detail;
    apply(j,
          {FAS_FIELD(c, experts), FAS_FIELD(c, learning_rate), FAS_FIELD(c, momentum), FAS_FIELD(c, batch_size),
           FAS_FIELD(c, updates), FAS_FIELD(c, seed), FAS_FIELD(c, lambda_scale), FAS_FIELD(c, mixing_scale),
           FAS_FIELD(c, variance_scale), FAS_FIELD(c, checkpoint_every)},
          "train-cd");
}

#undef FAS_FIELD

}  // namespace fas::config
