// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <string>

#include "lrkd/schema.hpp"

namespace lrkd {

struct EncoderConfig {
    int layers = 2;
    int d = 64;
    int heads = 4;
    int ffn_dim = 128;
    int vocab_buckets = 8192;
    int max_len = 128;
    double init_std = 0.02;
    double ln_eps = 1e-5;

    int vocab_size() const noexcept { return vocab_buckets + 4; }

    void validate() const {
        if (layers < 0 || d < 1 || heads < 1 || ffn_dim < 1 || vocab_buckets < 1) {
            throw ConfigError("encoder dimensions must be positive");
        }
        if (d % heads != 0) {
            throw ConfigError("encoder width must be divisible by the head count");
        }
        if (max_len < 4) {
            throw ConfigError("max_len must be at least 4");
        }
    }
};

enum class ExtractorKind { MLP, Poly, GAT };

inline std::string_view to_string(ExtractorKind k) {
    switch (k) {
        case ExtractorKind::MLP: return "mlp";
        case ExtractorKind::Poly: return "poly";
        case ExtractorKind::GAT: return "gat";
    }
    return "gat";
}

inline ExtractorKind extractor_kind_from_string(std::string_view s) {
    if (s == "mlp" || s == "MLP") return ExtractorKind::MLP;
    if (s == "poly" || s == "Poly") return ExtractorKind::Poly;
    if (s == "gat" || s == "GAT") return ExtractorKind::GAT;
    throw ConfigError("unknown extractor kind '" + std::string(s) + "'");
}

struct ExtractorConfig {
    ExtractorKind kind = ExtractorKind::GAT;
    int hidden_dim = 128;
    int mlp_layers = 2;
    int codes = 32;
    int gat_layers = 1;
    double leaky_slope = 0.2;
    /// Width of r_qp; must equal the CoT embedding width.
    int output_dim = 64;
    /// Appends the final map to output_dim. Disabled only for parameter audits.
    bool projection = true;

    void validate() const {
        if (codes < 1 || mlp_layers < 1 || gat_layers < 1 || hidden_dim < 1 || output_dim < 1) {
            throw ConfigError("extractor sizes must be >= 1");
        }
        if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
            throw ConfigError("leaky_slope must lie in (0, 1)");
        }
    }
};

struct OptimizerConfig {
    double lr = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 32;
    int epochs = 5;
    /// "constant" or "linear": linear warmup then linear decay to zero.
    std::string schedule = "constant";
    double warmup_fraction = 0.0;
};

struct RunConfig {
    std::uint64_t seed = 0;
    RelevanceSchema schema = aliexpress6();
    EncoderConfig encoder;
    ExtractorConfig extractor;
    double lambda = 0.1;
    OptimizerConfig optim;
    int max_cot_tokens = 1024;
    double val_fraction = 0.1;

    void validate() const {
        schema.validate();
        encoder.validate();
        extractor.validate();
        if (!(lambda >= 0.0)) {
            throw ConfigError("lambda must be non-negative");
        }
        if (optim.batch_size < 1 || optim.epochs < 0 || !(optim.lr > 0.0) ||
            (optim.schedule != "constant" && optim.schedule != "linear") || !(optim.warmup_fraction >= 0.0) ||
            optim.warmup_fraction >= 1.0) {
            throw ConfigError("optimizer settings out of range");
        }
        if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
            throw ConfigError("val_fraction must lie in [0, 1)");
        }
    }
};

inline ordered_json to_json(const EncoderConfig& c) {
    ordered_json j;
    j["layers"] = c.layers;
    j["d"] = c.d;
    j["heads"] = c.heads;
    j["ffn_dim"] = c.ffn_dim;
    j["vocab_buckets"] = c.vocab_buckets;
    j["max_len"] = c.max_len;
    j["init_std"] = c.init_std;
    j["ln_eps"] = c.ln_eps;
    return j;
}

inline ordered_json to_json(const ExtractorConfig& c) {
    ordered_json j;
    j["kind"] = std::string(to_string(c.kind));
    j["hidden_dim"] = c.hidden_dim;
    j["mlp_layers"] = c.mlp_layers;
    j["codes"] = c.codes;
    j["gat_layers"] = c.gat_layers;
    j["leaky_slope"] = c.leaky_slope;
    j["output_dim"] = c.output_dim;
    j["projection"] = c.projection;
    return j;
}

inline ordered_json to_json(const OptimizerConfig& c) {
    ordered_json j;
    j["lr"] = c.lr;
    j["weight_decay"] = c.weight_decay;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["eps"] = c.eps;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["schedule"] = c.schedule;
    j["warmup_fraction"] = c.warmup_fraction;
    return j;
}

inline ordered_json to_json(const RunConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["schema"] = schema_to_json(c.schema);
    j["encoder"] = to_json(c.encoder);
    j["extractor"] = to_json(c.extractor);
    j["lambda"] = c.lambda;
    j["optimizer"] = to_json(c.optim);
    j["max_cot_tokens"] = c.max_cot_tokens;
    j["val_fraction"] = c.val_fraction;
    return j;
}

namespace detail {
template <typename T, typename J>
void maybe_get(const J& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        out = it->template get<T>();
    }
}
}  // namespace detail

/// Missing keys keep their defaults, so partial config files are accepted.
template <typename J>
EncoderConfig encoder_config_from_json(const J& j) {
    EncoderConfig c;
    detail::maybe_get(j, "layers", c.layers);
    detail::maybe_get(j, "d", c.d);
    detail::maybe_get(j, "heads", c.heads);
    detail::maybe_get(j, "ffn_dim", c.ffn_dim);
    detail::maybe_get(j, "vocab_buckets", c.vocab_buckets);
    detail::maybe_get(j, "max_len", c.max_len);
    detail::maybe_get(j, "init_std", c.init_std);
    detail::maybe_get(j, "ln_eps", c.ln_eps);
    return c;
}

template <typename J>
ExtractorConfig extractor_config_from_json(const J& j) {
    ExtractorConfig c;
    if (auto it = j.find("kind"); it != j.end()) c.kind = extractor_kind_from_string(it->template get<std::string>());
    detail::maybe_get(j, "hidden_dim", c.hidden_dim);
    detail::maybe_get(j, "mlp_layers", c.mlp_layers);
    detail::maybe_get(j, "codes", c.codes);
    detail::maybe_get(j, "gat_layers", c.gat_layers);
    detail::maybe_get(j, "leaky_slope", c.leaky_slope);
    detail::maybe_get(j, "output_dim", c.output_dim);
    detail::maybe_get(j, "projection", c.projection);
    return c;
}

template <typename J>
OptimizerConfig optimizer_config_from_json(const J& j) {
    OptimizerConfig c;
    detail::maybe_get(j, "lr", c.lr);
    detail::maybe_get(j, "weight_decay", c.weight_decay);
    detail::maybe_get(j, "beta1", c.beta1);
    detail::maybe_get(j, "beta2", c.beta2);
    detail::maybe_get(j, "eps", c.eps);
    detail::maybe_get(j, "batch_size", c.batch_size);
    detail::maybe_get(j, "epochs", c.epochs);
    detail::maybe_get(j, "schedule", c.schedule);
    detail::maybe_get(j, "warmup_fraction", c.warmup_fraction);
    return c;
}

template <typename J>
RunConfig run_config_from_json(const J& j) {
    RunConfig c;
    try {
        detail::maybe_get(j, "seed", c.seed);
        if (auto it = j.find("schema"); it != j.end()) {
            c.schema = it->is_string() ? resolve_schema(it->template get<std::string>()) : schema_from_json(json(*it));
        }
        if (auto it = j.find("encoder"); it != j.end()) c.encoder = encoder_config_from_json(*it);
        if (auto it = j.find("extractor"); it != j.end()) c.extractor = extractor_config_from_json(*it);
        detail::maybe_get(j, "lambda", c.lambda);
        if (auto it = j.find("optimizer"); it != j.end()) c.optim = optimizer_config_from_json(*it);
        detail::maybe_get(j, "max_cot_tokens", c.max_cot_tokens);
        detail::maybe_get(j, "val_fraction", c.val_fraction);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed run config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace lrkd
