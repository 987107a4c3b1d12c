// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Glue shared by the command-line tool and the experiment harness: pairing
// generations with pairs and turning rationales into distillation examples.

#pragma once

#include <unordered_map>

#include "lrkd/cot_embed.hpp"
#include "lrkd/deploy.hpp"
#include "lrkd/eval.hpp"
#include "lrkd/mpcot.hpp"
#include "lrkd/trainer.hpp"

namespace lrkd {

enum class CotMode {
    /// The first record per pair (lowest perspective, lowest attempt).
    Single,
    /// Attempt-0 rationales of all three perspectives joined by a separator.
    Combined,
};

inline CotMode cot_mode_from_string(std::string_view s) {
    if (s == "single") return CotMode::Single;
    if (s == "combined") return CotMode::Combined;
    throw ConfigError("unknown rationale mode '" + std::string(s) + "'");
}

/// Rationale text per pair id. Pairs without a usable rationale are absent.
inline std::unordered_map<std::string, std::string> rationales_by_pair(const std::vector<GenerationRecord>& gens,
                                                                       CotMode mode) {
    auto sorted = gens;
    std::stable_sort(sorted.begin(), sorted.end(), generation_order);
    std::unordered_map<std::string, std::string> out;
    if (mode == CotMode::Single) {
        for (const auto& g : sorted)
            if (!split_words(g.rationale).empty()) out.emplace(g.pair_id, g.rationale);
        return out;
    }
    std::unordered_map<std::string, std::array<std::string, 3>> parts;
    for (const auto& g : sorted)
        if (g.attempt == 0) parts[g.pair_id][static_cast<std::size_t>(g.perspective)] = g.rationale;
    for (const auto& [id, p] : parts) {
        if (std::all_of(p.begin(), p.end(), [](const std::string& s) { return !split_words(s).empty(); })) {
            out.emplace(id, join_rationales(p));
        }
    }
    return out;
}

/// One example per pair; the embedding is absent when the pair has no rationale.
inline std::vector<DistillExample> distill_examples(const std::vector<LabeledPair>& pairs,
                                                    const std::unordered_map<std::string, std::string>& cots,
                                                    EmbeddingProvider* provider, const RunConfig& cfg) {
    std::vector<DistillExample> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        std::optional<std::vector<double>> e;
        if (provider) {
            auto it = cots.find(p.id);
            if (it != cots.end()) e = provider->embed(truncate_tokens(it->second, cfg.max_cot_tokens)).e;
        }
        out.push_back(make_example(p, cfg.encoder, std::move(e)));
    }
    return out;
}

inline std::vector<TokenRow> token_rows(const std::vector<LabeledPair>& pairs, const EncoderConfig& c) {
    std::vector<TokenRow> rows;
    rows.reserve(pairs.size());
    for (const auto& p : pairs) rows.push_back(trim(tokenize(p.query, p.title, c.max_len, c.vocab_buckets)));
    return rows;
}

inline std::vector<int> labels_of(const std::vector<LabeledPair>& pairs) {
    std::vector<int> y;
    y.reserve(pairs.size());
    for (const auto& p : pairs) y.push_back(p.label);
    return y;
}

}  // namespace lrkd
