// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-perspective teacher data: consistency filtering, aggregation, the SFT
// likelihood, conflict mining, preference construction and the DPO objective.

#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "lrkd/teacher.hpp"

namespace lrkd {

struct SftExample {
    std::string pair_id;
    std::string query;
    std::string title;
    std::string rationale;
    int label = 0;
    Perspective source_perspective = Perspective::UserIntent;
    int attempt = 0;

    bool operator==(const SftExample&) const = default;
};

struct LabeledRationale {
    std::string rationale;
    int label = 0;
    bool operator==(const LabeledRationale&) const = default;
};

struct PreferencePair {
    std::string pair_id;
    std::string query;
    std::string title;
    LabeledRationale chosen;
    LabeledRationale rejected;
    Perspective chosen_perspective = Perspective::UserIntent;
    Perspective rejected_perspective = Perspective::UserIntent;
    int chosen_attempt = 0;

    bool operator==(const PreferencePair&) const = default;
};

struct SequenceScore {
    std::string ref;
    double logprob_chosen = 0.0;
    double logprob_rejected = 0.0;
    /// Reference-policy scores; only read by the referenced variant.
    double ref_chosen = 0.0;
    double ref_rejected = 0.0;
};

namespace detail {

inline std::unordered_map<std::string, const LabeledPair*> index_pairs(const std::vector<LabeledPair>& pairs) {
    std::unordered_map<std::string, const LabeledPair*> idx;
    idx.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (!idx.emplace(p.id, &p).second) throw IntegrityError("duplicate pair id '" + p.id + "'");
    }
    return idx;
}

}  // namespace detail

/// Generations of perspective k whose label matches the ground truth, in input
/// order. Records of other perspectives are ignored; invalid records never pass.
inline std::vector<SftExample> consistency_filter(const std::vector<LabeledPair>& pairs,
                                                  const std::vector<GenerationRecord>& gens, Perspective k) {
    const auto idx = detail::index_pairs(pairs);
    std::vector<SftExample> out;
    for (const auto& g : gens) {
        auto it = idx.find(g.pair_id);
        if (it == idx.end()) throw IntegrityError("generation refers to unknown pair '" + g.pair_id + "'");
        if (g.perspective != k || !g.valid || g.predicted_label != it->second->label) continue;
        const auto& p = *it->second;
        out.push_back({p.id, p.query, p.title, g.rationale, p.label, k, g.attempt});
    }
    return out;
}

/// Multiset union in perspective order; no deduplication.
inline std::vector<SftExample> aggregate_sft(const std::array<std::vector<SftExample>, 3>& per_perspective) {
    std::vector<SftExample> out;
    for (const auto& v : per_perspective) out.insert(out.end(), v.begin(), v.end());
    return out;
}

/// −Σ masked log-probabilities for one target sequence.
inline double sft_nll(const std::vector<double>& token_logprobs, const std::vector<std::uint8_t>& mask) {
    if (token_logprobs.size() != mask.size()) throw InputError("log-prob and mask lengths differ");
    double s = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        if (!std::isfinite(token_logprobs[i])) throw InputError("non-finite log-prob at a response position");
        s -= token_logprobs[i];
        any = true;
    }
    if (!any) throw DegenerateError("target mask selects no response token");
    return s;
}

/// Mean of per-example sums over a batch.
inline double sft_nll_batch(const std::vector<std::vector<double>>& logprobs,
                            const std::vector<std::vector<std::uint8_t>>& masks) {
    if (logprobs.empty() || logprobs.size() != masks.size()) throw InputError("batch shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < logprobs.size(); ++i) s += sft_nll(logprobs[i], masks[i]);
    return s / static_cast<double>(logprobs.size());
}

/// Greedy predictions: attempt 0 per (pair, perspective). Invalid records map
/// to kInvalidLabel, which never equals a ground truth.
using PerspectivePredictions = std::map<Perspective, std::unordered_map<std::string, int>>;

inline PerspectivePredictions greedy_predictions(const std::vector<GenerationRecord>& gens) {
    PerspectivePredictions out;
    for (const auto& g : gens) {
        if (g.attempt != 0) continue;
        out[g.perspective][g.pair_id] = g.valid ? g.predicted_label : kInvalidLabel;
    }
    return out;
}

/// Pairs misclassified by at least one supplied perspective, in input order.
inline std::vector<LabeledPair> mine_conflicts(const std::vector<LabeledPair>& pairs,
                                               const PerspectivePredictions& preds) {
    std::vector<LabeledPair> out;
    for (const auto& p : pairs) {
        bool conflict = false;
        for (const auto& [k, m] : preds) {
            auto it = m.find(p.id);
            if (it == m.end()) {
                throw IntegrityError("no " + std::string(to_string(k)) + " prediction for pair '" + p.id + "'");
            }
            if (it->second != p.label) conflict = true;
        }
        if (conflict) out.push_back(p);
    }
    return out;
}

struct PreferenceBuild {
    std::vector<PreferencePair> pairs;
    /// reason -> count
    std::map<std::string, std::size_t> skipped;

    std::size_t skip_count() const {
        std::size_t n = 0;
        for (const auto& [_, c] : skipped) n += c;
        return n;
    }
};

/// Cross-perspective pairs: for each failing perspective of a conflict pair,
/// its wrong greedy rationale is rejected and the first correct rationale (by
/// perspective then attempt order) is chosen. `allowed_chosen` restricts where
/// the chosen side may come from (all perspectives by default).
inline PreferenceBuild build_preference_pairs(const std::vector<LabeledPair>& conflicts,
                                              const std::vector<GenerationRecord>& gens,
                                              const std::set<Perspective>& allowed_chosen = {
                                                  Perspective::UserIntent, Perspective::StructuredAnalysis,
                                                  Perspective::BusinessRules}) {
    std::unordered_map<std::string, std::vector<const GenerationRecord*>> by_pair;
    for (const auto& g : gens) by_pair[g.pair_id].push_back(&g);
    PreferenceBuild out;
    for (const auto& p : conflicts) {
        auto it = by_pair.find(p.id);
        if (it == by_pair.end()) {
            ++out.skipped["missing_generations"];
            continue;
        }
        auto recs = it->second;
        std::stable_sort(recs.begin(), recs.end(), [](const auto* a, const auto* b) { return generation_order(*a, *b); });
        std::array<const GenerationRecord*, 3> greedy{};
        for (const auto* r : recs)
            if (r->attempt == 0) greedy[static_cast<std::size_t>(r->perspective)] = r;
        const GenerationRecord* chosen = nullptr;
        for (const auto* r : recs) {
            if (r->valid && r->predicted_label == p.label && allowed_chosen.count(r->perspective)) {
                chosen = r;
                break;
            }
        }
        bool any_failing = false;
        for (auto k : kAllPerspectives) {
            const auto* g = greedy[static_cast<std::size_t>(k)];
            if (!g || (g->valid && g->predicted_label == p.label)) continue;
            any_failing = true;
            if (!chosen) continue;
            PreferencePair pp;
            pp.pair_id = p.id;
            pp.query = p.query;
            pp.title = p.title;
            pp.chosen = {chosen->rationale, chosen->predicted_label};
            pp.rejected = {g->rationale, g->predicted_label};
            pp.chosen_perspective = chosen->perspective;
            pp.rejected_perspective = k;
            pp.chosen_attempt = chosen->attempt;
            out.pairs.push_back(std::move(pp));
        }
        if (!any_failing) ++out.skipped["no_failing_perspective"];
        else if (!chosen) ++out.skipped["no_correct_rationale"];
    }
    return out;
}

/// Control with the chosen side drawn from the failing perspective's own
/// attempts only, truncated to `target_size` pairs so it matches the
/// cross-perspective set in size.
inline PreferenceBuild build_single_perspective_pairs(const std::vector<LabeledPair>& conflicts,
                                                      const std::vector<GenerationRecord>& gens,
                                                      std::size_t target_size) {
    PreferenceBuild all;
    for (auto k : kAllPerspectives) {
        std::vector<GenerationRecord> own;
        for (const auto& g : gens)
            if (g.perspective == k) own.push_back(g);
        auto part = build_preference_pairs(conflicts, own, {k});
        for (auto& pp : part.pairs) all.pairs.push_back(std::move(pp));
        for (const auto& [r, c] : part.skipped) all.skipped[r] += c;
    }
    std::stable_sort(all.pairs.begin(), all.pairs.end(), [](const auto& a, const auto& b) {
        return std::tie(a.pair_id, a.rejected_perspective) < std::tie(b.pair_id, b.rejected_perspective);
    });
    if (all.pairs.size() > target_size) {
        all.skipped["size_match_truncated"] += all.pairs.size() - target_size;
        all.pairs.resize(target_size);
    }
    return all;
}

/// −log σ(m), stable for large |m|.
inline double neg_log_sigmoid(double m) {
    return m >= 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

struct DpoOptions {
    /// false: raw log-probability margin. true: β-scaled margin relative to
    /// reference-policy scores.
    bool use_reference = false;
    double beta = 1.0;
};

inline double dpo_margin(const SequenceScore& s, const DpoOptions& opt = {}) {
    if (!std::isfinite(s.logprob_chosen) || !std::isfinite(s.logprob_rejected)) {
        throw InputError("sequence scores must be finite");
    }
    if (!opt.use_reference) return s.logprob_chosen - s.logprob_rejected;
    return opt.beta * ((s.logprob_chosen - s.ref_chosen) - (s.logprob_rejected - s.ref_rejected));
}

inline double dpo_loss(const std::vector<SequenceScore>& scores, const DpoOptions& opt = {}) {
    if (scores.empty()) throw DegenerateError("DPO loss of an empty batch");
    if (opt.use_reference && !(opt.beta > 0.0)) throw ConfigError("beta must be positive");
    double s = 0.0;
    for (const auto& sc : scores) s += neg_log_sigmoid(dpo_margin(sc, opt));
    return s / static_cast<double>(scores.size());
}

// ----------------------------- io -----------------------------

inline ordered_json to_json(const SftExample& e, const RelevanceSchema& schema) {
    ordered_json j;
    j["pair_id"] = e.pair_id;
    j["query"] = e.query;
    j["title"] = e.title;
    j["rationale"] = e.rationale;
    j["label"] = schema.class_name(e.label);
    j["source_perspective"] = std::string(to_string(e.source_perspective));
    j["attempt"] = e.attempt;
    return j;
}

inline SftExample sft_from_json(const json& j, const RelevanceSchema& schema, std::size_t lineno) {
    SftExample e;
    try {
        e.pair_id = j.at("pair_id").get<std::string>();
        e.query = j.at("query").get<std::string>();
        e.title = j.at("title").get<std::string>();
        e.rationale = j.at("rationale").get<std::string>();
        const auto lab = j.at("label").get<std::string>();
        auto idx = schema.find(lab);
        if (!idx) throw SchemaError("line " + std::to_string(lineno) + ": unknown label '" + lab + "'");
        e.label = *idx;
        e.source_perspective = perspective_from_string(j.at("source_perspective").get<std::string>());
        e.attempt = j.value("attempt", 0);
    } catch (const json::exception& ex) {
        throw ParseError(lineno, ex.what());
    }
    return e;
}

inline ordered_json to_json(const PreferencePair& p, const RelevanceSchema& schema) {
    ordered_json j;
    j["pair_id"] = p.pair_id;
    j["query"] = p.query;
    j["title"] = p.title;
    j["chosen"] = {{"rationale", p.chosen.rationale}, {"label", schema.class_name(p.chosen.label)}};
    j["rejected"] = {{"rationale", p.rejected.rationale}, {"label", nullptr}};
    if (p.rejected.label != kInvalidLabel) j["rejected"]["label"] = schema.class_name(p.rejected.label);
    j["chosen_perspective"] = std::string(to_string(p.chosen_perspective));
    j["rejected_perspective"] = std::string(to_string(p.rejected_perspective));
    j["chosen_attempt"] = p.chosen_attempt;
    return j;
}

inline void save_sft(const std::filesystem::path& path, const std::vector<SftExample>& v, const RelevanceSchema& schema) {
    auto out = open_output(path);
    for (const auto& e : v) out << to_json(e, schema).dump() << '\n';
}

inline std::vector<SftExample> load_sft(const std::filesystem::path& path, const RelevanceSchema& schema) {
    auto in = open_input(path);
    std::vector<SftExample> out;
    for_each_jsonl(in, [&](const json& j, std::size_t n) { out.push_back(sft_from_json(j, schema, n)); });
    return out;
}

inline void save_preferences(const std::filesystem::path& path, const std::vector<PreferencePair>& v,
                             const RelevanceSchema& schema) {
    auto out = open_output(path);
    for (const auto& p : v) out << to_json(p, schema).dump() << '\n';
}

inline ordered_json skip_report(const PreferenceBuild& b) {
    ordered_json j;
    j["pairs"] = b.pairs.size();
    ordered_json s = ordered_json::object();
    for (const auto& [r, c] : b.skipped) s[r] = c;
    j["skipped"] = s;
    return j;
}

}  // namespace lrkd
