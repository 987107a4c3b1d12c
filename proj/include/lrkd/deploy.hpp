// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Deployment-style scoring: expected-tier relevance score, threshold tiers,
// low-tier filtering and threshold calibration.

#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <vector>

#include "lrkd/student.hpp"

namespace lrkd {

/// Expected default tier under the predicted class distribution.
inline double relevance_score(const std::vector<double>& probs, const RelevanceSchema& schema) {
    if (probs.size() != schema.size()) throw InputError("probability vector width differs from schema size");
    double s = 0.0, mass = 0.0;
    for (std::size_t c = 0; c < probs.size(); ++c) {
        if (!(probs[c] >= 0.0 && probs[c] <= 1.0)) throw InputError("probability outside [0, 1]");
        mass += probs[c];
        s += probs[c] * schema.default_tiers[c];
    }
    if (std::abs(mass - 1.0) > 1e-6) throw InputError("probabilities do not sum to 1");
    return s;
}

struct TierCalibration {
    std::array<double, 4> thresholds{1.0, 2.0, 3.0, 4.0};
    int filter_below_tier = 2;

    void validate() const {
        for (std::size_t i = 0; i < thresholds.size(); ++i) {
            if (!std::isfinite(thresholds[i])) throw ConfigError("thresholds must be finite");
            if (i && thresholds[i] < thresholds[i - 1]) throw ConfigError("thresholds must be non-decreasing");
        }
        if (filter_below_tier < 0 || filter_below_tier > 4) throw ConfigError("filter tier outside 0..4");
    }
};

/// Number of thresholds at or below the score.
inline int score_to_tier(double score, const TierCalibration& cal) {
    int t = 0;
    for (double th : cal.thresholds)
        if (th <= score) ++t;
    return t;
}

inline ordered_json to_json(const TierCalibration& c) {
    ordered_json j;
    j["thresholds"] = c.thresholds;
    j["filter_below_tier"] = c.filter_below_tier;
    return j;
}

inline TierCalibration calibration_from_json(const json& j) {
    TierCalibration c;
    try {
        const auto t = j.at("thresholds").get<std::vector<double>>();
        if (t.size() != 4) throw ConfigError("calibration needs exactly 4 thresholds");
        std::copy(t.begin(), t.end(), c.thresholds.begin());
        c.filter_below_tier = j.value("filter_below_tier", c.filter_below_tier);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed calibration: ") + e.what());
    }
    c.validate();
    return c;
}

inline TierCalibration load_calibration(const std::filesystem::path& path) {
    auto in = open_input(path);
    try {
        return calibration_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ParseError(1, e.what());
    }
}

struct ScoredPair {
    std::string id;
    double score = 0.0;
    int tier = 0;
    bool kept = false;
};

struct FilterResult {
    std::vector<LabeledPair> kept;
    std::vector<ScoredPair> audit;
};

/// Keeps pairs whose tier is at least the filter cutoff, given precomputed scores.
inline FilterResult filter_scored(const std::vector<LabeledPair>& pairs, const std::vector<double>& scores,
                                  const TierCalibration& cal) {
    cal.validate();
    if (scores.size() != pairs.size()) throw InputError("score count differs from pair count");
    FilterResult r;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        ScoredPair s{pairs[i].id, scores[i], score_to_tier(scores[i], cal), false};
        s.kept = s.tier >= cal.filter_below_tier;
        if (s.kept) r.kept.push_back(pairs[i]);
        r.audit.push_back(std::move(s));
    }
    return r;
}

inline std::vector<double> model_scores(const StudentModel& m, const std::vector<LabeledPair>& pairs) {
    std::vector<TokenRow> rows;
    rows.reserve(pairs.size());
    for (const auto& p : pairs) rows.push_back(trim(tokenize(p.query, p.title, m.cfg.encoder.max_len, m.cfg.encoder.vocab_buckets)));
    const Mat probs = predict_proba(m, rows);
    std::vector<double> out(pairs.size());
    std::vector<double> row(static_cast<std::size_t>(probs.cols()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        for (Eigen::Index c = 0; c < probs.cols(); ++c) row[static_cast<std::size_t>(c)] = probs(i, c);
        out[static_cast<std::size_t>(i)] = relevance_score(row, m.cfg.schema);
    }
    return out;
}

inline FilterResult filter_batch(const std::vector<LabeledPair>& pairs, const StudentModel& m, const TierCalibration& cal,
                                 const RelevanceSchema& schema) {
    if (!(schema == m.cfg.schema)) throw ConfigError("checkpoint schema differs from dataset schema");
    return filter_scored(pairs, model_scores(m, pairs), cal);
}

inline void save_audit(const std::filesystem::path& path, const std::vector<ScoredPair>& audit) {
    auto out = open_output(path);
    for (const auto& s : audit) {
        ordered_json j;
        j["id"] = s.id;
        j["score"] = s.score;
        j["tier"] = s.tier;
        j["kept"] = s.kept;
        out << j.dump() << '\n';
    }
}

struct CalibrationResult {
    TierCalibration calibration;
    std::array<double, 4> precision{};
    std::array<std::size_t, 4> selected{};
    std::array<bool, 4> attained{true, true, true, true};

    bool all_attained() const { return std::all_of(attained.begin(), attained.end(), [](bool b) { return b; }); }
};

/// For each tier t, the smallest candidate threshold (from the sorted scores)
/// at which the pairs scoring at or above it have a gold default tier >= t with
/// precision >= target[t-1]. Thresholds are kept non-decreasing. When no
/// candidate reaches the target the most precise one is used and flagged.
inline CalibrationResult calibrate_thresholds(const std::vector<double>& scores, const std::vector<int>& gold,
                                              const RelevanceSchema& schema, const std::array<double, 4>& target,
                                              int filter_below_tier = 2) {
    if (scores.size() != gold.size() || scores.empty()) throw InputError("calibration needs matching, non-empty inputs");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    CalibrationResult res;
    res.calibration.filter_below_tier = filter_below_tier;
    double floor = -std::numeric_limits<double>::infinity();
    const std::size_t n = order.size();
    for (int t = 1; t <= 4; ++t) {
        // suffix counts over the ascending order
        std::vector<std::size_t> good_suffix(n + 1, 0);
        for (std::size_t k = n; k-- > 0;) {
            const int g = gold[order[k]];
            if (g < 0 || static_cast<std::size_t>(g) >= schema.size()) throw InputError("gold label outside schema");
            good_suffix[k] = good_suffix[k + 1] + (schema.default_tiers[static_cast<std::size_t>(g)] >= t ? 1 : 0);
        }
        std::optional<std::size_t> pick;
        std::size_t best_k = n;
        double best_p = -1.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k > 0 && scores[order[k]] == scores[order[k - 1]]) continue;  // same candidate
            if (scores[order[k]] < floor) continue;
            const double p = static_cast<double>(good_suffix[k]) / static_cast<double>(n - k);
            if (p >= target[static_cast<std::size_t>(t - 1)]) {
                pick = k;
                break;
            }
            if (p > best_p) {
                best_p = p;
                best_k = k;
            }
        }
        const auto ti = static_cast<std::size_t>(t - 1);
        if (!pick) {
            res.attained[ti] = false;
            pick = best_k;
        }
        if (*pick == n) {
            // Every candidate lies below the floor from the previous tier.
            res.calibration.thresholds[ti] = floor;
            res.precision[ti] = 0.0;
            res.selected[ti] = 0;
            res.attained[ti] = false;
            continue;
        }
        res.calibration.thresholds[ti] = scores[order[*pick]];
        res.precision[ti] = static_cast<double>(good_suffix[*pick]) / static_cast<double>(n - *pick);
        res.selected[ti] = n - *pick;
        floor = res.calibration.thresholds[ti];
    }
    res.calibration.validate();
    return res;
}

/// Precision of "tier >= t" sets under a calibration, t = 1..4.
inline std::array<double, 4> measure_tier_precision(const std::vector<double>& scores, const std::vector<int>& gold,
                                                    const RelevanceSchema& schema, const TierCalibration& cal) {
    std::array<double, 4> out{};
    for (int t = 1; t <= 4; ++t) {
        std::size_t sel = 0, good = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (score_to_tier(scores[i], cal) < t) continue;
            ++sel;
            if (schema.default_tiers[static_cast<std::size_t>(gold[i])] >= t) ++good;
        }
        out[static_cast<std::size_t>(t - 1)] = sel ? static_cast<double>(good) / static_cast<double>(sel) : 0.0;
    }
    return out;
}

inline ordered_json to_json(const CalibrationResult& r) {
    ordered_json j = to_json(r.calibration);
    j["precision"] = r.precision;
    j["selected"] = r.selected;
    j["attained"] = r.attained;
    return j;
}

}  // namespace lrkd
