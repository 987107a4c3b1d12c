// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Accuracy and per-class precision/recall/F1 from a confusion count.

#pragma once

#include <vector>

#include "lrkd/schema.hpp"

namespace lrkd {

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
    /// True when the class has no gold examples; its f1 counts as 0.
    bool no_support = false;
};

struct MetricReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<ClassMetrics> per_class;
};

/// Index of the largest entry; ties go to the lowest index.
template <typename Range>
int argmax(const Range& r) {
    int best = 0;
    int i = 0;
    auto best_v = *std::begin(r);
    for (const auto& v : r) {
        if (v > best_v) {
            best_v = v;
            best = i;
        }
        ++i;
    }
    return best;
}

inline MetricReport compute_metrics(const std::vector<int>& preds, const std::vector<int>& labels, std::size_t classes) {
    if (preds.size() != labels.size()) throw InputError("prediction and label counts differ");
    std::vector<std::size_t> tp(classes, 0), pred_n(classes, 0), gold_n(classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int p = preds[i], y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= classes) throw InputError("label outside schema");
        if (p >= 0 && static_cast<std::size_t>(p) < classes) ++pred_n[static_cast<std::size_t>(p)];
        ++gold_n[static_cast<std::size_t>(y)];
        if (p == y) {
            ++correct;
            ++tp[static_cast<std::size_t>(y)];
        }
    }
    MetricReport r;
    r.accuracy = preds.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(preds.size());
    double f1_sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        ClassMetrics m;
        m.support = gold_n[c];
        m.no_support = gold_n[c] == 0;
        m.precision = pred_n[c] ? static_cast<double>(tp[c]) / static_cast<double>(pred_n[c]) : 0.0;
        m.recall = gold_n[c] ? static_cast<double>(tp[c]) / static_cast<double>(gold_n[c]) : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        f1_sum += m.f1;
        r.per_class.push_back(m);
    }
    r.macro_f1 = classes ? f1_sum / static_cast<double>(classes) : 0.0;
    return r;
}

inline MetricReport compute_metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                                    const RelevanceSchema& schema) {
    return compute_metrics(preds, labels, schema.size());
}

inline ordered_json to_json(const MetricReport& r, const RelevanceSchema& schema) {
    ordered_json j;
    j["accuracy"] = r.accuracy;
    j["macro_f1"] = r.macro_f1;
    ordered_json pc = ordered_json::array();
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        pc.push_back({{"class", schema.class_name(static_cast<int>(c))},
                      {"precision", m.precision},
                      {"recall", m.recall},
                      {"f1", m.f1},
                      {"support", m.support},
                      {"no_support", m.no_support}});
    }
    j["per_class"] = pc;
    return j;
}

}  // namespace lrkd
