// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// AdamW and the student training loop.

#pragma once

#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "lrkd/student.hpp"

namespace lrkd {

/// Adaptive moments with decoupled weight decay.
class AdamW {
public:
    AdamW(const ParamStore& ps, const OptimizerConfig& c) : c_(c), m_(ps.zeros_like()), v_(ps.zeros_like()) {}

    void step(ParamStore& ps, const Grads& g, double lr_scale = 1.0) {
        const double lr = c_.lr * lr_scale;
        ++t_;
        const double bc1 = 1.0 - std::pow(c_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(c_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < ps.size(); ++i) {
            auto p = ps.value(static_cast<int>(i)).array();
            auto m = m_[i].array();
            auto v = v_[i].array();
            const auto gi = g[i].array();
            m = c_.beta1 * m + (1.0 - c_.beta1) * gi;
            v = c_.beta2 * v + (1.0 - c_.beta2) * gi.square();
            p -= lr * ((m / bc1) / ((v / bc2).sqrt() + c_.eps) + c_.weight_decay * p);
        }
    }

    std::int64_t steps() const noexcept { return t_; }

private:
    OptimizerConfig c_;
    Grads m_, v_;
    std::int64_t t_ = 0;
};

/// Learning-rate multiplier for optimizer step `step` (1-based) out of `total`.
inline double lr_multiplier(const OptimizerConfig& c, std::int64_t step, std::int64_t total) {
    if (c.schedule == "constant" || total <= 0) return 1.0;
    const auto warm = static_cast<std::int64_t>(std::llround(c.warmup_fraction * static_cast<double>(total)));
    if (step <= warm) return static_cast<double>(step) / static_cast<double>(warm);
    return std::max(0.0, static_cast<double>(total - step + 1) / static_cast<double>(total - warm));
}

struct TrainOptions {
    /// Writes the best-validation checkpoint here when set.
    std::optional<std::filesystem::path> checkpoint_dir;
    /// Called after every optimizer step with the batch's loss breakdown.
    std::function<void(std::int64_t, const LossBreakdown&)> on_step;
};

struct TrainResult {
    StudentModel model;  // parameters at the best validation macro-F1
    std::vector<HistoryRecord> history;
    std::int64_t best_step = 0;
    std::size_t train_size = 0;
    std::size_t val_size = 0;
};

/// Seeded train/validation split of [0, n). Validation takes the first
/// round(n * fraction) indices of a shuffled order.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double fraction,
                                                                                   std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(order);
    const auto nv = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nv));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(nv), order.end());
    return {train, val};
}

inline MetricReport evaluate(const StudentModel& m, const std::vector<DistillExample>& data,
                             const std::vector<std::size_t>& idx) {
    std::vector<TokenRow> rows;
    std::vector<int> labels;
    rows.reserve(idx.size());
    for (auto i : idx) {
        rows.push_back(data[i].row);
        labels.push_back(data[i].label);
    }
    return compute_metrics(predict(m, rows), labels, m.cfg.schema);
}

inline TrainResult train_student(const std::vector<DistillExample>& data, const RunConfig& cfg, Variant variant,
                                 const TrainOptions& opt = {}) {
    cfg.validate();
    StudentModel model = make_student(cfg, variant, cfg.seed);
    if (model.lambda() > 0.0) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (!data[i].e_cot) {
                throw DataCompletenessError("training example " + std::to_string(i) + " has no rationale embedding");
            }
            if (data[i].e_cot->cols() != model.guided_dim()) {
                throw ConfigError("rationale embedding width " + std::to_string(data[i].e_cot->cols()) +
                                  " differs from guided width " + std::to_string(model.guided_dim()));
            }
        }
    }
    auto [train_idx, val_idx] = split_indices(data.size(), cfg.val_fraction, cfg.seed);
    if (train_idx.empty() && cfg.optim.epochs > 0) throw InputError("no training examples");
    if (val_idx.empty()) val_idx = train_idx;

    TrainResult res;
    res.train_size = train_idx.size();
    res.val_size = val_idx.size();
    res.model = model;
    AdamW adam(model.ps, cfg.optim);
    Grads grads = model.ps.zeros_like();
    double best_f1 = -1.0;
    std::int64_t step = 0;
    const auto bs = static_cast<std::size_t>(cfg.optim.batch_size);
    const auto total_steps =
        static_cast<std::int64_t>((train_idx.size() + bs - 1) / bs) * static_cast<std::int64_t>(cfg.optim.epochs);
    for (int epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, "epoch" + std::to_string(epoch)));
        auto order = train_idx;
        rng.shuffle(order);
        double sum_cls = 0.0, sum_guide = 0.0;
        std::size_t seen = 0;
        std::vector<const DistillExample*> batch;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            batch.clear();
            for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) batch.push_back(&data[order[k]]);
            for (auto& g : grads) g.setZero();
            const auto lb = batch_loss(model, batch, &grads);
            ++step;
            adam.step(model.ps, grads, lr_multiplier(cfg.optim, step, total_steps));
            sum_cls += lb.l_cls * static_cast<double>(batch.size());
            sum_guide += lb.l_guide * static_cast<double>(batch.size());
            seen += batch.size();
            if (opt.on_step) opt.on_step(step, lb);
        }
        const auto rep = evaluate(model, data, val_idx);
        const auto lb = total_loss(sum_cls / static_cast<double>(seen), sum_guide / static_cast<double>(seen),
                                   model.lambda());
        res.history.push_back({step, epoch + 1, lb.l_cls, lb.l_guide, lb.l_total, rep.accuracy, rep.macro_f1});
        if (rep.macro_f1 > best_f1) {
            best_f1 = rep.macro_f1;
            res.model = model;
            res.best_step = step;
        }
    }
    if (opt.checkpoint_dir) save_checkpoint(*opt.checkpoint_dir, res.model, res.best_step, res.history);
    return res;
}

inline void save_history(const std::filesystem::path& path, const std::vector<HistoryRecord>& h) {
    auto out = open_output(path);
    for (const auto& r : h) {
        auto j = to_json(r);
        j.erase("epoch");
        out << j.dump() << '\n';
    }
}

}  // namespace lrkd
