// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// The distilled student: encoder -> latent extractor -> linear fusion head,
// its losses, and the on-disk checkpoint format.

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "lrkd/encoder.hpp"
#include "lrkd/extractors.hpp"
#include "lrkd/metrics.hpp"

namespace lrkd {

/// Full: head over [h_cls ; r_qp], guidance on r_qp.
/// NoGuidance: same network, guidance weight forced to zero.
/// ClsOnly: no extractor; head over h_cls, guidance applied to h_cls.
enum class Variant { Full, NoGuidance, ClsOnly };

inline std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::NoGuidance: return "no_guidance";
        case Variant::ClsOnly: return "cls_only";
    }
    return "full";
}

inline Variant variant_from_string(std::string_view s) {
    if (s == "full") return Variant::Full;
    if (s == "no_guidance") return Variant::NoGuidance;
    if (s == "cls_only") return Variant::ClsOnly;
    throw ConfigError("unknown variant '" + std::string(s) + "'");
}

struct LossBreakdown {
    double l_cls = 0.0;
    double l_guide = 0.0;
    double lambda = 0.0;
    double l_total = 0.0;
};

inline LossBreakdown total_loss(double l_cls, double l_guide, double lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    return {l_cls, l_guide, lambda, l_cls + lambda * l_guide};
}

// ----------------------------- model -----------------------------

struct StudentModel {
    RunConfig cfg;
    Variant variant = Variant::Full;
    ParamStore ps;
    EncoderLayout enc;
    std::optional<ExtractorLayout> ext;
    int head_w = -1;
    int head_b = -1;

    bool has_extractor() const { return ext.has_value(); }
    double lambda() const { return variant == Variant::NoGuidance ? 0.0 : cfg.lambda; }
    int head_in() const { return static_cast<int>(ps.value(head_w).rows()); }
    int classes() const { return static_cast<int>(cfg.schema.size()); }
    /// Width of the vector the guidance loss compares with e_cot.
    int guided_dim() const { return ext ? extractor_output_dim(cfg.extractor, cfg.encoder.d) : cfg.encoder.d; }
};

/// Registers tensors in canonical order (encoder, extractor, head). Parameter
/// values are left at zero; see init_student.
inline StudentModel build_student(const RunConfig& cfg, Variant variant) {
    cfg.validate();
    StudentModel m;
    m.cfg = cfg;
    m.variant = variant;
    m.enc = register_encoder(m.ps, cfg.encoder);
    int head_in = cfg.encoder.d;
    if (variant != Variant::ClsOnly) {
        m.ext = register_extractor(m.ps, cfg.extractor, cfg.encoder.d);
        head_in += extractor_output_dim(cfg.extractor, cfg.encoder.d);
    }
    m.head_w = m.ps.add("head.w", head_in, static_cast<Eigen::Index>(cfg.schema.size()));
    m.head_b = m.ps.add("head.b", 1, static_cast<Eigen::Index>(cfg.schema.size()));
    return m;
}

inline void init_student(StudentModel& m, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "init"));
    init_encoder(m.ps, m.enc, m.cfg.encoder, rng);
    // The extractor stream is drawn even when it is absent so that variants
    // share encoder and head initialization.
    Rng ext_rng(derive_seed(seed, "init.ext"));
    if (m.ext) init_extractor(m.ps, *m.ext, ext_rng);
    Rng head_rng(derive_seed(seed, "init.head"));
    init_glorot(m.ps.value(m.head_w), head_rng);
}

inline StudentModel make_student(const RunConfig& cfg, Variant variant, std::uint64_t seed) {
    auto m = build_student(cfg, variant);
    init_student(m, seed);
    return m;
}

struct StudentForward {
    Var logits;   // 1 x C
    Var guided;   // vector compared with e_cot: r_qp, or h_cls for ClsOnly
    Var h_cls;    // 1 x d
    Var r_qp;     // invalid for ClsOnly
};

/// z = [h_cls ; r_qp] W + b, or h_cls W + b without an extractor.
inline Var classify(Tape& t, const ParamBinding& pb, const StudentModel& m, Var h_cls, std::optional<Var> r_qp) {
    Var fused = r_qp ? ag::concat_cols(t, {h_cls, *r_qp}) : h_cls;
    if (t.value(fused).cols() != m.head_in()) {
        throw ConfigError("head expects width " + std::to_string(m.head_in()) + ", got " +
                          std::to_string(t.value(fused).cols()));
    }
    return ag::linear(t, fused, pb(t, m.head_w), pb(t, m.head_b));
}

inline StudentForward student_forward(Tape& t, const ParamBinding& pb, const StudentModel& m, const TokenRow& row) {
    auto enc = encode_row(t, pb, m.enc, m.cfg.encoder, row.ids, row.segments, row.mask);
    StudentForward f;
    f.h_cls = enc.h_cls;
    if (m.ext) {
        f.r_qp = extract(t, pb, *m.ext, m.cfg.extractor, enc.H, row.mask);
        f.logits = classify(t, pb, m, enc.h_cls, f.r_qp);
        f.guided = f.r_qp;
    } else {
        f.logits = classify(t, pb, m, enc.h_cls, std::nullopt);
        f.guided = enc.h_cls;
    }
    return f;
}

// ----------------------------- losses -----------------------------

/// Mean over rows of -log softmax(z)[y], max-subtracted.
inline double classification_loss(const Mat& logits, const std::vector<int>& labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size() || labels.empty()) {
        throw InputError("logit rows and label count differ");
    }
    double s = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= logits.cols()) throw InputError("label outside logit width");
        const double mx = logits.row(i).maxCoeff();
        const double lse = std::log((logits.row(i).array() - mx).exp().sum()) + mx;
        s += lse - logits(i, y);
    }
    return s / static_cast<double>(labels.size());
}

/// Mean over rows of the squared L2 distance.
inline double guidance_loss(const Mat& r, const Mat& e) {
    if (r.rows() != e.rows() || r.cols() != e.cols()) {
        throw ConfigError("latent width " + std::to_string(r.cols()) + " differs from embedding width " +
                          std::to_string(e.cols()));
    }
    if (r.rows() == 0) throw InputError("empty guidance batch");
    return (r - e).rowwise().squaredNorm().sum() / static_cast<double>(r.rows());
}

// ----------------------------- training examples -----------------------------

struct DistillExample {
    TokenRow row;  // trimmed
    int label = 0;
    /// 1 x d_e; absent when no rationale embedding is available.
    std::optional<Mat> e_cot;
};

inline DistillExample make_example(const LabeledPair& p, const EncoderConfig& c, std::optional<std::vector<double>> e) {
    DistillExample ex;
    ex.row = trim(tokenize(p.query, p.title, c.max_len, c.vocab_buckets));
    ex.label = p.label;
    if (e) {
        Mat v(1, static_cast<Eigen::Index>(e->size()));
        for (std::size_t i = 0; i < e->size(); ++i) v(0, static_cast<Eigen::Index>(i)) = (*e)[i];
        ex.e_cot = std::move(v);
    }
    return ex;
}

/// Loss of one mini-batch; when grads is non-null, d(l_total)/d(theta) is
/// accumulated into it. Guidance enters the graph only when lambda > 0.
inline LossBreakdown batch_loss(const StudentModel& m, const std::vector<const DistillExample*>& batch, Grads* grads) {
    if (batch.empty()) throw InputError("empty batch");
    const double lambda = m.lambda();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double l_cls = 0.0, l_guide = 0.0;
    ParamBinding pb{&m.ps, grads};
    for (const auto* ex : batch) {
        Tape t(grads != nullptr);
        auto f = student_forward(t, pb, m, ex->row);
        Var ce = ag::cross_entropy(t, f.logits, ex->label);
        l_cls += t.value(ce)(0, 0);
        Var loss = ag::scale(t, ce, inv_b);
        if (ex->e_cot) {
            Var g = ag::squared_distance(t, f.guided, *ex->e_cot);
            l_guide += t.value(g)(0, 0);
            if (lambda > 0.0) loss = ag::add(t, loss, ag::scale(t, g, lambda * inv_b));
        } else if (lambda > 0.0) {
            throw DataCompletenessError("training example lacks a rationale embedding while lambda > 0");
        }
        if (grads) t.backward(loss);
    }
    return total_loss(l_cls * inv_b, l_guide * inv_b, lambda);
}

/// Softmax probabilities, one row per example.
inline Mat predict_proba(const StudentModel& m, const std::vector<TokenRow>& rows) {
    Mat out(static_cast<Eigen::Index>(rows.size()), m.classes());
    ParamBinding pb{&m.ps, nullptr};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Tape t(false);
        const Mat& z = t.value(student_forward(t, pb, m, rows[i]).logits);
        const double mx = z.maxCoeff();
        Mat p = (z.array() - mx).exp().matrix();
        out.row(static_cast<Eigen::Index>(i)) = p / p.sum();
    }
    return out;
}

inline std::vector<int> predict(const StudentModel& m, const std::vector<TokenRow>& rows) {
    const Mat p = predict_proba(m, rows);
    std::vector<int> out(rows.size());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        int best = 0;
        for (Eigen::Index c = 1; c < p.cols(); ++c)
            if (p(i, c) > p(i, best)) best = static_cast<int>(c);
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

struct FrozenVectors {
    Mat r_qp;   // N x out (empty for ClsOnly)
    Mat h_cls;  // N x d
};

inline FrozenVectors frozen_vectors(const StudentModel& m, const std::vector<TokenRow>& rows) {
    FrozenVectors v;
    const auto n = static_cast<Eigen::Index>(rows.size());
    v.h_cls = Mat::Zero(n, m.cfg.encoder.d);
    if (m.ext) v.r_qp = Mat::Zero(n, m.guided_dim());
    ParamBinding pb{&m.ps, nullptr};
    for (Eigen::Index i = 0; i < n; ++i) {
        Tape t(false);
        auto f = student_forward(t, pb, m, rows[static_cast<std::size_t>(i)]);
        v.h_cls.row(i) = t.value(f.h_cls);
        if (m.ext) v.r_qp.row(i) = t.value(f.r_qp);
    }
    return v;
}

/// argmax of the mean softmax of several models; lowest index on ties.
inline std::vector<int> avg_ensemble_predict(const std::vector<const StudentModel*>& models,
                                             const std::vector<TokenRow>& rows) {
    if (models.empty()) throw ConfigError("ensemble needs at least one model");
    for (const auto* m : models) {
        if (!(m->cfg.schema == models.front()->cfg.schema)) throw ConfigError("ensemble members use different schemas");
    }
    Mat acc = Mat::Zero(static_cast<Eigen::Index>(rows.size()), models.front()->classes());
    for (const auto* m : models) acc += predict_proba(*m, rows);
    acc /= static_cast<double>(models.size());
    std::vector<int> out(rows.size());
    for (Eigen::Index i = 0; i < acc.rows(); ++i) {
        int best = 0;
        for (Eigen::Index c = 1; c < acc.cols(); ++c)
            if (acc(i, c) > acc(i, best)) best = static_cast<int>(c);
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

// ----------------------------- checkpoint -----------------------------

struct HistoryRecord {
    std::int64_t step = 0;
    int epoch = 0;
    double l_cls = 0.0;
    double l_guide = 0.0;
    double l_total = 0.0;
    double acc = 0.0;
    double macro_f1 = 0.0;
};

inline ordered_json to_json(const HistoryRecord& h) {
    ordered_json j;
    j["step"] = h.step;
    j["epoch"] = h.epoch;
    j["l_cls"] = h.l_cls;
    j["l_guide"] = h.l_guide;
    j["l_total"] = h.l_total;
    j["acc"] = h.acc;
    j["macro_f1"] = h.macro_f1;
    return j;
}

inline HistoryRecord history_from_json(const json& j) {
    HistoryRecord h;
    h.step = j.at("step").get<std::int64_t>();
    h.epoch = j.value("epoch", 0);
    h.l_cls = j.at("l_cls").get<double>();
    h.l_guide = j.at("l_guide").get<double>();
    h.l_total = j.at("l_total").get<double>();
    h.acc = j.at("acc").get<double>();
    h.macro_f1 = j.at("macro_f1").get<double>();
    return h;
}

struct Checkpoint {
    StudentModel model;
    std::int64_t step = 0;
    std::vector<HistoryRecord> history;
};

inline constexpr int kCheckpointFormat = 1;

inline void save_checkpoint(const std::filesystem::path& dir, const StudentModel& m, std::int64_t step,
                            const std::vector<HistoryRecord>& history) {
    std::filesystem::create_directories(dir);
    ordered_json man;
    man["format"] = kCheckpointFormat;
    man["variant"] = std::string(to_string(m.variant));
    man["config"] = to_json(m.cfg);
    man["step"] = step;
    ordered_json hist = ordered_json::array();
    for (const auto& h : history) hist.push_back(to_json(h));
    man["history"] = hist;
    ordered_json cat = ordered_json::array();
    std::ofstream blob(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
    if (!blob) throw InputError("cannot write " + (dir / "tensors.bin").string());
    std::size_t offset = 0;
    for (std::size_t i = 0; i < m.ps.size(); ++i) {
        const Mat& v = m.ps.value(static_cast<int>(i));
        cat.push_back({{"name", m.ps.name(static_cast<int>(i))},
                       {"shape", {v.rows(), v.cols()}},
                       {"dtype", "float64"},
                       {"offset", offset}});
        for (Eigen::Index k = 0; k < v.size(); ++k) write_f64_le(blob, v.data()[k]);
        offset += static_cast<std::size_t>(v.size()) * 8;
    }
    man["tensors"] = cat;
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    out << man.dump(1) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw InputError("no checkpoint manifest in " + dir.string());
    json man;
    try {
        man = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(1, "checkpoint manifest: " + std::string(e.what()));
    }
    Checkpoint ck;
    try {
        if (man.at("format").get<int>() != kCheckpointFormat) throw ConfigError("unsupported checkpoint format");
        const auto cfg = run_config_from_json(man.at("config"));
        ck.model = build_student(cfg, variant_from_string(man.at("variant").get<std::string>()));
        ck.step = man.at("step").get<std::int64_t>();
        for (const auto& h : man.at("history")) ck.history.push_back(history_from_json(h));
        const auto& cat = man.at("tensors");
        if (cat.size() != ck.model.ps.size()) throw IntegrityError("checkpoint tensor count differs from config");
        std::ifstream blob(dir / "tensors.bin", std::ios::binary);
        if (!blob) throw InputError("missing tensors.bin in " + dir.string());
        std::size_t offset = 0;
        for (std::size_t i = 0; i < cat.size(); ++i) {
            Mat& v = ck.model.ps.value(static_cast<int>(i));
            const auto& e = cat[i];
            if (e.at("name").get<std::string>() != ck.model.ps.name(static_cast<int>(i)) ||
                e.at("shape")[0].get<Eigen::Index>() != v.rows() || e.at("shape")[1].get<Eigen::Index>() != v.cols()) {
                throw IntegrityError("checkpoint tensor '" + e.at("name").get<std::string>() + "' does not match config");
            }
            if (e.at("dtype").get<std::string>() != "float64" || e.at("offset").get<std::size_t>() != offset) {
                throw IntegrityError("checkpoint tensor catalog is not contiguous float64");
            }
            for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = read_f64_le(blob);
            offset += static_cast<std::size_t>(v.size()) * 8;
        }
        if (blob.peek() != std::char_traits<char>::eof()) throw IntegrityError("trailing bytes in tensors.bin");
    } catch (const json::exception& e) {
        throw ParseError(1, "checkpoint manifest: " + std::string(e.what()));
    }
    return ck;
}

}  // namespace lrkd
