// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Small post-LN transformer cross-encoder over [CLS] q [SEP] p [SEP].

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lrkd/config.hpp"
#include "lrkd/params.hpp"
#include "lrkd/tokenizer.hpp"

namespace lrkd {

struct EncoderLayerIds {
    int w_qkv, b_qkv, w_o, b_o, ln1_g, ln1_b, w_1, b_1, w_2, b_2, ln2_g, ln2_b;
};

struct EncoderLayout {
    int tok_emb = -1;
    int pos_emb = -1;
    int seg_emb = -1;
    int emb_ln_g = -1;
    int emb_ln_b = -1;
    std::vector<EncoderLayerIds> layers;
};

inline EncoderLayout register_encoder(ParamStore& ps, const EncoderConfig& c) {
    c.validate();
    EncoderLayout L;
    const Eigen::Index d = c.d;
    L.tok_emb = ps.add("enc.tok_emb", c.vocab_size(), d);
    L.pos_emb = ps.add("enc.pos_emb", c.max_len, d);
    L.seg_emb = ps.add("enc.seg_emb", 2, d);
    L.emb_ln_g = ps.add("enc.emb_ln.g", 1, d);
    L.emb_ln_b = ps.add("enc.emb_ln.b", 1, d);
    for (int l = 0; l < c.layers; ++l) {
        const std::string p = "enc.l" + std::to_string(l) + ".";
        EncoderLayerIds ids{};
        ids.w_qkv = ps.add(p + "w_qkv", d, 3 * d);
        ids.b_qkv = ps.add(p + "b_qkv", 1, 3 * d);
        ids.w_o = ps.add(p + "w_o", d, d);
        ids.b_o = ps.add(p + "b_o", 1, d);
        ids.ln1_g = ps.add(p + "ln1.g", 1, d);
        ids.ln1_b = ps.add(p + "ln1.b", 1, d);
        ids.w_1 = ps.add(p + "w_1", d, c.ffn_dim);
        ids.b_1 = ps.add(p + "b_1", 1, c.ffn_dim);
        ids.w_2 = ps.add(p + "w_2", c.ffn_dim, d);
        ids.b_2 = ps.add(p + "b_2", 1, d);
        ids.ln2_g = ps.add(p + "ln2.g", 1, d);
        ids.ln2_b = ps.add(p + "ln2.b", 1, d);
        L.layers.push_back(ids);
    }
    return L;
}

/// Closed-form parameter count, used to cross-check checkpoint catalogs.
inline std::size_t encoder_param_count(const EncoderConfig& c) {
    const std::size_t d = static_cast<std::size_t>(c.d);
    const std::size_t f = static_cast<std::size_t>(c.ffn_dim);
    std::size_t n = static_cast<std::size_t>(c.vocab_size()) * d + static_cast<std::size_t>(c.max_len) * d + 2 * d + 2 * d;
    const std::size_t per_layer = d * 3 * d + 3 * d + d * d + d + 2 * d + d * f + f + f * d + d + 2 * d;
    return n + per_layer * static_cast<std::size_t>(c.layers);
}

inline void init_encoder(ParamStore& ps, const EncoderLayout& L, const EncoderConfig& c, Rng& rng) {
    init_normal(ps.value(L.tok_emb), rng, c.init_std);
    init_normal(ps.value(L.pos_emb), rng, c.init_std);
    init_normal(ps.value(L.seg_emb), rng, c.init_std);
    ps.value(L.emb_ln_g).setOnes();
    for (const auto& ids : L.layers) {
        init_normal(ps.value(ids.w_qkv), rng, c.init_std);
        init_normal(ps.value(ids.w_o), rng, c.init_std);
        init_normal(ps.value(ids.w_1), rng, c.init_std);
        init_normal(ps.value(ids.w_2), rng, c.init_std);
        ps.value(ids.ln1_g).setOnes();
        ps.value(ids.ln2_g).setOnes();
    }
}

struct EncodedRow {
    Var H;      // L x d
    Var h_cls;  // 1 x d
};

/// Encodes one row. Padded positions (mask == 0) neither attend nor are
/// attended to, so outputs at valid positions ignore padded ids.
inline EncodedRow encode_row(Tape& t, const ParamBinding& pb, const EncoderLayout& L, const EncoderConfig& c,
                             std::span<const int> ids, std::span<const int> segs, const Mask& mask) {
    const auto n = static_cast<Eigen::Index>(ids.size());
    if (n > c.max_len) {
        throw InputError("row longer than encoder max_len");
    }
    std::vector<int> positions(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) positions[static_cast<std::size_t>(i)] = static_cast<int>(i);

    Var x = ag::gather_rows(t, pb.value(L.tok_emb), pb.sink(L.tok_emb), ids);
    x = ag::add(t, x, ag::gather_rows(t, pb.value(L.pos_emb), pb.sink(L.pos_emb), positions));
    x = ag::add(t, x, ag::gather_rows(t, pb.value(L.seg_emb), pb.sink(L.seg_emb), segs));
    x = ag::layer_norm(t, x, pb(t, L.emb_ln_g), pb(t, L.emb_ln_b), c.ln_eps);

    const Eigen::Index d = c.d;
    const Eigen::Index dh = d / c.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (const auto& ids_l : L.layers) {
        Var qkv = ag::linear(t, x, pb(t, ids_l.w_qkv), pb(t, ids_l.b_qkv));
        std::vector<Var> heads;
        heads.reserve(static_cast<std::size_t>(c.heads));
        for (int h = 0; h < c.heads; ++h) {
            Var q = ag::slice_cols(t, qkv, h * dh, dh);
            Var k = ag::slice_cols(t, qkv, d + h * dh, dh);
            Var v = ag::slice_cols(t, qkv, 2 * d + h * dh, dh);
            Var s = ag::scale(t, ag::matmul_nt(t, q, k), inv_sqrt);
            Var p = ag::softmax_rows(t, s, mask, &mask);
            heads.push_back(ag::matmul(t, p, v));
        }
        Var ctx = heads.size() == 1 ? heads[0] : ag::concat_cols(t, heads);
        Var attn = ag::linear(t, ctx, pb(t, ids_l.w_o), pb(t, ids_l.b_o));
        x = ag::layer_norm(t, ag::add(t, x, attn), pb(t, ids_l.ln1_g), pb(t, ids_l.ln1_b), c.ln_eps);
        Var ff = ag::gelu(t, ag::linear(t, x, pb(t, ids_l.w_1), pb(t, ids_l.b_1)));
        ff = ag::linear(t, ff, pb(t, ids_l.w_2), pb(t, ids_l.b_2));
        x = ag::layer_norm(t, ag::add(t, x, ff), pb(t, ids_l.ln2_g), pb(t, ids_l.ln2_b), c.ln_eps);
    }
    return EncodedRow{x, ag::row(t, x, 0)};
}

/// Batched, non-differentiable view of the encoder output.
struct ContextualEncoding {
    std::vector<Mat> H;  // B entries of L x d
    Mat h_cls;           // B x d
};

inline ContextualEncoding encode(const TokenBatch& batch, const ParamStore& ps, const EncoderLayout& L,
                                 const EncoderConfig& c) {
    ContextualEncoding out;
    out.h_cls = Mat::Zero(static_cast<Eigen::Index>(batch.size()), c.d);
    ParamBinding pb{&ps, nullptr};
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& r = batch.rows[b];
        Tape t(false);
        auto enc = encode_row(t, pb, L, c, r.ids, r.segments, r.mask);
        out.H.push_back(t.value(enc.H));
        out.h_cls.row(static_cast<Eigen::Index>(b)) = t.value(enc.h_cls);
    }
    return out;
}

}  // namespace lrkd
