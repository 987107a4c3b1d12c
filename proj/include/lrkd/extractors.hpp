// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Latent reasoning extractors: map token states H (L x d) and a validity mask
// to one vector r_qp.
//
//   MLP   r = masked-mean_i MLP(h_i)
//   Poly  A = softmax_tokens(H U^T / sqrt(d) + B);  r = mean_k (A^T H)_k
//   GAT   a_ij = LeakyReLU(a^T [W h_i || W h_j]);  r = mean_i sum_j softmax_j(a_ij) W h_j
//
// Poly and GAT append a linear map to output_dim when projection is enabled;
// for the MLP the last layer itself maps to output_dim.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lrkd/config.hpp"
#include "lrkd/params.hpp"

namespace lrkd {

struct ExtractorLayout {
    ExtractorKind kind = ExtractorKind::GAT;
    int in_dim = 0;
    std::vector<int> mlp_w, mlp_b;
    int codes = -1;
    std::vector<int> gat_w, gat_a;
    int proj_w = -1;
    int proj_b = -1;
};

/// Width of r_qp produced by this configuration.
inline int extractor_output_dim(const ExtractorConfig& c, int in_dim) {
    if (c.projection) return c.output_dim;
    return c.kind == ExtractorKind::Poly ? in_dim : c.hidden_dim;
}

inline ExtractorLayout register_extractor(ParamStore& ps, const ExtractorConfig& c, int in_dim,
                                          const std::string& prefix = "ext.") {
    c.validate();
    ExtractorLayout L;
    L.kind = c.kind;
    L.in_dim = in_dim;
    int width = in_dim;
    switch (c.kind) {
        case ExtractorKind::MLP:
            for (int i = 0; i < c.mlp_layers; ++i) {
                const int out = (i == c.mlp_layers - 1 && c.projection) ? c.output_dim : c.hidden_dim;
                L.mlp_w.push_back(ps.add(prefix + "mlp" + std::to_string(i) + ".w", width, out));
                L.mlp_b.push_back(ps.add(prefix + "mlp" + std::to_string(i) + ".b", 1, out));
                width = out;
            }
            return L;
        case ExtractorKind::Poly:
            L.codes = ps.add(prefix + "poly.codes", c.codes, in_dim);
            break;
        case ExtractorKind::GAT:
            for (int i = 0; i < c.gat_layers; ++i) {
                L.gat_w.push_back(ps.add(prefix + "gat" + std::to_string(i) + ".w", width, c.hidden_dim));
                // Column 0 scores the source node, column 1 the neighbour.
                L.gat_a.push_back(ps.add(prefix + "gat" + std::to_string(i) + ".a", c.hidden_dim, 2));
                width = c.hidden_dim;
            }
            break;
    }
    if (c.projection) {
        L.proj_w = ps.add(prefix + "proj.w", width, c.output_dim);
        L.proj_b = ps.add(prefix + "proj.b", 1, c.output_dim);
    }
    return L;
}

/// Closed-form count of the parameters register_extractor adds.
inline std::size_t extractor_param_count(const ExtractorConfig& c, int in_dim) {
    const auto d = static_cast<std::size_t>(in_dim);
    const auto h = static_cast<std::size_t>(c.hidden_dim);
    const auto o = static_cast<std::size_t>(c.output_dim);
    std::size_t n = 0;
    std::size_t width = d;
    switch (c.kind) {
        case ExtractorKind::MLP:
            for (int i = 0; i < c.mlp_layers; ++i) {
                const std::size_t out = (i == c.mlp_layers - 1 && c.projection) ? o : h;
                n += width * out + out;
                width = out;
            }
            return n;
        case ExtractorKind::Poly:
            n = static_cast<std::size_t>(c.codes) * d;
            break;
        case ExtractorKind::GAT:
            for (int i = 0; i < c.gat_layers; ++i) {
                n += width * h + 2 * h;
                width = h;
            }
            break;
    }
    if (c.projection) n += width * o + o;
    return n;
}

inline void init_extractor(ParamStore& ps, const ExtractorLayout& L, Rng& rng) {
    for (int id : L.mlp_w) init_glorot(ps.value(id), rng);
    if (L.codes >= 0) init_normal(ps.value(L.codes), rng, 1.0);
    for (int id : L.gat_w) init_glorot(ps.value(id), rng);
    for (int id : L.gat_a) init_glorot(ps.value(id), rng);
    if (L.proj_w >= 0) init_glorot(ps.value(L.proj_w), rng);
}

inline void check_mask(const Mask& mask, Eigen::Index rows) {
    if (static_cast<Eigen::Index>(mask.size()) != rows) {
        throw ConfigError("mask length does not match token count");
    }
    for (auto m : mask) {
        if (m) return;
    }
    throw DegenerateError("extractor input has no valid token");
}

inline Var extract_mlp(Tape& t, const ParamBinding& pb, const ExtractorLayout& L, Var H, const Mask& mask) {
    check_mask(mask, t.value(H).rows());
    Var x = H;
    for (std::size_t i = 0; i < L.mlp_w.size(); ++i) {
        x = ag::linear(t, x, pb(t, L.mlp_w[i]), pb(t, L.mlp_b[i]));
        if (i + 1 < L.mlp_w.size()) x = ag::gelu(t, x);
    }
    return ag::masked_mean_rows(t, x, mask);
}

inline Var extract_poly(Tape& t, const ParamBinding& pb, const ExtractorLayout& L, Var H, const Mask& mask) {
    check_mask(mask, t.value(H).rows());
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(L.in_dim));
    // Scores are laid out codes x tokens so the softmax runs over tokens per code.
    Var scores = ag::scale(t, ag::matmul_nt(t, pb(t, L.codes), H), inv_sqrt);
    Var attn = ag::softmax_rows(t, scores, mask);
    Var heads = ag::matmul(t, attn, H);  // K x d
    Var r = ag::mean_rows(t, heads);
    if (L.proj_w >= 0) r = ag::linear(t, r, pb(t, L.proj_w), pb(t, L.proj_b));
    return r;
}

inline Var extract_gat(Tape& t, const ParamBinding& pb, const ExtractorLayout& L, const ExtractorConfig& c, Var H,
                       const Mask& mask) {
    check_mask(mask, t.value(H).rows());
    Var x = H;
    for (std::size_t i = 0; i < L.gat_w.size(); ++i) {
        if (i > 0) x = ag::gelu(t, x);
        Var wh = ag::matmul(t, x, pb(t, L.gat_w[i]));           // L x h
        Var s = ag::matmul(t, wh, pb(t, L.gat_a[i]));           // L x 2
        Var e = ag::add_outer(t, ag::slice_cols(t, s, 0, 1), ag::slice_cols(t, s, 1, 1));
        e = ag::leaky_relu(t, e, c.leaky_slope);
        Var alpha = ag::softmax_rows(t, e, mask, &mask);
        x = ag::matmul(t, alpha, wh);
    }
    Var r = ag::masked_mean_rows(t, x, mask);
    if (L.proj_w >= 0) r = ag::linear(t, r, pb(t, L.proj_w), pb(t, L.proj_b));
    return r;
}

inline Var extract(Tape& t, const ParamBinding& pb, const ExtractorLayout& L, const ExtractorConfig& c, Var H,
                   const Mask& mask) {
    switch (L.kind) {
        case ExtractorKind::MLP: return extract_mlp(t, pb, L, H, mask);
        case ExtractorKind::Poly: return extract_poly(t, pb, L, H, mask);
        case ExtractorKind::GAT: return extract_gat(t, pb, L, c, H, mask);
    }
    throw ConfigError("unknown extractor kind");
}

/// Non-differentiable convenience: r for one (H, mask) with the given parameters.
inline Mat extract_value(const ParamStore& ps, const ExtractorLayout& L, const ExtractorConfig& c, const Mat& H,
                         const Mask& mask) {
    Tape t(false);
    ParamBinding pb{&ps, nullptr};
    Var h = t.constant(H);
    return t.value(extract(t, pb, L, c, h, mask));
}

}  // namespace lrkd
