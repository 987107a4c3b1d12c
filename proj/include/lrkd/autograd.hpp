// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over dense row-major matrices. A Tape records
// one example's forward graph; backward() walks it in reverse and pushes
// parameter gradients into caller-owned sinks.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lrkd/common.hpp"

namespace lrkd::ag {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = std::vector<std::uint8_t>;

struct Var {
    int id = -1;
    bool valid() const noexcept { return id >= 0; }
};

class Tape {
public:
    using Backward = std::function<void(Tape&)>;

    /// With record=false no backward closures are stored (inference only).
    explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }

    bool recording() const noexcept { return record_; }

    Var constant(Mat v) {
        Node n;
        n.value = std::move(v);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    /// A view of externally owned storage (a parameter). Gradients reaching this
    /// node are added into *sink during the backward sweep; sink may be null.
    Var leaf(const Mat& v, Mat* sink) {
        Node n;
        n.ext = &v;
        n.sink = sink;
        n.requires_grad = record_ && sink != nullptr;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const Mat& value(Var v) const {
        const Node& n = nodes_[static_cast<std::size_t>(v.id)];
        return n.ext ? *n.ext : n.value;
    }

    bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

    /// Gradient accumulator of v, zero-initialized on first access. Parameter
    /// leaves accumulate straight into their sink.
    Mat& grad(Var v) {
        Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (n.ext && n.sink) return *n.sink;
        if (n.grad.size() == 0) {
            const Mat& val = n.ext ? *n.ext : n.value;
            n.grad = Mat::Zero(val.rows(), val.cols());
        }
        return n.grad;
    }

    /// Adds a computed node. needs is true when any input requires a gradient.
    Var push(Mat value, bool needs, Backward back) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = record_ && needs;
        if (n.requires_grad) {
            n.back = std::move(back);
        }
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    void backward(Var loss, double seed = 1.0) {
        if (!record_) {
            throw ConfigError("backward() on a tape created with record=false");
        }
        const Mat& lv = value(loss);
        if (lv.rows() != 1 || lv.cols() != 1) {
            throw InputError("backward() needs a scalar loss");
        }
        if (!requires_grad(loss)) {
            return;
        }
        grad(loss)(0, 0) += seed;
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.grad.size() == 0) continue;
            if (n.back) n.back(*this);
        }
    }

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        const Mat* ext = nullptr;
        Mat grad;
        Mat* sink = nullptr;
        bool requires_grad = false;
        Backward back;
    };
    bool record_;
    std::vector<Node> nodes_;
};

// ----------------------------- linear algebra -----------------------------

inline Var matmul(Tape& t, Var a, Var b) {
    Mat out;
    out.noalias() = t.value(a) * t.value(b);
    return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b), [a, b, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        const Mat& g = tp.grad(o);
        if (tp.requires_grad(a)) tp.grad(a).noalias() += g * tp.value(b).transpose();
        if (tp.requires_grad(b)) tp.grad(b).noalias() += tp.value(a).transpose() * g;
    });
}

/// a * b^T
inline Var matmul_nt(Tape& t, Var a, Var b) {
    Mat out;
    out.noalias() = t.value(a) * t.value(b).transpose();
    return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b), [a, b, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        const Mat& g = tp.grad(o);
        if (tp.requires_grad(a)) tp.grad(a).noalias() += g * tp.value(b);
        if (tp.requires_grad(b)) tp.grad(b).noalias() += g.transpose() * tp.value(a);
    });
}

inline Var add(Tape& t, Var a, Var b) {
    if (t.value(a).rows() != t.value(b).rows() || t.value(a).cols() != t.value(b).cols()) {
        throw ConfigError("add: shape mismatch");
    }
    Mat out = t.value(a) + t.value(b);
    return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b), [a, b, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        const Mat& g = tp.grad(o);
        if (tp.requires_grad(a)) tp.grad(a) += g;
        if (tp.requires_grad(b)) tp.grad(b) += g;
    });
}

/// Adds the 1 x n row vector b to every row of a.
inline Var add_row(Tape& t, Var a, Var b) {
    const Mat& av = t.value(a);
    const Mat& bv = t.value(b);
    if (bv.rows() != 1 || bv.cols() != av.cols()) {
        throw ConfigError("add_row: bias width mismatch");
    }
    Mat out = av.rowwise() + bv.row(0);
    return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b), [a, b, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        const Mat& g = tp.grad(o);
        if (tp.requires_grad(a)) tp.grad(a) += g;
        if (tp.requires_grad(b)) tp.grad(b) += g.colwise().sum();
    });
}

inline Var scale(Tape& t, Var a, double s) {
    Mat out = t.value(a) * s;
    return t.push(std::move(out), t.requires_grad(a), [a, s, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        tp.grad(a) += tp.grad(o) * s;
    });
}

inline Var transpose(Tape& t, Var a) {
    Mat out = t.value(a).transpose();
    return t.push(std::move(out), t.requires_grad(a), [a, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        tp.grad(a) += tp.grad(o).transpose();
    });
}

/// y = x W + b for row-major activations x (rows = tokens).
inline Var linear(Tape& t, Var x, Var w, Var b) { return add_row(t, matmul(t, x, w), b); }

// ----------------------------- elementwise -----------------------------

inline Var gelu(Tape& t, Var a) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    const Mat& x = t.value(a);
    Mat out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        out.data()[i] = 0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v)));
    }
    return t.push(std::move(out), t.requires_grad(a), [a, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        const Mat& xv = tp.value(a);
        const Mat& g = tp.grad(o);
        Mat& ga = tp.grad(a);
        for (Eigen::Index i = 0; i < xv.size(); ++i) {
            const double v = xv.data()[i];
            const double th = std::tanh(k * (v + 0.044715 * v * v * v));
            const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * k * (1.0 + 3.0 * 0.044715 * v * v);
            ga.data()[i] += g.data()[i] * d;
        }
    });
}

inline Var leaky_relu(Tape& t, Var a, double slope) {
    const Mat& x = t.value(a);
    Mat out = x.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
    return t.push(std::move(out), t.requires_grad(a), [a, slope, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        const Mat& xv = tp.value(a);
        const Mat& g = tp.grad(o);
        Mat& ga = tp.grad(a);
        for (Eigen::Index i = 0; i < xv.size(); ++i) {
            ga.data()[i] += g.data()[i] * (xv.data()[i] > 0.0 ? 1.0 : slope);
        }
    });
}

// ----------------------------- normalization / attention -----------------------------

/// Row-wise layer normalization with 1 x n gain and bias.
inline Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
    const Mat& xv = t.value(x);
    const Mat& gv = t.value(gain);
    const Mat& bv = t.value(bias);
    const Eigen::Index rows = xv.rows();
    const Eigen::Index n = xv.cols();
    Mat xhat(rows, n);
    Eigen::VectorXd inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mu = xv.row(r).mean();
        const double var = (xv.row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
    }
    Mat out = (xhat.array().rowwise() * gv.row(0).array()).rowwise() + bv.row(0).array();
    const bool needs = t.requires_grad(x) || t.requires_grad(gain) || t.requires_grad(bias);
    return t.push(std::move(out), needs,
                  [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), o = Var{static_cast<int>(t.size())}](Tape& tp) {
                      const Mat& g = tp.grad(o);
                      if (tp.requires_grad(gain)) tp.grad(gain) += (g.array() * xhat.array()).colwise().sum().matrix();
                      if (tp.requires_grad(bias)) tp.grad(bias) += g.colwise().sum();
                      if (tp.requires_grad(x)) {
                          const Mat& gv2 = tp.value(gain);
                          Mat& gx = tp.grad(x);
                          const double n2 = static_cast<double>(xhat.cols());
                          for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                              Eigen::RowVectorXd dxhat = g.row(r).array() * gv2.row(0).array();
                              const double m1 = dxhat.sum() / n2;
                              const double m2 = dxhat.dot(xhat.row(r)) / n2;
                              gx.row(r).array() += inv_std(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2);
                          }
                      }
                  });
}

/// Softmax over each row restricted to columns with col_mask == 1. Masked
/// columns get exactly zero weight. Rows with row_mask == 0 are all zero.
inline Var softmax_rows(Tape& t, Var s, const Mask& col_mask, const Mask* row_mask = nullptr) {
    const Mat& sv = t.value(s);
    if (static_cast<Eigen::Index>(col_mask.size()) != sv.cols()) {
        throw ConfigError("softmax_rows: mask width mismatch");
    }
    Mat out = Mat::Zero(sv.rows(), sv.cols());
    for (Eigen::Index r = 0; r < sv.rows(); ++r) {
        if (row_mask && !(*row_mask)[static_cast<std::size_t>(r)]) continue;
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < sv.cols(); ++c) {
            if (col_mask[static_cast<std::size_t>(c)]) mx = std::max(mx, sv(r, c));
        }
        if (mx == -std::numeric_limits<double>::infinity()) {
            throw DegenerateError("softmax over an empty set of valid positions");
        }
        double z = 0.0;
        for (Eigen::Index c = 0; c < sv.cols(); ++c) {
            if (col_mask[static_cast<std::size_t>(c)]) {
                out(r, c) = std::exp(sv(r, c) - mx);
                z += out(r, c);
            }
        }
        out.row(r) /= z;
    }
    return t.push(std::move(out), t.requires_grad(s), [s, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        const Mat& p = tp.value(o);
        const Mat& g = tp.grad(o);
        Mat& gs = tp.grad(s);
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            const double dot = p.row(r).dot(g.row(r));
            gs.row(r).array() += p.row(r).array() * (g.row(r).array() - dot);
        }
    });
}

// ----------------------------- shape ops -----------------------------

inline Var slice_cols(Tape& t, Var a, Eigen::Index start, Eigen::Index n) {
    Mat out = t.value(a).middleCols(start, n);
    return t.push(std::move(out), t.requires_grad(a), [a, start, n, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        tp.grad(a).middleCols(start, n) += tp.grad(o);
    });
}

inline Var concat_cols(Tape& t, const std::vector<Var>& parts) {
    Eigen::Index rows = t.value(parts.at(0)).rows();
    Eigen::Index cols = 0;
    bool needs = false;
    for (auto p : parts) {
        if (t.value(p).rows() != rows) throw ConfigError("concat_cols: row mismatch");
        cols += t.value(p).cols();
        needs = needs || t.requires_grad(p);
    }
    Mat out(rows, cols);
    Eigen::Index off = 0;
    for (auto p : parts) {
        out.middleCols(off, t.value(p).cols()) = t.value(p);
        off += t.value(p).cols();
    }
    return t.push(std::move(out), needs, [parts, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        const Mat& g = tp.grad(o);
        Eigen::Index off2 = 0;
        for (auto p : parts) {
            const Eigen::Index w = tp.value(p).cols();
            if (tp.requires_grad(p)) tp.grad(p) += g.middleCols(off2, w);
            off2 += w;
        }
    });
}

inline Var row(Tape& t, Var a, Eigen::Index i) {
    Mat out = t.value(a).row(i);
    return t.push(std::move(out), t.requires_grad(a), [a, i, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        tp.grad(a).row(i) += tp.grad(o);
    });
}

/// Mean over rows with mask == 1, as a 1 x n row.
inline Var masked_mean_rows(Tape& t, Var a, const Mask& mask) {
    const Mat& av = t.value(a);
    if (static_cast<Eigen::Index>(mask.size()) != av.rows()) {
        throw ConfigError("masked_mean_rows: mask length mismatch");
    }
    double count = 0.0;
    Mat out = Mat::Zero(1, av.cols());
    for (Eigen::Index r = 0; r < av.rows(); ++r) {
        if (mask[static_cast<std::size_t>(r)]) {
            out.row(0) += av.row(r);
            count += 1.0;
        }
    }
    if (count == 0.0) {
        throw DegenerateError("mean over an all-masked sequence");
    }
    out /= count;
    return t.push(std::move(out), t.requires_grad(a), [a, mask, count, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        const Mat& g = tp.grad(o);
        Mat& ga = tp.grad(a);
        for (Eigen::Index r = 0; r < ga.rows(); ++r) {
            if (mask[static_cast<std::size_t>(r)]) ga.row(r) += g.row(0) / count;
        }
    });
}

inline Var mean_rows(Tape& t, Var a) {
    const Mat& av = t.value(a);
    Mat out = av.colwise().mean();
    const double n = static_cast<double>(av.rows());
    return t.push(std::move(out), t.requires_grad(a), [a, n, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        tp.grad(a).rowwise() += tp.grad(o).row(0) / n;
    });
}

/// E(i, j) = col(i, 0) + rowv(j, 0) for two L x 1 inputs.
inline Var add_outer(Tape& t, Var col, Var rowv) {
    const Mat& cv = t.value(col);
    const Mat& rv = t.value(rowv);
    const Eigen::Index n = cv.rows();
    Mat out(n, rv.rows());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < rv.rows(); ++j) out(i, j) = cv(i, 0) + rv(j, 0);
    }
    return t.push(std::move(out), t.requires_grad(col) || t.requires_grad(rowv), [col, rowv, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        const Mat& g = tp.grad(o);
        if (tp.requires_grad(col)) tp.grad(col) += g.rowwise().sum();
        if (tp.requires_grad(rowv)) tp.grad(rowv) += g.colwise().sum().transpose();
    });
}

/// Gathers rows of an embedding table. The table gradient is scattered
/// straight into sink (if any), so the full table is never copied.
inline Var gather_rows(Tape& t, const Mat& table, Mat* sink, std::span<const int> ids) {
    Mat out(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table.rows()) {
            throw InputError("token id " + std::to_string(ids[i]) + " outside vocabulary of size " +
                             std::to_string(table.rows()));
        }
        out.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
    }
    std::vector<int> idv(ids.begin(), ids.end());
    return t.push(std::move(out), t.recording() && sink != nullptr, [sink, idv = std::move(idv), o = Var{static_cast<int>(t.size())}](Tape& tp) {
        const Mat& g = tp.grad(o);
        for (std::size_t i = 0; i < idv.size(); ++i) sink->row(idv[i]) += g.row(static_cast<Eigen::Index>(i));
    });
}

// ----------------------------- losses -----------------------------

inline Var sum(Tape& t, Var a) {
    Mat out(1, 1);
    out(0, 0) = t.value(a).sum();
    return t.push(std::move(out), t.requires_grad(a), [a, o = Var{static_cast<int>(t.size())}](Tape& tp) {
        tp.grad(a).array() += tp.grad(o)(0, 0);
    });
}

/// -log softmax(z)[label] for a 1 x C logit row.
inline Var cross_entropy(Tape& t, Var logits, int label) {
    const Mat& z = t.value(logits);
    if (label < 0 || label >= z.cols()) {
        throw InputError("label " + std::to_string(label) + " outside logit width");
    }
    const double mx = z.maxCoeff();
    Mat p = (z.array() - mx).exp().matrix();
    const double s = p.sum();
    Mat out(1, 1);
    out(0, 0) = std::log(s) + mx - z(0, label);
    p /= s;
    return t.push(std::move(out), t.requires_grad(logits), [logits, label, p = std::move(p), o = Var{static_cast<int>(t.size())}](Tape& tp) {
        Mat g = p;
        g(0, label) -= 1.0;
        tp.grad(logits) += g * tp.grad(o)(0, 0);
    });
}

/// Sum of squared differences to a constant target of the same shape.
inline Var squared_distance(Tape& t, Var a, const Mat& target) {
    const Mat& av = t.value(a);
    if (av.rows() != target.rows() || av.cols() != target.cols()) {
        throw ConfigError("squared_distance: dimension mismatch (" + std::to_string(av.cols()) + " vs " +
                          std::to_string(target.cols()) + ")");
    }
    Mat diff = av - target;
    Mat out(1, 1);
    out(0, 0) = diff.squaredNorm();
    return t.push(std::move(out), t.requires_grad(a), [a, diff = std::move(diff), o = Var{static_cast<int>(t.size())}](Tape& tp) {
        tp.grad(a) += 2.0 * tp.grad(o)(0, 0) * diff;
    });
}

}  // namespace lrkd::ag
