// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lrkd/autograd.hpp"

namespace lrkd {

using ag::Mat;
using ag::Mask;
using ag::Tape;
using ag::Var;

/// Named, ordered collection of parameter tensors. Registration order is the
/// canonical order used for checkpoints, gradients and optimizer state.
class ParamStore {
public:
    int add(std::string name, Eigen::Index rows, Eigen::Index cols) {
        if (index_.count(name)) {
            throw ConfigError("duplicate parameter '" + name + "'");
        }
        const int id = static_cast<int>(values_.size());
        index_.emplace(name, id);
        names_.push_back(std::move(name));
        values_.push_back(Mat::Zero(rows, cols));
        return id;
    }

    std::optional<int> find(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    int index(std::string_view name) const {
        auto id = find(name);
        if (!id) throw ConfigError("unknown parameter '" + std::string(name) + "'");
        return *id;
    }

    std::size_t size() const noexcept { return values_.size(); }
    const std::string& name(int i) const { return names_[static_cast<std::size_t>(i)]; }
    Mat& value(int i) { return values_[static_cast<std::size_t>(i)]; }
    const Mat& value(int i) const { return values_[static_cast<std::size_t>(i)]; }

    /// Total scalar count.
    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
        return n;
    }

    /// Scalar count over parameters whose name starts with prefix.
    std::size_t count(std::string_view prefix) const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (names_[i].starts_with(prefix)) n += static_cast<std::size_t>(values_[i].size());
        }
        return n;
    }

    std::vector<Mat> zeros_like() const {
        std::vector<Mat> g;
        g.reserve(values_.size());
        for (const auto& v : values_) g.push_back(Mat::Zero(v.rows(), v.cols()));
        return g;
    }

private:
    std::vector<std::string> names_;
    std::vector<Mat> values_;
    std::unordered_map<std::string, int> index_;
};

using Grads = std::vector<Mat>;

/// Binds a ParamStore to a tape, optionally with gradient sinks.
struct ParamBinding {
    const ParamStore* store = nullptr;
    Grads* grads = nullptr;

    Var operator()(Tape& t, int id) const {
        return t.leaf(store->value(id), grads ? &(*grads)[static_cast<std::size_t>(id)] : nullptr);
    }
    const Mat& value(int id) const { return store->value(id); }
    Mat* sink(int id) const { return grads ? &(*grads)[static_cast<std::size_t>(id)] : nullptr; }
};

inline void init_normal(Mat& m, Rng& rng, double stddev) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
}

/// Glorot-uniform over a fan_in x fan_out matrix.
inline void init_glorot(Mat& m, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
}

}  // namespace lrkd
