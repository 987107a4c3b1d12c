// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Frozen rationale embeddings: a hashed bag-of-tokens mock, an external
// sentence-embedding client and a content-addressed on-disk cache.

#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "lrkd/http.hpp"
#include "lrkd/schema.hpp"
#include "lrkd/tokenizer.hpp"

namespace lrkd {

enum class EmbeddingSource { Mock, External, Cache };

inline std::string_view to_string(EmbeddingSource s) {
    switch (s) {
        case EmbeddingSource::Mock: return "mock";
        case EmbeddingSource::External: return "external";
        case EmbeddingSource::Cache: return "cache";
    }
    return "mock";
}

struct CotEmbedding {
    std::vector<double> e;
    EmbeddingSource source = EmbeddingSource::Mock;
};

inline std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) {
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    }
    return os.str();
}

// ----------------------------- mock -----------------------------

/// Each distinct token maps to a seeded pseudo-random unit vector; the
/// embedding is the L2-normalized count-weighted sum. Tokens are accumulated
/// in sorted order, so the result is independent of word order.
inline CotEmbedding embed_mock(std::string_view rationale, int d_e, std::uint64_t seed) {
    if (d_e < 8) {
        throw ConfigError("mock embedding width must be >= 8");
    }
    const auto words = split_words(rationale);
    if (words.empty()) {
        throw DegenerateError("cannot embed an empty rationale");
    }
    std::map<std::string, int> bag;
    for (const auto& w : words) ++bag[w];
    std::vector<double> sum(static_cast<std::size_t>(d_e), 0.0);
    std::vector<double> v(static_cast<std::size_t>(d_e));
    for (const auto& [word, count] : bag) {
        Rng rng(derive_seed(seed, fnv1a(word)));
        double norm = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < v.size(); ++i) sum[i] += count * v[i] / norm;
    }
    double n = 0.0;
    for (double x : sum) n += x * x;
    n = std::sqrt(n);
    if (n == 0.0) {
        throw DegenerateError("rationale embedding has zero norm");
    }
    for (auto& x : sum) x /= n;
    return {std::move(sum), EmbeddingSource::Mock};
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

// ----------------------------- cache -----------------------------

/// Directory layout: index.json plus blobs/<key>.bin (little-endian float64).
/// Keys are (provider id, SHA-256 of the text, width).
class EmbeddingCache {
public:
    explicit EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_ / "blobs");
        const auto idx = dir_ / "index.json";
        if (std::filesystem::exists(idx)) {
            std::ifstream in(idx);
            try {
                index_ = json::parse(in);
            } catch (const json::exception& e) {
                throw ParseError(1, "cache index " + idx.string() + ": " + e.what());
            }
        }
        if (!index_.contains("entries")) index_["entries"] = json::object();
    }

    static std::string key(std::string_view provider, std::string_view text, int dim) {
        return std::string(provider) + "-" + sha256_hex(text) + "-" + std::to_string(dim);
    }

    std::optional<std::vector<double>> lookup(std::string_view provider, std::string_view text, int dim) const {
        const std::string k = key(provider, text, dim);
        const auto& entries = index_["entries"];
        auto it = entries.find(k);
        if (it == entries.end()) return std::nullopt;
        std::ifstream in(dir_ / "blobs" / it->at("file").get<std::string>(), std::ios::binary);
        if (!in) return std::nullopt;
        std::vector<double> v(static_cast<std::size_t>(dim));
        for (auto& x : v) x = read_f64_le(in);
        return v;
    }

    void store(std::string_view provider, std::string_view text, const std::vector<double>& v) {
        const int dim = static_cast<int>(v.size());
        const std::string k = key(provider, text, dim);
        const std::string file = k + ".bin";
        {
            std::ofstream out(dir_ / "blobs" / file, std::ios::binary | std::ios::trunc);
            for (double x : v) write_f64_le(out, x);
        }
        ordered_json entry;
        entry["provider"] = std::string(provider);
        entry["sha256"] = sha256_hex(text);
        entry["dim"] = dim;
        entry["file"] = file;
        index_["entries"][k] = entry;
        const auto tmp = dir_ / "index.json.tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << index_.dump(1) << '\n';
        }
        std::filesystem::rename(tmp, dir_ / "index.json");
    }

    std::size_t size() const { return index_["entries"].size(); }

private:
    std::filesystem::path dir_;
    json index_;
};

// ----------------------------- providers -----------------------------

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string id() const = 0;
    virtual int dim() const = 0;
    virtual CotEmbedding embed(std::string_view text) = 0;
};

class MockEmbedder final : public EmbeddingProvider {
public:
    MockEmbedder(int d_e, std::uint64_t seed) : d_e_(d_e), seed_(seed) {}
    std::string id() const override { return "mock" + std::to_string(seed_); }
    int dim() const override { return d_e_; }
    CotEmbedding embed(std::string_view text) override { return embed_mock(text, d_e_, seed_); }

private:
    int d_e_;
    std::uint64_t seed_;
};

/// Keeps the first max_tokens whitespace-separated tokens, joined by single
/// spaces. Shorter texts are returned unchanged.
inline std::string truncate_tokens(std::string_view text, int max_tokens) {
    std::istringstream is{std::string(text)};
    std::vector<std::string> toks;
    std::string w;
    while (is >> w) toks.push_back(w);
    if (static_cast<int>(toks.size()) <= max_tokens) return std::string(text);
    std::string out;
    for (int i = 0; i < max_tokens; ++i) {
        if (i) out.push_back(' ');
        out += toks[static_cast<std::size_t>(i)];
    }
    return out;
}

/// Client for a service answering {"text": ...} with {"vector": [...]}.
class ExternalEmbedder final : public EmbeddingProvider {
public:
    ExternalEmbedder(Endpoint ep, int expected_dim, EmbeddingCache* cache = nullptr, int max_tokens = 1024)
        : ep_(std::move(ep)), dim_(expected_dim), cache_(cache), max_tokens_(max_tokens) {}

    std::string id() const override { return "external"; }
    int dim() const override { return dim_; }

    CotEmbedding embed(std::string_view text) override {
        const std::string body_text = truncate_tokens(text, max_tokens_);
        if (cache_) {
            if (auto hit = cache_->lookup(id(), body_text, dim_)) return {std::move(*hit), EmbeddingSource::Cache};
        }
        json req;
        req["text"] = body_text;
        const json reply = post_json(ep_, req);
        std::vector<double> v;
        try {
            v = reply.at("vector").get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw TransportError(std::string("embedding reply lacks a numeric 'vector': ") + e.what());
        }
        if (static_cast<int>(v.size()) != dim_) {
            throw ConfigError("embedding service returned width " + std::to_string(v.size()) + ", run expects " +
                              std::to_string(dim_));
        }
        ++calls_;
        if (cache_) cache_->store(id(), body_text, v);
        return {std::move(v), EmbeddingSource::External};
    }

    int network_calls() const noexcept { return calls_; }

private:
    Endpoint ep_;
    int dim_;
    EmbeddingCache* cache_;
    int max_tokens_;
    int calls_ = 0;
};

inline constexpr std::string_view kCombineSeparator = " [SEP] ";

inline std::string join_rationales(const std::array<std::string, 3>& parts) {
    for (const auto& p : parts) {
        if (split_words(p).empty()) throw DegenerateError("combined embedding needs three non-empty rationales");
    }
    return parts[0] + std::string(kCombineSeparator) + parts[1] + std::string(kCombineSeparator) + parts[2];
}

/// One embedding for three rationales joined by a separator token.
inline CotEmbedding embed_combined(const std::array<std::string, 3>& rationales, EmbeddingProvider& provider) {
    return provider.embed(join_rationales(rationales));
}

inline CotEmbedding embed_combined(const std::array<std::string, 3>& rationales, int d_e, std::uint64_t seed) {
    MockEmbedder m(d_e, seed);
    return embed_combined(rationales, m);
}

}  // namespace lrkd
