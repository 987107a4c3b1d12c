// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Lowercasing whitespace/punctuation splitter with a hash-bucketed vocabulary.

#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "lrkd/params.hpp"
#include "lrkd/common.hpp"
#include "lrkd/schema.hpp"

namespace lrkd {

inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kSepId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumSpecial = 4;

/// Lowercases ASCII and splits on ASCII whitespace and punctuation. Bytes >= 0x80
/// (UTF-8 continuation and lead bytes) stay inside words.
inline std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (c < 0x80 && (std::isspace(c) || std::ispunct(c))) {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline int token_id(std::string_view word, int buckets) {
    return kNumSpecial + static_cast<int>(fnv1a(word) % static_cast<std::uint64_t>(buckets));
}

struct VocabSpec {
    int buckets = 8192;
    std::vector<std::string> specials{"[PAD]", "[CLS]", "[SEP]", "[UNK]"};

    int size() const noexcept { return buckets + kNumSpecial; }
};

inline ordered_json to_json(const VocabSpec& v) {
    ordered_json j;
    j["bucket_count"] = v.buckets;
    j["special_tokens"] = v.specials;
    j["hash"] = "fnv1a64";
    return j;
}

/// One padded row: [CLS] query [SEP] title [SEP] [PAD]...
struct TokenRow {
    std::vector<int> ids;
    std::vector<int> segments;
    Mask mask;
    int length = 0;
};

inline TokenRow tokenize(std::string_view query, std::string_view title, int max_len, int buckets = 8192) {
    if (max_len < 4) {
        throw ConfigError("max_len must be at least 4");
    }
    auto q = split_words(query);
    auto p = split_words(title);
    const std::size_t budget = static_cast<std::size_t>(max_len) - 3;
    if (q.size() + p.size() > budget) {
        // Title is truncated first; the query only if it alone exceeds the budget.
        const std::size_t qkeep = std::min(q.size(), budget);
        q.resize(qkeep);
        p.resize(std::min(p.size(), budget - qkeep));
    }
    TokenRow row;
    row.ids.assign(static_cast<std::size_t>(max_len), kPadId);
    row.segments.assign(static_cast<std::size_t>(max_len), 0);
    row.mask.assign(static_cast<std::size_t>(max_len), 0);
    std::size_t pos = 0;
    auto put = [&](int id, int seg) {
        row.ids[pos] = id;
        row.segments[pos] = seg;
        row.mask[pos] = 1;
        ++pos;
    };
    put(kClsId, 0);
    for (const auto& w : q) put(token_id(w, buckets), 0);
    put(kSepId, 0);
    for (const auto& w : p) put(token_id(w, buckets), 1);
    put(kSepId, 1);
    row.length = static_cast<int>(pos);
    return row;
}

/// B x L grid of rows sharing one padded width.
struct TokenBatch {
    int width = 0;
    std::vector<TokenRow> rows;

    std::size_t size() const noexcept { return rows.size(); }
};

inline TokenBatch tokenize_batch(const std::vector<LabeledPair>& pairs, int max_len, int buckets) {
    TokenBatch b;
    b.width = max_len;
    b.rows.reserve(pairs.size());
    for (const auto& p : pairs) b.rows.push_back(tokenize(p.query, p.title, max_len, buckets));
    return b;
}

/// Drops padding so the row is exactly `length` wide. Valid-position results
/// are unaffected because padded positions are fully masked.
inline TokenRow trim(const TokenRow& r) {
    TokenRow out;
    const auto n = static_cast<std::size_t>(r.length);
    out.ids.assign(r.ids.begin(), r.ids.begin() + static_cast<std::ptrdiff_t>(n));
    out.segments.assign(r.segments.begin(), r.segments.begin() + static_cast<std::ptrdiff_t>(n));
    out.mask.assign(n, 1);
    out.length = r.length;
    return out;
}

}  // namespace lrkd
