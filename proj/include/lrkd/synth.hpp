// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic query/title corpus built from structured product slots, plus the
// lexicon used to recover those slots when templating teacher rationales.

#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lrkd/schema.hpp"
#include "lrkd/tokenizer.hpp"

namespace lrkd::synth {

struct Category {
    std::string_view name;
    int domain;
    bool portable;
};

inline constexpr std::array<std::string_view, 5> kDomains{"electronics", "apparel", "household", "recreation",
                                                          "grooming"};

inline constexpr std::array<Category, 25> kCategories{{
    {"headphones", 0, true},  {"speaker", 0, false},  {"keyboard", 0, false}, {"smartwatch", 0, true},
    {"camera", 0, true},      {"jacket", 1, true},    {"sneakers", 1, true},  {"backpack", 1, true},
    {"hoodie", 1, false},     {"jeans", 1, false},    {"blender", 2, false},  {"kettle", 2, false},
    {"vacuum", 2, false},     {"lamp", 2, true},      {"toaster", 2, false},  {"tent", 3, true},
    {"bicycle", 3, false},    {"kayak", 3, false},    {"lantern", 3, true},   {"hammock", 3, true},
    {"perfume", 4, true},     {"lipstick", 4, true},  {"shampoo", 4, false},  {"hairdryer", 4, false},
    {"razor", 4, true},
}};

inline constexpr std::array<std::string_view, 3> kTiers{"premium", "midrange", "budget"};

inline constexpr std::array<std::string_view, 36> kBrands{
    "zentro",  "lumora",  "kaviso", "brixel", "norvane", "pellix", "quorra", "sandor", "tavik",
    "ulmera",  "vexlo",   "wyndra", "axoni",  "belvar",  "corvex", "dunmar", "elvina", "fyrox",
    "galdor",  "hexaro",  "istra",  "jorvik", "kelmar",  "lyssa",  "morvan", "nexora", "ostrel",
    "pyxon",   "quintar", "rovena", "solbay", "trelix",  "umbria", "vantor", "wexley", "yorsa"};

/// Brand i belongs to tier i % 3.
inline std::string_view brand_tier(std::size_t brand) { return kTiers[brand % kTiers.size()]; }

inline constexpr std::array<std::string_view, 4> kAttributeTypes{"colour", "sizing", "material", "capacity"};

inline constexpr std::array<std::array<std::string_view, 5>, 4> kAttributeValues{{
    {"red", "blue", "black", "white", "green"},
    {"small", "medium", "large", "xl", "compact"},
    {"leather", "steel", "cotton", "wooden", "plastic"},
    {"16gb", "64gb", "128gb", "1l", "2l"},
}};

inline constexpr std::array<std::string_view, 6> kAccessoryWords{"case", "cover", "strap", "mount", "cable", "stand"};

inline constexpr std::array<std::string_view, 12> kFillers{"new",   "original", "hot",      "sale",  "free", "shipping",
                                                           "genuine", "official", "store", "quality", "deal", "authentic"};

inline constexpr int kModelCount = 48;

inline std::string model_code(int i) {
    static constexpr std::array<char, 8> letters{'k', 'x', 'p', 'z', 'm', 'v', 'q', 't'};
    return std::string(1, letters[static_cast<std::size_t>(i) % letters.size()]) + std::to_string(100 + 7 * i);
}

/// Slots recovered from a query/title pair.
struct Slots {
    std::optional<std::size_t> brand;
    std::optional<std::size_t> category;
    std::optional<std::string> model;
    std::optional<std::pair<std::size_t, std::size_t>> attribute;  // (type, value)
    std::optional<std::size_t> accessory;
};

inline Slots parse_slots(std::string_view text) {
    Slots s;
    for (const auto& w : split_words(text)) {
        for (std::size_t i = 0; i < kBrands.size() && !s.brand; ++i)
            if (w == kBrands[i]) s.brand = i;
        for (std::size_t i = 0; i < kCategories.size() && !s.category; ++i)
            if (w == kCategories[i].name) s.category = i;
        for (std::size_t t = 0; t < kAttributeValues.size() && !s.attribute; ++t)
            for (std::size_t v = 0; v < kAttributeValues[t].size(); ++v)
                if (w == kAttributeValues[t][v]) s.attribute = std::make_pair(t, v);
        for (std::size_t i = 0; i < kAccessoryWords.size() && !s.accessory; ++i)
            if (w == kAccessoryWords[i]) s.accessory = i;
        if (!s.model && w.size() >= 4 && std::string_view("kxpzmvqt").find(w[0]) != std::string_view::npos &&
            std::all_of(w.begin() + 1, w.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            s.model = w;
        }
    }
    return s;
}

/// Maps a fine-grained mismatch kind to a class of the given built-in schema.
inline int class_for_kind(const RelevanceSchema& schema, MismatchKind k) {
    if (schema.name == "esci4") {
        switch (k) {
            case MismatchKind::None: return schema.index_of("Exact");
            case MismatchKind::Brand:
            case MismatchKind::Model:
            case MismatchKind::Attribute: return schema.index_of("Substitute");
            case MismatchKind::Accessory: return schema.index_of("Complement");
            case MismatchKind::Category: return schema.index_of("Irrelevant");
        }
    }
    if (schema.name == "aliexpress6") {
        return static_cast<int>(k);
    }
    throw ConfigError("synthetic corpora support the esci4 and aliexpress6 schemas only");
}

namespace detail {

template <typename Arr>
std::size_t pick_other(Rng& rng, const Arr& arr, std::size_t not_this) {
    std::size_t j = static_cast<std::size_t>(rng.below(arr.size() - 1));
    return j >= not_this ? j + 1 : j;
}

inline std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out.push_back(' ');
        out += words[i];
    }
    return out;
}

}  // namespace detail

/// One pair with an injected mismatch. The per-pair stream derives from
/// (seed, index), so corpora can be generated in shards.
inline LabeledPair make_pair(std::size_t index, const RelevanceSchema& schema, std::uint64_t seed) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
    MismatchKind kind;
    if (schema.name == "esci4") {
        const auto cls = rng.below(4);
        if (cls == 0) kind = MismatchKind::None;
        else if (cls == 1) kind = std::array{MismatchKind::Brand, MismatchKind::Model, MismatchKind::Attribute}[rng.below(3)];
        else if (cls == 2) kind = MismatchKind::Accessory;
        else kind = MismatchKind::Category;
    } else {
        kind = kAllMismatchKinds[rng.below(kAllMismatchKinds.size())];
    }

    const std::size_t brand = rng.below(kBrands.size());
    const std::size_t cat = rng.below(kCategories.size());
    const int model = static_cast<int>(rng.below(kModelCount));
    const std::size_t atype = rng.below(kAttributeTypes.size());
    const std::size_t aval = rng.below(kAttributeValues[atype].size());

    std::vector<std::string> q{std::string(kBrands[brand]), std::string(kCategories[cat].name), model_code(model),
                               std::string(kAttributeValues[atype][aval])};
    if (rng.bernoulli(0.3)) rng.shuffle(q);

    std::size_t t_brand = brand, t_cat = cat, t_aval = aval;
    int t_model = model;
    switch (kind) {
        case MismatchKind::Brand: t_brand = detail::pick_other(rng, kBrands, brand); break;
        case MismatchKind::Category: t_cat = detail::pick_other(rng, kCategories, cat); break;
        case MismatchKind::Model: {
            int m = static_cast<int>(rng.below(kModelCount - 1));
            t_model = m >= model ? m + 1 : m;
            break;
        }
        case MismatchKind::Attribute: t_aval = detail::pick_other(rng, kAttributeValues[atype], aval); break;
        default: break;
    }
    std::vector<std::string> t{std::string(kBrands[t_brand]), std::string(kCategories[t_cat].name),
                               model_code(t_model), std::string(kAttributeValues[atype][t_aval])};
    rng.shuffle(t);
    const auto fillers = 1 + rng.below(3);
    for (std::uint64_t i = 0; i < fillers; ++i) {
        const auto pos = rng.below(t.size() + 1);
        t.insert(t.begin() + static_cast<std::ptrdiff_t>(pos), std::string(kFillers[rng.below(kFillers.size())]));
    }
    if (kind == MismatchKind::Accessory) {
        const auto acc = std::string(kAccessoryWords[rng.below(kAccessoryWords.size())]);
        t.insert(t.begin(), {acc, "for"});
    }

    LabeledPair p;
    p.id = "syn-" + std::to_string(index);
    p.query = detail::join(q);
    p.title = detail::join(t);
    p.label = class_for_kind(schema, kind);
    p.language = "en";
    p.mismatch_kind = kind;
    return p;
}

/// n pairs, approximately uniform over the schema's classes.
inline std::vector<LabeledPair> gen_synthetic_corpus(std::int64_t n, const RelevanceSchema& schema, std::uint64_t seed) {
    if (n < 0) {
        throw InputError("corpus size must be non-negative");
    }
    std::vector<LabeledPair> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) out.push_back(make_pair(static_cast<std::size_t>(i), schema, seed));
    return out;
}

}  // namespace lrkd::synth
