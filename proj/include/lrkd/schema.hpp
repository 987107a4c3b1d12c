// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Label schemas, the core pair record, teacher perspectives and the canonical
// JSONL dataset format.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lrkd/common.hpp"

namespace lrkd {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ----------------------------- schema -----------------------------

struct RelevanceSchema {
    std::string name;
    std::vector<std::string> classes;
    /// default_tiers[c] is the tier (0..4) of class c.
    std::vector<int> default_tiers;

    std::size_t size() const noexcept { return classes.size(); }

    void validate() const {
        if (classes.size() < 2) {
            throw SchemaError("schema '" + name + "' needs at least 2 classes");
        }
        std::set<std::string> seen;
        for (const auto& c : classes) {
            if (c.empty()) {
                throw SchemaError("schema '" + name + "' has an empty class name");
            }
            if (!seen.insert(c).second) {
                throw SchemaError("schema '" + name + "' repeats class '" + c + "'");
            }
        }
        if (default_tiers.size() != classes.size()) {
            throw SchemaError("schema '" + name + "' needs exactly one tier per class");
        }
        for (int t : default_tiers) {
            if (t < 0 || t > 4) {
                throw SchemaError("schema '" + name + "' has tier outside 0..4");
            }
        }
    }

    /// Exact class-name lookup.
    std::optional<int> find(std::string_view cls) const {
        for (std::size_t i = 0; i < classes.size(); ++i) {
            if (classes[i] == cls) {
                return static_cast<int>(i);
            }
        }
        return std::nullopt;
    }

    /// Case-insensitive, whitespace-trimmed class-name lookup.
    std::optional<int> find_relaxed(std::string_view cls) const {
        auto norm = [](std::string_view s) {
            std::size_t b = 0;
            std::size_t e = s.size();
            while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
            while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
            std::string out;
            out.reserve(e - b);
            for (std::size_t i = b; i < e; ++i) {
                out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
            }
            return out;
        };
        const std::string key = norm(cls);
        for (std::size_t i = 0; i < classes.size(); ++i) {
            if (norm(classes[i]) == key) {
                return static_cast<int>(i);
            }
        }
        return std::nullopt;
    }

    int index_of(std::string_view cls) const {
        auto idx = find(cls);
        if (!idx) {
            throw SchemaError("label '" + std::string(cls) + "' is not a class of schema '" + name + "'");
        }
        return *idx;
    }

    const std::string& class_name(int idx) const {
        if (idx < 0 || static_cast<std::size_t>(idx) >= classes.size()) {
            throw SchemaError("class index " + std::to_string(idx) + " out of range for schema '" + name + "'");
        }
        return classes[static_cast<std::size_t>(idx)];
    }

    bool operator==(const RelevanceSchema&) const = default;
};

inline RelevanceSchema make_schema(std::string name, std::vector<std::string> classes, std::vector<int> tiers) {
    RelevanceSchema s{std::move(name), std::move(classes), std::move(tiers)};
    s.validate();
    return s;
}

/// Public ESCI labels. Tiers are placeholders until calibrated.
inline RelevanceSchema esci4() {
    return make_schema("esci4", {"Exact", "Substitute", "Complement", "Irrelevant"}, {4, 2, 1, 0});
}

inline RelevanceSchema aliexpress6() {
    return make_schema("aliexpress6",
                       {"Strongly Relevant", "Brand Mismatch", "Category Mismatch", "Model Mismatch",
                        "Attribute Mismatch", "Accessory Mismatch"},
                       {4, 1, 0, 1, 2, 1});
}

inline ordered_json schema_to_json(const RelevanceSchema& s) {
    ordered_json j;
    j["name"] = s.name;
    j["classes"] = s.classes;
    j["default_tiers"] = s.default_tiers;
    return j;
}

inline RelevanceSchema schema_from_json(const json& j) {
    try {
        return make_schema(j.at("name").get<std::string>(), j.at("classes").get<std::vector<std::string>>(),
                           j.at("default_tiers").get<std::vector<int>>());
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed schema definition: ") + e.what());
    }
}

/// Accepts a built-in name ("esci4", "aliexpress6") or a path to a schema JSON file.
inline RelevanceSchema resolve_schema(const std::string& name_or_path) {
    if (name_or_path == "esci4" || name_or_path == "esci") {
        return esci4();
    }
    if (name_or_path == "aliexpress6" || name_or_path == "aliexpress") {
        return aliexpress6();
    }
    std::ifstream in(name_or_path);
    if (!in) {
        throw ConfigError("unknown schema '" + name_or_path + "'");
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError("schema file " + name_or_path + ": " + e.what());
    }
    return schema_from_json(j);
}

// ----------------------------- records -----------------------------

enum class MismatchKind { None, Brand, Category, Model, Attribute, Accessory };

inline constexpr std::array<MismatchKind, 6> kAllMismatchKinds{MismatchKind::None,  MismatchKind::Brand,
                                                               MismatchKind::Category, MismatchKind::Model,
                                                               MismatchKind::Attribute, MismatchKind::Accessory};

inline std::string_view to_string(MismatchKind k) {
    switch (k) {
        case MismatchKind::None: return "none";
        case MismatchKind::Brand: return "brand";
        case MismatchKind::Category: return "category";
        case MismatchKind::Model: return "model";
        case MismatchKind::Attribute: return "attribute";
        case MismatchKind::Accessory: return "accessory";
    }
    return "none";
}

inline MismatchKind mismatch_kind_from_string(std::string_view s) {
    for (auto k : kAllMismatchKinds) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw SchemaError("unknown mismatch_kind '" + std::string(s) + "'");
}

struct LabeledPair {
    std::string id;
    std::string query;
    std::string title;
    int label = 0;
    std::string language = "en";
    std::optional<MismatchKind> mismatch_kind;

    bool operator==(const LabeledPair&) const = default;
};

// ----------------------------- perspectives -----------------------------

enum class Perspective { UserIntent = 0, StructuredAnalysis = 1, BusinessRules = 2 };

inline constexpr std::array<Perspective, 3> kAllPerspectives{Perspective::UserIntent, Perspective::StructuredAnalysis,
                                                             Perspective::BusinessRules};

inline std::string_view to_string(Perspective p) {
    switch (p) {
        case Perspective::UserIntent: return "user_intent";
        case Perspective::StructuredAnalysis: return "structured_analysis";
        case Perspective::BusinessRules: return "business_rules";
    }
    return "user_intent";
}

inline Perspective perspective_from_string(std::string_view s) {
    for (auto p : kAllPerspectives) {
        if (to_string(p) == s) {
            return p;
        }
    }
    throw SchemaError("unknown perspective '" + std::string(s) + "'");
}

inline constexpr std::string_view kQueryPlaceholder = "{query}";
inline constexpr std::string_view kTitlePlaceholder = "{title}";

inline std::string_view prompt_template(Perspective p) {
    switch (p) {
        case Perspective::UserIntent:
            return "You are a shopper who typed the search query \"{query}\". Think about what you want to do with "
                   "the product and which functional needs it must satisfy. Decide whether the item \"{title}\" "
                   "serves that need. Explain your thinking, then finish with a last line of the form "
                   "\"Final: <label>\" using one of: {labels}.";
        case Perspective::StructuredAnalysis:
            return "Act as an expert relevance annotator. Query: \"{query}\". Item title: \"{title}\". Extract the "
                   "brand, category, model and attributes from both, compare them one by one, and report every "
                   "difference. End with a last line \"Final: <label>\" using one of: {labels}.";
        case Perspective::BusinessRules:
            return "Apply marketplace relevance rules to the query \"{query}\" and the item \"{title}\". Check "
                   "whether the item is the main product or an accessory for it, and whether attribute "
                   "differences are acceptable substitutes. Give your reasoning and end with \"Final: <label>\" "
                   "using one of: {labels}.";
    }
    return "";
}

inline std::string fill_prompt(std::string_view tmpl, std::string_view query, std::string_view title,
                               const RelevanceSchema& schema) {
    std::string labels;
    for (std::size_t i = 0; i < schema.classes.size(); ++i) {
        if (i) labels += ", ";
        labels += schema.classes[i];
    }
    auto replace_all = [](std::string s, std::string_view from, std::string_view to) {
        std::size_t pos = 0;
        while ((pos = s.find(from, pos)) != std::string::npos) {
            s.replace(pos, from.size(), to);
            pos += to.size();
        }
        return s;
    };
    std::string out(tmpl);
    out = replace_all(out, "{labels}", labels);
    out = replace_all(out, kQueryPlaceholder, query);
    out = replace_all(out, kTitlePlaceholder, title);
    return out;
}

// ----------------------------- jsonl helpers -----------------------------

/// Calls fn(json, line_number) for each non-blank line. Malformed JSON raises ParseError.
inline void for_each_jsonl(std::istream& in, const std::function<void(const json&, std::size_t)>& fn) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(lineno, e.what());
        }
        fn(j, lineno);
    }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    return out;
}

// ----------------------------- dataset io -----------------------------

inline LabeledPair pair_from_json(const json& j, const RelevanceSchema& schema, std::size_t lineno) {
    LabeledPair p;
    try {
        p.id = j.at("id").get<std::string>();
        p.query = j.at("query").get<std::string>();
        p.title = j.at("title").get<std::string>();
        const auto& lab = j.at("label");
        if (!lab.is_string()) {
            throw ParseError(lineno, "label must be a class-name string");
        }
        const std::string name = lab.get<std::string>();
        auto idx = schema.find(name);
        if (!idx) {
            throw SchemaError("line " + std::to_string(lineno) + ": label '" + name + "' is not a class of schema '" +
                              schema.name + "'");
        }
        p.label = *idx;
        if (auto it = j.find("language"); it != j.end() && !it->is_null()) {
            p.language = it->get<std::string>();
        }
        if (auto it = j.find("mismatch_kind"); it != j.end() && !it->is_null()) {
            p.mismatch_kind = mismatch_kind_from_string(it->get<std::string>());
        }
    } catch (const json::exception& e) {
        throw ParseError(lineno, e.what());
    }
    if (p.query.empty() || p.title.empty()) {
        throw ParseError(lineno, "query and title must be non-empty");
    }
    return p;
}

inline ordered_json pair_to_json(const LabeledPair& p, const RelevanceSchema& schema) {
    ordered_json j;
    j["id"] = p.id;
    j["query"] = p.query;
    j["title"] = p.title;
    j["label"] = schema.class_name(p.label);
    j["language"] = p.language;
    if (p.mismatch_kind) {
        j["mismatch_kind"] = std::string(to_string(*p.mismatch_kind));
    }
    return j;
}

inline std::vector<LabeledPair> read_dataset(std::istream& in, const RelevanceSchema& schema) {
    std::vector<LabeledPair> out;
    for_each_jsonl(in, [&](const json& j, std::size_t lineno) { out.push_back(pair_from_json(j, schema, lineno)); });
    return out;
}

inline std::vector<LabeledPair> load_dataset(const std::filesystem::path& path, const RelevanceSchema& schema) {
    auto in = open_input(path);
    return read_dataset(in, schema);
}

inline void write_dataset(std::ostream& out, const std::vector<LabeledPair>& pairs, const RelevanceSchema& schema) {
    for (const auto& p : pairs) {
        out << pair_to_json(p, schema).dump() << '\n';
    }
}

inline void save_dataset(const std::filesystem::path& path, const std::vector<LabeledPair>& pairs,
                         const RelevanceSchema& schema) {
    auto out = open_output(path);
    write_dataset(out, pairs, schema);
}

// ----------------------------- ESCI delimited files -----------------------------

namespace detail {

/// RFC 4180 style record splitter; handles quoted fields with embedded delimiters and newlines.
inline bool read_delimited_record(std::istream& in, char delim, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"' && field.empty()) {
            in_quotes = true;
        } else if (c == delim) {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (any) {
        fields.push_back(std::move(field));
    }
    return any;
}

}  // namespace detail

/// Reads an ESCI-layout file (comma or tab separated, header row required) into
/// 4-class pairs. E/S/C/I map to Exact/Substitute/Complement/Irrelevant.
inline std::vector<LabeledPair> read_esci_format(std::istream& in) {
    const RelevanceSchema schema = esci4();
    std::string first;
    std::getline(in, first);
    if (!first.empty() && first.back() == '\r') first.pop_back();
    const char delim = first.find('\t') != std::string::npos ? '\t' : ',';
    std::vector<std::string> header;
    {
        std::istringstream hs(first + "\n");
        detail::read_delimited_record(hs, delim, header);
    }
    auto column = [&](std::initializer_list<std::string_view> names) -> std::optional<std::size_t> {
        for (auto n : names) {
            for (std::size_t i = 0; i < header.size(); ++i) {
                if (header[i] == n) return i;
            }
        }
        return std::nullopt;
    };
    const auto qcol = column({"query"});
    const auto tcol = column({"product_title", "title"});
    const auto lcol = column({"esci_label", "label"});
    const auto loccol = column({"product_locale", "locale"});
    const auto idcol = column({"example_id", "id"});
    if (!qcol || !tcol || !lcol || !loccol) {
        throw ParseError(1, "ESCI header must name query, product_title, esci_label and product_locale columns");
    }
    std::vector<LabeledPair> out;
    std::vector<std::string> fields;
    std::size_t lineno = 1;
    while (detail::read_delimited_record(in, delim, fields)) {
        ++lineno;
        if (fields.size() == 1 && fields[0].empty()) continue;
        const std::size_t need = std::max({*qcol, *tcol, *lcol, *loccol, idcol.value_or(0)}) + 1;
        if (fields.size() < need) {
            throw ParseError(lineno, "expected at least " + std::to_string(need) + " columns");
        }
        LabeledPair p;
        p.id = idcol ? fields[*idcol] : "esci-" + std::to_string(out.size());
        p.query = fields[*qcol];
        p.title = fields[*tcol];
        p.language = fields[*loccol];
        const std::string& tok = fields[*lcol];
        if (tok == "E") p.label = schema.index_of("Exact");
        else if (tok == "S") p.label = schema.index_of("Substitute");
        else if (tok == "C") p.label = schema.index_of("Complement");
        else if (tok == "I") p.label = schema.index_of("Irrelevant");
        else throw SchemaError("line " + std::to_string(lineno) + ": unknown esci_label '" + tok + "'");
        if (p.query.empty() || p.title.empty()) {
            throw ParseError(lineno, "query and title must be non-empty");
        }
        out.push_back(std::move(p));
    }
    return out;
}

inline std::vector<LabeledPair> load_esci_format(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_esci_format(in);
}

}  // namespace lrkd
