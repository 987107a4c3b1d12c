// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Teacher generations: a per-perspective simulator with a configurable error
// matrix, and a client for an external text-generation service.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "lrkd/http.hpp"
#include "lrkd/schema.hpp"
#include "lrkd/synth.hpp"

namespace lrkd {

inline constexpr int kInvalidLabel = -1;

struct GenerationRecord {
    std::string pair_id;
    Perspective perspective = Perspective::UserIntent;
    int attempt = 0;
    std::string rationale;
    /// kInvalidLabel when the reply carried no recognizable label.
    int predicted_label = kInvalidLabel;
    std::optional<double> logprob;
    bool valid = true;

    bool operator==(const GenerationRecord&) const = default;
};

/// Sort key used when merging shards.
inline bool generation_order(const GenerationRecord& a, const GenerationRecord& b) {
    return std::tie(a.pair_id, a.perspective, a.attempt) < std::tie(b.pair_id, b.perspective, b.attempt);
}

// ----------------------------- error matrix -----------------------------

struct PerspectiveErrorMatrix {
    /// accuracy[perspective][true class]
    std::array<std::vector<double>, 3> accuracy;
    /// confusion[perspective][true class][wrong class]; zero on the diagonal.
    std::array<std::vector<std::vector<double>>, 3> confusion;
    /// Probability that an attempt reuses the (pair, perspective) latent draw
    /// instead of a fresh one. Marginal per-attempt accuracy is unchanged;
    /// higher values make repeated attempts of one perspective agree more.
    double attempt_correlation = 0.8;

    std::size_t classes() const { return accuracy[0].size(); }

    double acc(Perspective p, int cls) const {
        return accuracy[static_cast<std::size_t>(p)][static_cast<std::size_t>(cls)];
    }

    void validate() const {
        const std::size_t c = classes();
        if (!(attempt_correlation >= 0.0 && attempt_correlation <= 1.0)) {
            throw ConfigError("attempt_correlation must lie in [0, 1]");
        }
        for (std::size_t k = 0; k < 3; ++k) {
            if (accuracy[k].size() != c || confusion[k].size() != c) {
                throw ConfigError("error matrix shape mismatch");
            }
            for (std::size_t y = 0; y < c; ++y) {
                const double a = accuracy[k][y];
                if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("accuracy outside [0, 1]");
                const auto& row = confusion[k][y];
                if (row.size() != c) throw ConfigError("confusion row width mismatch");
                double s = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    if (row[j] < 0.0 || row[j] > 1.0) throw ConfigError("confusion probability outside [0, 1]");
                    if (j == y && row[j] != 0.0) throw ConfigError("confusion row puts mass on the true label");
                    s += row[j];
                }
                if (std::abs(s - 1.0) > 1e-9) throw ConfigError("confusion row does not sum to 1");
            }
        }
    }
};

/// Every cell set to `acc`, wrong labels uniform.
inline PerspectiveErrorMatrix uniform_matrix(std::size_t classes, double acc) {
    PerspectiveErrorMatrix m;
    for (std::size_t k = 0; k < 3; ++k) {
        m.accuracy[k].assign(classes, acc);
        m.confusion[k].assign(classes, std::vector<double>(classes, 0.0));
        for (std::size_t y = 0; y < classes; ++y)
            for (std::size_t j = 0; j < classes; ++j)
                if (j != y) m.confusion[k][y][j] = 1.0 / static_cast<double>(classes - 1);
    }
    return m;
}

/// Complementary default: strong cells 0.9, weak cells 0.45, others 0.65.
/// User intent is strong on category errors, structured analysis on brand and
/// model errors but weak on attributes, business rules on attributes and
/// accessories.
inline PerspectiveErrorMatrix default_matrix(const RelevanceSchema& schema) {
    constexpr double strong = 0.9, weak = 0.45;
    auto m = uniform_matrix(schema.size(), 0.65);
    auto set = [&](Perspective p, std::string_view cls, double v) {
        if (auto idx = schema.find(cls)) m.accuracy[static_cast<std::size_t>(p)][static_cast<std::size_t>(*idx)] = v;
    };
    if (schema.name == "aliexpress6") {
        set(Perspective::UserIntent, "Category Mismatch", strong);
        set(Perspective::StructuredAnalysis, "Brand Mismatch", strong);
        set(Perspective::StructuredAnalysis, "Model Mismatch", strong);
        set(Perspective::StructuredAnalysis, "Attribute Mismatch", weak);
        set(Perspective::BusinessRules, "Attribute Mismatch", strong);
        set(Perspective::BusinessRules, "Accessory Mismatch", strong);
    } else if (schema.name == "esci4") {
        set(Perspective::UserIntent, "Irrelevant", strong);
        set(Perspective::StructuredAnalysis, "Substitute", strong);
        set(Perspective::BusinessRules, "Complement", strong);
    }
    return m;
}

inline ordered_json to_json(const PerspectiveErrorMatrix& m) {
    ordered_json j;
    j["attempt_correlation"] = m.attempt_correlation;
    for (auto p : kAllPerspectives) {
        const auto k = static_cast<std::size_t>(p);
        ordered_json pj;
        pj["accuracy"] = m.accuracy[k];
        pj["confusion"] = m.confusion[k];
        j[std::string(to_string(p))] = pj;
    }
    return j;
}

inline PerspectiveErrorMatrix matrix_from_json(const json& j, const RelevanceSchema& schema) {
    auto m = default_matrix(schema);
    try {
        if (j.contains("attempt_correlation")) m.attempt_correlation = j.at("attempt_correlation").get<double>();
        for (auto p : kAllPerspectives) {
            const auto k = static_cast<std::size_t>(p);
            const std::string key(to_string(p));
            if (!j.contains(key)) continue;
            const auto& pj = j.at(key);
            if (pj.contains("accuracy")) m.accuracy[k] = pj.at("accuracy").get<std::vector<double>>();
            if (pj.contains("confusion")) m.confusion[k] = pj.at("confusion").get<std::vector<std::vector<double>>>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed error matrix: ") + e.what());
    }
    m.validate();
    if (m.classes() != schema.size()) throw ConfigError("error matrix width differs from schema size");
    return m;
}

// ----------------------------- rationale templates -----------------------------

namespace detail {

inline std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace detail

/// Names the slot behind a predicted mismatch, e.g. "the title brand X versus
/// requested Y". Empty for schemas other than aliexpress6.
inline std::string verdict_clause(const synth::Slots& q, const synth::Slots& t, int predicted,
                                  const RelevanceSchema& schema) {
    using namespace synth;
    if (schema.name != "aliexpress6") return "";
    const auto or_none = [](const auto& v, auto name) { return v ? std::string(name(*v)) : std::string("none"); };
    const auto brand = [](std::size_t i) { return kBrands[i]; };
    const auto cat = [](std::size_t i) { return kCategories[i].name; };
    switch (predicted) {
        case 0:
            return "every slot agrees with the request";
        case 1:
            return "the title brand " + or_none(t.brand, brand) + " versus requested " + or_none(q.brand, brand);
        case 2:
            return "the title product " + or_none(t.category, cat) + " versus requested " + or_none(q.category, cat);
        case 3:
            return "the title model " + t.model.value_or("none") + " versus requested " + q.model.value_or("none");
        case 4: {
            const auto type = [](const auto& a) { return kAttributeTypes[a.first]; };
            const auto value = [](const auto& a) { return kAttributeValues[a.first][a.second]; };
            return "the title " + or_none(q.attribute, type) + " " + or_none(t.attribute, value) + " versus requested " +
                   or_none(q.attribute, value);
        }
        default:
            return "the title offers a " + or_none(t.accessory, [](std::size_t i) { return kAccessoryWords[i]; }) +
                   " accessory";
    }
}

/// Templated rationale for a simulated attempt. The text states the predicted
/// class name, the slot that drove the verdict, perspective keywords and
/// context words (domain, usage, brand tier, attribute type) that never occur
/// in queries or titles.
inline std::string render_rationale(const LabeledPair& pair, Perspective p, int predicted, const RelevanceSchema& schema) {
    using namespace synth;
    const auto q = parse_slots(pair.query);
    const auto t = parse_slots(pair.title);
    std::string tail = verdict_clause(q, t, predicted, schema);
    tail = (tail.empty() ? "" : " " + tail) + " so " + lrkd::detail::lower(schema.class_name(predicted));
    if (!q.brand || !q.category || !q.attribute) {
        switch (p) {
            case Perspective::UserIntent:
                return "the shopper likely wants " + pair.query + " and the item is " + pair.title + tail;
            case Perspective::StructuredAnalysis:
                return "the title mentions " + pair.title + " compared with " + pair.query + tail;
            case Perspective::BusinessRules:
                return "the rule implies " + pair.query + " versus " + pair.title + tail;
        }
    }
    const auto& cat = kCategories[*q.category];
    const std::string domain(kDomains[static_cast<std::size_t>(cat.domain)]);
    const std::string usage = cat.portable ? "portable" : "stationary";
    const std::string tier(brand_tier(*q.brand));
    const std::string atype(kAttributeTypes[q.attribute->first]);
    const std::string brand(kBrands[*q.brand]);
    const std::string cname(cat.name);
    const std::string aval(kAttributeValues[q.attribute->first][q.attribute->second]);
    switch (p) {
        case Perspective::UserIntent:
            return "the shopper likely wants a " + usage + " " + cname + " from " + brand + " in " + aval + " as " +
                   domain + " with " + tier + " " + atype + tail;
        case Perspective::StructuredAnalysis: {
            std::string tb = t.brand ? std::string(kBrands[*t.brand]) : "";
            std::string tc = t.category ? std::string(kCategories[*t.category].name) : "";
            return "the title mentions " + tb + " " + tc + " " + t.model.value_or("") + " against " + brand + " " +
                   cname + " " + q.model.value_or("") + " for " + domain + " " + usage + " " + tier + " " + atype +
                   tail;
        }
        case Perspective::BusinessRules:
            return "the rule implies " + domain + " " + usage + " listing with " + tier + " " + atype + " for " +
                   cname + (t.accessory ? " as an add on" : "") + tail;
    }
    return tail.substr(1);
}

// ----------------------------- simulation -----------------------------

namespace detail {

inline int sample_wrong(Rng& rng, const std::vector<double>& row) {
    const double u = rng.uniform();
    double acc = 0.0;
    int last = kInvalidLabel;
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (row[j] <= 0.0) continue;
        acc += row[j];
        last = static_cast<int>(j);
        if (u < acc) return last;
    }
    return last;
}

}  // namespace detail

/// `attempts` simulated outputs for one (pair, perspective). Each attempt is
/// correct with probability matrix.acc(perspective, label); wrong labels come
/// from the confusion row. Pure in (pair.id, perspective, seed).
inline std::vector<GenerationRecord> simulate_generation(const LabeledPair& pair, Perspective perspective, int attempts,
                                                         const PerspectiveErrorMatrix& matrix,
                                                         const RelevanceSchema& schema, std::uint64_t seed) {
    if (attempts < 1) {
        throw ConfigError("attempts must be >= 1");
    }
    if (pair.label < 0 || static_cast<std::size_t>(pair.label) >= matrix.classes()) {
        throw SchemaError("pair label outside error matrix");
    }
    Rng rng(derive_seed(derive_seed(seed, pair.id), static_cast<std::uint64_t>(perspective) + 1));
    const double shared = rng.uniform();
    const double p = matrix.acc(perspective, pair.label);
    const auto& row = matrix.confusion[static_cast<std::size_t>(perspective)][static_cast<std::size_t>(pair.label)];
    std::vector<GenerationRecord> out;
    out.reserve(static_cast<std::size_t>(attempts));
    for (int a = 0; a < attempts; ++a) {
        const double u = rng.bernoulli(matrix.attempt_correlation) ? shared : rng.uniform();
        const bool correct = u < p;
        const double wrong_u = rng.uniform();
        int label = pair.label;
        if (!correct) {
            Rng wr(derive_seed(static_cast<std::uint64_t>(wrong_u * 0x1.0p53), 17));
            label = detail::sample_wrong(wr, row);
        }
        GenerationRecord r;
        r.pair_id = pair.id;
        r.perspective = perspective;
        r.attempt = a;
        r.predicted_label = label;
        r.rationale = render_rationale(pair, perspective, label, schema);
        const double ntok = static_cast<double>(split_words(r.rationale).size());
        r.logprob = -ntok * (0.4 + 0.4 * rng.uniform());
        out.push_back(std::move(r));
    }
    return out;
}

/// All perspectives x attempts for a list of pairs, merge-sorted.
inline std::vector<GenerationRecord> simulate_all(const std::vector<LabeledPair>& pairs, int attempts,
                                                  const PerspectiveErrorMatrix& matrix, const RelevanceSchema& schema,
                                                  std::uint64_t seed) {
    std::vector<GenerationRecord> out;
    out.reserve(pairs.size() * 3 * static_cast<std::size_t>(attempts));
    for (const auto& pair : pairs)
        for (auto p : kAllPerspectives) {
            auto recs = simulate_generation(pair, p, attempts, matrix, schema, seed);
            std::move(recs.begin(), recs.end(), std::back_inserter(out));
        }
    std::stable_sort(out.begin(), out.end(), generation_order);
    return out;
}

/// Perspective the unified multi-perspective teacher adopts for a pair. The
/// choice follows the product domain recovered from the query, falling back to
/// a hash of the pair id.
inline Perspective route_perspective(const LabeledPair& pair) {
    const auto q = synth::parse_slots(pair.query);
    if (q.category) {
        switch (synth::kCategories[*q.category].domain) {
            case 0:
            case 1: return Perspective::StructuredAnalysis;
            case 2:
            case 3: return Perspective::UserIntent;
            default: return Perspective::BusinessRules;
        }
    }
    return kAllPerspectives[fnv1a(pair.id) % 3];
}

/// One distillation rationale per pair from the unified teacher: its routed
/// perspective, correct with probability teacher_accuracy.
inline std::vector<GenerationRecord> simulate_teacher_cots(const std::vector<LabeledPair>& pairs,
                                                           const RelevanceSchema& schema, double teacher_accuracy,
                                                           std::uint64_t seed) {
    const auto m = uniform_matrix(schema.size(), teacher_accuracy);
    std::vector<GenerationRecord> out;
    out.reserve(pairs.size());
    for (const auto& pair : pairs) {
        auto recs = simulate_generation(pair, route_perspective(pair), 1, m, schema, derive_seed(seed, "teacher"));
        out.push_back(std::move(recs.front()));
    }
    return out;
}

// ----------------------------- external backend -----------------------------

enum class BackendKind { Simulator, External };

struct GenerationBackend {
    BackendKind kind = BackendKind::Simulator;
    double temperature = 0.7;
    double top_p = 0.99;
    int top_k = 50;
    int attempts = 1;
    Endpoint endpoint;

    void validate() const {
        if (attempts < 1) throw ConfigError("attempts must be >= 1");
    }
};

struct ParsedReply {
    std::string rationale;
    int label = kInvalidLabel;
};

/// Splits a reply whose last non-empty line reads "Final: <class name>".
inline ParsedReply parse_reply(std::string_view text, const RelevanceSchema& schema) {
    ParsedReply out;
    std::string s(text);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    const auto nl = s.find_last_of('\n');
    const std::string last = nl == std::string::npos ? s : s.substr(nl + 1);
    const std::string body = nl == std::string::npos ? "" : s.substr(0, nl);
    std::string low = detail::lower(last);
    const auto b = low.find_first_not_of(" \t");
    if (b != std::string::npos && low.compare(b, 6, "final:") == 0) {
        if (auto idx = schema.find_relaxed(last.substr(b + 6))) {
            out.label = *idx;
            out.rationale = body;
            while (!out.rationale.empty() && std::isspace(static_cast<unsigned char>(out.rationale.back())))
                out.rationale.pop_back();
            return out;
        }
    }
    out.rationale = s;
    return out;
}

/// Asks the external service for backend.attempts completions. Unparseable
/// labels produce records flagged invalid.
inline std::vector<GenerationRecord> external_generate(const LabeledPair& pair, Perspective perspective,
                                                       const GenerationBackend& backend, const RelevanceSchema& schema) {
    backend.validate();
    const std::string prompt = fill_prompt(prompt_template(perspective), pair.query, pair.title, schema);
    std::vector<GenerationRecord> out;
    for (int a = 0; a < backend.attempts; ++a) {
        json req;
        req["prompt"] = prompt;
        req["temperature"] = backend.temperature;
        req["top_p"] = backend.top_p;
        req["top_k"] = backend.top_k;
        const json reply = post_json(backend.endpoint, req);
        if (!reply.contains("text") || !reply["text"].is_string()) {
            throw TransportError("generation reply lacks a 'text' field");
        }
        const auto parsed = parse_reply(reply["text"].get<std::string>(), schema);
        GenerationRecord r;
        r.pair_id = pair.id;
        r.perspective = perspective;
        r.attempt = a;
        r.rationale = parsed.rationale;
        r.predicted_label = parsed.label;
        r.valid = parsed.label != kInvalidLabel;
        if (reply.contains("logprob") && reply["logprob"].is_number()) r.logprob = reply["logprob"].get<double>();
        out.push_back(std::move(r));
    }
    return out;
}

// ----------------------------- io -----------------------------

inline ordered_json to_json(const GenerationRecord& r, const RelevanceSchema& schema) {
    ordered_json j;
    j["pair_id"] = r.pair_id;
    j["perspective"] = std::string(to_string(r.perspective));
    j["attempt"] = r.attempt;
    j["rationale"] = r.rationale;
    j["predicted_label"] = r.predicted_label == kInvalidLabel ? ordered_json(nullptr)
                                                              : ordered_json(schema.class_name(r.predicted_label));
    j["logprob"] = r.logprob ? ordered_json(*r.logprob) : ordered_json(nullptr);
    j["valid"] = r.valid;
    return j;
}

inline GenerationRecord generation_from_json(const json& j, const RelevanceSchema& schema, std::size_t lineno) {
    GenerationRecord r;
    try {
        r.pair_id = j.at("pair_id").get<std::string>();
        r.perspective = perspective_from_string(j.at("perspective").get<std::string>());
        r.attempt = j.at("attempt").get<int>();
        r.rationale = j.at("rationale").get<std::string>();
        const auto& lab = j.at("predicted_label");
        if (lab.is_null()) {
            r.predicted_label = kInvalidLabel;
        } else {
            auto idx = schema.find(lab.get<std::string>());
            if (!idx) throw SchemaError("line " + std::to_string(lineno) + ": unknown label '" + lab.get<std::string>() + "'");
            r.predicted_label = *idx;
        }
        if (auto it = j.find("logprob"); it != j.end() && !it->is_null()) r.logprob = it->get<double>();
        r.valid = j.value("valid", r.predicted_label != kInvalidLabel);
    } catch (const json::exception& e) {
        throw ParseError(lineno, e.what());
    }
    if (r.attempt < 0) throw ParseError(lineno, "attempt must be >= 0");
    return r;
}

inline std::vector<GenerationRecord> load_generations(const std::filesystem::path& path, const RelevanceSchema& schema) {
    auto in = open_input(path);
    std::vector<GenerationRecord> out;
    std::set<std::tuple<std::string, int, int>> seen;
    for_each_jsonl(in, [&](const json& j, std::size_t lineno) {
        auto r = generation_from_json(j, schema, lineno);
        if (!seen.emplace(r.pair_id, static_cast<int>(r.perspective), r.attempt).second) {
            throw IntegrityError("line " + std::to_string(lineno) + ": duplicate attempt for " + r.pair_id);
        }
        out.push_back(std::move(r));
    });
    return out;
}

inline void save_generations(const std::filesystem::path& path, const std::vector<GenerationRecord>& recs,
                             const RelevanceSchema& schema) {
    auto out = open_output(path);
    for (const auto& r : recs) out << to_json(r, schema).dump() << '\n';
}

}  // namespace lrkd
