// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// Perspective analyses (oracle / pass@k, per-class accuracy grid), keyword
// probing of frozen representations, and the parameter/latency audit.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <boost/math/distributions/students_t.hpp>

#include "lrkd/mpcot.hpp"
#include "lrkd/student.hpp"

namespace lrkd {

// ----------------------------- oracle / pass@k -----------------------------

struct OracleReport {
    double oracle_acc = 0.0;
    std::array<double, 3> pass1{};
    Perspective best_perspective = Perspective::UserIntent;
    double best_single_passk = 0.0;
    int k = 3;
    std::size_t pairs = 0;
};

/// attempts[p][i] lists perspective p's predicted labels for pair i in attempt
/// order. The oracle counts a pair solved when attempt 0 of any perspective is
/// correct; pass@k uses the first k attempts of the best pass@1 perspective
/// (lowest index on ties).
inline OracleReport oracle_report(const std::array<std::vector<std::vector<int>>, 3>& attempts,
                                  const std::vector<int>& labels, int k) {
    if (k < 1) throw InputError("budget k must be >= 1");
    const std::size_t n = labels.size();
    OracleReport r;
    r.k = k;
    r.pairs = n;
    for (const auto& per : attempts) {
        if (per.size() != n) throw InputError("attempt lists do not cover every pair");
        for (const auto& a : per)
            if (static_cast<int>(a.size()) < k) throw InputError("fewer than k attempts for a pair");
    }
    if (n == 0) return r;
    std::size_t oracle = 0;
    std::array<std::size_t, 3> p1{};
    for (std::size_t i = 0; i < n; ++i) {
        bool any = false;
        for (std::size_t p = 0; p < 3; ++p) {
            if (attempts[p][i][0] == labels[i]) {
                ++p1[p];
                any = true;
            }
        }
        if (any) ++oracle;
    }
    const double dn = static_cast<double>(n);
    r.oracle_acc = static_cast<double>(oracle) / dn;
    std::size_t best = 0;
    for (std::size_t p = 0; p < 3; ++p) {
        r.pass1[p] = static_cast<double>(p1[p]) / dn;
        if (p1[p] > p1[best]) best = p;
    }
    r.best_perspective = kAllPerspectives[best];
    std::size_t solved = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = attempts[best][i];
        if (std::find(a.begin(), a.begin() + k, labels[i]) != a.begin() + k) ++solved;
    }
    r.best_single_passk = static_cast<double>(solved) / dn;
    return r;
}

/// Groups generation records into the attempt lists oracle_report expects.
/// Invalid records count as wrong predictions.
inline std::array<std::vector<std::vector<int>>, 3> attempts_by_perspective(const std::vector<LabeledPair>& pairs,
                                                                           const std::vector<GenerationRecord>& gens) {
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < pairs.size(); ++i) idx.emplace(pairs[i].id, i);
    std::array<std::vector<std::vector<int>>, 3> out;
    for (auto& v : out) v.assign(pairs.size(), {});
    auto sorted = gens;
    std::stable_sort(sorted.begin(), sorted.end(), generation_order);
    for (const auto& g : sorted) {
        auto it = idx.find(g.pair_id);
        if (it == idx.end()) throw IntegrityError("generation refers to unknown pair '" + g.pair_id + "'");
        auto& slot = out[static_cast<std::size_t>(g.perspective)][it->second];
        if (static_cast<int>(slot.size()) != g.attempt) throw IntegrityError("attempt indices are not contiguous for " + g.pair_id);
        slot.push_back(g.valid ? g.predicted_label : kInvalidLabel);
    }
    return out;
}

inline ordered_json to_json(const OracleReport& r) {
    ordered_json j;
    j["pairs"] = r.pairs;
    j["oracle_acc"] = r.oracle_acc;
    ordered_json p1;
    for (auto p : kAllPerspectives) p1[std::string(to_string(p))] = r.pass1[static_cast<std::size_t>(p)];
    j["per_perspective_pass1"] = p1;
    j["best_perspective"] = std::string(to_string(r.best_perspective));
    j["k"] = r.k;
    j["best_single_passk"] = r.best_single_passk;
    return j;
}

// ----------------------------- heatmap -----------------------------

struct HeatmapGrid {
    std::vector<std::string> classes;
    /// acc[p][c]; NaN where the class has no support.
    std::array<std::vector<double>, 3> acc;
    std::vector<std::size_t> support;
};

/// Attempt-0 accuracy per (perspective, gold class).
inline HeatmapGrid perspective_heatmap(const std::vector<LabeledPair>& pairs, const std::vector<GenerationRecord>& gens,
                                       const RelevanceSchema& schema) {
    const std::size_t c = schema.size();
    std::unordered_map<std::string, int> gold;
    for (const auto& p : pairs) gold.emplace(p.id, p.label);
    HeatmapGrid g;
    g.classes = schema.classes;
    g.support.assign(c, 0);
    for (const auto& p : pairs) ++g.support[static_cast<std::size_t>(p.label)];
    std::array<std::vector<std::size_t>, 3> hit, tot;
    for (std::size_t k = 0; k < 3; ++k) {
        hit[k].assign(c, 0);
        tot[k].assign(c, 0);
    }
    for (const auto& r : gens) {
        if (r.attempt != 0) continue;
        auto it = gold.find(r.pair_id);
        if (it == gold.end()) throw IntegrityError("generation refers to unknown pair '" + r.pair_id + "'");
        const auto k = static_cast<std::size_t>(r.perspective);
        const auto y = static_cast<std::size_t>(it->second);
        ++tot[k][y];
        if (r.valid && r.predicted_label == it->second) ++hit[k][y];
    }
    for (std::size_t k = 0; k < 3; ++k) {
        g.acc[k].assign(c, std::numeric_limits<double>::quiet_NaN());
        for (std::size_t y = 0; y < c; ++y)
            if (tot[k][y]) g.acc[k][y] = static_cast<double>(hit[k][y]) / static_cast<double>(tot[k][y]);
    }
    return g;
}

inline std::string heatmap_csv(const HeatmapGrid& g) {
    std::ostringstream os;
    os << "perspective";
    for (const auto& c : g.classes) os << ',' << '"' << c << '"';
    os << '\n';
    for (auto p : kAllPerspectives) {
        os << to_string(p);
        for (double v : g.acc[static_cast<std::size_t>(p)]) {
            os << ',';
            if (std::isnan(v)) os << "NA";
            else os << std::fixed << std::setprecision(4) << v;
        }
        os << '\n';
    }
    return os.str();
}

namespace detail {

inline std::string svg_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

/// White (0) to dark blue (1).
inline std::string blue_scale(double v) {
    const double t = std::clamp(v, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(247 - t * (247 - 8)));
    const int g = static_cast<int>(std::lround(251 - t * (251 - 48)));
    const int b = static_cast<int>(std::lround(255 - t * (255 - 107)));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace detail

inline std::string heatmap_svg(const HeatmapGrid& g) {
    const int cw = 120, ch = 44, left = 170, top = 40;
    const int w = left + cw * static_cast<int>(g.classes.size()) + 20;
    const int h = top + ch * 3 + 20;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    for (std::size_t c = 0; c < g.classes.size(); ++c) {
        os << "<text x=\"" << left + cw * static_cast<int>(c) + cw / 2 << "\" y=\"" << top - 10
           << "\" text-anchor=\"middle\">" << detail::svg_escape(g.classes[c]) << "</text>\n";
    }
    for (auto p : kAllPerspectives) {
        const int row = static_cast<int>(p);
        os << "<text x=\"" << left - 8 << "\" y=\"" << top + ch * row + ch / 2 + 4 << "\" text-anchor=\"end\">"
           << to_string(p) << "</text>\n";
        for (std::size_t c = 0; c < g.classes.size(); ++c) {
            const double v = g.acc[static_cast<std::size_t>(row)][c];
            const int x = left + cw * static_cast<int>(c), y = top + ch * row;
            os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw << "\" height=\"" << ch << "\" fill=\""
               << (std::isnan(v) ? std::string("#dddddd") : detail::blue_scale(v)) << "\" stroke=\"#ffffff\"/>\n";
            std::ostringstream label;
            if (std::isnan(v)) label << "n/a";
            else label << std::fixed << std::setprecision(3) << v;
            os << "<text x=\"" << x + cw / 2 << "\" y=\"" << y + ch / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
               << (!std::isnan(v) && v > 0.6 ? "#ffffff" : "#000000") << "\">" << label.str() << "</text>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

// ----------------------------- probing -----------------------------

/// Fifty common English function words. Reasoning markers such as "mentions",
/// "implies" and "likely" are deliberately absent.
inline const std::set<std::string>& probe_stopwords() {
    static const std::set<std::string> words{
        "a",     "an",   "the",  "and",  "or",    "but",  "if",    "then", "so",   "of",
        "to",    "in",   "on",   "at",   "by",    "for",  "with",  "from", "as",   "into",
        "is",    "are",  "was",  "were", "be",    "been", "being", "it",   "its",  "this",
        "that",  "these", "those", "there", "here", "not", "no",   "do",   "does", "did",
        "has",   "have", "had",  "will", "would", "can",  "could", "which", "what", "than"};
    return words;
}

struct ProbeResult {
    std::string keyword;
    double f1_latent = 0.0;
    double f1_cls = 0.0;
    double p_value = 1.0;
    double frequency = 0.0;
    std::vector<double> runs_latent;
    std::vector<double> runs_cls;
};

struct ProbeStudy {
    std::vector<ProbeResult> keywords;
    /// Per-run mean F1 over keywords.
    std::vector<double> mean_latent;
    std::vector<double> mean_cls;
    double p_value = 1.0;
    std::size_t latent_wins = 0;
    std::vector<std::string> warnings;
};

/// Two-sided paired t-test. Identical samples give p = 1; a constant non-zero
/// difference gives p = 0.
inline double paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw InputError("paired t-test needs two equal samples of size >= 2");
    const double n = static_cast<double>(a.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
    mean /= n;
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd == 0.0) return mean == 0.0 ? 1.0 : 0.0;
    const double t = mean / (sd / std::sqrt(n));
    boost::math::students_t dist(n - 1.0);
    return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

struct ProbeOptions {
    double train_fraction = 0.8;
    double l2 = 1e-2;
    int newton_iters = 12;
    /// Tokens with at least this document frequency over query/title texts
    /// are excluded from the vocabulary.
    double input_df_cutoff = 0.01;
};

/// Keyword vocabulary: the top_n most frequent (by document frequency)
/// non-stopword rationale tokens that are rare in query/title texts. Ties are
/// broken alphabetically.
inline std::vector<std::pair<std::string, std::size_t>> probe_vocabulary(const std::vector<LabeledPair>& pairs,
                                                                         const std::vector<std::string>& cots,
                                                                         std::size_t top_n, double df_cutoff) {
    std::unordered_map<std::string, std::size_t> input_df;
    for (const auto& p : pairs) {
        for (const auto* text : {&p.query, &p.title}) {
            auto w = split_words(*text);
            std::unordered_set<std::string> uniq(w.begin(), w.end());
            for (const auto& t : uniq) ++input_df[t];
        }
    }
    const double docs = 2.0 * static_cast<double>(pairs.size());
    std::map<std::string, std::size_t> cot_df;
    for (const auto& c : cots) {
        auto w = split_words(c);
        std::set<std::string> uniq(w.begin(), w.end());
        for (const auto& t : uniq) ++cot_df[t];
    }
    std::vector<std::pair<std::string, std::size_t>> cands;
    for (const auto& [tok, n] : cot_df) {
        if (probe_stopwords().count(tok)) continue;
        auto it = input_df.find(tok);
        if (it != input_df.end() && static_cast<double>(it->second) >= df_cutoff * docs) continue;
        cands.emplace_back(tok, n);
    }
    std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (cands.size() > top_n) cands.resize(top_n);
    return cands;
}

namespace detail {

/// Balanced-weight L2 logistic regression fitted by Newton's method on
/// standardized features. Returns test-set F1 of the positive class.
inline double probe_f1(const Mat& X, const std::vector<int>& y, const std::vector<std::size_t>& train,
                       const std::vector<std::size_t>& test, const ProbeOptions& opt) {
    const Eigen::Index d = X.cols();
    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(d), sd = Eigen::RowVectorXd::Zero(d);
    for (auto i : train) mu += X.row(static_cast<Eigen::Index>(i));
    mu /= static_cast<double>(train.size());
    for (auto i : train) sd += (X.row(static_cast<Eigen::Index>(i)) - mu).array().square().matrix();
    sd = (sd / static_cast<double>(train.size())).array().sqrt().max(1e-12).matrix();
    auto features = [&](const std::vector<std::size_t>& idx) {
        Eigen::MatrixXd F(static_cast<Eigen::Index>(idx.size()), d + 1);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            F.row(static_cast<Eigen::Index>(r)).head(d) =
                (X.row(static_cast<Eigen::Index>(idx[r])) - mu).array() / sd.array();
            F(static_cast<Eigen::Index>(r), d) = 1.0;
        }
        return F;
    };
    const Eigen::MatrixXd F = features(train);
    std::size_t pos = 0;
    for (auto i : train) pos += y[i] ? 1 : 0;
    const double n = static_cast<double>(train.size());
    auto predict_all_pos = [&] {
        // Degenerate target: predict the only class seen in training.
        std::size_t tp = 0, fp = 0, fn = 0;
        const bool guess = pos > 0;
        for (auto i : test) {
            if (guess && y[i]) ++tp;
            else if (guess && !y[i]) ++fp;
            else if (!guess && y[i]) ++fn;
        }
        return tp ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;
    };
    if (pos == 0 || pos == train.size()) return predict_all_pos();
    const double w_pos = n / (2.0 * static_cast<double>(pos));
    const double w_neg = n / (2.0 * static_cast<double>(train.size() - pos));
    Eigen::VectorXd target(F.rows()), weight(F.rows());
    for (std::size_t r = 0; r < train.size(); ++r) {
        target(static_cast<Eigen::Index>(r)) = y[train[r]] ? 1.0 : 0.0;
        weight(static_cast<Eigen::Index>(r)) = y[train[r]] ? w_pos : w_neg;
    }
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
    Eigen::VectorXd reg = Eigen::VectorXd::Constant(d + 1, opt.l2 * n);
    reg(d) = 0.0;
    for (int it = 0; it < opt.newton_iters; ++it) {
        const Eigen::VectorXd z = F * w;
        const Eigen::VectorXd p = (1.0 / (1.0 + (-z.array()).exp())).matrix();
        const Eigen::VectorXd grad = F.transpose() * (weight.array() * (p - target).array()).matrix() + reg.cwiseProduct(w);
        const Eigen::VectorXd curv = (weight.array() * p.array() * (1.0 - p.array())).matrix();
        Eigen::MatrixXd Hs = F.transpose() * curv.asDiagonal() * F;
        Hs.diagonal() += reg + Eigen::VectorXd::Constant(d + 1, 1e-9);
        const Eigen::VectorXd step = Hs.ldlt().solve(grad);
        w -= step;
        if (step.norm() < 1e-10) break;
    }
    const Eigen::MatrixXd T = features(test);
    const Eigen::VectorXd zt = T * w;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t r = 0; r < test.size(); ++r) {
        const bool pred = zt(static_cast<Eigen::Index>(r)) > 0.0;
        const bool gold = y[test[r]] != 0;
        if (pred && gold) ++tp;
        else if (pred) ++fp;
        else if (gold) ++fn;
    }
    return tp ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;
}

}  // namespace detail

/// Probes frozen latent and [CLS] vectors for the presence of rationale
/// keywords. Each run re-splits the pairs with a derived seed; both
/// representations share the split.
inline ProbeStudy probe_study(const std::vector<LabeledPair>& pairs, const std::vector<std::string>& cots,
                              const Mat& latent, const Mat& cls, std::size_t top_n, int runs, std::uint64_t seed,
                              const ProbeOptions& opt = {}) {
    const std::size_t n = pairs.size();
    if (top_n < 1) throw ConfigError("top_n must be >= 1");
    if (runs < 2) throw ConfigError("probe needs at least 2 runs");
    if (cots.size() != n || static_cast<std::size_t>(latent.rows()) != n || static_cast<std::size_t>(cls.rows()) != n) {
        throw InputError("probe inputs differ in length");
    }
    if (n < 10) throw InputError("probe needs at least 10 pairs");
    ProbeStudy st;
    const auto vocab = probe_vocabulary(pairs, cots, top_n, opt.input_df_cutoff);
    if (vocab.size() < top_n) {
        st.warnings.push_back("only " + std::to_string(vocab.size()) + " keywords survive filtering (requested " +
                              std::to_string(top_n) + ")");
    }
    std::vector<std::set<std::string>> bags(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto w = split_words(cots[i]);
        bags[i] = std::set<std::string>(w.begin(), w.end());
    }
    std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> splits;
    for (int r = 0; r < runs; ++r) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(seed, "probe-run" + std::to_string(r)));
        rng.shuffle(order);
        const auto ntr = static_cast<std::size_t>(std::llround(static_cast<double>(n) * opt.train_fraction));
        splits.emplace_back(std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(ntr)),
                            std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(ntr), order.end()));
    }
    st.mean_latent.assign(static_cast<std::size_t>(runs), 0.0);
    st.mean_cls.assign(static_cast<std::size_t>(runs), 0.0);
    for (const auto& [kw, df] : vocab) {
        ProbeResult pr;
        pr.keyword = kw;
        pr.frequency = static_cast<double>(df) / static_cast<double>(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = bags[i].count(kw) ? 1 : 0;
        for (int r = 0; r < runs; ++r) {
            const auto& [tr, te] = splits[static_cast<std::size_t>(r)];
            pr.runs_latent.push_back(detail::probe_f1(latent, y, tr, te, opt));
            pr.runs_cls.push_back(detail::probe_f1(cls, y, tr, te, opt));
            st.mean_latent[static_cast<std::size_t>(r)] += pr.runs_latent.back() / static_cast<double>(vocab.size());
            st.mean_cls[static_cast<std::size_t>(r)] += pr.runs_cls.back() / static_cast<double>(vocab.size());
        }
        for (double v : pr.runs_latent) pr.f1_latent += v / runs;
        for (double v : pr.runs_cls) pr.f1_cls += v / runs;
        pr.p_value = paired_t_test(pr.runs_latent, pr.runs_cls);
        if (pr.f1_latent > pr.f1_cls) ++st.latent_wins;
        st.keywords.push_back(std::move(pr));
    }
    if (!vocab.empty()) st.p_value = paired_t_test(st.mean_latent, st.mean_cls);
    return st;
}

inline ordered_json to_json(const ProbeStudy& s) {
    ordered_json j;
    ordered_json kws = ordered_json::array();
    for (const auto& k : s.keywords) {
        kws.push_back({{"keyword", k.keyword},
                       {"frequency", k.frequency},
                       {"f1_latent", k.f1_latent},
                       {"f1_cls", k.f1_cls},
                       {"p_value", k.p_value}});
    }
    j["keywords"] = kws;
    j["latent_wins"] = s.latent_wins;
    j["mean_latent_per_run"] = s.mean_latent;
    j["mean_cls_per_run"] = s.mean_cls;
    j["p_value"] = s.p_value;
    j["warnings"] = s.warnings;
    return j;
}

inline std::string probe_csv(const ProbeStudy& s) {
    std::ostringstream os;
    os << "keyword,frequency,f1_latent,f1_cls,p_value\n";
    os << std::setprecision(6);
    for (const auto& k : s.keywords)
        os << k.keyword << ',' << k.frequency << ',' << k.f1_latent << ',' << k.f1_cls << ',' << k.p_value << '\n';
    return os.str();
}

/// Grouped bar chart of per-keyword F1 for both representations.
inline std::string probe_svg(const ProbeStudy& s) {
    const int bw = 14, gap = 14, left = 50, top = 20, ph = 220;
    const int groups = static_cast<int>(s.keywords.size());
    const int w = left + groups * (2 * bw + gap) + 20;
    const int h = top + ph + 110;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << w - 10 << "\" y2=\"" << top + ph
       << "\" stroke=\"#000\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const int y = top + ph - t * ph / 4;
        os << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << std::fixed
           << std::setprecision(2) << t * 0.25 << "</text>\n";
    }
    for (int g = 0; g < groups; ++g) {
        const auto& k = s.keywords[static_cast<std::size_t>(g)];
        const int x = left + g * (2 * bw + gap) + gap / 2;
        const int hl = static_cast<int>(std::lround(k.f1_latent * ph));
        const int hc = static_cast<int>(std::lround(k.f1_cls * ph));
        os << "<rect x=\"" << x << "\" y=\"" << top + ph - hl << "\" width=\"" << bw << "\" height=\"" << hl
           << "\" fill=\"#2b6cb0\"/>\n";
        os << "<rect x=\"" << x + bw << "\" y=\"" << top + ph - hc << "\" width=\"" << bw << "\" height=\"" << hc
           << "\" fill=\"#c05621\"/>\n";
        os << "<text transform=\"translate(" << x + bw << "," << top + ph + 10 << ") rotate(60)\">"
           << detail::svg_escape(k.keyword) << "</text>\n";
    }
    os << "<rect x=\"" << left << "\" y=\"" << h - 18 << "\" width=\"10\" height=\"10\" fill=\"#2b6cb0\"/>"
       << "<text x=\"" << left + 14 << "\" y=\"" << h - 9 << "\">latent</text>\n";
    os << "<rect x=\"" << left + 70 << "\" y=\"" << h - 18 << "\" width=\"10\" height=\"10\" fill=\"#c05621\"/>"
       << "<text x=\"" << left + 84 << "\" y=\"" << h - 9 << "\">cls</text>\n";
    os << "</svg>\n";
    return os.str();
}

// ----------------------------- efficiency audit -----------------------------

struct EfficiencyAudit {
    std::size_t param_count = 0;
    /// Scalars in extractor tensors; zero without an extractor.
    std::size_t param_delta_vs_baseline = 0;
    /// Extra head weights from widening its input; reported separately.
    std::size_t head_delta = 0;
    double mean_latency_ms = 0.0;
    int timed_passes = 0;
};

inline EfficiencyAudit efficiency_audit(const StudentModel& m, const std::vector<TokenRow>& batch, int passes = 10,
                                        int warmups = 3) {
    if (passes < 10) throw ConfigError("latency needs at least 10 timed passes");
    EfficiencyAudit a;
    a.param_count = m.ps.count();
    a.param_delta_vs_baseline = m.ps.count("ext.");
    a.head_delta = static_cast<std::size_t>(m.head_in() - m.cfg.encoder.d) * static_cast<std::size_t>(m.classes());
    for (int i = 0; i < warmups; ++i) (void)predict_proba(m, batch);
    double total = 0.0;
    for (int i = 0; i < passes; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)predict_proba(m, batch);
        total += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    a.mean_latency_ms = total / passes;
    a.timed_passes = passes;
    return a;
}

/// Closed-form extractor delta for a given encoder width, without building a model.
inline std::size_t audit_extractor_delta(ExtractorConfig c, int d) { return extractor_param_count(c, d); }

inline ordered_json to_json(const EfficiencyAudit& a) {
    ordered_json j;
    j["param_count"] = a.param_count;
    j["param_delta_vs_baseline"] = a.param_delta_vs_baseline;
    j["head_delta"] = a.head_delta;
    j["mean_latency_ms"] = a.mean_latency_ms;
    j["timed_passes"] = a.timed_passes;
    return j;
}

}  // namespace lrkd
