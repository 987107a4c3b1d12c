#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace lrkd;
using namespace lrkd::testing;

namespace {

TEST(Metrics, MacroF1MatchesHandCount) {
    // gold: 0 0 1 1 2 ; pred: 0 1 1 1 0
    const auto r = compute_metrics({0, 1, 1, 1, 0}, {0, 0, 1, 1, 2}, 3);
    EXPECT_DOUBLE_EQ(r.accuracy, 0.6);
    EXPECT_DOUBLE_EQ(r.per_class[0].f1, 0.5);        // p 1/2, r 1/2
    EXPECT_DOUBLE_EQ(r.per_class[1].f1, 0.8);        // p 2/3, r 1
    EXPECT_DOUBLE_EQ(r.per_class[2].f1, 0.0);
    EXPECT_DOUBLE_EQ(r.macro_f1, 1.3 / 3.0);
    const auto empty = compute_metrics({0, 0}, {0, 0}, 2);
    EXPECT_TRUE(empty.per_class[1].no_support);
    EXPECT_DOUBLE_EQ(empty.macro_f1, 0.5);
    EXPECT_THROW(compute_metrics({0}, {0, 1}, 2), InputError);
    EXPECT_THROW(compute_metrics({0}, {3}, 2), InputError);
}

TEST(OracleReport, HandExample) {
    // Three pairs, gold 0 1 2; two attempts each.
    std::array<std::vector<std::vector<int>>, 3> att;
    att[0] = {{0, 0}, {2, 1}, {0, 0}};  // pass@1 1/3, pass@2 2/3
    att[1] = {{1, 0}, {1, 1}, {1, 1}};  // pass@1 1/3
    att[2] = {{1, 1}, {0, 0}, {2, 2}};  // pass@1 1/3
    const auto r = oracle_report(att, {0, 1, 2}, 2);
    EXPECT_DOUBLE_EQ(r.oracle_acc, 1.0);
    EXPECT_EQ(r.best_perspective, Perspective::UserIntent);  // tie goes to the lowest index
    EXPECT_DOUBLE_EQ(r.best_single_passk, 2.0 / 3.0);
    EXPECT_THROW(oracle_report(att, {0, 1, 2}, 3), InputError);
    EXPECT_THROW(oracle_report(att, {0, 1}, 1), InputError);
    EXPECT_THROW(oracle_report(att, {0, 1, 2}, 0), InputError);
}

TEST(OracleReport, MatchesBruteForceOnSimulation) {
    const auto s = aliexpress6();
    const auto pairs = synth::gen_synthetic_corpus(800, s, 2);
    const auto gens = simulate_all(pairs, 3, default_matrix(s), s, 3);
    const auto att = attempts_by_perspective(pairs, gens);
    const auto r = oracle_report(att, labels_of(pairs), 3);
    std::map<std::tuple<std::string, int, int>, int> pred;
    for (const auto& g : gens) pred[{g.pair_id, static_cast<int>(g.perspective), g.attempt}] = g.predicted_label;
    std::size_t oracle = 0;
    std::array<std::size_t, 3> p1{}, p3{};
    for (const auto& p : pairs) {
        bool any = false;
        for (int k = 0; k < 3; ++k) {
            const bool hit0 = pred[{p.id, k, 0}] == p.label;
            any |= hit0;
            p1[static_cast<std::size_t>(k)] += hit0;
            bool hit = false;
            for (int a = 0; a < 3; ++a) hit |= pred[{p.id, k, a}] == p.label;
            p3[static_cast<std::size_t>(k)] += hit;
        }
        oracle += any;
    }
    const auto best = static_cast<std::size_t>(std::max_element(p1.begin(), p1.end()) - p1.begin());
    EXPECT_DOUBLE_EQ(r.oracle_acc, static_cast<double>(oracle) / 800.0);
    EXPECT_EQ(static_cast<std::size_t>(r.best_perspective), best);
    EXPECT_DOUBLE_EQ(r.best_single_passk, static_cast<double>(p3[best]) / 800.0);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(r.pass1[k], static_cast<double>(p1[k]) / 800.0);
    // With complementary perspectives the oracle beats single-perspective resampling.
    EXPECT_GT(r.oracle_acc, r.best_single_passk + 0.02);
    EXPECT_GT(r.best_single_passk, r.pass1[best] + 0.02);
}

TEST(OracleReport, GroupingRejectsGaps) {
    const auto s = aliexpress6();
    const auto pairs = synth::gen_synthetic_corpus(3, s, 1);
    auto gens = simulate_all(pairs, 3, default_matrix(s), s, 1);
    gens.erase(gens.begin() + 1);  // drops attempt 1 of the first group
    EXPECT_THROW(attempts_by_perspective(pairs, gens), IntegrityError);
}

TEST(Heatmap, CellsAndNoSupport) {
    const auto s = aliexpress6();
    std::vector<LabeledPair> pairs{{"a", "q", "t", 0, "en", std::nullopt}, {"b", "q", "t", 0, "en", std::nullopt},
                                   {"c", "q", "t", 2, "en", std::nullopt}};
    std::vector<GenerationRecord> gens;
    auto add = [&](const char* id, Perspective p, int label) {
        GenerationRecord g;
        g.pair_id = id;
        g.perspective = p;
        g.rationale = "r";
        g.predicted_label = label;
        g.valid = true;
        gens.push_back(g);
    };
    for (auto p : kAllPerspectives) {
        add("a", p, 0);
        add("b", p, p == Perspective::UserIntent ? 1 : 0);
        add("c", p, 2);
    }
    const auto g = perspective_heatmap(pairs, gens, s);
    EXPECT_DOUBLE_EQ(g.acc[0][0], 0.5);
    EXPECT_DOUBLE_EQ(g.acc[1][0], 1.0);
    EXPECT_DOUBLE_EQ(g.acc[2][2], 1.0);
    EXPECT_TRUE(std::isnan(g.acc[0][1]));
    EXPECT_EQ(g.support[0], 2u);
    const auto csv = heatmap_csv(g);
    EXPECT_NE(csv.find("user_intent,0.5000,NA,1.0000"), std::string::npos) << csv;
    const auto svg = heatmap_svg(g);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_EQ(svg, heatmap_svg(g));
}

TEST(Heatmap, SimulatedDiagonalFollowsMatrix) {
    const auto s = aliexpress6();
    const auto pairs = synth::gen_synthetic_corpus(6000, s, 9);
    const auto m = default_matrix(s);
    const auto g = perspective_heatmap(pairs, simulate_all(pairs, 1, m, s, 2), s);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(g.acc[k][c], m.accuracy[k][c], 0.05);
}

TEST(PairedTTest, ReferenceValues) {
    EXPECT_NEAR(paired_t_test({1, 2, 3, 4}, {0, 0, 0, 0}), 0.030466291662170977, 1e-10);
    EXPECT_NEAR(paired_t_test({0.4, 0.5, 0.45, 0.6, 0.52}, {0.2, 0.3, 0.35, 0.25, 0.22}), 0.006184543373572058, 1e-10);
    EXPECT_DOUBLE_EQ(paired_t_test({1, 2}, {1, 2}), 1.0);
    EXPECT_DOUBLE_EQ(paired_t_test({2, 3}, {1, 2}), 0.0);
    EXPECT_THROW(paired_t_test({1}, {1}), InputError);
}

TEST(Probe, VocabularyExcludesInputWordsAndStopwords) {
    std::vector<LabeledPair> pairs;
    std::vector<std::string> cots;
    for (int i = 0; i < 100; ++i) {
        pairs.push_back({"p" + std::to_string(i), "red lamp", "lamp shade " + std::to_string(i), 0, "en", std::nullopt});
        cots.push_back(std::string("the lamp implies ") + (i % 2 ? "bright" : "dim") + (i % 5 == 0 ? " cosy" : ""));
    }
    const auto v = probe_vocabulary(pairs, cots, 10, 0.01);
    std::vector<std::string> words;
    for (const auto& [w, n] : v) words.push_back(w);
    EXPECT_EQ(words, (std::vector<std::string>{"implies", "bright", "dim", "cosy"}));
    EXPECT_EQ(v[0].second, 100u);
}

TEST(Probe, LinearlyEncodedKeywordsFavourThatRepresentation) {
    Rng rng(4);
    const std::vector<std::string> kws{"alpha", "beta", "gamma", "delta"};
    const std::size_t n = 400;
    std::vector<LabeledPair> pairs;
    std::vector<std::string> cots;
    Mat latent(static_cast<Eigen::Index>(n), 6), cls(static_cast<Eigen::Index>(n), 6);
    for (std::size_t i = 0; i < n; ++i) {
        pairs.push_back({"p" + std::to_string(i), "q", "t", 0, "en", std::nullopt});
        std::string c = "base";
        for (std::size_t k = 0; k < kws.size(); ++k) {
            const bool on = rng.bernoulli(0.4);
            if (on) c += " " + kws[k];
            latent(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (on ? 1.0 : -1.0) + rng.normal(0.0, 0.3);
        }
        for (Eigen::Index k = 4; k < 6; ++k) latent(static_cast<Eigen::Index>(i), k) = rng.normal();
        for (Eigen::Index k = 0; k < 6; ++k) cls(static_cast<Eigen::Index>(i), k) = rng.normal();
        cots.push_back(c);
    }
    // "base" occurs everywhere: it ranks first and neither side can beat the other on it.
    const auto st = probe_study(pairs, cots, latent, cls, 5, 10, 1);
    ASSERT_EQ(st.keywords.size(), 5u);
    EXPECT_EQ(st.keywords[0].keyword, "base");
    EXPECT_DOUBLE_EQ(st.keywords[0].f1_latent, st.keywords[0].f1_cls);
    EXPECT_EQ(st.latent_wins, 4u);
    EXPECT_LT(st.p_value, 1e-6);
    for (std::size_t k = 1; k < 5; ++k) {
        EXPECT_GT(st.keywords[k].f1_latent, 0.9);
        EXPECT_EQ(st.keywords[k].runs_latent.size(), 10u);
    }
    EXPECT_TRUE(st.warnings.empty());
    const auto st6 = probe_study(pairs, cots, latent, cls, 6, 10, 1);
    EXPECT_EQ(st6.warnings.size(), 1u);
    const auto again = probe_study(pairs, cots, latent, cls, 5, 10, 1);
    EXPECT_EQ(again.mean_latent, st.mean_latent);
    EXPECT_THROW(probe_study(pairs, cots, latent, cls, 4, 1, 1), ConfigError);
    EXPECT_NE(probe_csv(st).find("alpha"), std::string::npos);
    EXPECT_NE(probe_svg(st).find("</svg>"), std::string::npos);
}

TEST(EfficiencyAudit, CountsAndTiming) {
    RunConfig cfg;
    cfg.encoder.layers = 1;
    cfg.encoder.d = 16;
    cfg.encoder.heads = 2;
    cfg.encoder.ffn_dim = 16;
    cfg.encoder.vocab_buckets = 64;
    cfg.encoder.max_len = 16;
    cfg.extractor.hidden_dim = 8;
    cfg.extractor.output_dim = 8;
    const auto rows = token_rows(synth::gen_synthetic_corpus(5, cfg.schema, 1), cfg.encoder);
    const auto full = make_student(cfg, Variant::Full, 1);
    const auto base = make_student(cfg, Variant::ClsOnly, 1);
    const auto a = efficiency_audit(full, rows, 10, 1);
    const auto b = efficiency_audit(base, rows, 10, 1);
    EXPECT_EQ(a.param_delta_vs_baseline, extractor_param_count(cfg.extractor, cfg.encoder.d));
    EXPECT_EQ(a.param_count, b.param_count + a.param_delta_vs_baseline + a.head_delta);
    EXPECT_EQ(a.head_delta, 8u * 6u);
    EXPECT_EQ(b.param_delta_vs_baseline, 0u);
    EXPECT_GT(a.mean_latency_ms, 0.0);
    EXPECT_EQ(a.timed_passes, 10);
    EXPECT_THROW(efficiency_audit(full, rows, 9), ConfigError);
}

}  // namespace
