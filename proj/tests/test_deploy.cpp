#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace lrkd;
using namespace lrkd::testing;

namespace {

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.encoder.layers = 1;
    cfg.encoder.d = 8;
    cfg.encoder.heads = 2;
    cfg.encoder.ffn_dim = 8;
    cfg.encoder.vocab_buckets = 128;
    cfg.encoder.max_len = 24;
    cfg.extractor.hidden_dim = 8;
    cfg.extractor.output_dim = 8;
    return cfg;
}

TEST(RelevanceScore, ExpectedTier) {
    const auto s = aliexpress6();  // tiers 4 1 0 1 2 1
    EXPECT_DOUBLE_EQ(relevance_score({1, 0, 0, 0, 0, 0}, s), 4.0);
    EXPECT_DOUBLE_EQ(relevance_score({0.5, 0, 0.5, 0, 0, 0}, s), 2.0);
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> p(6);
        double z = 0;
        for (auto& v : p) z += (v = rng.uniform());
        double hand = 0;
        for (std::size_t c = 0; c < 6; ++c) hand += (p[c] /= z) * s.default_tiers[c];
        EXPECT_NEAR(relevance_score(p, s), hand, 1e-12);
    }
    EXPECT_THROW(relevance_score({0.5, 0.4, 0, 0, 0, 0}, s), InputError);
    EXPECT_THROW(relevance_score({1.0, 0}, s), InputError);
    EXPECT_THROW(relevance_score({1.5, -0.5, 0, 0, 0, 0}, s), InputError);
}

TEST(ScoreToTier, InclusiveThresholds) {
    TierCalibration c;
    c.thresholds = {1.0, 2.0, 3.0, 3.5};
    EXPECT_EQ(score_to_tier(0.5, c), 0);
    EXPECT_EQ(score_to_tier(2.0, c), 2);
    EXPECT_EQ(score_to_tier(3.2, c), 3);
    EXPECT_EQ(score_to_tier(100.0, c), 4);
    EXPECT_EQ(score_to_tier(-std::numeric_limits<double>::infinity(), c), 0);
}

TEST(ScoreToTier, MonotoneOverSweep) {
    TierCalibration c;
    c.thresholds = {0.7, 1.4, 1.4, 3.1};
    int prev = -1;
    for (int i = 0; i <= 10000; ++i) {
        const int t = score_to_tier(4.0 * i / 10000.0, c);
        ASSERT_GE(t, prev);
        prev = t;
    }
    EXPECT_EQ(prev, 4);
}

TEST(Calibration, JsonAndValidation) {
    const auto dir = scratch_dir("cal");
    TierCalibration c;
    c.thresholds = {0.5, 1.5, 2.5, 3.5};
    c.filter_below_tier = 3;
    std::ofstream(dir / "c.json") << to_json(c).dump();
    const auto back = load_calibration(dir / "c.json");
    EXPECT_EQ(back.thresholds, c.thresholds);
    EXPECT_EQ(back.filter_below_tier, 3);
    EXPECT_THROW(calibration_from_json(json::parse(R"({"thresholds":[1,2,3]})")), ConfigError);
    EXPECT_THROW(calibration_from_json(json::parse(R"({"thresholds":[1,3,2,4]})")), ConfigError);
    EXPECT_THROW(calibration_from_json(json::parse(R"({"thresholds":[1,2,3,4],"filter_below_tier":5})")), ConfigError);
    EXPECT_THROW(calibration_from_json(json::parse(R"({"thresholds":"x"})")), ConfigError);
    std::ofstream(dir / "bad.json") << "{";
    EXPECT_THROW(load_calibration(dir / "bad.json"), ParseError);
}

std::vector<LabeledPair> ids(std::size_t n) {
    std::vector<LabeledPair> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({"p" + std::to_string(i), "q", "t", 0, "en", std::nullopt});
    return out;
}

TEST(Filter, CutoffsAndIdempotence) {
    const auto pairs = ids(200);
    Rng rng(5);
    std::vector<double> scores(200);
    for (auto& s : scores) s = 4.0 * rng.uniform();
    TierCalibration c;
    c.filter_below_tier = 0;
    EXPECT_EQ(filter_scored(pairs, scores, c).kept.size(), 200u);
    c.filter_below_tier = 2;
    EXPECT_EQ(filter_scored(pairs, std::vector<double>(200, 4.0), c).kept.size(), 200u);

    const auto r = filter_scored(pairs, scores, c);
    // Brute-force refilter of the audit records.
    std::vector<std::string> expect;
    for (const auto& a : r.audit) {
        int tier = 0;
        for (double th : c.thresholds) tier += th <= a.score;
        EXPECT_EQ(tier, a.tier);
        if (tier >= 2) expect.push_back(a.id);
    }
    std::vector<std::string> got;
    std::vector<double> kept_scores;
    for (const auto& p : r.kept) got.push_back(p.id);
    for (const auto& a : r.audit)
        if (a.kept) kept_scores.push_back(a.score);
    EXPECT_EQ(got, expect);
    const auto again = filter_scored(r.kept, kept_scores, c);
    EXPECT_EQ(again.kept, r.kept);
    EXPECT_THROW(filter_scored(pairs, {1.0}, c), InputError);
}

TEST(Filter, ModelBatchAndAudit) {
    const auto cfg = tiny_config();
    const auto m = make_student(cfg, Variant::Full, 2);
    const auto pairs = synth::gen_synthetic_corpus(60, cfg.schema, 4);
    TierCalibration c;
    const auto scores = model_scores(m, pairs);
    c.thresholds = {0.5, 1.0, *std::min_element(scores.begin(), scores.end()) + 1e-9, 3.0};
    const auto r = filter_batch(pairs, m, c, cfg.schema);
    ASSERT_EQ(r.audit.size(), 60u);
    const auto dir = scratch_dir("audit");
    save_audit(dir / "audit.jsonl", r.audit);
    std::ifstream in(dir / "audit.jsonl");
    std::string line;
    std::vector<std::string> refiltered;
    while (std::getline(in, line)) {
        const auto j = json::parse(line);
        if (score_to_tier(j["score"].get<double>(), c) >= c.filter_below_tier) refiltered.push_back(j["id"]);
    }
    std::vector<std::string> kept;
    for (const auto& p : r.kept) kept.push_back(p.id);
    EXPECT_EQ(kept, refiltered);
    EXPECT_THROW(filter_batch(pairs, m, c, esci4()), ConfigError);
}

TEST(Calibrate, SeparableScoresReachBoundaries) {
    const auto s = aliexpress6();  // tiers 4 1 0 1 2 1
    std::vector<double> scores;
    std::vector<int> gold;
    for (int i = 0; i < 30; ++i) {
        scores.push_back(0.1 + 0.001 * i);  gold.push_back(2);  // tier 0
        scores.push_back(1.1 + 0.001 * i);  gold.push_back(1);  // tier 1
        scores.push_back(2.1 + 0.001 * i);  gold.push_back(4);  // tier 2
        scores.push_back(3.9 + 0.001 * i);  gold.push_back(0);  // tier 4
    }
    const auto r = calibrate_thresholds(scores, gold, s, {1.0, 1.0, 1.0, 1.0});
    EXPECT_TRUE(r.all_attained());
    EXPECT_DOUBLE_EQ(r.calibration.thresholds[0], 1.1);
    EXPECT_DOUBLE_EQ(r.calibration.thresholds[1], 2.1);
    EXPECT_DOUBLE_EQ(r.calibration.thresholds[2], 3.9);
    EXPECT_DOUBLE_EQ(r.calibration.thresholds[3], 3.9);
    for (double p : r.precision) EXPECT_DOUBLE_EQ(p, 1.0);
    const auto zero = calibrate_thresholds(scores, gold, s, {0, 0, 0, 0});
    for (double t : zero.calibration.thresholds) EXPECT_DOUBLE_EQ(t, 0.1);
}

TEST(Calibrate, ReMeasuredPrecisionMatchesTargets) {
    const auto s = aliexpress6();
    Rng rng(9);
    std::vector<double> scores;
    std::vector<int> gold;
    for (int i = 0; i < 3000; ++i) {
        const int y = static_cast<int>(rng.below(6));
        gold.push_back(y);
        scores.push_back(s.default_tiers[static_cast<std::size_t>(y)] + rng.normal(0.0, 0.8));
    }
    const std::array<double, 4> target{0.85, 0.85, 0.85, 0.85};
    const auto r = calibrate_thresholds(scores, gold, s, target);
    EXPECT_TRUE(r.all_attained());
    const auto measured = measure_tier_precision(scores, gold, s, r.calibration);
    for (std::size_t t = 0; t < 4; ++t) {
        EXPECT_NEAR(measured[t], target[t], 0.02) << "tier " << t + 1;
        EXPECT_GE(r.precision[t], target[t]);
    }
    for (std::size_t t = 1; t < 4; ++t) EXPECT_GE(r.calibration.thresholds[t], r.calibration.thresholds[t - 1]);
    EXPECT_EQ(to_json(r).dump(), to_json(calibrate_thresholds(scores, gold, s, target)).dump());
}

TEST(Calibrate, UnattainableTargetIsFlagged) {
    const auto s = aliexpress6();
    std::vector<double> scores{1.0, 1.0, 2.0, 2.0};
    std::vector<int> gold{0, 2, 0, 2};  // tiers 4 0 4 0 with tied scores
    const auto r = calibrate_thresholds(scores, gold, s, {0.9, 0.9, 0.9, 0.9});
    EXPECT_FALSE(r.all_attained());
    EXPECT_DOUBLE_EQ(r.precision[3], 0.5);
    EXPECT_THROW(calibrate_thresholds({}, {}, s, {0, 0, 0, 0}), InputError);
}

}  // namespace
