#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace lrkd;
using namespace lrkd::testing;

namespace {

struct Fixture {
    RelevanceSchema schema = aliexpress6();
    std::vector<LabeledPair> pairs;
    std::vector<GenerationRecord> gens;

    explicit Fixture(int n, std::uint64_t seed) {
        pairs = synth::gen_synthetic_corpus(n, schema, seed);
        gens = simulate_all(pairs, 3, default_matrix(schema), schema, seed + 1);
        // a few unparsable replies
        for (std::size_t i = 0; i < gens.size(); i += 97) {
            gens[i].valid = false;
            gens[i].predicted_label = kInvalidLabel;
        }
    }
};

TEST(ConsistencyFilter, EqualsLabelMatchOracle) {
    Fixture f(1000, 31);
    std::array<std::vector<SftExample>, 3> per;
    for (auto k : kAllPerspectives) {
        per[static_cast<std::size_t>(k)] = consistency_filter(f.pairs, f.gens, k);
        for (const auto& e : per[static_cast<std::size_t>(k)]) EXPECT_EQ(e.source_perspective, k);
    }
    const auto all = aggregate_sft(per);
    std::multiset<std::tuple<std::string, int, int>> got;
    for (const auto& e : all) got.emplace(e.pair_id, static_cast<int>(e.source_perspective), e.attempt);
    EXPECT_EQ(got, filter_oracle(f.pairs, f.gens));
    EXPECT_EQ(all.size(), per[0].size() + per[1].size() + per[2].size());
}

TEST(ConsistencyFilter, IdempotentAndCarriesGoldLabel) {
    Fixture f(200, 5);
    const auto once = consistency_filter(f.pairs, f.gens, Perspective::BusinessRules);
    std::vector<GenerationRecord> kept;
    for (const auto& e : once) {
        GenerationRecord g;
        g.pair_id = e.pair_id;
        g.perspective = e.source_perspective;
        g.attempt = e.attempt;
        g.rationale = e.rationale;
        g.predicted_label = e.label;
        g.valid = true;
        kept.push_back(g);
    }
    EXPECT_EQ(consistency_filter(f.pairs, kept, Perspective::BusinessRules), once);
    std::vector<GenerationRecord> orphan{f.gens.front()};
    orphan[0].pair_id = "missing";
    EXPECT_THROW(consistency_filter(f.pairs, orphan, Perspective::UserIntent), IntegrityError);
}

TEST(SftLoss, MaskedSumAndBatchMean) {
    EXPECT_DOUBLE_EQ(sft_nll({-1.0, -2.0, -0.5}, {0, 1, 1}), 2.5);
    EXPECT_DOUBLE_EQ(sft_nll_batch({{-1.0, -2.0}, {-4.0, -1.0}}, {{1, 1}, {0, 1}}), 2.0);
    EXPECT_THROW(sft_nll({-1.0}, {0}), DegenerateError);
    EXPECT_THROW(sft_nll({-1.0}, {1, 1}), InputError);
    EXPECT_THROW(sft_nll_batch({}, {}), InputError);
}

TEST(ConflictMining, EqualsBruteForceUnion) {
    Fixture f(1000, 77);
    std::set<std::string> got;
    for (const auto& p : mine_conflicts(f.pairs, greedy_predictions(f.gens))) got.insert(p.id);
    EXPECT_EQ(got, conflict_oracle(f.pairs, f.gens));
    EXPECT_FALSE(got.empty());
    EXPECT_LT(got.size(), f.pairs.size());
}

TEST(ConflictMining, MissingPredictionIsIntegrityError) {
    Fixture f(20, 1);
    auto preds = greedy_predictions(f.gens);
    preds[Perspective::UserIntent].erase(f.pairs[3].id);
    EXPECT_THROW(mine_conflicts(f.pairs, preds), IntegrityError);
}

TEST(Preferences, ChosenCorrectRejectedIncorrect) {
    Fixture f(1000, 12);
    const auto conflicts = mine_conflicts(f.pairs, greedy_predictions(f.gens));
    const auto built = build_preference_pairs(conflicts, f.gens);
    ASSERT_FALSE(built.pairs.empty());
    std::map<std::string, int> gold;
    for (const auto& p : f.pairs) gold[p.id] = p.label;
    for (const auto& pp : built.pairs) {
        EXPECT_EQ(pp.chosen.label, gold[pp.pair_id]);
        EXPECT_NE(pp.rejected.label, gold[pp.pair_id]);
    }
    // Every conflict pair is either represented or counted as skipped.
    std::set<std::string> seen;
    for (const auto& pp : built.pairs) seen.insert(pp.pair_id);
    EXPECT_EQ(seen.size() + built.skip_count(), conflicts.size());
    const auto rep = skip_report(built);
    EXPECT_EQ(rep["pairs"].get<std::size_t>(), built.pairs.size());
}

TEST(Preferences, SkipReasons) {
    const auto s = aliexpress6();
    LabeledPair p{"p1", "q", "t", 2, "en", std::nullopt};
    auto rec = [&](Perspective k, int attempt, int label) {
        GenerationRecord g;
        g.pair_id = "p1";
        g.perspective = k;
        g.attempt = attempt;
        g.rationale = std::string(to_string(k)) + std::to_string(attempt);
        g.predicted_label = label;
        g.valid = label != kInvalidLabel;
        return g;
    };
    EXPECT_EQ(build_preference_pairs({p}, {}).skipped.at("missing_generations"), 1u);
    auto allwrong = build_preference_pairs({p}, {rec(Perspective::UserIntent, 0, 1), rec(Perspective::UserIntent, 1, 3)});
    EXPECT_EQ(allwrong.skipped.at("no_correct_rationale"), 1u);
    auto allright = build_preference_pairs({p}, {rec(Perspective::UserIntent, 0, 2)});
    EXPECT_EQ(allright.skipped.at("no_failing_perspective"), 1u);

    // UI fails at attempt 0, SA is right at attempt 1, BR unparsable.
    std::vector<GenerationRecord> gens{rec(Perspective::BusinessRules, 0, kInvalidLabel),
                                       rec(Perspective::StructuredAnalysis, 1, 2),
                                       rec(Perspective::StructuredAnalysis, 0, 4),
                                       rec(Perspective::UserIntent, 0, 1)};
    const auto b = build_preference_pairs({p}, gens);
    ASSERT_EQ(b.pairs.size(), 3u);
    for (const auto& pp : b.pairs) {
        EXPECT_EQ(pp.chosen.rationale, "structured_analysis1");
        EXPECT_EQ(pp.chosen_attempt, 1);
    }
    EXPECT_EQ(b.pairs[0].rejected_perspective, Perspective::UserIntent);
    EXPECT_EQ(b.pairs[2].rejected.label, kInvalidLabel);
    // Restricting the chosen side to the failing perspective finds nothing for UI.
    const auto own = build_single_perspective_pairs({p}, gens, 10);
    ASSERT_EQ(own.pairs.size(), 1u);
    EXPECT_EQ(own.pairs[0].rejected_perspective, Perspective::StructuredAnalysis);
    EXPECT_EQ(own.pairs[0].chosen_perspective, Perspective::StructuredAnalysis);
}

TEST(Preferences, SizeMatchedControlTruncates) {
    Fixture f(600, 3);
    const auto conflicts = mine_conflicts(f.pairs, greedy_predictions(f.gens));
    const auto cross = build_preference_pairs(conflicts, f.gens);
    const auto own = build_single_perspective_pairs(conflicts, f.gens, cross.pairs.size() / 4);
    EXPECT_EQ(own.pairs.size(), cross.pairs.size() / 4);
    EXPECT_GT(own.skipped.at("size_match_truncated"), 0u);
    for (const auto& pp : own.pairs) EXPECT_EQ(pp.chosen_perspective, pp.rejected_perspective);
}

TEST(DpoLoss, Ln2AtZeroMarginAndMonotone) {
    EXPECT_NEAR(dpo_loss({{"a", 1.5, 1.5}}), std::log(2.0), 1e-12);
    double prev = std::numeric_limits<double>::infinity();
    for (int i = -20; i <= 20; ++i) {
        const double l = dpo_loss({{"a", i * 0.1, 0.0}});
        EXPECT_LT(l, prev);
        prev = l;
    }
    // Stable at extreme margins.
    EXPECT_NEAR(neg_log_sigmoid(800.0), 0.0, 1e-300);
    EXPECT_NEAR(neg_log_sigmoid(-800.0), 800.0, 1e-9);
    EXPECT_NEAR(neg_log_sigmoid(1.0), std::log1p(std::exp(-1.0)), 1e-15);
}

TEST(DpoLoss, ReferenceAndErrors) {
    SequenceScore s{"a", -2.0, -5.0};
    s.ref_chosen = -3.0;
    s.ref_rejected = -4.0;
    DpoOptions opt;
    opt.use_reference = true;
    opt.beta = 0.5;
    EXPECT_DOUBLE_EQ(dpo_margin(s, opt), 0.5 * ((-2.0 + 3.0) - (-5.0 + 4.0)));
    EXPECT_DOUBLE_EQ(dpo_margin(s), 3.0);
    EXPECT_NEAR(dpo_loss({s, {"b", 0, 0}}), 0.5 * (neg_log_sigmoid(3.0) + std::log(2.0)), 1e-15);
    EXPECT_THROW(dpo_loss({}), DegenerateError);
    opt.beta = 0.0;
    EXPECT_THROW(dpo_loss({s}, opt), ConfigError);
    EXPECT_THROW(dpo_loss({{"n", std::nan(""), 0.0}}), InputError);
}

TEST(SftIo, RoundTripByteIdentical) {
    Fixture f(100, 8);
    const auto dir = scratch_dir("sft");
    const auto sft = consistency_filter(f.pairs, f.gens, Perspective::UserIntent);
    save_sft(dir / "a.jsonl", sft, f.schema);
    const auto back = load_sft(dir / "a.jsonl", f.schema);
    EXPECT_EQ(back, sft);
    save_sft(dir / "b.jsonl", back, f.schema);
    EXPECT_EQ(slurp(dir / "a.jsonl"), slurp(dir / "b.jsonl"));
    const auto prefs = build_preference_pairs(mine_conflicts(f.pairs, greedy_predictions(f.gens)), f.gens).pairs;
    save_preferences(dir / "p.jsonl", prefs, f.schema);
    std::ifstream in(dir / "p.jsonl");
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        const auto j = json::parse(line);
        EXPECT_TRUE(j.contains("chosen") && j.contains("rejected"));
        ++n;
    }
    EXPECT_EQ(n, prefs.size());
}

}  // namespace
