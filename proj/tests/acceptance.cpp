// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit when any
// criterion fails. Expected values come from the loop oracles in
// test_support.hpp, not from the library under test.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>

#include "test_support.hpp"

using namespace lrkd;
using namespace lrkd::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

std::string sci(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << v;
    return os.str();
}

// ----------------------------- 1, 2: extractors -----------------------------

constexpr std::array<ExtractorKind, 3> kKinds{ExtractorKind::MLP, ExtractorKind::Poly, ExtractorKind::GAT};

Outcome extractor_oracle() {
    double worst = 0.0;
    for (auto k : kKinds) {
        Rng rng(derive_seed(101, static_cast<std::uint64_t>(k)));
        for (int i = 0; i < 100; ++i) {
            auto c = random_extractor_case(k, rng, 8, 16);
            const Mat r = extract_value(c.ps, c.layout, c.cfg, c.H, c.mask);
            worst = std::max(worst, max_abs_diff(r, oracle_extract(c.ps, c.cfg, to_rows(c.H), c.mask)));
        }
    }
    return {worst < 1e-6, "300 cases, max |diff| " + sci(worst)};
}

Outcome mask_invariance() {
    double worst = 0.0;
    for (auto k : kKinds) {
        Rng rng(derive_seed(102, static_cast<std::uint64_t>(k)));
        for (int i = 0; i < 50; ++i) {
            auto c = random_extractor_case(k, rng, 8, 16);
            const Mat a = extract_value(c.ps, c.layout, c.cfg, c.H, c.mask);
            Mat H2 = c.H;
            for (Eigen::Index row = 0; row < H2.rows(); ++row)
                if (!c.mask[static_cast<std::size_t>(row)])
                    for (Eigen::Index j = 0; j < H2.cols(); ++j) H2(row, j) = rng.normal(0.0, 100.0);
            const Mat b = extract_value(c.ps, c.layout, c.cfg, H2, c.mask);
            worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
        }
    }
    return {worst < 1e-6, "150 cases, max |diff| " + sci(worst)};
}

// ----------------------------- 3: gradients -----------------------------

Outcome gradient_check() {
    Rng rng(103);
    double worst = 0.0;
    std::string where;
    for (int c = 0; c < 20; ++c) {
        const auto kind = kKinds[static_cast<std::size_t>(c % 3)];
        auto cfg = toy_run_config(kind, 0.05 + 0.5 * rng.uniform(), static_cast<std::uint64_t>(c));
        const Variant v = c % 5 == 4 ? Variant::ClsOnly : Variant::Full;
        auto m = make_student(cfg, v, static_cast<std::uint64_t>(c));
        jitter_parameters(m.ps, rng, 0.3);
        const auto data = toy_examples(cfg, rng, m.guided_dim());
        std::vector<const DistillExample*> batch;
        for (const auto& e : data) batch.push_back(&e);
        const auto gc = check_gradients(m, batch);
        if (gc.max_rel > worst) {
            worst = gc.max_rel;
            where = gc.worst;
        }
    }
    return {worst < 1e-4, "20 cases, max relative error " + sci(worst) + " (" + where + ")"};
}

// ----------------------------- 4: DPO -----------------------------

Outcome dpo_shape() {
    const double at_zero = dpo_loss({{"z", -3.25, -3.25}});
    bool monotone = true;
    double prev = std::numeric_limits<double>::infinity();
    for (int i = -20; i <= 20; ++i) {
        const double l = dpo_loss({{"m", 0.1 * i, 0.0}});
        monotone &= l < prev;
        prev = l;
    }
    const double err = std::abs(at_zero - std::log(2.0));
    return {err <= 1e-9 && monotone, "|L(0) - ln2| " + sci(err) + ", strictly decreasing " + (monotone ? "yes" : "no")};
}

// ----------------------------- 5: filter / preferences / conflicts -----------------------------

Outcome data_pipeline() {
    const auto s = aliexpress6();
    const auto pairs = synth::gen_synthetic_corpus(1000, s, 105);
    auto gens = simulate_all(pairs, 3, default_matrix(s), s, 106);
    for (std::size_t i = 0; i < gens.size(); i += 53) {
        gens[i].valid = false;
        gens[i].predicted_label = kInvalidLabel;
    }
    std::array<std::vector<SftExample>, 3> per;
    for (auto k : kAllPerspectives) per[static_cast<std::size_t>(k)] = consistency_filter(pairs, gens, k);
    std::multiset<std::tuple<std::string, int, int>> got;
    for (const auto& e : aggregate_sft(per)) got.emplace(e.pair_id, static_cast<int>(e.source_perspective), e.attempt);
    const bool filter_ok = got == filter_oracle(pairs, gens);

    const auto conflicts = mine_conflicts(pairs, greedy_predictions(gens));
    std::set<std::string> conf_ids;
    for (const auto& p : conflicts) conf_ids.insert(p.id);
    const bool conflicts_ok = conf_ids == conflict_oracle(pairs, gens);

    std::map<std::string, int> gold;
    for (const auto& p : pairs) gold[p.id] = p.label;
    const auto prefs = build_preference_pairs(conflicts, gens);
    std::size_t bad = 0;
    for (const auto& pp : prefs.pairs) bad += pp.chosen.label != gold[pp.pair_id] || pp.rejected.label == gold[pp.pair_id];
    const bool prefs_ok = bad == 0 && !prefs.pairs.empty();
    return {filter_ok && conflicts_ok && prefs_ok,
            "filter " + std::to_string(got.size()) + (filter_ok ? " match" : " MISMATCH") + ", conflicts " +
                std::to_string(conf_ids.size()) + (conflicts_ok ? " match" : " MISMATCH") + ", preference pairs " +
                std::to_string(prefs.pairs.size()) + " with " + std::to_string(bad) + " violations"};
}

// ----------------------------- 6: oracle gap -----------------------------

Outcome oracle_gap() {
    const auto s = aliexpress6();
    std::string detail;
    bool ok = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto pairs = synth::gen_synthetic_corpus(5000, s, 600 + seed);
        const auto gens = simulate_all(pairs, 3, default_matrix(s), s, 700 + seed);
        const auto r = oracle_report(attempts_by_perspective(pairs, gens), labels_of(pairs), 3);
        const double p1 = r.pass1[static_cast<std::size_t>(r.best_perspective)];
        ok &= r.oracle_acc > r.best_single_passk + 0.02 && r.best_single_passk > p1 + 0.02;
        detail += (seed ? "; " : "") + fmt(100 * r.oracle_acc, 1) + "/" + fmt(100 * r.best_single_passk, 1) + "/" +
                  fmt(100 * p1, 1);
    }
    return {ok, "oracle/pass@3/pass@1 per seed: " + detail};
}

// ----------------------------- 7, 9: distillation -----------------------------

/// Desk-scale distillation setup shared by the ablation and the probe study.
struct DistillSetup {
    RunConfig cfg;
    std::vector<LabeledPair> train, test;
    std::vector<std::string> train_cots, test_cots;
    std::vector<DistillExample> examples;
};

DistillSetup distill_setup(std::uint64_t seed) {
    DistillSetup d;
    d.cfg.seed = seed;
    d.cfg.lambda = 0.1;
    d.cfg.extractor.kind = ExtractorKind::GAT;
    d.cfg.optim.epochs = 30;
    const auto pairs = synth::gen_synthetic_corpus(6000, d.cfg.schema, 900 + seed);
    d.train.assign(pairs.begin(), pairs.begin() + 5000);
    d.test.assign(pairs.begin() + 5000, pairs.end());
    const double teacher_acc = 0.9;
    auto text_of = [](const std::vector<LabeledPair>& ps, const std::vector<GenerationRecord>& gens) {
        const auto by_id = rationales_by_pair(gens, CotMode::Single);
        std::vector<std::string> out;
        for (const auto& p : ps) out.push_back(by_id.at(p.id));
        return out;
    };
    d.train_cots = text_of(d.train, simulate_teacher_cots(d.train, d.cfg.schema, teacher_acc, 910 + seed));
    d.test_cots = text_of(d.test, simulate_teacher_cots(d.test, d.cfg.schema, teacher_acc, 920 + seed));
    MockEmbedder emb(d.cfg.extractor.output_dim, 930 + seed);
    std::unordered_map<std::string, std::string> cots;
    for (std::size_t i = 0; i < d.train.size(); ++i) cots.emplace(d.train[i].id, d.train_cots[i]);
    d.examples = distill_examples(d.train, cots, &emb, d.cfg);
    return d;
}

Outcome distillation_benefit() {
    std::array<double, 3> mean{};
    std::string detail;
    const std::array<Variant, 3> variants{Variant::Full, Variant::NoGuidance, Variant::ClsOnly};
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto d = distill_setup(seed);
        const auto rows = token_rows(d.test, d.cfg.encoder);
        detail += seed ? "; seed " : "seed ";
        detail += std::to_string(seed);
        for (std::size_t v = 0; v < 3; ++v) {
            const auto r = train_student(d.examples, d.cfg, variants[v]);
            const double f1 = compute_metrics(predict(r.model, rows), labels_of(d.test), d.cfg.schema).macro_f1;
            mean[v] += 100.0 * f1 / 3.0;
            detail += " " + fmt(100 * f1, 1);
        }
    }
    const bool ok = mean[0] - mean[1] >= 1.0 && mean[0] - mean[2] >= 0.5;
    return {ok, "mean F1 full " + fmt(mean[0], 2) + ", no_guidance " + fmt(mean[1], 2) + ", cls_only " + fmt(mean[2], 2) +
                    " (" + detail + ")"};
}

Outcome probe_direction() {
    const auto d = distill_setup(0);
    const auto r = train_student(d.examples, d.cfg, Variant::Full);
    const auto v = frozen_vectors(r.model, token_rows(d.test, d.cfg.encoder));
    const auto st = probe_study(d.test, d.test_cots, v.r_qp, v.h_cls, 15, 10, 77);
    double lat = 0.0, cls = 0.0;
    for (std::size_t i = 0; i < st.mean_latent.size(); ++i) {
        lat += st.mean_latent[i] / static_cast<double>(st.mean_latent.size());
        cls += st.mean_cls[i] / static_cast<double>(st.mean_cls.size());
    }
    const bool ok = st.keywords.size() == 15 && st.latent_wins >= 12 && st.p_value < 0.05;
    return {ok, "latent wins " + std::to_string(st.latent_wins) + "/" + std::to_string(st.keywords.size()) +
                    ", mean F1 latent " + fmt(lat, 3) + " vs cls " + fmt(cls, 3) + ", p " + sci(st.p_value)};
}

// ----------------------------- 8: audit -----------------------------

Outcome audit_deltas() {
    const std::array<std::pair<ExtractorKind, double>, 3> table{
        {{ExtractorKind::Poly, 0.03e6}, {ExtractorKind::GAT, 0.59e6}, {ExtractorKind::MLP, 1.18e6}}};
    bool ok = true;
    std::string detail;
    for (const auto& [kind, paper] : table) {
        ExtractorConfig c;
        c.kind = kind;
        c.hidden_dim = 768;
        c.projection = false;
        const auto n = audit_extractor_delta(c, 768);
        const double rel = std::abs(static_cast<double>(n) - paper) / paper;
        ok &= rel <= 0.05;
        detail += (detail.empty() ? "" : ", ") + std::string(to_string(kind)) + " " + std::to_string(n) + " (" +
                  fmt(100 * rel, 1) + "% off)";
    }
    return {ok, detail};
}

// ----------------------------- 10: deployment and IO -----------------------------

Outcome deploy_and_io() {
    TierCalibration c;
    c.thresholds = {0.6, 1.3, 2.2, 3.1};
    bool mono = true;
    int prev = -1;
    for (int i = 0; i <= 10000; ++i) {
        const double s = 4.0 * i / 10000.0;
        const int t = score_to_tier(s, c);
        int brute = 0;
        for (double th : c.thresholds) brute += s >= th;
        mono &= t >= prev && t == brute;
        prev = t;
    }
    bool idem = true;
    const auto s = aliexpress6();
    for (std::uint64_t b = 0; b < 3; ++b) {
        const auto pairs = synth::gen_synthetic_corpus(200 + 50 * static_cast<std::int64_t>(b), s, 1000 + b);
        Rng rng(1100 + b);
        std::vector<double> scores(pairs.size());
        for (auto& x : scores) x = 4.0 * rng.uniform();
        const auto once = filter_scored(pairs, scores, c);
        std::vector<double> kept_scores;
        for (const auto& a : once.audit)
            if (a.kept) kept_scores.push_back(a.score);
        idem &= filter_scored(once.kept, kept_scores, c).kept == once.kept;
    }
    const auto dir = scratch_dir("acceptance-io");
    const auto pairs = synth::gen_synthetic_corpus(300, s, 1200);
    const auto gens = simulate_all(pairs, 2, default_matrix(s), s, 1201);
    save_dataset(dir / "a.jsonl", pairs, s);
    save_dataset(dir / "b.jsonl", load_dataset(dir / "a.jsonl", s), s);
    save_generations(dir / "ga.jsonl", gens, s);
    save_generations(dir / "gb.jsonl", load_generations(dir / "ga.jsonl", s), s);
    const auto sft = consistency_filter(pairs, gens, Perspective::UserIntent);
    save_sft(dir / "sa.jsonl", sft, s);
    save_sft(dir / "sb.jsonl", load_sft(dir / "sa.jsonl", s), s);
    const bool io = slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl") && slurp(dir / "ga.jsonl") == slurp(dir / "gb.jsonl") &&
                    slurp(dir / "sa.jsonl") == slurp(dir / "sb.jsonl");
    return {mono && idem && io, std::string("tiers monotone ") + (mono ? "yes" : "no") + ", filter idempotent " +
                                    (idem ? "yes" : "no") + ", JSONL round trip identical " + (io ? "yes" : "no")};
}

// ----------------------------- 11: CLI determinism -----------------------------

int run(const std::string& args) {
    const std::string cmd = std::string(LRKD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

Outcome cli_determinism() {
    const auto dir = scratch_dir("acceptance-cli");
    std::ofstream(dir / "cfg.json") << R"({"seed": 5, "encoder": {"layers": 1, "d": 16, "heads": 2, "ffn_dim": 32,
        "vocab_buckets": 1024, "max_len": 32}, "extractor": {"hidden_dim": 16, "output_dim": 16},
        "optimizer": {"epochs": 2, "batch_size": 16}})";
    const std::string cfg = "--config " + (dir / "cfg.json").string() + " ";
    auto stage = [&](const std::string& tag) {
        auto f = [&](const std::string& n) { return (dir / (tag + n)).string(); };
        int rc = 0;
        rc |= run(cfg + "gen-synth -n 400 -o " + f("data.jsonl"));
        rc |= run(cfg + "teach-generate --data " + f("data.jsonl") + " -o " + f("gens.jsonl"));
        rc |= run(cfg + "build-sft --data " + f("data.jsonl") + " --gens " + f("gens.jsonl") + " -o " + f("sft.jsonl"));
        rc |= run(cfg + "build-dpo --data " + f("data.jsonl") + " --gens " + f("gens.jsonl") + " -o " + f("dpo.jsonl"));
        rc |= run(cfg + "teach-generate --mode teacher --data " + f("data.jsonl") + " -o " + f("cots.jsonl"));
        rc |= run(cfg + "train-student --data " + f("data.jsonl") + " --cots " + f("cots.jsonl") + " -o " + f("ck") +
                  " --history " + f("hist.jsonl"));
        return rc;
    };
    const int rc = stage("a-") | stage("b-");
    std::size_t same = 0, total = 0;
    for (const char* f : {"data.jsonl", "sft.jsonl", "dpo.jsonl", "hist.jsonl", "ck/manifest.json", "ck/tensors.bin"}) {
        const auto a = slurp(dir / (std::string("a-") + f));
        ++total;
        same += !a.empty() && a == slurp(dir / (std::string("b-") + f));
    }
    return {rc == 0 && same == total,
            "exit codes " + std::string(rc == 0 ? "ok" : "FAILED") + ", " + std::to_string(same) + "/" +
                std::to_string(total) + " outputs byte-identical"};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> all{
        {1, "extractor oracle match", 10, extractor_oracle},
        {2, "mask invariance", 1e9, mask_invariance},
        {3, "gradient check of the total loss", 60, gradient_check},
        {4, "DPO loss shape", 1e9, dpo_shape},
        {5, "filter, preference and conflict oracles", 1e9, data_pipeline},
        {6, "multi-perspective oracle gap", 120, oracle_gap},
        {7, "distillation benefit", 900, distillation_benefit},
        {8, "extractor parameter deltas", 5, audit_deltas},
        {9, "probe directionality", 600, probe_direction},
        {10, "tiers, filter idempotence, JSONL round trip", 1e9, deploy_and_io},
        {11, "byte-identical CLI reruns", 1e9, cli_determinism},
    };
    int failed = 0;
    for (const auto& c : all) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(Clock::now() - t0).count();
        const bool in_time = sec < c.budget_s;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << " [" << std::setw(2) << c.id << "] " << c.name << ": " << o.detail
                  << " | " << fmt(sec, 1) << " s";
        if (c.budget_s < 1e9) std::cout << " (budget " << fmt(c.budget_s, 0) << " s" << (in_time ? ")" : ", EXCEEDED)");
        std::cout << std::endl;
    }
    std::cout << (all.size() - static_cast<std::size_t>(failed)) << "/" << all.size() << " criteria passed" << std::endl;
    return failed ? 1 : 0;
}
