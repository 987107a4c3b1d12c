// Copyright (c) 2026, the lrkd authors
// SPDX-License-Identifier: Apache-2.0
//
// lrkd: command-line front end for the teacher-data pipeline, student
// training, analysis and deployment scoring.
//
// Exit codes: 0 success, 2 validation error, 3 external-service error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>

#include "lrkd/pipeline.hpp"

namespace {

using namespace lrkd;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitService = 3;

constexpr const char* kTeacherUrlVar = "LRKD_TEACHER_URL";
constexpr const char* kEmbedUrlVar = "LRKD_EMBED_URL";

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

RunConfig load_run_config(const Globals& g) {
    RunConfig cfg;
    if (!g.config_path.empty()) {
        auto in = open_input(g.config_path);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError("config " + g.config_path + ": " + e.what());
        }
        cfg = run_config_from_json(j);
    }
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

void write_json_file(const std::string& path, const ordered_json& j) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
}

void write_text_file(const std::string& path, const std::string& s) {
    auto out = open_output(path);
    out << s;
}

std::unique_ptr<EmbeddingProvider> make_embedder(const std::string& kind, int dim, std::uint64_t seed,
                                                 const std::string& cache_dir,
                                                 std::unique_ptr<EmbeddingCache>& cache_holder) {
    if (kind == "mock") return std::make_unique<MockEmbedder>(dim, seed);
    if (kind == "external") {
        auto ep = endpoint_from_env(kEmbedUrlVar);
        if (ep.url.empty()) throw ConfigError(std::string(kEmbedUrlVar) + " is not set");
        if (!cache_dir.empty()) cache_holder = std::make_unique<EmbeddingCache>(cache_dir);
        return std::make_unique<ExternalEmbedder>(ep, dim, cache_holder.get());
    }
    throw ConfigError("unknown embedder '" + kind + "'");
}

StudentModel load_model(const std::string& dir) { return load_checkpoint(dir).model; }

// ----------------------------- subcommands -----------------------------

struct GenSynthArgs {
    std::int64_t n = 1000;
    std::string schema = "aliexpress6";
    std::string out;
};

int run_gen_synth(const Globals& g, const GenSynthArgs& a) {
    const auto cfg = load_run_config(g);
    const auto schema = resolve_schema(a.schema);
    save_dataset(a.out, synth::gen_synthetic_corpus(a.n, schema, cfg.seed), schema);
    return kExitOk;
}

struct TeachArgs {
    std::string data, out, schema = "aliexpress6", backend = "sim", mode = "multi", matrix;
    int attempts = 5;
    double teacher_accuracy = 0.9;
};

int run_teach_generate(const Globals& g, const TeachArgs& a) {
    const auto cfg = load_run_config(g);
    const auto schema = resolve_schema(a.schema);
    const auto pairs = load_dataset(a.data, schema);
    std::vector<GenerationRecord> gens;
    if (a.backend == "sim") {
        if (a.mode == "teacher") {
            gens = simulate_teacher_cots(pairs, schema, a.teacher_accuracy, cfg.seed);
        } else if (a.mode == "multi") {
            PerspectiveErrorMatrix m = default_matrix(schema);
            if (!a.matrix.empty()) {
                auto in = open_input(a.matrix);
                m = matrix_from_json(json::parse(in), schema);
            }
            gens = simulate_all(pairs, a.attempts, m, schema, cfg.seed);
        } else {
            throw ConfigError("unknown mode '" + a.mode + "'");
        }
    } else if (a.backend == "external") {
        GenerationBackend b;
        b.kind = BackendKind::External;
        b.attempts = a.mode == "teacher" ? 1 : a.attempts;
        b.endpoint = endpoint_from_env(kTeacherUrlVar);
        if (b.endpoint.url.empty()) throw ConfigError(std::string(kTeacherUrlVar) + " is not set");
        for (const auto& p : pairs) {
            if (a.mode == "teacher") {
                auto r = external_generate(p, route_perspective(p), b, schema);
                gens.insert(gens.end(), r.begin(), r.end());
            } else {
                for (auto k : kAllPerspectives) {
                    auto r = external_generate(p, k, b, schema);
                    gens.insert(gens.end(), r.begin(), r.end());
                }
            }
        }
        std::stable_sort(gens.begin(), gens.end(), generation_order);
    } else {
        throw ConfigError("unknown backend '" + a.backend + "'");
    }
    save_generations(a.out, gens, schema);
    return kExitOk;
}

struct SftArgs {
    std::string data, gens, out, schema = "aliexpress6";
};

int run_build_sft(const Globals&, const SftArgs& a) {
    const auto schema = resolve_schema(a.schema);
    const auto pairs = load_dataset(a.data, schema);
    auto gens = load_generations(a.gens, schema);
    std::stable_sort(gens.begin(), gens.end(), generation_order);
    std::array<std::vector<SftExample>, 3> per;
    for (auto k : kAllPerspectives) per[static_cast<std::size_t>(k)] = consistency_filter(pairs, gens, k);
    save_sft(a.out, aggregate_sft(per), schema);
    return kExitOk;
}

struct ConflictArgs {
    std::string data, gens, out, schema = "aliexpress6";
};

int run_mine_conflicts(const Globals&, const ConflictArgs& a) {
    const auto schema = resolve_schema(a.schema);
    const auto pairs = load_dataset(a.data, schema);
    const auto gens = load_generations(a.gens, schema);
    save_dataset(a.out, mine_conflicts(pairs, greedy_predictions(gens)), schema);
    return kExitOk;
}

struct DpoArgs {
    std::string data, conflicts, gens, out, skip_report, schema = "aliexpress6";
    bool size_matched = false;
};

int run_build_dpo(const Globals&, const DpoArgs& a) {
    const auto schema = resolve_schema(a.schema);
    const auto gens = load_generations(a.gens, schema);
    std::vector<LabeledPair> conflicts;
    if (!a.conflicts.empty()) {
        conflicts = load_dataset(a.conflicts, schema);
    } else if (!a.data.empty()) {
        conflicts = mine_conflicts(load_dataset(a.data, schema), greedy_predictions(gens));
    } else {
        throw ConfigError("build-dpo needs --conflicts or --data");
    }
    auto built = build_preference_pairs(conflicts, gens);
    if (a.size_matched) built = build_single_perspective_pairs(conflicts, gens, built.pairs.size());
    save_preferences(a.out, built.pairs, schema);
    if (!a.skip_report.empty()) write_json_file(a.skip_report, skip_report(built));
    return kExitOk;
}

struct TrainArgs {
    std::string data, cots, out, history, variant = "full", embedder = "mock", cache, cot_mode = "single";
    std::optional<int> epochs;
    std::optional<double> lambda;
    std::optional<std::string> extractor;
    std::uint64_t embed_seed = 0;
};

int run_train_student(const Globals& g, const TrainArgs& a) {
    auto cfg = load_run_config(g);
    if (a.epochs) cfg.optim.epochs = *a.epochs;
    if (a.lambda) cfg.lambda = *a.lambda;
    if (a.extractor) cfg.extractor.kind = extractor_kind_from_string(*a.extractor);
    cfg.validate();
    const auto variant = variant_from_string(a.variant);
    const auto pairs = load_dataset(a.data, cfg.schema);
    std::unordered_map<std::string, std::string> cots;
    if (!a.cots.empty()) cots = rationales_by_pair(load_generations(a.cots, cfg.schema), cot_mode_from_string(a.cot_mode));
    std::unique_ptr<EmbeddingCache> cache;
    std::unique_ptr<EmbeddingProvider> provider;
    if (!a.cots.empty()) {
        const int dim = variant == Variant::ClsOnly ? cfg.encoder.d : extractor_output_dim(cfg.extractor, cfg.encoder.d);
        provider = make_embedder(a.embedder, dim, a.embed_seed, a.cache, cache);
    }
    const auto data = distill_examples(pairs, cots, provider.get(), cfg);
    TrainOptions opt;
    opt.checkpoint_dir = a.out;
    const auto res = train_student(data, cfg, variant, opt);
    if (!a.history.empty()) save_history(a.history, res.history);
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint, data, out;
    std::vector<std::string> ensemble;
};

int run_eval(const Globals&, const EvalArgs& a) {
    ordered_json report;
    if (!a.ensemble.empty()) {
        std::vector<StudentModel> models;
        for (const auto& p : a.ensemble) models.push_back(load_model(p));
        std::vector<const StudentModel*> ptrs;
        for (const auto& m : models) ptrs.push_back(&m);
        const auto& schema = models.front().cfg.schema;
        const auto pairs = load_dataset(a.data, schema);
        const auto preds = avg_ensemble_predict(ptrs, token_rows(pairs, models.front().cfg.encoder));
        report = to_json(compute_metrics(preds, labels_of(pairs), schema), schema);
        report["ensemble_size"] = models.size();
    } else {
        const auto m = load_model(a.checkpoint);
        const auto pairs = load_dataset(a.data, m.cfg.schema);
        const auto preds = predict(m, token_rows(pairs, m.cfg.encoder));
        report = to_json(compute_metrics(preds, labels_of(pairs), m.cfg.schema), m.cfg.schema);
        report["variant"] = std::string(to_string(m.variant));
    }
    if (a.out.empty()) std::cout << report.dump(2) << '\n';
    else write_json_file(a.out, report);
    return kExitOk;
}

struct OracleArgs {
    std::string data, gens, out, schema = "aliexpress6";
    int k = 3;
};

int run_oracle_report(const Globals&, const OracleArgs& a) {
    const auto schema = resolve_schema(a.schema);
    const auto pairs = load_dataset(a.data, schema);
    const auto gens = load_generations(a.gens, schema);
    const auto rep = oracle_report(attempts_by_perspective(pairs, gens), labels_of(pairs), a.k);
    if (a.out.empty()) std::cout << to_json(rep).dump(2) << '\n';
    else write_json_file(a.out, to_json(rep));
    return kExitOk;
}

struct HeatmapArgs {
    std::string data, gens, csv, svg, schema = "aliexpress6";
};

int run_heatmap(const Globals&, const HeatmapArgs& a) {
    const auto schema = resolve_schema(a.schema);
    const auto pairs = load_dataset(a.data, schema);
    const auto grid = perspective_heatmap(pairs, load_generations(a.gens, schema), schema);
    if (a.csv.empty() && a.svg.empty()) std::cout << heatmap_csv(grid);
    if (!a.csv.empty()) write_text_file(a.csv, heatmap_csv(grid));
    if (!a.svg.empty()) write_text_file(a.svg, heatmap_svg(grid));
    return kExitOk;
}

struct ProbeArgs {
    std::string checkpoint, data, cots, out, csv, svg, cot_mode = "single";
    std::size_t top_n = 15;
    int runs = 10;
};

int run_probe(const Globals& g, const ProbeArgs& a) {
    const auto cfg = load_run_config(g);
    const auto m = load_model(a.checkpoint);
    if (!m.has_extractor()) throw ConfigError("probing needs a checkpoint with a latent extractor");
    const auto all = load_dataset(a.data, m.cfg.schema);
    const auto cot_map = rationales_by_pair(load_generations(a.cots, m.cfg.schema), cot_mode_from_string(a.cot_mode));
    std::vector<LabeledPair> pairs;
    std::vector<std::string> cots;
    for (const auto& p : all) {
        auto it = cot_map.find(p.id);
        if (it == cot_map.end()) continue;
        pairs.push_back(p);
        cots.push_back(it->second);
    }
    const auto v = frozen_vectors(m, token_rows(pairs, m.cfg.encoder));
    const auto st = probe_study(pairs, cots, v.r_qp, v.h_cls, a.top_n, a.runs, cfg.seed);
    for (const auto& w : st.warnings) std::cerr << "warning: " << w << '\n';
    if (a.out.empty()) std::cout << to_json(st).dump(2) << '\n';
    else write_json_file(a.out, to_json(st));
    if (!a.csv.empty()) write_text_file(a.csv, probe_csv(st));
    if (!a.svg.empty()) write_text_file(a.svg, probe_svg(st));
    return kExitOk;
}

struct BenchArgs {
    std::string checkpoint, data, out, variant = "full";
    std::size_t batch = 100;
    int passes = 10;
    std::optional<int> closed_form_d;
};

int run_bench(const Globals& g, const BenchArgs& a) {
    ordered_json report;
    if (a.closed_form_d) {
        auto cfg = load_run_config(g);
        const int d = *a.closed_form_d;
        ordered_json deltas;
        for (auto k : {ExtractorKind::MLP, ExtractorKind::Poly, ExtractorKind::GAT}) {
            ExtractorConfig c = cfg.extractor;
            c.kind = k;
            c.hidden_dim = d;
            c.projection = false;
            deltas[std::string(to_string(k))] = audit_extractor_delta(c, d);
        }
        report["encoder_width"] = d;
        report["extractor_delta"] = deltas;
    } else {
        StudentModel m;
        if (!a.checkpoint.empty()) {
            m = load_model(a.checkpoint);
        } else {
            m = make_student(load_run_config(g), variant_from_string(a.variant), 0);
        }
        std::vector<LabeledPair> pairs;
        if (!a.data.empty()) pairs = load_dataset(a.data, m.cfg.schema);
        else pairs = synth::gen_synthetic_corpus(static_cast<std::int64_t>(a.batch), m.cfg.schema, 0);
        if (pairs.size() > a.batch) pairs.resize(a.batch);
        report = to_json(efficiency_audit(m, token_rows(pairs, m.cfg.encoder), a.passes));
        report["batch"] = pairs.size();
        report["variant"] = std::string(to_string(m.variant));
    }
    if (a.out.empty()) std::cout << report.dump(2) << '\n';
    else write_json_file(a.out, report);
    return kExitOk;
}

struct CalibrateArgs {
    std::string checkpoint, data, out;
    std::vector<double> target{0.9};
    int filter_tier = 2;
};

int run_calibrate(const Globals&, const CalibrateArgs& a) {
    const auto m = load_model(a.checkpoint);
    const auto pairs = load_dataset(a.data, m.cfg.schema);
    std::array<double, 4> target{};
    if (a.target.size() == 1) target.fill(a.target[0]);
    else if (a.target.size() == 4) std::copy(a.target.begin(), a.target.end(), target.begin());
    else throw ConfigError("--target takes 1 or 4 values");
    const auto res = calibrate_thresholds(model_scores(m, pairs), labels_of(pairs), m.cfg.schema, target, a.filter_tier);
    if (!res.all_attained()) std::cerr << "warning: some tier precision targets are unattainable; best achievable used\n";
    write_json_file(a.out, to_json(res));
    return kExitOk;
}

struct ScoreArgs {
    std::string checkpoint, data, calibration, out, audit;
};

int run_score(const Globals&, const ScoreArgs& a) {
    const auto m = load_model(a.checkpoint);
    const auto pairs = load_dataset(a.data, m.cfg.schema);
    const auto cal = load_calibration(a.calibration);
    const auto res = filter_batch(pairs, m, cal, m.cfg.schema);
    save_dataset(a.out, res.kept, m.cfg.schema);
    if (!a.audit.empty()) save_audit(a.audit, res.audit);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lrkd: multi-perspective teacher data, latent reasoning distillation and relevance scoring"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "Run configuration JSON file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed overriding the configuration");
    app.footer(
        "Environment: LRKD_TEACHER_URL and LRKD_EMBED_URL select external services, LRKD_API_KEY is sent as a bearer "
        "token.\nExit codes: 0 success, 2 validation error, 3 external-service error.");

    std::function<int()> action;

    GenSynthArgs gs;
    auto* c_gen = app.add_subcommand("gen-synth", "Generate a synthetic labeled corpus");
    c_gen->add_option("-n,--n", gs.n, "Number of pairs")->check(CLI::NonNegativeNumber);
    c_gen->add_option("--schema", gs.schema, "Schema name or JSON path")->capture_default_str();
    c_gen->add_option("-o,--out", gs.out, "Output dataset JSONL")->required();
    c_gen->callback([&] { action = [&] { return run_gen_synth(g, gs); }; });

    TeachArgs ta;
    auto* c_teach = app.add_subcommand("teach-generate", "Produce teacher rationales and labels");
    c_teach->add_option("--data", ta.data, "Input dataset JSONL")->required();
    c_teach->add_option("-o,--out", ta.out, "Output generations JSONL")->required();
    c_teach->add_option("--schema", ta.schema)->capture_default_str();
    c_teach->add_option("--backend", ta.backend, "sim or external")->check(CLI::IsMember({"sim", "external"}))->capture_default_str();
    c_teach->add_option("--mode", ta.mode, "multi: every perspective x attempts; teacher: one routed rationale per pair")
        ->check(CLI::IsMember({"multi", "teacher"}))
        ->capture_default_str();
    c_teach->add_option("--attempts", ta.attempts, "Attempts per perspective")->check(CLI::PositiveNumber)->capture_default_str();
    c_teach->add_option("--matrix", ta.matrix, "Perspective error matrix JSON")->check(CLI::ExistingFile);
    c_teach->add_option("--teacher-accuracy", ta.teacher_accuracy, "Simulated accuracy of the routed teacher")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    c_teach->callback([&] { action = [&] { return run_teach_generate(g, ta); }; });

    SftArgs sa;
    auto* c_sft = app.add_subcommand("build-sft", "Consistency-filter generations into an SFT set");
    c_sft->add_option("--data", sa.data)->required();
    c_sft->add_option("--gens", sa.gens)->required();
    c_sft->add_option("-o,--out", sa.out)->required();
    c_sft->add_option("--schema", sa.schema)->capture_default_str();
    c_sft->callback([&] { action = [&] { return run_build_sft(g, sa); }; });

    ConflictArgs ca;
    auto* c_conf = app.add_subcommand("mine-conflicts", "Pairs misclassified by at least one perspective");
    c_conf->add_option("--data", ca.data)->required();
    c_conf->add_option("--gens", ca.gens)->required();
    c_conf->add_option("-o,--out", ca.out)->required();
    c_conf->add_option("--schema", ca.schema)->capture_default_str();
    c_conf->callback([&] { action = [&] { return run_mine_conflicts(g, ca); }; });

    DpoArgs da;
    auto* c_dpo = app.add_subcommand("build-dpo", "Cross-perspective preference pairs");
    c_dpo->add_option("--conflicts", da.conflicts, "Conflict set JSONL");
    c_dpo->add_option("--data", da.data, "Dataset to mine conflicts from when --conflicts is absent");
    c_dpo->add_option("--gens", da.gens)->required();
    c_dpo->add_option("-o,--out", da.out)->required();
    c_dpo->add_option("--skip-report", da.skip_report, "Skip-count JSON");
    c_dpo->add_flag("--size-matched", da.size_matched, "Single-perspective control of equal size");
    c_dpo->add_option("--schema", da.schema)->capture_default_str();
    c_dpo->callback([&] { action = [&] { return run_build_dpo(g, da); }; });

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train-student", "Train the distilled student");
    c_train->add_option("--data", tr.data, "Training dataset JSONL")->required();
    c_train->add_option("--cots", tr.cots, "Teacher generations JSONL");
    c_train->add_option("--cot-mode", tr.cot_mode, "single or combined")->capture_default_str();
    c_train->add_option("-o,--out", tr.out, "Checkpoint directory")->required();
    c_train->add_option("--history", tr.history, "Metric history JSONL");
    c_train->add_option("--variant", tr.variant, "full, no_guidance or cls_only")
        ->check(CLI::IsMember({"full", "no_guidance", "cls_only"}))
        ->capture_default_str();
    c_train->add_option("--embedder", tr.embedder, "mock or external")->check(CLI::IsMember({"mock", "external"}))->capture_default_str();
    c_train->add_option("--embed-cache", tr.cache, "Embedding cache directory");
    c_train->add_option("--embed-seed", tr.embed_seed, "Seed of the mock embedder")->capture_default_str();
    c_train->add_option("--epochs", tr.epochs);
    c_train->add_option("--lambda", tr.lambda);
    c_train->add_option("--extractor", tr.extractor, "mlp, poly or gat");
    c_train->callback([&] { action = [&] { return run_train_student(g, tr); }; });

    EvalArgs ea;
    auto* c_eval = app.add_subcommand("eval", "Accuracy and macro-F1 of a checkpoint or an averaged ensemble");
    c_eval->add_option("--checkpoint", ea.checkpoint);
    c_eval->add_option("--ensemble", ea.ensemble, "Checkpoints whose softmaxes are averaged");
    c_eval->add_option("--data", ea.data)->required();
    c_eval->add_option("-o,--out", ea.out);
    c_eval->callback([&] {
        if (ea.checkpoint.empty() == ea.ensemble.empty()) throw CLI::ValidationError("eval needs exactly one of --checkpoint or --ensemble");
        action = [&] { return run_eval(g, ea); };
    });

    OracleArgs oa;
    auto* c_or = app.add_subcommand("oracle-report", "Multi-perspective oracle vs single-perspective pass@k");
    c_or->add_option("--data", oa.data)->required();
    c_or->add_option("--gens", oa.gens)->required();
    c_or->add_option("-k,--k", oa.k)->check(CLI::PositiveNumber)->capture_default_str();
    c_or->add_option("-o,--out", oa.out);
    c_or->add_option("--schema", oa.schema)->capture_default_str();
    c_or->callback([&] { action = [&] { return run_oracle_report(g, oa); }; });

    HeatmapArgs ha;
    auto* c_hm = app.add_subcommand("heatmap", "Per perspective and class accuracy grid");
    c_hm->add_option("--data", ha.data)->required();
    c_hm->add_option("--gens", ha.gens)->required();
    c_hm->add_option("--csv", ha.csv);
    c_hm->add_option("--svg", ha.svg);
    c_hm->add_option("--schema", ha.schema)->capture_default_str();
    c_hm->callback([&] { action = [&] { return run_heatmap(g, ha); }; });

    ProbeArgs pa;
    auto* c_probe = app.add_subcommand("probe", "Keyword probes on frozen latent and [CLS] vectors");
    c_probe->add_option("--checkpoint", pa.checkpoint)->required();
    c_probe->add_option("--data", pa.data)->required();
    c_probe->add_option("--cots", pa.cots)->required();
    c_probe->add_option("--cot-mode", pa.cot_mode)->capture_default_str();
    c_probe->add_option("--top-n", pa.top_n)->check(CLI::PositiveNumber)->capture_default_str();
    c_probe->add_option("--runs", pa.runs)->check(CLI::Range(2, 1000))->capture_default_str();
    c_probe->add_option("-o,--out", pa.out);
    c_probe->add_option("--csv", pa.csv);
    c_probe->add_option("--svg", pa.svg);
    c_probe->callback([&] { action = [&] { return run_probe(g, pa); }; });

    BenchArgs ba;
    auto* c_bench = app.add_subcommand("bench", "Parameter and latency audit");
    c_bench->add_option("--checkpoint", ba.checkpoint);
    c_bench->add_option("--variant", ba.variant, "Variant of a freshly initialized model when no checkpoint is given")
        ->capture_default_str();
    c_bench->add_option("--data", ba.data);
    c_bench->add_option("--batch", ba.batch)->check(CLI::PositiveNumber)->capture_default_str();
    c_bench->add_option("--passes", ba.passes)->check(CLI::Range(10, 100000))->capture_default_str();
    c_bench->add_option("--closed-form-d", ba.closed_form_d, "Report closed-form extractor deltas at this width, projection off");
    c_bench->add_option("-o,--out", ba.out);
    c_bench->callback([&] { action = [&] { return run_bench(g, ba); }; });

    CalibrateArgs cal;
    auto* c_cal = app.add_subcommand("calibrate", "Fit score thresholds for tiers 1..4");
    c_cal->add_option("--checkpoint", cal.checkpoint)->required();
    c_cal->add_option("--data", cal.data, "Labeled validation JSONL")->required();
    c_cal->add_option("--target", cal.target, "Precision target, one value or four")->capture_default_str();
    c_cal->add_option("--filter-tier", cal.filter_tier)->check(CLI::Range(0, 4))->capture_default_str();
    c_cal->add_option("-o,--out", cal.out)->required();
    c_cal->callback([&] { action = [&] { return run_calibrate(g, cal); }; });

    ScoreArgs sc;
    auto* c_score = app.add_subcommand("score", "Score, tier and filter a batch");
    c_score->add_option("--checkpoint", sc.checkpoint)->required();
    c_score->add_option("--data", sc.data)->required();
    c_score->add_option("--calibration", sc.calibration)->required();
    c_score->add_option("-o,--out", sc.out, "Kept pairs JSONL")->required();
    c_score->add_option("--audit", sc.audit, "Per-pair score/tier JSONL");
    c_score->callback([&] { action = [&] { return run_score(g, sc); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInvalid;
    }
    try {
        return action ? action() : kExitInvalid;
    } catch (const TransportError& e) {
        std::cerr << "error: external service: " << e.what() << '\n';
        return kExitService;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
}
