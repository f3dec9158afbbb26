// Command line for the replay laboratory: materialize corpora, train
// continual-learning runs, drive the generation pipeline by hand, evaluate
// checkpoints, and produce analysis tables from run artifacts.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sgrep/runner.hpp"

namespace {

using nlohmann::json;

// --set key.path=value patches any config field; the value is parsed as JSON
// when it is JSON and kept as a string otherwise.
void set_path(json& j, const std::string& key, const json& value) {
    json* p = &j;
    size_t at = 0;
    while (true) {
        size_t dot = key.find('.', at);
        std::string seg = key.substr(at, dot == std::string::npos ? dot : dot - at);
        if (seg.empty())
            throw sgrep::InvalidConfig("--set key '" + key + "' has an empty segment");
        if (dot == std::string::npos) {
            (*p)[seg] = value;
            return;
        }
        p = &((*p)[seg]);
        at = dot + 1;
    }
}

void apply_sets(json& j, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw sgrep::InvalidConfig("--set expects key.path=value, got '" + kv + "'");
        json v = json::parse(kv.substr(eq + 1), nullptr, false);
        if (v.is_discarded()) v = kv.substr(eq + 1);
        set_path(j, kv.substr(0, eq), v);
    }
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty())
        std::cout << text;
    else
        sgrep::write_text_file(out_path, text);
}

std::string parent_dir(const std::string& path) {
    auto p = std::filesystem::path(path).parent_path().string();
    return p.empty() ? "." : p;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale laboratory for continual multilingual translation"};
    app.require_subcommand(1);
    int rc = 0;

    // make-data -----------------------------------------------------------
    auto* md = app.add_subcommand("make-data", "materialize a stream's corpora as TSV files");
    struct {
        std::string manifest, out;
        uint64_t seed = 0;
    } mdo;
    md->add_option("--manifest", mdo.manifest, "stream manifest JSON")->required();
    md->add_option("--out", mdo.out, "output directory")->required();
    md->add_option("--seed", mdo.seed, "override the manifest's grammar seed");
    md->callback([&] {
        std::optional<uint64_t> seed;
        if (md->count("--seed")) seed = mdo.seed;
        auto made = sgrep::make_data(sgrep::load_json(mdo.manifest), mdo.out, seed,
                                     parent_dir(mdo.manifest));
        std::cout << "wrote " << made.files.size() << " corpus files and "
                  << made.manifest_path << " (config " << made.config << ")\n";
    });

    // train ----------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "run one strategy over the whole stream");
    struct {
        std::string config, manifest, out, strategy, run_id;
        uint64_t seed = 0;
        int64_t stop_after = -1;
        std::vector<std::string> sets;
    } tro;
    tr->add_option("--config", tro.config, "run config JSON file");
    tr->add_option("--manifest", tro.manifest, "stream manifest JSON");
    tr->add_option("--out", tro.out, "run artifact directory");
    tr->add_option("--strategy", tro.strategy,
                   "incremental|joint|replay_real|sgrep|ewc|agem");
    tr->add_option("--seed", tro.seed, "run seed");
    tr->add_option("--run-id", tro.run_id, "identifier recorded in artifacts");
    tr->add_option("--set", tro.sets, "override any config field: key.path=value");
    tr->add_option("--stop-after", tro.stop_after,
                   "stop after N experiences (resume later); -1 runs to the end");
    tr->callback([&] {
        json j = tro.config.empty() ? json::object() : sgrep::load_json(tro.config);
        auto env = sgrep::env_overrides();
        if (env.contains("SGREP_SEED")) j["seed"] = env.at("SGREP_SEED");
        if (env.contains("SGREP_THREADS")) j["threads"] = env.at("SGREP_THREADS");
        apply_sets(j, tro.sets);
        if (tr->count("--manifest")) j["manifest"] = tro.manifest;
        if (tr->count("--out")) j["out_dir"] = tro.out;
        if (tr->count("--seed")) j["seed"] = tro.seed;
        if (tr->count("--run-id")) j["run_id"] = tro.run_id;
        if (tr->count("--strategy")) {
            if (!j.contains("strategy")) j["strategy"] = json::object();
            j["strategy"]["kind"] = tro.strategy;
        }
        auto cfg = j.get<sgrep::RunConfig>();
        auto res = sgrep::train_run<float>(cfg, tro.stop_after, env);
        std::cout << "run " << cfg.effective_run_id() << ": " << res.completed << "/"
                  << res.total << " experiences"
                  << (res.complete ? "" : " (incomplete, rerun to resume)") << "\n";
        for (size_t r = 0; r < res.matrix.scores.size(); ++r)
            std::cout << "  " << res.matrix.row_labels[r]
                      << " avg_bleu=" << sgrep::fmt_fixed(sgrep::avg_bleu(res.matrix.scores[r]), 2)
                      << "\n";
        std::cout << "artifacts in " << res.out_dir << " (config " << res.config << ")\n";
    });

    // generate-replay -------------------------------------------------------
    auto* gr = app.add_subcommand("generate-replay",
                                  "sample, filter, and back-translate pseudo pairs");
    struct {
        std::string ckpt, manifest, src, tgt, out;
        int64_t n = 0, attempts_factor = 20, threshold = 2;
        uint64_t seed = 1;
    } gro;
    gr->add_option("--ckpt", gro.ckpt, "checkpoint file")->required();
    gr->add_option("--manifest", gro.manifest, "stream manifest JSON")->required();
    gr->add_option("--src-lang", gro.src, "source language code")->required();
    gr->add_option("--tgt-lang", gro.tgt, "target language code")->required();
    gr->add_option("--n", gro.n, "pairs to generate")->required();
    gr->add_option("--out", gro.out, "output directory")->required();
    gr->add_option("--seed", gro.seed, "generation seed");
    gr->add_option("--attempts-factor", gro.attempts_factor, "attempt budget per requested pair");
    gr->add_option("--threshold", gro.threshold, "reject candidates with this many unknown words");
    gr->callback([&] {
        auto res = sgrep::generate_replay_files<float>(gro.ckpt, gro.manifest, gro.src, gro.tgt,
                                                       gro.n, gro.out, gro.seed,
                                                       gro.attempts_factor, gro.threshold);
        std::cout << "accepted " << res.pairs.size() << "/" << gro.n << " (attempted "
                  << res.report.attempted << ", filtered " << res.report.rejected_filter
                  << ", duplicates " << res.report.rejected_duplicate << ")\n";
        if (res.exhausted) {
            std::cerr << "error: " << res.error << "\n";
            rc = 1;
        }
    });

    // evaluate ---------------------------------------------------------------
    auto* ev = app.add_subcommand("evaluate", "score a checkpoint on every stream direction");
    struct {
        std::string ckpt, manifest, mode = "greedy", out;
        double temperature = 1.0;
        int64_t top_k = 0, beam_size = 4, max_len = 32;
        uint64_t seed = 0;
    } evo;
    ev->add_option("--ckpt", evo.ckpt, "checkpoint file")->required();
    ev->add_option("--manifest", evo.manifest, "stream manifest JSON")->required();
    ev->add_option("--mode", evo.mode, "greedy|sample|beam");
    ev->add_option("--temperature", evo.temperature, "sampling temperature");
    ev->add_option("--top-k", evo.top_k, "sampling candidate pool");
    ev->add_option("--beam-size", evo.beam_size, "beam width");
    ev->add_option("--max-len", evo.max_len, "decoding length cap");
    ev->add_option("--seed", evo.seed, "sampling seed");
    ev->add_option("--out", evo.out, "write the report here instead of stdout");
    ev->callback([&] {
        sgrep::DecodeConfig dcfg;
        dcfg.mode = sgrep::decode_mode_from(evo.mode);
        dcfg.temperature = evo.temperature;
        dcfg.top_k = evo.top_k;
        dcfg.beam_size = evo.beam_size;
        dcfg.max_len = evo.max_len;
        dcfg.seed = evo.seed;
        auto res = sgrep::evaluate_checkpoint<float>(evo.ckpt, evo.manifest, dcfg);
        json out{{"directions", res.directions},
                 {"bleu", res.bleu},
                 {"avg_bleu", sgrep::avg_bleu(res.bleu)},
                 {"decode", dcfg},
                 {"checkpoint_meta", res.meta}};
        emit(out.dump(2) + "\n", evo.out);
    });

    // analyze ----------------------------------------------------------------
    auto* an = app.add_subcommand("analyze", "corpus and run analysis tables");
    an->require_subcommand(1);

    auto* ov = an->add_subcommand("overlap", "top-k token overlap between two corpora");
    struct {
        std::string a, b, a_column = "both", b_column = "both", out;
        std::vector<int64_t> ks{100, 500, 1000, 5000};
    } ovo;
    ov->add_option("--a", ovo.a, "first corpus TSV")->required();
    ov->add_option("--b", ovo.b, "second corpus TSV")->required();
    ov->add_option("--a-column", ovo.a_column, "src|tgt|both");
    ov->add_option("--b-column", ovo.b_column, "src|tgt|both");
    ov->add_option("--ks", ovo.ks, "top-k sizes");
    ov->add_option("--out", ovo.out, "write the CSV here instead of stdout");
    ov->callback([&] {
        auto fa = sgrep::token_frequencies(
            sgrep::side_sentences(sgrep::read_pairs_flexible(ovo.a), ovo.a_column));
        auto fb = sgrep::token_frequencies(
            sgrep::side_sentences(sgrep::read_pairs_flexible(ovo.b), ovo.b_column));
        auto report = sgrep::overlap_report(fa, fb, ovo.ks);
        json invocation{{"a", ovo.a},
                        {"b", ovo.b},
                        {"a_column", ovo.a_column},
                        {"b_column", ovo.b_column},
                        {"ks", ovo.ks}};
        emit(sgrep::render_overlap_csv(report, sgrep::config_hash(invocation)), ovo.out);
    });

    auto* lk = an->add_subcommand("leakage", "training sentences copied into generated pairs");
    struct {
        std::string generated, train, out;
    } lko;
    lk->add_option("--generated", lko.generated, "generated pairs TSV")->required();
    lk->add_option("--train", lko.train, "training pairs TSV")->required();
    lk->add_option("--out", lko.out, "write the report here instead of stdout");
    lk->callback([&] {
        auto report = sgrep::leakage_report(sgrep::read_pairs_flexible(lko.generated),
                                            sgrep::read_pairs_flexible(lko.train));
        json invocation{{"generated", lko.generated}, {"train", lko.train}};
        json out{{"config", sgrep::config_hash(invocation)}, {"report", report}};
        emit(out.dump(2) + "\n", lko.out);
    });

    auto* dv = an->add_subcommand("diversity", "self-BLEU of a corpus column");
    struct {
        std::string input, column = "tgt", out;
        int64_t sample = 5000;
        int runs = 10;
        uint64_t seed = 1;
    } dvo;
    dv->add_option("--input", dvo.input, "corpus TSV")->required();
    dv->add_option("--column", dvo.column, "src|tgt|both");
    dv->add_option("--sample", dvo.sample, "sentences per run");
    dv->add_option("--runs", dvo.runs, "number of sampled runs");
    dv->add_option("--seed", dvo.seed, "sampling seed");
    dv->add_option("--out", dvo.out, "write the report here instead of stdout");
    dv->callback([&] {
        auto sentences = sgrep::side_sentences(sgrep::read_pairs_flexible(dvo.input), dvo.column);
        double sb = sgrep::self_bleu(sentences, dvo.sample, dvo.runs, dvo.seed);
        json invocation{{"input", dvo.input},
                        {"column", dvo.column},
                        {"sample", dvo.sample},
                        {"runs", dvo.runs},
                        {"seed", dvo.seed}};
        json out{{"config", sgrep::config_hash(invocation)},
                 {"self_bleu", sb},
                 {"sentences", sentences.size()}};
        emit(out.dump(2) + "\n", dvo.out);
    });

    auto* cs = an->add_subcommand("stats", "length and duplicate statistics of a corpus");
    struct {
        std::string input, out;
    } cso;
    cs->add_option("--input", cso.input, "corpus TSV")->required();
    cs->add_option("--out", cso.out, "write the report here instead of stdout");
    cs->callback([&] {
        auto stats = sgrep::corpus_stats(sgrep::read_pairs_flexible(cso.input));
        json invocation{{"input", cso.input}};
        json out{{"config", sgrep::config_hash(invocation)}, {"stats", stats}};
        emit(out.dump(2) + "\n", cso.out);
    });

    // report -----------------------------------------------------------------
    auto* rp = app.add_subcommand("report", "plot-ready CSV series from a finished run");
    struct {
        std::string run, out, joint;
    } rpo;
    rp->add_option("--run", rpo.run, "run artifact directory")->required();
    rp->add_option("--out", rpo.out, "output directory (default <run>/plots)");
    rp->add_option("--joint", rpo.joint, "upper-bound run's scores.json for the gap");
    rp->callback([&] {
        std::string out = rpo.out.empty()
                              ? (std::filesystem::path(rpo.run) / "plots").string()
                              : rpo.out;
        auto files = sgrep::write_report(rpo.run, out, rpo.joint);
        std::cout << "wrote " << files.forgetting_csv << " and " << files.avg_csv << "\n";
        if (files.delta)
            std::cout << "performance gap vs upper bound: " << sgrep::fmt_fixed(*files.delta, 2)
                      << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
