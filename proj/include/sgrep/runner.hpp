// Config-driven experiment orchestration: materialize corpora, run a strategy
// over a stream with per-experience checkpoints and resumable state, evaluate
// checkpoints, surface the generation pipeline as files, and emit analysis
// reports. Every artifact is reproducible byte for byte from (config, seed);
// wall-clock timings live in a separate sidecar so the promise holds.
#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sgrep/checkpoint.hpp"
#include "sgrep/strategies.hpp"

namespace sgrep {

// ---------------------------------------------------------------------------
// Hashing and formatting.

inline std::string hash_hex(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// nlohmann objects keep keys sorted, so dump() is canonical for equal values.
inline std::string config_hash(const nlohmann::json& j) { return hash_hex(j.dump()); }

inline std::string vocab_fingerprint(const Vocabulary& v) {
    std::string s = token_mode_name(v.mode);
    for (const auto& c : v.languages) s += '\x1f' + c;
    for (const auto& t : v.id_to_token) s += '\x1e' + t;
    return hash_hex(s);
}

inline std::string fmt_fixed(double x, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    out.close();
    if (!out) throw IoError("write failed: " + path);
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Run configuration.

struct RunConfig {
    std::string manifest;
    std::string out_dir = "run";
    std::string run_id;  // empty: "<strategy>-s<seed>"
    uint64_t seed = 1;
    int64_t threads = 1;
    StrategyConfig strategy;
    ModelConfig model;    // vocab_size 0 is filled from the stream vocabulary
    DecodeConfig decode;  // evaluation decoding

    std::string effective_run_id() const {
        if (!run_id.empty()) return run_id;
        return strategy_kind_name(strategy.kind) + "-s" + std::to_string(seed);
    }

    void validate(bool check_paths = false) const {
        if (manifest.empty()) throw InvalidConfig("run config needs a manifest path");
        if (out_dir.empty()) throw InvalidConfig("run config needs an output directory");
        if (threads < 1) throw InvalidConfig("threads must be >= 1");
        strategy.validate();
        if (model.vocab_size != 0) model.validate();
        if (check_paths && !std::filesystem::exists(manifest))
            throw IoError("manifest not found: " + manifest);
    }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json{{"manifest", c.manifest}, {"out_dir", c.out_dir},
                       {"run_id", c.run_id},     {"seed", c.seed},
                       {"threads", c.threads},   {"strategy", c.strategy},
                       {"model", c.model},       {"decode", c.decode}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
    RunConfig d;
    c.manifest = j.value("manifest", d.manifest);
    c.out_dir = j.value("out_dir", d.out_dir);
    c.run_id = j.value("run_id", d.run_id);
    c.seed = j.value("seed", d.seed);
    c.threads = j.value("threads", d.threads);
    if (j.contains("strategy")) j.at("strategy").get_to(c.strategy);
    if (j.contains("model")) j.at("model").get_to(c.model);
    if (j.contains("decode")) j.at("decode").get_to(c.decode);
    c.validate();
}

// SGREP_SEED and SGREP_THREADS, when set, come back as integers keyed by
// variable name; the caller decides where they rank against flags and files.
inline nlohmann::json env_overrides() {
    nlohmann::json env = nlohmann::json::object();
    if (const char* s = std::getenv("SGREP_SEED")) {
        try {
            env["SGREP_SEED"] = static_cast<uint64_t>(std::stoull(s));
        } catch (const std::exception&) {
            throw InvalidConfig(std::string("SGREP_SEED is not an integer: ") + s);
        }
    }
    if (const char* s = std::getenv("SGREP_THREADS")) {
        int64_t t = 0;
        try {
            t = std::stoll(s);
        } catch (const std::exception&) {
            throw InvalidConfig(std::string("SGREP_THREADS is not an integer: ") + s);
        }
        if (t < 1) throw InvalidConfig("SGREP_THREADS must be >= 1");
        env["SGREP_THREADS"] = t;
    }
    return env;
}

inline nlohmann::json apply_env_overrides(RunConfig& cfg) {
    auto env = env_overrides();
    if (env.contains("SGREP_SEED")) cfg.seed = env.at("SGREP_SEED").get<uint64_t>();
    if (env.contains("SGREP_THREADS")) cfg.threads = env.at("SGREP_THREADS").get<int64_t>();
    return env;
}

// What makes two runs "the same run": the resolved config with the
// execution-only fields dropped and the manifest replaced by its content
// hash, so output location, thread count, and file paths don't split
// otherwise identical runs.
inline nlohmann::json run_identity(const RunConfig& cfg, const nlohmann::json& manifest) {
    nlohmann::json j = cfg;
    j.erase("out_dir");
    j.erase("threads");
    j["manifest"] = config_hash(manifest);
    return j;
}

// ---------------------------------------------------------------------------
// Corpus materialization (make-data).

inline nlohmann::json language_spec_json(const SynthLanguageSpec& s) {
    nlohmann::json j{{"kind", transform_kind_name(s.kind)}};
    if (s.kind == TransformKind::caesar) j["shift"] = s.shift;
    if (s.kind == TransformKind::word_swap) j["perm"] = s.perm;
    return j;
}

struct MadeData {
    std::vector<std::string> files;   // relative to out_dir
    std::string manifest_path;        // derived path-mode manifest
    std::string config;               // hash of the source manifest
};

// Writes one TSV per split per experience (base direction only; loading
// re-expands both directions), a path-mode manifest that reproduces the
// stream, and a sidecar carrying the config hash.
inline MadeData make_data(nlohmann::json manifest, const std::string& out_dir,
                          std::optional<uint64_t> seed = std::nullopt,
                          const std::string& base_dir = ".") {
    if (seed) manifest["grammar_seed"] = *seed;
    Stream stream = make_stream(manifest, base_dir);
    std::filesystem::create_directories(out_dir);

    MadeData made;
    made.config = config_hash(manifest);

    nlohmann::json derived{{"grammar_seed", stream.grammar_seed},
                           {"vocab",
                            {{"min_freq", stream.min_freq},
                             {"mode", token_mode_name(stream.mode)}}},
                           {"experiences", nlohmann::json::array()}};
    nlohmann::json langs = nlohmann::json::object();
    for (const auto& [code, spec] : stream.languages) langs[code] = language_spec_json(spec);
    if (!langs.empty()) derived["languages"] = langs;

    for (const auto& exp : stream.experiences) {
        nlohmann::json je{{"id", exp.id}, {"src_lang", exp.l1}, {"tgt_lang", exp.l2}};
        const std::array<std::pair<const char*, const std::vector<ParallelPair>*>, 3> splits{
            {{"train", &exp.train}, {"dev", &exp.dev}, {"test", &exp.test}}};
        for (const auto& [split, pairs] : splits) {
            std::string name = "exp" + std::to_string(exp.id) + "_" + split + ".tsv";
            std::vector<std::pair<std::string, std::string>> base;
            for (const auto& p : *pairs)
                if (p.src_lang == exp.l1) base.emplace_back(p.src, p.tgt);
            write_tsv((std::filesystem::path(out_dir) / name).string(), base);
            made.files.push_back(name);
            je[split] = {{"path", name}};
        }
        derived["experiences"].push_back(je);
    }

    made.manifest_path = (std::filesystem::path(out_dir) / "manifest.json").string();
    write_json_file(made.manifest_path, derived);
    write_json_file((std::filesystem::path(out_dir) / "data_meta.json").string(),
                    {{"config", made.config},
                     {"grammar_seed", stream.grammar_seed},
                     {"files", made.files}});
    return made;
}

// ---------------------------------------------------------------------------
// Artifact readers/writers shared by train and the standalone tools.

inline void write_pairs_tsv(const std::string& path, const std::vector<ParallelPair>& pairs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& p : pairs)
        out << p.src << '\t' << p.tgt << '\t' << p.src_lang << '\t' << p.tgt_lang << '\t'
            << provenance_name(p.provenance) << '\n';
    out.close();
    if (!out) throw IoError("write failed: " + path);
}

inline std::vector<ParallelPair> read_pairs_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<ParallelPair> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == EOF) break;
        std::vector<std::string> cols;
        size_t at = 0;
        while (true) {
            size_t tab = line.find('\t', at);
            cols.push_back(line.substr(at, tab == std::string::npos ? tab : tab - at));
            if (tab == std::string::npos) break;
            at = tab + 1;
        }
        if (cols.size() != 5)
            throw IoError(path + ":" + std::to_string(lineno) + ": expected 5 columns, got " +
                          std::to_string(cols.size()));
        out.push_back({cols[0], cols[1], cols[2], cols[3], provenance_from(cols[4])});
    }
    return out;
}

// Three-column dump of generated pairs (src, tgt, provenance), the shape the
// inspection tools and leakage analyzer consume.
inline void write_generated_tsv(const std::string& path,
                                const std::vector<ParallelPair>& pairs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& p : pairs)
        out << p.src << '\t' << p.tgt << '\t' << provenance_name(p.provenance) << '\n';
    out.close();
    if (!out) throw IoError("write failed: " + path);
}

// Accepts 2-column (src, tgt), 3-column (src, tgt, provenance), and 5-column
// buffer-snapshot rows.
inline std::vector<ParallelPair> read_pairs_flexible(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<ParallelPair> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == EOF) break;
        std::vector<std::string> cols;
        size_t at = 0;
        while (true) {
            size_t tab = line.find('\t', at);
            cols.push_back(line.substr(at, tab == std::string::npos ? tab : tab - at));
            if (tab == std::string::npos) break;
            at = tab + 1;
        }
        ParallelPair p;
        if (cols.size() == 2) {
            p = {cols[0], cols[1], "", "", Provenance::real};
        } else if (cols.size() == 3) {
            p = {cols[0], cols[1], "", "", provenance_from(cols[2])};
        } else if (cols.size() == 5) {
            p = {cols[0], cols[1], cols[2], cols[3], provenance_from(cols[4])};
        } else {
            throw IoError(path + ":" + std::to_string(lineno) + ": expected 2, 3, or 5 columns");
        }
        out.push_back(std::move(p));
    }
    return out;
}

// Appendix-style rejects dump: each filtered sentence followed by a marker
// line with carets under the tokens missing from the target lexicon. Only
// sentences at or above the rejection threshold appear.
inline std::string render_rejects(const GenerationReport& report, const LexiconFilter& filter,
                                  const std::string& l_t) {
    const auto& known = filter_words(filter, l_t);
    std::string out;
    for (const auto& [sentence, w_hat] : report.rejects) {
        if (w_hat < filter.threshold) continue;
        std::string marks;
        for (const auto& tok : split_ws(sentence)) {
            if (!marks.empty()) marks += ' ';
            marks += std::string(tok.size(), known.count(tok) ? ' ' : '^');
        }
        while (!marks.empty() && marks.back() == ' ') marks.pop_back();
        out += sentence + '\n' + marks + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training runs with per-experience checkpoints and resume.

namespace detail {

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> anchors_to_extras(
    const std::vector<FisherState<T>>& anchors) {
    std::vector<std::pair<std::string, Tensor<T>>> extras;
    for (size_t a = 0; a < anchors.size(); ++a) {
        std::string base = "ewc." + std::to_string(a) + ".";
        for (const auto& [name, t] : anchors[a].fisher)
            extras.emplace_back(base + "fisher." + name, t);
        for (const auto& [name, t] : anchors[a].theta_star)
            extras.emplace_back(base + "star." + name, t);
    }
    return extras;
}

template <typename T>
std::vector<FisherState<T>> anchors_from_extras(
    const std::vector<std::pair<std::string, Tensor<T>>>& extras, int64_t n_anchors) {
    std::vector<FisherState<T>> anchors(static_cast<size_t>(n_anchors));
    for (const auto& [name, t] : extras) {
        if (name.rfind("ewc.", 0) != 0) continue;
        size_t dot = name.find('.', 4);
        if (dot == std::string::npos) throw IoError("malformed anchor entry: " + name);
        auto idx = static_cast<size_t>(std::stoll(name.substr(4, dot - 4)));
        if (idx >= anchors.size()) throw IoError("anchor index out of range: " + name);
        std::string rest = name.substr(dot + 1);
        if (rest.rfind("fisher.", 0) == 0)
            anchors[idx].fisher.emplace_back(rest.substr(7), t);
        else if (rest.rfind("star.", 0) == 0)
            anchors[idx].theta_star.emplace_back(rest.substr(5), t);
        else
            throw IoError("malformed anchor entry: " + name);
    }
    return anchors;
}

}  // namespace detail

struct TrainRunResult {
    ScoreMatrix matrix;
    int64_t completed = 0;
    int64_t total = 0;
    std::string config;  // hash
    std::string out_dir;
    bool complete = false;
};

// Deterministic metrics table derived from the score matrix; wallclock_s is
// pinned to 0.000 so reruns are byte-identical (real timings: timings.csv).
inline std::string render_metrics_csv(const std::string& run_id, const std::string& strategy,
                                      const ScoreMatrix& m, const std::vector<int64_t>& steps,
                                      const std::string& config) {
    std::string out = "# sgrep-metrics v1 config=" + config + "\n";
    out += "run_id,strategy,experience_trained,direction,bleu,step,wallclock_s\n";
    for (size_t r = 0; r < m.scores.size(); ++r)
        for (size_t d = 0; d < m.directions.size(); ++d)
            out += run_id + "," + strategy + "," + m.row_labels[r] + "," + m.directions[d] +
                   "," + fmt_fixed(m.scores[r][d]) + "," + std::to_string(steps[r]) + ",0.000\n";
    return out;
}

template <typename T = float>
TrainRunResult train_run(RunConfig cfg, int64_t stop_after = -1,
                         const nlohmann::json& env = nlohmann::json::object()) {
    cfg.validate(true);
    nlohmann::json manifest_json = load_json(cfg.manifest);
    Stream stream = make_stream(manifest_json, std::filesystem::path(cfg.manifest)
                                                   .parent_path()
                                                   .string());
    Vocabulary vocab = stream_vocab(stream);
    if (cfg.model.vocab_size == 0) cfg.model.vocab_size = vocab.size();
    if (cfg.model.vocab_size != vocab.size())
        throw InvalidConfig("config vocab_size " + std::to_string(cfg.model.vocab_size) +
                            " does not match the stream vocabulary (" +
                            std::to_string(vocab.size()) + ")");
    cfg.model.dropout = cfg.strategy.dropout;
    cfg.model.validate();
    // Evaluation decoding cannot run past the model's position table.
    cfg.decode.max_len = std::min(cfg.decode.max_len, cfg.model.max_len);

    nlohmann::json resolved = cfg;
    std::string config = config_hash(run_identity(cfg, manifest_json));
    std::string run_id = cfg.effective_run_id();
    std::string fp = vocab_fingerprint(vocab);
    auto path = [&](const std::string& name) {
        return (std::filesystem::path(cfg.out_dir) / name).string();
    };

    std::filesystem::create_directories(cfg.out_dir);
    if (std::filesystem::exists(path("config.json"))) {
        auto existing = load_json(path("config.json"));
        if (existing.value("config", "") != config)
            throw InvalidConfig(cfg.out_dir + " holds a run with a different config (" +
                                existing.value("config", "?") + " vs " + config + ")");
    } else {
        write_json_file(path("config.json"), {{"config", config},
                                              {"run_id", run_id},
                                              {"env", env},
                                              {"run", resolved},
                                              {"vocab_fingerprint", fp}});
    }

    auto model = init_model<T>(cfg.model, cfg.seed);
    auto st = init_stream_state<T>(stream, cfg.strategy, cfg.seed);
    std::vector<int64_t> steps_after;

    if (std::filesystem::exists(path("state.json"))) {
        auto state = load_json(path("state.json"));
        if (state.value("config", "") != config)
            throw InvalidConfig("state in " + cfg.out_dir + " belongs to a different config");
        auto completed = state.at("completed").template get<int64_t>();
        steps_after = state.at("steps_after").template get<std::vector<int64_t>>();
        if (completed > 0) {
            auto scores = load_json(path("scores.json"));
            st.matrix = scores.at("matrix").template get<ScoreMatrix>();
            if (static_cast<int64_t>(st.matrix.scores.size()) != completed)
                throw IoError("scores.json does not match state.json in " + cfg.out_dir);
            std::string last = st.matrix.row_labels.back();
            auto ck = load_checkpoint<T>(path("ckpt_" + last + ".bin"));
            if (ck.meta.value("vocab_fingerprint", fp) != fp)
                throw InvalidConfig("checkpoint vocabulary does not match the manifest");
            model = std::move(ck.params);
            auto n_anchors = ck.meta.value("ewc_anchors", int64_t{0});
            if (n_anchors > 0) st.anchors = detail::anchors_from_extras(ck.extras, n_anchors);
            std::string buf_path = path("buffer_" + last + ".tsv");
            if (std::filesystem::exists(buf_path)) st.buffer = read_buffer_snapshot(buf_path);
            st.next_experience =
                cfg.strategy.kind == StrategyKind::joint ? st.total_experiences : completed;
        }
    }

    auto persist = [&](bool done) {
        write_json_file(path("scores.json"), {{"config", config},
                                              {"run_id", run_id},
                                              {"matrix", st.matrix},
                                              {"complete", done}});
        write_text_file(path("metrics.csv"),
                        render_metrics_csv(run_id, strategy_kind_name(cfg.strategy.kind),
                                           st.matrix, steps_after, config));
        write_json_file(path("state.json"),
                        {{"config", config},
                         {"completed", static_cast<int64_t>(st.matrix.scores.size())},
                         {"total", st.total_experiences},
                         {"steps_after", steps_after},
                         {"complete", done}});
    };

    int64_t ran = 0;
    while (st.next_experience < st.total_experiences && (stop_after < 0 || ran < stop_after)) {
        run_next_experience(st, model, stream, vocab, cfg.strategy, cfg.decode, cfg.seed);
        ran += 1;
        const std::string& label = st.matrix.row_labels.back();
        int64_t prev = steps_after.empty() ? 0 : steps_after.back();
        steps_after.push_back(prev + static_cast<int64_t>(st.logs.back().steps.size()));

        nlohmann::json meta{{"run_id", run_id},
                            {"config", config},
                            {"experience", static_cast<int64_t>(st.matrix.scores.size()) - 1},
                            {"label", label},
                            {"strategy", strategy_kind_name(cfg.strategy.kind)},
                            {"seed", cfg.seed},
                            {"vocab_fingerprint", fp},
                            {"ewc_anchors", static_cast<int64_t>(st.anchors.size())}};
        save_checkpoint(path("ckpt_" + label + ".bin"), model, meta,
                        detail::anchors_to_extras(st.anchors));
        if (strategy_uses_buffer(cfg.strategy.kind) && st.buffer.capacity > 0) {
            write_buffer_snapshot(st.buffer, path("buffer_" + label + ".tsv"));
            write_json_file(path("buffer_" + label + ".tsv.meta.json"), {{"config", config}});
        }
        if (!st.last_generated.empty()) {
            write_generated_tsv(path("generated_" + label + ".tsv"), st.last_generated);
            nlohmann::json gmeta{{"config", config}, {"directions", nlohmann::json::array()}};
            std::string rejects;
            auto filter = make_filter(stream);
            for (const auto& [dir, report] : st.last_reports) {
                gmeta["directions"].push_back({{"direction", dir},
                                               {"attempted", report.attempted},
                                               {"rejected_filter", report.rejected_filter},
                                               {"rejected_duplicate", report.rejected_duplicate}});
                rejects += render_rejects(report, filter, dir.substr(dir.find('-') + 1));
            }
            write_json_file(path("generated_" + label + ".tsv.meta.json"), gmeta);
            write_text_file(path("rejects_" + label + ".txt"), rejects);
        }

        bool done = st.next_experience >= st.total_experiences;
        persist(done);

        bool fresh = !std::filesystem::exists(path("timings.csv")) ||
                     std::filesystem::file_size(path("timings.csv")) == 0;
        std::ofstream timings(path("timings.csv"), std::ios::app);
        if (fresh)
            timings << "# sgrep-timings v1 config=" << config << "\n"
                    << "run_id,experience_trained,wallclock_s\n";
        timings << run_id << "," << label << "," << fmt_fixed(st.logs.back().wallclock_s, 3)
                << "\n";
    }

    TrainRunResult res;
    res.matrix = st.matrix;
    res.completed = static_cast<int64_t>(st.matrix.scores.size());
    res.total = st.total_experiences;
    res.config = config;
    res.out_dir = cfg.out_dir;
    res.complete = st.next_experience >= st.total_experiences;
    return res;
}

// ---------------------------------------------------------------------------
// Checkpoint evaluation.

struct EvalResult {
    std::vector<std::string> directions;
    std::vector<double> bleu;
    nlohmann::json meta;
};

template <typename T = float>
EvalResult evaluate_checkpoint(const std::string& ckpt_path, const std::string& manifest_path,
                               const DecodeConfig& dcfg) {
    auto ck = load_checkpoint<T>(ckpt_path);
    Stream stream = make_stream_from_file(manifest_path);
    Vocabulary vocab = stream_vocab(stream);
    std::string fp = vocab_fingerprint(vocab);
    if (ck.meta.value("vocab_fingerprint", fp) != fp)
        throw InvalidConfig("checkpoint vocabulary does not match the manifest");
    if (ck.params.cfg.vocab_size != vocab.size())
        throw InvalidConfig("checkpoint vocab_size does not match the stream vocabulary");
    EvalResult r;
    r.directions = direction_labels(stream);
    DecodeConfig clamped = dcfg;
    clamped.max_len = std::min(clamped.max_len, ck.params.cfg.max_len);
    r.bleu = evaluate_all_directions(ck.params, vocab, stream, clamped);
    r.meta = ck.meta;
    return r;
}

// ---------------------------------------------------------------------------
// Standalone generation (generate-replay).

struct GenerateFilesResult {
    std::vector<ParallelPair> pairs;
    GenerationReport report;
    bool exhausted = false;
    std::string error;
};

template <typename T = float>
GenerateFilesResult generate_replay_files(const std::string& ckpt_path,
                                          const std::string& manifest_path,
                                          const std::string& l_s, const std::string& l_t,
                                          int64_t n, const std::string& out_dir, uint64_t seed,
                                          int64_t attempts_factor = 20, int64_t threshold = 2) {
    auto ck = load_checkpoint<T>(ckpt_path);
    Stream stream = make_stream_from_file(manifest_path);
    Vocabulary vocab = stream_vocab(stream);
    std::string fp = vocab_fingerprint(vocab);
    if (ck.meta.value("vocab_fingerprint", fp) != fp)
        throw InvalidConfig("checkpoint vocabulary does not match the manifest");
    bool known_s = false, known_t = false;
    for (const auto& c : stream.codes) {
        known_s |= c == l_s;
        known_t |= c == l_t;
    }
    if (!known_s || !known_t)
        throw UnknownLanguage("direction " + l_s + "-" + l_t + " is not in the stream");

    auto filter = make_filter(stream, threshold);
    auto budget = make_budget(n, vocab.size(), ck.params.cfg.max_len - 2, seed);
    budget.max_attempts = attempts_factor * n;

    std::filesystem::create_directories(out_dir);
    nlohmann::json invocation{{"ckpt", ckpt_path},   {"manifest", manifest_path},
                              {"src_lang", l_s},     {"tgt_lang", l_t},
                              {"n", n},              {"seed", seed},
                              {"attempts_factor", attempts_factor},
                              {"threshold", threshold}};
    std::string config = config_hash(invocation);
    auto path = [&](const std::string& name) {
        return (std::filesystem::path(out_dir) / name).string();
    };

    GenerateFilesResult res;
    try {
        res.pairs = generate_replay_data(ck.params, vocab, n, l_s, l_t, budget, filter,
                                         &res.report);
    } catch (const BudgetExhausted& e) {
        res.exhausted = true;
        res.error = e.what();
    }
    write_generated_tsv(path("generated.tsv"), res.pairs);
    write_text_file(path("rejects.txt"), render_rejects(res.report, filter, l_t));
    write_json_file(path("generated.tsv.meta.json"),
                    {{"config", config},
                     {"invocation", invocation},
                     {"accepted", static_cast<int64_t>(res.pairs.size())},
                     {"attempted", res.report.attempted},
                     {"rejected_filter", res.report.rejected_filter},
                     {"rejected_duplicate", res.report.rejected_duplicate},
                     {"exhausted", res.exhausted}});
    return res;
}

// ---------------------------------------------------------------------------
// Analysis wrappers (analyze, report).

inline std::vector<std::string> side_sentences(const std::vector<ParallelPair>& pairs,
                                               const std::string& column) {
    std::vector<std::string> out;
    for (const auto& p : pairs) {
        if (column == "src" || column == "both") out.push_back(p.src);
        if (column == "tgt" || column == "both") out.push_back(p.tgt);
    }
    if (out.empty()) throw EmptyInput("no sentences selected from column '" + column + "'");
    return out;
}

// Wide CSV mirroring the top-k grid: one column per k, one percentage row.
inline std::string render_overlap_csv(const OverlapReport& r, const std::string& config) {
    std::string head = "# sgrep-overlap v1 config=" + config + "\n";
    std::string ks, pcts;
    for (size_t i = 0; i < r.ks.size(); ++i) {
        if (i) {
            ks += ',';
            pcts += ',';
        }
        ks += "k" + std::to_string(r.ks[i]);
        pcts += fmt_fixed(r.pct[i], 2);
    }
    return head + ks + "\n" + pcts + "\n";
}

inline std::string render_forgetting_csv(const ScoreMatrix& m,
                                         const std::vector<std::string>& first_directions,
                                         const std::string& config) {
    auto series = forgetting_series(m, first_directions);
    std::string out = "# sgrep-forgetting v1 config=" + config + "\n";
    out += "checkpoint,avg_first_experience_bleu\n";
    for (size_t i = 0; i < series.size(); ++i)
        out += m.row_labels[i] + "," + fmt_fixed(series[i]) + "\n";
    return out;
}

inline std::string render_avg_csv(const ScoreMatrix& m, const std::string& config) {
    std::string out = "# sgrep-avg v1 config=" + config + "\n";
    out += "checkpoint,avg_bleu\n";
    for (size_t i = 0; i < m.scores.size(); ++i)
        out += m.row_labels[i] + "," + fmt_fixed(avg_bleu(m.scores[i])) + "\n";
    return out;
}

struct ReportFiles {
    std::string forgetting_csv;
    std::string avg_csv;
    std::optional<double> delta;  // vs the upper bound, when one is given
};

// Plot-ready series from a finished run; pass the upper-bound run's
// scores.json to add the performance-gap number.
inline ReportFiles write_report(const std::string& run_dir, const std::string& out_dir,
                                const std::string& joint_scores_path = "") {
    auto scores = load_json((std::filesystem::path(run_dir) / "scores.json").string());
    auto matrix = scores.at("matrix").get<ScoreMatrix>();
    std::string config = scores.value("config", "");
    if (matrix.scores.empty()) throw EmptyInput("run has no evaluated experiences yet");

    // Directions are laid out per experience in stream order and every
    // experience is a bidirectional pair, so the first experience owns the
    // leading directions.size()/total columns.
    auto state = load_json((std::filesystem::path(run_dir) / "state.json").string());
    auto total = std::max<int64_t>(1, state.at("total").get<int64_t>());
    auto per_exp = std::max<size_t>(1, matrix.directions.size() / static_cast<size_t>(total));
    std::vector<std::string> first_directions(matrix.directions.begin(),
                                              matrix.directions.begin() + per_exp);

    std::filesystem::create_directories(out_dir);
    ReportFiles files;
    files.forgetting_csv = (std::filesystem::path(out_dir) / "forgetting.csv").string();
    files.avg_csv = (std::filesystem::path(out_dir) / "avg_bleu.csv").string();
    write_text_file(files.forgetting_csv,
                    render_forgetting_csv(matrix, first_directions, config));
    write_text_file(files.avg_csv, render_avg_csv(matrix, config));

    if (!joint_scores_path.empty()) {
        auto upper = load_json(joint_scores_path).at("matrix").get<ScoreMatrix>();
        if (upper.scores.empty()) throw EmptyInput("upper-bound run has no scores");
        files.delta = delta_lp(upper.scores.back(), matrix.scores.back());
        write_text_file((std::filesystem::path(out_dir) / "delta.csv").string(),
                        "# sgrep-delta v1 config=" + config + "\ndelta_lp\n" +
                            fmt_fixed(*files.delta) + "\n");
    }
    return files;
}

}  // namespace sgrep
