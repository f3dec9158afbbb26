// Experience-stream assembly: manifest parsing, synthetic corpus generation,
// TSV loading, per-language lexicons, and whole-stream vocabulary input.
#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sgrep/text.hpp"
#include "sgrep/vocab.hpp"

namespace sgrep {

struct Experience {
    int id = 0;
    std::string l1, l2;  // the bidirectional language pair
    std::vector<std::pair<std::string, std::string>> directions;  // (src, tgt) codes
    std::vector<ParallelPair> train, dev, test;
};

struct Stream {
    std::vector<Experience> experiences;
    std::map<std::string, SynthLanguageSpec> languages;      // synthetic specs by code
    std::map<std::string, std::set<std::string>> lexicons;   // code -> word set
    std::vector<std::string> codes;                          // all codes, sorted
    int min_freq = 1;
    TokenMode mode = TokenMode::word;
    uint64_t grammar_seed = 0;
};

namespace detail {

inline SynthLanguageSpec parse_language_spec(const std::string& code, const nlohmann::json& j) {
    SynthLanguageSpec spec;
    spec.code = code;
    if (!j.contains("kind")) throw ManifestError("language '" + code + "' is missing kind");
    spec.kind = transform_kind_from(j.at("kind").get<std::string>());
    if (spec.kind == TransformKind::caesar) {
        if (!j.contains("shift"))
            throw ManifestError("caesar language '" + code + "' needs a shift");
        spec.shift = j.at("shift").get<int>();
    }
    if (spec.kind == TransformKind::word_swap) {
        if (!j.contains("perm"))
            throw ManifestError("word_swap language '" + code + "' needs a perm");
        spec.perm = j.at("perm").get<std::vector<int>>();
        validate_perm(spec.perm);
    }
    return spec;
}

// Direction-tagged pairs for both directions of a bidirectional parallel set.
inline void push_both_directions(std::vector<ParallelPair>& out,
                                 const std::vector<std::pair<std::string, std::string>>& pairs,
                                 const std::string& l1, const std::string& l2) {
    for (const auto& [a, b] : pairs)
        out.push_back({a, b, l1, l2, Provenance::real});
    for (const auto& [a, b] : pairs)
        out.push_back({b, a, l2, l1, Provenance::real});
}

}  // namespace detail

inline nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError(path + ": " + e.what());
    }
    return j;
}

// Builds the full experience stream from a parsed manifest. Synthetic splits
// draw disjoint base sentences per experience; TSV splits load verbatim.
// An optional "permutation" reorders experiences without changing content.
inline Stream make_stream(const nlohmann::json& manifest,
                          const std::string& base_dir = ".") {
    Stream stream;
    if (!manifest.contains("experiences") || !manifest.at("experiences").is_array() ||
        manifest.at("experiences").empty())
        throw ManifestError("manifest needs a non-empty experiences array");

    if (manifest.contains("vocab")) {
        const auto& v = manifest.at("vocab");
        if (v.contains("min_freq")) stream.min_freq = v.at("min_freq").get<int>();
        if (v.contains("mode")) stream.mode = token_mode_from(v.at("mode").get<std::string>());
    }
    stream.grammar_seed = manifest.value("grammar_seed", uint64_t{17});

    if (manifest.contains("languages"))
        for (const auto& [code, spec] : manifest.at("languages").items()) {
            if (code.size() != 2)
                throw ManifestError("language code '" + code + "' must be 2 letters");
            stream.languages[code] = detail::parse_language_spec(code, spec);
        }

    TemplateGrammar grammar = TemplateGrammar::make(stream.grammar_seed);

    std::set<std::string> code_set;
    for (const auto& je : manifest.at("experiences")) {
        Experience exp;
        exp.id = je.value("id", static_cast<int>(stream.experiences.size()) + 1);
        exp.l1 = je.at("src_lang").get<std::string>();
        exp.l2 = je.at("tgt_lang").get<std::string>();
        exp.directions = {{exp.l1, exp.l2}, {exp.l2, exp.l1}};
        code_set.insert(exp.l1);
        code_set.insert(exp.l2);

        std::set<std::string> taken;  // keeps this experience's splits disjoint
        for (const char* split : {"train", "dev", "test"}) {
            if (!je.contains(split))
                throw ManifestError("experience " + std::to_string(exp.id) + " is missing " +
                                    split);
            const auto& js = je.at(split);
            std::vector<std::pair<std::string, std::string>> pairs;
            if (js.contains("path")) {
                auto path = std::filesystem::path(base_dir) / js.at("path").get<std::string>();
                pairs = read_tsv(path.string());
                for (const auto& [a, b] : pairs) taken.insert(a + "\t" + b);
            } else if (js.contains("synth")) {
                const auto& syn = js.at("synth");
                int64_t size = syn.at("size").get<int64_t>();
                uint64_t seed = syn.at("seed").get<uint64_t>();
                if (size <= 0) throw ManifestError("synth size must be positive");
                if (!stream.languages.count(exp.l1) || !stream.languages.count(exp.l2))
                    throw ManifestError("experience " + std::to_string(exp.id) +
                                        " uses synth splits but its languages lack specs");
                auto bases = make_base_sentences(grammar, size, seed, &taken);
                const auto& sa = stream.languages.at(exp.l1);
                const auto& sb = stream.languages.at(exp.l2);
                for (const auto& base : bases)
                    pairs.emplace_back(apply_transform(sa, base), apply_transform(sb, base));
            } else {
                throw ManifestError("split " + std::string(split) + " of experience " +
                                    std::to_string(exp.id) + " needs path or synth");
            }
            auto& dst = std::string(split) == "train" ? exp.train
                        : std::string(split) == "dev" ? exp.dev
                                                      : exp.test;
            detail::push_both_directions(dst, pairs, exp.l1, exp.l2);
        }
        stream.experiences.push_back(std::move(exp));
    }

    stream.codes.assign(code_set.begin(), code_set.end());

    if (manifest.contains("permutation")) {
        auto perm = manifest.at("permutation").get<std::vector<int>>();
        if (perm.size() != stream.experiences.size())
            throw ManifestError("permutation length must equal experience count");
        std::vector<bool> seen(perm.size(), false);
        for (int p : perm) {
            if (p < 0 || p >= static_cast<int>(perm.size()) || seen[p])
                throw ManifestError("permutation is not a bijection");
            seen[p] = true;
        }
        std::vector<Experience> reordered;
        for (int p : perm) reordered.push_back(std::move(stream.experiences[p]));
        stream.experiences = std::move(reordered);
    }

    // Lexicons: transform image of the grammar lexicon for synthetic
    // languages, observed training words otherwise.
    auto base_lexicon = grammar.lexicon();
    for (const auto& code : stream.codes) {
        auto it = stream.languages.find(code);
        if (it != stream.languages.end()) {
            for (const auto& w : base_lexicon)
                stream.lexicons[code].insert(transform_word(it->second, w));
        } else {
            for (const auto& exp : stream.experiences)
                for (const auto& p : exp.train) {
                    if (p.src_lang == code)
                        for (const auto& w : split_ws(p.src)) stream.lexicons[code].insert(w);
                    if (p.tgt_lang == code)
                        for (const auto& w : split_ws(p.tgt)) stream.lexicons[code].insert(w);
                }
        }
    }
    return stream;
}

inline Stream make_stream_from_file(const std::string& path) {
    return make_stream(load_json(path),
                       std::filesystem::path(path).parent_path().string());
}

// Every sentence of every split, both sides; vocabulary input per the CILL
// setting (built in advance over the whole stream).
inline std::vector<std::string> all_sentences(const Stream& stream) {
    std::vector<std::string> out;
    for (const auto& exp : stream.experiences)
        for (const auto* split : {&exp.train, &exp.dev, &exp.test})
            for (const auto& p : *split) {
                out.push_back(p.src);
                out.push_back(p.tgt);
            }
    return out;
}

inline Vocabulary stream_vocab(const Stream& stream) {
    return build_vocab(all_sentences(stream), stream.min_freq, stream.codes, stream.mode);
}

}  // namespace sgrep
