// Synthetic language machinery: deterministic invertible sentence transforms,
// a seeded template grammar producing base sentences over a known lexicon,
// parallel-pair containers, and strict TSV corpus I/O.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "sgrep/common.hpp"

namespace sgrep {

enum class Provenance { real, pseudo };

inline std::string provenance_name(Provenance p) {
    return p == Provenance::real ? "real" : "pseudo";
}

inline Provenance provenance_from(const std::string& s) {
    if (s == "real") return Provenance::real;
    if (s == "pseudo") return Provenance::pseudo;
    throw InvalidConfig("unknown provenance '" + s + "'");
}

struct ParallelPair {
    std::string src, tgt;
    std::string src_lang, tgt_lang;
    Provenance provenance = Provenance::real;
};

enum class TransformKind { identity, word_reverse, caesar, vowel_double, word_swap };

inline std::string transform_kind_name(TransformKind k) {
    switch (k) {
        case TransformKind::identity: return "identity";
        case TransformKind::word_reverse: return "word_reverse";
        case TransformKind::caesar: return "caesar";
        case TransformKind::vowel_double: return "vowel_double";
        case TransformKind::word_swap: return "word_swap";
    }
    return "identity";
}

inline TransformKind transform_kind_from(const std::string& s) {
    if (s == "identity") return TransformKind::identity;
    if (s == "word_reverse") return TransformKind::word_reverse;
    if (s == "caesar") return TransformKind::caesar;
    if (s == "vowel_double") return TransformKind::vowel_double;
    if (s == "word_swap") return TransformKind::word_swap;
    throw ManifestError("unknown transform '" + s + "'");
}

struct SynthLanguageSpec {
    std::string code;  // 2-letter language code
    TransformKind kind = TransformKind::identity;
    int shift = 0;               // caesar
    std::vector<int> perm;       // word_swap: permutation applied to word chunks
};

namespace detail {

inline bool is_vowel(char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

inline std::string caesar_word(const std::string& w, int shift) {
    int s = ((shift % 26) + 26) % 26;
    std::string out = w;
    for (char& c : out)
        if (c >= 'a' && c <= 'z') c = static_cast<char>('a' + (c - 'a' + s) % 26);
    return out;
}

inline std::string vowel_double_word(const std::string& w) {
    std::string out;
    for (char c : w) {
        out += c;
        if (is_vowel(c)) out += c;
    }
    return out;
}

inline std::string vowel_halve_word(const std::string& w) {
    std::string out;
    for (size_t i = 0; i < w.size(); ++i) {
        out += w[i];
        if (is_vowel(w[i])) ++i;  // skip the doubled copy
    }
    return out;
}

inline void validate_perm(const std::vector<int>& perm) {
    if (perm.empty()) throw InvalidConfig("word_swap needs a non-empty permutation");
    std::vector<bool> seen(perm.size(), false);
    for (int p : perm) {
        if (p < 0 || p >= static_cast<int>(perm.size()) || seen[p])
            throw InvalidConfig("word_swap permutation is not a bijection");
        seen[p] = true;
    }
}

// Permute words inside consecutive chunks of len(perm); a trailing partial
// chunk is left in place.
inline std::vector<std::string> swap_words(const std::vector<std::string>& words,
                                           const std::vector<int>& perm) {
    size_t k = perm.size();
    std::vector<std::string> out = words;
    for (size_t base = 0; base + k <= words.size(); base += k)
        for (size_t i = 0; i < k; ++i) out[base + i] = words[base + perm[i]];
    return out;
}

inline std::vector<int> inverse_perm(const std::vector<int>& perm) {
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
    return inv;
}

}  // namespace detail

inline std::string apply_transform(const SynthLanguageSpec& spec, const std::string& sentence) {
    std::vector<std::string> words = split_ws(sentence);
    switch (spec.kind) {
        case TransformKind::identity:
            break;
        case TransformKind::word_reverse:
            std::reverse(words.begin(), words.end());
            break;
        case TransformKind::caesar:
            for (auto& w : words) w = detail::caesar_word(w, spec.shift);
            break;
        case TransformKind::vowel_double:
            for (auto& w : words) w = detail::vowel_double_word(w);
            break;
        case TransformKind::word_swap:
            detail::validate_perm(spec.perm);
            words = detail::swap_words(words, spec.perm);
            break;
    }
    return join_ws(words);
}

// Inverse mapping of apply_transform; inverse(spec)(spec(s)) == s.
inline std::string apply_inverse_transform(const SynthLanguageSpec& spec,
                                           const std::string& sentence) {
    std::vector<std::string> words = split_ws(sentence);
    switch (spec.kind) {
        case TransformKind::identity:
            break;
        case TransformKind::word_reverse:
            std::reverse(words.begin(), words.end());
            break;
        case TransformKind::caesar:
            for (auto& w : words) w = detail::caesar_word(w, -spec.shift);
            break;
        case TransformKind::vowel_double:
            for (auto& w : words) w = detail::vowel_halve_word(w);
            break;
        case TransformKind::word_swap:
            detail::validate_perm(spec.perm);
            words = detail::swap_words(words, detail::inverse_perm(spec.perm));
            break;
    }
    return join_ws(words);
}

// Word-form image of a base word under a transform (order-only transforms
// leave word forms alone).
inline std::string transform_word(const SynthLanguageSpec& spec, const std::string& word) {
    switch (spec.kind) {
        case TransformKind::caesar: return detail::caesar_word(word, spec.shift);
        case TransformKind::vowel_double: return detail::vowel_double_word(word);
        default: return word;
    }
}

// Seeded subject-verb-object grammar over a fixed-size pseudo-word lexicon.
// Every base sentence is a handful of lowercase a-z words, so each synthetic
// language has a finite, known lexicon.
struct TemplateGrammar {
    std::vector<std::string> subjects, verbs, objects, adjectives, adverbs;

    static TemplateGrammar make(uint64_t seed) {
        TemplateGrammar g;
        std::set<std::string> used;
        auto eng = make_engine(mix_seed(seed, tag_of("grammar")));
        auto make_words = [&](std::vector<std::string>& out, size_t count, int min_syl,
                              int max_syl) {
            static const std::string cons = "bcdfghjklmnprstvwz";
            static const std::string vows = "aeiou";
            while (out.size() < count) {
                int syllables = min_syl + static_cast<int>(eng() % (max_syl - min_syl + 1));
                std::string w;
                for (int s = 0; s < syllables; ++s) {
                    w += cons[eng() % cons.size()];
                    w += vows[eng() % vows.size()];
                }
                if (eng() % 3 == 0) w += cons[eng() % cons.size()];
                if (used.insert(w).second) out.push_back(w);
            }
        };
        make_words(g.subjects, 60, 2, 3);
        make_words(g.verbs, 40, 2, 3);
        make_words(g.objects, 60, 2, 3);
        make_words(g.adjectives, 25, 2, 3);
        make_words(g.adverbs, 15, 2, 3);
        return g;
    }

    std::vector<std::string> lexicon() const {
        std::vector<std::string> all;
        for (const auto* part : {&subjects, &verbs, &objects, &adjectives, &adverbs})
            all.insert(all.end(), part->begin(), part->end());
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());
        return all;
    }

    // One deterministic base sentence per (grammar, seed).
    std::string sentence(uint64_t seed) const {
        auto eng = make_engine(seed);
        auto pick = [&](const std::vector<std::string>& v) { return v[eng() % v.size()]; };
        std::vector<std::string> w;
        switch (eng() % 6) {
            case 0: w = {pick(subjects), pick(verbs), pick(objects)}; break;
            case 1: w = {pick(subjects), pick(verbs), pick(adjectives), pick(objects)}; break;
            case 2: w = {pick(adjectives), pick(subjects), pick(verbs), pick(objects)}; break;
            case 3: w = {pick(subjects), pick(adverbs), pick(verbs), pick(objects)}; break;
            case 4: w = {pick(subjects), pick(verbs), pick(objects), pick(adverbs)}; break;
            default:
                w = {pick(adjectives), pick(subjects), pick(verbs), pick(adjectives),
                     pick(objects)};
                break;
        }
        return join_ws(w);
    }
};

// n distinct base sentences, deterministic for (grammar, seed); `taken`
// carries exclusions across splits so an experience's splits stay disjoint.
inline std::vector<std::string> make_base_sentences(const TemplateGrammar& g, int64_t n,
                                                    uint64_t seed,
                                                    std::set<std::string>* taken = nullptr) {
    std::vector<std::string> out;
    std::set<std::string> local;
    std::set<std::string>& seen = taken ? *taken : local;
    uint64_t idx = 0;
    while (static_cast<int64_t>(out.size()) < n) {
        std::string s = g.sentence(mix_seed(seed, idx++));
        if (seen.insert(s).second) out.push_back(s);
        if (idx > static_cast<uint64_t>(n) * 1000 + 100000)
            throw ManifestError("grammar cannot produce " + std::to_string(n) +
                                " distinct sentences");
    }
    return out;
}

// Strict TSV: UTF-8, one pair per line, exactly one tab, both sides non-empty.
inline std::vector<std::pair<std::string, std::string>> read_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == EOF) break;  // trailing newline
        size_t tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
            throw IoError(path + ":" + std::to_string(lineno) + ": expected exactly one tab");
        std::string src = line.substr(0, tab), tgt = line.substr(tab + 1);
        if (src.empty() || tgt.empty())
            throw IoError(path + ":" + std::to_string(lineno) + ": empty side");
        out.emplace_back(std::move(src), std::move(tgt));
    }
    return out;
}

inline void write_tsv(const std::string& path,
                      const std::vector<std::pair<std::string, std::string>>& pairs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& [s, t] : pairs) out << s << '\t' << t << '\n';
}

}  // namespace sgrep
