// Vocabulary with reserved specials and per-language direction tokens.
// Layout: PAD=0, EOS=1, UNK=2, then one "<2xx>" per registered language code
// (codes sorted so ids are stable under stream permutation), then content
// tokens ordered by (frequency desc, token asc).
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "sgrep/common.hpp"

namespace sgrep {

enum class TokenMode { word, character };

inline std::string token_mode_name(TokenMode m) {
    return m == TokenMode::word ? "word" : "char";
}

inline TokenMode token_mode_from(const std::string& s) {
    if (s == "word") return TokenMode::word;
    if (s == "char" || s == "character") return TokenMode::character;
    throw InvalidConfig("unknown token mode '" + s + "'");
}

struct Vocabulary {
    static constexpr int32_t PAD = 0;
    static constexpr int32_t EOS = 1;
    static constexpr int32_t UNK = 2;

    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, int32_t> token_to_id;
    std::vector<std::string> languages;  // sorted codes
    TokenMode mode = TokenMode::word;

    int32_t size() const { return static_cast<int32_t>(id_to_token.size()); }
    int32_t n_reserved() const { return 3 + static_cast<int32_t>(languages.size()); }

    int32_t direction_id(const std::string& code) const {
        auto it = token_to_id.find("<2" + code + ">");
        if (it == token_to_id.end())
            throw UnknownLanguage("language code '" + code + "' is not registered");
        return it->second;
    }

    bool has_language(const std::string& code) const {
        return token_to_id.count("<2" + code + ">") > 0;
    }

    int32_t id_of(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? UNK : it->second;
    }

    std::vector<std::string> tokenize(const std::string& sentence) const {
        if (mode == TokenMode::word) return split_ws(sentence);
        std::vector<std::string> out;
        for (char c : normalize_ws(sentence))
            out.push_back(c == ' ' ? std::string("<sp>") : std::string(1, c));
        return out;
    }

    std::vector<int32_t> encode_tokens(const std::vector<std::string>& tokens) const {
        std::vector<int32_t> ids;
        ids.reserve(tokens.size());
        for (const auto& t : tokens) ids.push_back(id_of(t));
        return ids;
    }

    // Plain text back from ids: specials and direction tokens dropped,
    // UNK rendered literally.
    std::string decode(const std::vector<int32_t>& ids) const {
        std::vector<std::string> toks;
        for (int32_t id : ids) {
            if (id < 0 || id >= size())
                throw IdOutOfRange("id " + std::to_string(id) + " outside vocabulary of " +
                                   std::to_string(size()));
            if (id == PAD || id == EOS) continue;
            if (id >= 3 && id < n_reserved()) continue;  // direction token
            toks.push_back(id == UNK ? "<unk>" : id_to_token[id]);
        }
        if (mode == TokenMode::word) return join_ws(toks);
        std::string out;
        for (const auto& t : toks) out += t == "<sp>" ? " " : t;
        return out;
    }
};

inline Vocabulary build_vocab(const std::vector<std::string>& sentences, int min_freq,
                              std::vector<std::string> language_codes,
                              TokenMode mode = TokenMode::word) {
    if (sentences.empty()) throw EmptyCorpus("build_vocab needs at least one sentence");
    if (min_freq < 1) throw InvalidConfig("min_freq must be >= 1");

    Vocabulary v;
    v.mode = mode;
    std::sort(language_codes.begin(), language_codes.end());
    language_codes.erase(std::unique(language_codes.begin(), language_codes.end()),
                         language_codes.end());
    v.languages = language_codes;

    v.id_to_token = {"<pad>", "</s>", "<unk>"};
    for (const auto& c : v.languages) v.id_to_token.push_back("<2" + c + ">");

    std::map<std::string, int64_t> freq;
    for (const auto& s : sentences)
        for (const auto& t : v.tokenize(s)) freq[t] += 1;

    std::unordered_map<std::string, int32_t> reserved;
    for (size_t i = 0; i < v.id_to_token.size(); ++i)
        reserved[v.id_to_token[i]] = static_cast<int32_t>(i);

    std::vector<std::pair<std::string, int64_t>> kept;
    for (const auto& [tok, n] : freq)
        if (n >= min_freq && !reserved.count(tok)) kept.emplace_back(tok, n);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (const auto& [tok, n] : kept) v.id_to_token.push_back(tok);

    for (size_t i = 0; i < v.id_to_token.size(); ++i)
        v.token_to_id[v.id_to_token[i]] = static_cast<int32_t>(i);
    return v;
}

// [<2l_t>] ++ token ids ++ [EOS]
inline std::vector<int32_t> encode_source(const Vocabulary& v, const std::string& sentence,
                                          const std::string& l_t) {
    std::vector<int32_t> ids{v.direction_id(l_t)};
    for (int32_t id : v.encode_tokens(v.tokenize(sentence))) ids.push_back(id);
    ids.push_back(Vocabulary::EOS);
    return ids;
}

// token ids ++ [EOS], no direction token (decoder-side reference)
inline std::vector<int32_t> encode_target(const Vocabulary& v, const std::string& sentence) {
    std::vector<int32_t> ids = v.encode_tokens(v.tokenize(sentence));
    ids.push_back(Vocabulary::EOS);
    return ids;
}

}  // namespace sgrep
