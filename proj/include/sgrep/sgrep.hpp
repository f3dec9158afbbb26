// Self-generated replay: sample pseudo targets from a bare direction prompt,
// filter by lexicon membership, deduplicate, back-translate with the same
// model, and feed the pairs into the reservoir buffer.
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sgrep/decode.hpp"
#include "sgrep/replay.hpp"
#include "sgrep/stream.hpp"

namespace sgrep {

// Word-membership stand-in for a spellchecker: a candidate's unknown-word
// count ŵ is the number of tokens outside the target language's word set.
struct LexiconFilter {
    std::map<std::string, std::set<std::string>> words;
    int64_t threshold = 2;  // reject when ŵ >= threshold
};

inline LexiconFilter make_filter(const Stream& stream, int64_t threshold = 2) {
    if (threshold < 1) throw InvalidConfig("filter threshold must be >= 1");
    LexiconFilter f;
    f.words = stream.lexicons;
    f.threshold = threshold;
    return f;
}

inline const std::set<std::string>& filter_words(const LexiconFilter& f, const std::string& lang) {
    auto it = f.words.find(lang);
    if (it == f.words.end()) throw MissingLexicon("no lexicon for language '" + lang + "'");
    return it->second;
}

inline int64_t unknown_word_count(const LexiconFilter& f, const std::string& sentence,
                                  const std::string& lang) {
    const auto& known = filter_words(f, lang);
    int64_t w_hat = 0;
    for (const auto& tok : split_ws(sentence)) w_hat += known.count(tok) == 0;
    return w_hat;
}

inline bool filter_pseudo(const std::string& sentence, const LexiconFilter& f,
                          const std::string& lang) {
    if (f.threshold < 1) throw InvalidConfig("filter threshold must be >= 1");
    auto toks = split_ws(sentence);
    if (toks.empty()) return false;
    const auto& known = filter_words(f, lang);
    int64_t w_hat = 0;
    for (const auto& tok : toks) w_hat += known.count(tok) == 0;
    return w_hat < f.threshold;
}

// First occurrence kept, order preserved, equality after whitespace
// normalization; returns the normalized sentences.
inline std::vector<std::string> deduplicate(const std::vector<std::string>& sentences) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& s : sentences) {
        std::string norm = normalize_ws(s);
        if (seen.insert(norm).second) out.push_back(std::move(norm));
    }
    return out;
}

// Default t_e: exactly [<2l_t>, EOS].
inline std::vector<int32_t> encoder_prompt(const Vocabulary& vocab, const std::string& l_t) {
    return {vocab.direction_id(l_t), Vocabulary::EOS};
}

// Off-by-default augmentation: a few random lexicon words between the
// direction token and EOS.
inline std::vector<int32_t> encoder_prompt(const Vocabulary& vocab, const std::string& l_t,
                                           int64_t n_random_words, const LexiconFilter& lexicon,
                                           uint64_t seed) {
    std::vector<int32_t> prompt{vocab.direction_id(l_t)};
    if (n_random_words > 0) {
        const auto& known = filter_words(lexicon, l_t);
        if (known.empty()) throw MissingLexicon("empty lexicon for language '" + l_t + "'");
        std::vector<std::string> pool(known.begin(), known.end());
        auto eng = make_engine(mix_seed(seed, tag_of("prompt"), tag_of(l_t)));
        for (int64_t i = 0; i < n_random_words; ++i)
            prompt.push_back(vocab.id_of(pool[eng() % pool.size()]));
    }
    prompt.push_back(Vocabulary::EOS);
    return prompt;
}

struct GenerationBudget {
    int64_t n = 0;
    int64_t max_attempts = 0;
    int64_t batch_size = 64;
    DecodeConfig gen_cfg;   // sample mode
    DecodeConfig beam_cfg;  // beam mode, for back-translation
    int64_t prompt_random_words = 0;
};

inline GenerationBudget make_budget(int64_t n, int64_t vocab_size, int64_t max_len,
                                    uint64_t seed) {
    GenerationBudget b;
    b.n = n;
    b.max_attempts = 20 * n;
    b.gen_cfg.mode = DecodeMode::sample;
    b.gen_cfg.temperature = 0.93;
    b.gen_cfg.top_k = vocab_size;
    b.gen_cfg.max_len = max_len;
    b.gen_cfg.seed = seed;
    b.beam_cfg.mode = DecodeMode::beam;
    b.beam_cfg.beam_size = 4;
    b.beam_cfg.max_len = max_len;
    return b;
}

struct GenerationReport {
    int64_t attempted = 0;
    int64_t rejected_filter = 0;
    int64_t rejected_duplicate = 0;
    std::vector<std::pair<std::string, int64_t>> rejects;  // sentence, ŵ
};

// Batched sample-filter-dedup loop of Algorithm 1's acceptance phase.
// Candidate i across the whole call uses sample stream index i, so the batch
// size does not affect the result.
template <typename T>
std::vector<std::string> generate_pseudo_targets(const TransformerParams<T>& model,
                                                 const Vocabulary& vocab, const std::string& l_t,
                                                 const GenerationBudget& budget,
                                                 const LexiconFilter& lexicon,
                                                 GenerationReport* report = nullptr) {
    if (budget.n < 0) throw InvalidConfig("generation target must be >= 0");
    if (budget.n == 0) return {};
    if (budget.max_attempts < budget.n)
        throw InvalidConfig("max_attempts must be >= n");
    if (budget.batch_size < 1) throw InvalidConfig("generation batch size must be >= 1");
    filter_words(lexicon, l_t);  // fail fast with MissingLexicon

    std::vector<int32_t> prompt =
        budget.prompt_random_words > 0
            ? encoder_prompt(vocab, l_t, budget.prompt_random_words, lexicon,
                             budget.gen_cfg.seed)
            : encoder_prompt(vocab, l_t);

    std::vector<std::string> accepted;
    std::unordered_set<std::string> seen;
    int64_t attempts = 0;
    while (static_cast<int64_t>(accepted.size()) < budget.n) {
        if (attempts >= budget.max_attempts)
            throw BudgetExhausted("accepted " + std::to_string(accepted.size()) + "/" +
                                  std::to_string(budget.n) + " pseudo sentences for '" + l_t +
                                  "' after " + std::to_string(attempts) + " attempts");
        int64_t batch = std::min(budget.batch_size, budget.max_attempts - attempts);
        std::vector<std::vector<int32_t>> prompts(static_cast<size_t>(batch), prompt);
        auto outs = sample_decode_batch(model, prompts, budget.gen_cfg,
                                        static_cast<uint64_t>(attempts));
        attempts += batch;
        for (const auto& ids : outs) {
            std::string sentence = normalize_ws(vocab.decode(ids));
            if (report) report->attempted += 1;
            if (!filter_pseudo(sentence, lexicon, l_t)) {
                if (report) {
                    report->rejected_filter += 1;
                    report->rejects.emplace_back(sentence,
                                                 sentence.empty()
                                                     ? 0
                                                     : unknown_word_count(lexicon, sentence, l_t));
                }
                continue;
            }
            if (!seen.insert(sentence).second) {
                if (report) report->rejected_duplicate += 1;
                continue;
            }
            accepted.push_back(sentence);
            if (static_cast<int64_t>(accepted.size()) == budget.n) break;
        }
    }
    return accepted;
}

// Translate pseudo targets back into l_s with the same model (beam search).
template <typename T>
std::vector<std::string> back_translate(const TransformerParams<T>& model,
                                        const Vocabulary& vocab,
                                        const std::vector<std::string>& sentences,
                                        const std::string& l_s, const DecodeConfig& beam_cfg) {
    if (sentences.empty()) return {};
    std::vector<std::vector<int32_t>> srcs;
    srcs.reserve(sentences.size());
    for (const auto& s : sentences) srcs.push_back(encode_source(vocab, s, l_s));
    auto outs = beam_decode_batch(model, srcs, beam_cfg.beam_size, beam_cfg.max_len);
    std::vector<std::string> result;
    result.reserve(outs.size());
    for (const auto& ids : outs) result.push_back(vocab.decode(ids));
    return result;
}

// Full Algorithm 1 body for one direction (l_s -> l_t): n accepted pseudo
// targets in l_t, back-translated sources in l_s, provenance=pseudo.
template <typename T>
std::vector<ParallelPair> generate_replay_data(const TransformerParams<T>& model,
                                               const Vocabulary& vocab, int64_t n,
                                               const std::string& l_s, const std::string& l_t,
                                               GenerationBudget budget,
                                               const LexiconFilter& lexicon,
                                               GenerationReport* report = nullptr) {
    budget.n = n;
    if (budget.max_attempts < n) budget.max_attempts = 20 * n;
    auto tgts = generate_pseudo_targets(model, vocab, l_t, budget, lexicon, report);
    auto srcs = back_translate(model, vocab, tgts, l_s, budget.beam_cfg);
    std::vector<ParallelPair> pairs(tgts.size());
    for (size_t i = 0; i < tgts.size(); ++i) {
        pairs[i].src = srcs[i];
        pairs[i].tgt = tgts[i];
        pairs[i].src_lang = l_s;
        pairs[i].tgt_lang = l_t;
        pairs[i].provenance = Provenance::pseudo;
    }
    return pairs;
}

}  // namespace sgrep
