// Translation metrics and corpus analyses: corpus BLEU-4, score matrices,
// forgetting curves, top-k token overlap, leakage reports, self-BLEU
// diversity, and corpus length/duplicate statistics.
#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sgrep/common.hpp"
#include "sgrep/text.hpp"

namespace sgrep {

namespace detail {

inline std::unordered_map<std::string, int64_t> ngram_counts(
        const std::vector<std::string>& toks, int n) {
    std::unordered_map<std::string, int64_t> out;
    if (toks.size() < static_cast<size_t>(n)) return out;
    for (size_t i = 0; i + n <= toks.size(); ++i) {
        std::string key;
        for (int j = 0; j < n; ++j) {
            key += toks[i + j];
            key += '\x1f';
        }
        out[key] += 1;
    }
    return out;
}

// Reference length closest to the hypothesis length; ties pick the shorter.
inline int64_t closest_ref_len(int64_t hyp_len,
                               const std::vector<std::vector<std::string>>& refs) {
    int64_t best = 0;
    bool first = true;
    for (const auto& r : refs) {
        auto len = static_cast<int64_t>(r.size());
        auto d = std::abs(len - hyp_len), bd = std::abs(best - hyp_len);
        if (first || d < bd || (d == bd && len < best)) {
            best = len;
            first = false;
        }
    }
    return best;
}

// Shared BLEU kernel over pre-tokenized sentences, each with its own
// reference set. Clipped n-gram precisions for n = 1..max_order (clip counts
// are per-n-gram maxima across references); the k-th order with zero matches
// contributes 1 / (2^k * total) instead, and orders for which the hypotheses
// have no n-grams at all drop out of the geometric mean. Brevity penalty
// exp(1 - r/c) for c < r, with r summed from closest reference lengths.
inline double bleu_from_tokens(const std::vector<std::vector<std::string>>& hyps,
                               const std::vector<std::vector<std::vector<std::string>>>& refs,
                               int max_order) {
    double log_sum = 0.0;
    int used_orders = 0, zero_hits = 0;
    for (int n = 1; n <= max_order; ++n) {
        int64_t total = 0, match = 0;
        for (size_t s = 0; s < hyps.size(); ++s) {
            std::unordered_map<std::string, int64_t> clip;
            for (const auto& r : refs[s])
                for (auto& [k, c] : ngram_counts(r, n)) {
                    auto& slot = clip[k];
                    slot = std::max(slot, c);
                }
            for (auto& [k, c] : ngram_counts(hyps[s], n)) {
                total += c;
                auto it = clip.find(k);
                if (it != clip.end()) match += std::min(c, it->second);
            }
        }
        if (total == 0) break;
        used_orders += 1;
        double p;
        if (match == 0) {
            zero_hits += 1;
            p = 1.0 / (std::pow(2.0, zero_hits) * static_cast<double>(total));
        } else {
            p = static_cast<double>(match) / static_cast<double>(total);
        }
        log_sum += std::log(p);
    }
    if (used_orders == 0) return 0.0;
    double gm = std::exp(log_sum / used_orders);
    int64_t hyp_len = 0, ref_len = 0;
    for (const auto& h : hyps) hyp_len += static_cast<int64_t>(h.size());
    for (size_t s = 0; s < hyps.size(); ++s)
        ref_len += closest_ref_len(static_cast<int64_t>(hyps[s].size()), refs[s]);
    if (hyp_len == 0) return 0.0;
    double bp = 1.0;
    if (hyp_len < ref_len)
        bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return 100.0 * bp * gm;
}

}  // namespace detail

// Case-sensitive corpus BLEU over whitespace-tokenized sentences.
inline double corpus_bleu(const std::vector<std::string>& hypotheses,
                          const std::vector<std::string>& references, int max_order = 4) {
    if (hypotheses.size() != references.size())
        throw LengthMismatch("corpus_bleu: " + std::to_string(hypotheses.size()) +
                             " hypotheses vs " + std::to_string(references.size()) +
                             " references");
    if (hypotheses.empty()) throw EmptyInput("corpus_bleu: empty corpus");
    if (max_order < 1) throw InvalidConfig("corpus_bleu: max_order must be >= 1");
    std::vector<std::vector<std::string>> hyps(hypotheses.size());
    std::vector<std::vector<std::vector<std::string>>> refs(references.size());
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        hyps[i] = split_ws(hypotheses[i]);
        refs[i] = {split_ws(references[i])};
    }
    return detail::bleu_from_tokens(hyps, refs, max_order);
}

// Single-sentence BLEU against one or more references, used by self-BLEU.
inline double sentence_bleu(const std::vector<std::string>& hyp_tokens,
                            const std::vector<std::vector<std::string>>& ref_token_lists,
                            int max_order = 4) {
    if (ref_token_lists.empty()) throw EmptyInput("sentence_bleu: no references");
    return detail::bleu_from_tokens({hyp_tokens}, {ref_token_lists}, max_order);
}

// ---------------------------------------------------------------------------
// Score matrices: one row per finished experience, one column per direction.

struct ScoreMatrix {
    std::vector<std::string> directions;  // column labels, "src-tgt"
    std::vector<std::string> row_labels;  // checkpoint labels, one per row
    std::vector<std::vector<double>> scores;

    void validate() const {
        if (scores.size() != row_labels.size())
            throw ShapeMismatch("score matrix: " + std::to_string(scores.size()) +
                                " rows vs " + std::to_string(row_labels.size()) + " labels");
        for (const auto& row : scores)
            if (row.size() != directions.size())
                throw ShapeMismatch("score matrix row has " + std::to_string(row.size()) +
                                    " cells, expected " + std::to_string(directions.size()));
    }

    size_t direction_index(const std::string& name) const {
        for (size_t i = 0; i < directions.size(); ++i)
            if (directions[i] == name) return i;
        throw InvalidConfig("score matrix has no direction '" + name + "'");
    }
};

inline void to_json(nlohmann::json& j, const ScoreMatrix& m) {
    j = nlohmann::json{
        {"directions", m.directions}, {"row_labels", m.row_labels}, {"scores", m.scores}};
}

inline void from_json(const nlohmann::json& j, ScoreMatrix& m) {
    j.at("directions").get_to(m.directions);
    j.at("row_labels").get_to(m.row_labels);
    j.at("scores").get_to(m.scores);
    m.validate();
}

inline double avg_bleu(const std::vector<double>& row) {
    if (row.empty()) throw EmptyInput("avg_bleu: empty row");
    return std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
}

// Mean per-direction gap between an upper-bound row and a system row.
// Written as the difference of the row means so the two readings agree
// bit-for-bit.
inline double delta_lp(const std::vector<double>& upper, const std::vector<double>& system) {
    if (upper.size() != system.size())
        throw LengthMismatch("delta_lp: rows of size " + std::to_string(upper.size()) +
                             " and " + std::to_string(system.size()));
    return avg_bleu(upper) - avg_bleu(system);
}

// Mean BLEU over the first experience's directions at each checkpoint row.
inline std::vector<double> forgetting_series(const ScoreMatrix& m,
                                             const std::vector<std::string>& first_directions) {
    m.validate();
    if (first_directions.empty()) throw EmptyInput("forgetting_series: no directions");
    std::vector<size_t> cols;
    for (const auto& d : first_directions) cols.push_back(m.direction_index(d));
    std::vector<double> series;
    for (const auto& row : m.scores) {
        double sum = 0.0;
        for (size_t c : cols) sum += row[c];
        series.push_back(sum / static_cast<double>(cols.size()));
    }
    return series;
}

// ---------------------------------------------------------------------------
// Token overlap between experiences.

using TokenFreq = std::map<std::string, int64_t>;

inline TokenFreq token_frequencies(const std::vector<std::string>& sentences) {
    TokenFreq freq;
    for (const auto& s : sentences)
        for (auto& t : split_ws(s)) freq[t] += 1;
    return freq;
}

// Top k tokens by frequency; ties broken lexicographically.
inline std::vector<std::string> top_k_tokens(const TokenFreq& freq, int64_t k) {
    if (k < 1) throw KTooLarge("top-k: k must be >= 1, got " + std::to_string(k));
    if (k > static_cast<int64_t>(freq.size()))
        throw KTooLarge("top-k: k=" + std::to_string(k) + " exceeds vocabulary of " +
                        std::to_string(freq.size()) + " tokens");
    std::vector<std::pair<std::string, int64_t>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> out;
    for (int64_t i = 0; i < k; ++i) out.push_back(items[i].first);
    return out;
}

inline double token_overlap(const TokenFreq& a, const TokenFreq& b, int64_t k) {
    auto ta = top_k_tokens(a, k);
    auto tb = top_k_tokens(b, k);
    std::unordered_set<std::string> sa(ta.begin(), ta.end());
    int64_t inter = 0;
    for (const auto& t : tb)
        if (sa.count(t)) inter += 1;
    return 100.0 * static_cast<double>(inter) / static_cast<double>(k);
}

struct OverlapReport {
    std::vector<int64_t> ks;
    std::vector<double> pct;  // aligned with ks
};

inline OverlapReport overlap_report(const TokenFreq& a, const TokenFreq& b,
                                    const std::vector<int64_t>& ks) {
    OverlapReport r;
    for (int64_t k : ks) {
        r.ks.push_back(k);
        r.pct.push_back(token_overlap(a, b, k));
    }
    return r;
}

inline void to_json(nlohmann::json& j, const OverlapReport& r) {
    j = nlohmann::json{{"k", r.ks}, {"overlap_pct", r.pct}};
}

// ---------------------------------------------------------------------------
// Training-data leakage in generated pairs.

struct LeakageReport {
    int64_t generated_count = 0;
    int64_t leaked_source_count = 0;
    int64_t leaked_target_count = 0;
    double pct_leaked_source = 0.0;
    double pct_leaked_target = 0.0;
    double avg_leaked_source_len = 0.0;  // whitespace tokens per leaked sentence
    double avg_leaked_target_len = 0.0;
};

// A generated side counts as leaked iff its whitespace-normalized string
// exactly matches any training sentence on the same side.
inline LeakageReport leakage_report(const std::vector<ParallelPair>& generated,
                                    const std::vector<ParallelPair>& train) {
    std::unordered_set<std::string> train_src, train_tgt;
    for (const auto& p : train) {
        train_src.insert(normalize_ws(p.src));
        train_tgt.insert(normalize_ws(p.tgt));
    }
    LeakageReport r;
    r.generated_count = static_cast<int64_t>(generated.size());
    int64_t src_len_sum = 0, tgt_len_sum = 0;
    for (const auto& p : generated) {
        auto src = normalize_ws(p.src);
        auto tgt = normalize_ws(p.tgt);
        if (train_src.count(src)) {
            r.leaked_source_count += 1;
            src_len_sum += static_cast<int64_t>(split_ws(src).size());
        }
        if (train_tgt.count(tgt)) {
            r.leaked_target_count += 1;
            tgt_len_sum += static_cast<int64_t>(split_ws(tgt).size());
        }
    }
    if (r.generated_count > 0) {
        r.pct_leaked_source =
            100.0 * static_cast<double>(r.leaked_source_count) / static_cast<double>(r.generated_count);
        r.pct_leaked_target =
            100.0 * static_cast<double>(r.leaked_target_count) / static_cast<double>(r.generated_count);
    }
    if (r.leaked_source_count > 0)
        r.avg_leaked_source_len =
            static_cast<double>(src_len_sum) / static_cast<double>(r.leaked_source_count);
    if (r.leaked_target_count > 0)
        r.avg_leaked_target_len =
            static_cast<double>(tgt_len_sum) / static_cast<double>(r.leaked_target_count);
    return r;
}

inline void to_json(nlohmann::json& j, const LeakageReport& r) {
    j = nlohmann::json{{"generated_count", r.generated_count},
                       {"leaked_source_count", r.leaked_source_count},
                       {"leaked_target_count", r.leaked_target_count},
                       {"pct_leaked_source", r.pct_leaked_source},
                       {"pct_leaked_target", r.pct_leaked_target},
                       {"avg_leaked_source_len", r.avg_leaked_source_len},
                       {"avg_leaked_target_len", r.avg_leaked_target_len}};
}

// ---------------------------------------------------------------------------
// Self-BLEU diversity over a sampled pool.

// Per run: sample sample_size sentences without replacement (all of them if
// the pool is smaller), score each sampled sentence as a hypothesis against
// the other sampled sentences as references, average; then average over runs.
inline double self_bleu(const std::vector<std::string>& sentences, int64_t sample_size,
                        int runs, uint64_t seed) {
    auto n = static_cast<int64_t>(sentences.size());
    if (n < 2) throw TooFewSentences("self_bleu: need at least 2 sentences, got " +
                                     std::to_string(n));
    if (sample_size < 2)
        throw TooFewSentences("self_bleu: sample_size must be >= 2, got " +
                              std::to_string(sample_size));
    if (runs < 1) throw InvalidConfig("self_bleu: runs must be >= 1");
    std::vector<std::vector<std::string>> toks(sentences.size());
    for (size_t i = 0; i < sentences.size(); ++i) toks[i] = split_ws(sentences[i]);

    int64_t m = std::min(sample_size, n);
    // A sample that covers the pool makes every run identical; collapsing the
    // loop keeps the result bit-equal to a single run.
    if (m == n) runs = 1;
    double run_sum = 0.0;
    for (int run = 0; run < runs; ++run) {
        std::vector<int64_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        if (m < n) {
            auto eng = make_engine(mix_seed(seed, tag_of("selfbleu"), static_cast<uint64_t>(run)));
            for (int64_t i = 0; i < m; ++i) {
                auto j = i + static_cast<int64_t>(eng() % static_cast<uint64_t>(n - i));
                std::swap(idx[i], idx[j]);
            }
        }
        double sent_sum = 0.0;
        for (int64_t i = 0; i < m; ++i) {
            std::vector<std::vector<std::string>> refs;
            for (int64_t j = 0; j < m; ++j)
                if (j != i) refs.push_back(toks[idx[j]]);
            sent_sum += sentence_bleu(toks[idx[i]], refs);
        }
        run_sum += sent_sum / static_cast<double>(m);
    }
    return run_sum / static_cast<double>(runs);
}

// ---------------------------------------------------------------------------
// Corpus length and duplicate statistics.

struct SideStats {
    double avg_len = 0.0;
    double stddev_len = 0.0;  // population standard deviation
    int64_t min_len = 0;
    int64_t max_len = 0;
    int64_t duplicates = 0;  // occurrences minus distinct sentences
};

struct CorpusStats {
    int64_t size = 0;
    SideStats source, target;
};

namespace detail {

inline SideStats side_stats(const std::vector<ParallelPair>& corpus, bool source) {
    SideStats s;
    if (corpus.empty()) return s;
    std::unordered_map<std::string, int64_t> seen;
    double sum = 0.0, sq_sum = 0.0;
    s.min_len = std::numeric_limits<int64_t>::max();
    for (const auto& p : corpus) {
        const auto& raw = source ? p.src : p.tgt;
        auto len = static_cast<int64_t>(split_ws(raw).size());
        sum += static_cast<double>(len);
        sq_sum += static_cast<double>(len) * static_cast<double>(len);
        s.min_len = std::min(s.min_len, len);
        s.max_len = std::max(s.max_len, len);
        seen[normalize_ws(raw)] += 1;
    }
    auto n = static_cast<double>(corpus.size());
    s.avg_len = sum / n;
    s.stddev_len = std::sqrt(std::max(0.0, sq_sum / n - s.avg_len * s.avg_len));
    s.duplicates = static_cast<int64_t>(corpus.size()) - static_cast<int64_t>(seen.size());
    return s;
}

}  // namespace detail

inline CorpusStats corpus_stats(const std::vector<ParallelPair>& corpus) {
    CorpusStats st;
    st.size = static_cast<int64_t>(corpus.size());
    st.source = detail::side_stats(corpus, true);
    st.target = detail::side_stats(corpus, false);
    return st;
}

inline void to_json(nlohmann::json& j, const SideStats& s) {
    j = nlohmann::json{{"avg_len", s.avg_len},   {"stddev_len", s.stddev_len},
                       {"min_len", s.min_len},   {"max_len", s.max_len},
                       {"duplicates", s.duplicates}};
}

inline void to_json(nlohmann::json& j, const CorpusStats& s) {
    j = nlohmann::json{{"size", s.size}, {"source", s.source}, {"target", s.target}};
}

}  // namespace sgrep
