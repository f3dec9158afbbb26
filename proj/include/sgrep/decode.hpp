// Greedy, temperature/top-k sampling, and beam decoders. All three share the
// same step kernel: re-run the teacher-forced forward over the growing prefix
// and read the last position's logits. Ties break toward the lowest token id.
#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sgrep/model.hpp"

namespace sgrep {

enum class DecodeMode { greedy, sample, beam };

inline std::string decode_mode_name(DecodeMode m) {
    switch (m) {
        case DecodeMode::greedy: return "greedy";
        case DecodeMode::sample: return "sample";
        case DecodeMode::beam: return "beam";
    }
    throw InvalidConfig("unknown decode mode");
}

inline DecodeMode decode_mode_from(const std::string& s) {
    if (s == "greedy") return DecodeMode::greedy;
    if (s == "sample") return DecodeMode::sample;
    if (s == "beam") return DecodeMode::beam;
    throw InvalidConfig("unknown decode mode '" + s + "'");
}

struct DecodeConfig {
    DecodeMode mode = DecodeMode::greedy;
    double temperature = 1.0;
    int64_t top_k = 0;  // sample mode requires 1 <= top_k <= vocab_size
    int64_t beam_size = 4;
    int64_t max_len = 32;
    uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const DecodeConfig& c) {
    j = nlohmann::json{{"mode", decode_mode_name(c.mode)}, {"temperature", c.temperature},
                       {"top_k", c.top_k},                 {"beam_size", c.beam_size},
                       {"max_len", c.max_len},             {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, DecodeConfig& c) {
    DecodeConfig d;
    c.mode = decode_mode_from(j.value("mode", decode_mode_name(d.mode)));
    c.temperature = j.value("temperature", d.temperature);
    c.top_k = j.value("top_k", d.top_k);
    c.beam_size = j.value("beam_size", d.beam_size);
    c.max_len = j.value("max_len", d.max_len);
    c.seed = j.value("seed", d.seed);
}

namespace detail {

// Last-position logits (double) for each row; prefixes must share one length.
template <typename T>
std::vector<std::vector<double>> step_logits(const TransformerParams<T>& p,
                                             const std::vector<std::vector<int32_t>>& srcs,
                                             const std::vector<std::vector<int32_t>>& prefixes) {
    std::vector<std::vector<int32_t>> tin(prefixes.size());
    for (size_t i = 0; i < prefixes.size(); ++i) {
        tin[i].reserve(prefixes[i].size() + 1);
        tin[i].push_back(Vocabulary::PAD);
        tin[i].insert(tin[i].end(), prefixes[i].begin(), prefixes[i].end());
    }
    IdMatrix src = pad_batch(srcs);
    IdMatrix tgt = pad_batch(tin);
    Var<T> logits = forward(p, src, tgt, false, 0);
    int64_t V = p.cfg.vocab_size, L = tgt.cols;
    std::vector<std::vector<double>> out(prefixes.size());
    for (size_t i = 0; i < prefixes.size(); ++i) {
        int64_t pos = static_cast<int64_t>(prefixes[i].size());
        const T* row = logits.value().ptr() + (static_cast<int64_t>(i) * L + pos) * V;
        out[i].assign(row, row + V);
    }
    return out;
}

inline int32_t argmax_lowest(const std::vector<double>& z) {
    size_t best = 0;
    for (size_t v = 1; v < z.size(); ++v)
        if (z[v] > z[best]) best = v;
    return static_cast<int32_t>(best);
}

inline std::vector<double> log_softmax_row(const std::vector<double>& z) {
    double mx = *std::max_element(z.begin(), z.end());
    double total = 0;
    for (double v : z) total += std::exp(v - mx);
    double lse = mx + std::log(total);
    std::vector<double> out(z.size());
    for (size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
    return out;
}

inline double unit_uniform(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// One multinomial draw from softmax(z / temperature) truncated to the top_k
// highest-scoring tokens (ties kept in lowest-id order).
inline int32_t sample_step(const std::vector<double>& z, double temperature, int64_t top_k,
                           std::mt19937_64& eng) {
    std::vector<int32_t> order(z.size());
    for (size_t i = 0; i < z.size(); ++i) order[i] = static_cast<int32_t>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int32_t a, int32_t b) { return z[a] > z[b]; });
    order.resize(static_cast<size_t>(top_k));
    double mx = z[order[0]] / temperature;
    std::vector<double> w(order.size());
    double total = 0;
    for (size_t i = 0; i < order.size(); ++i) {
        w[i] = std::exp(z[order[i]] / temperature - mx);
        total += w[i];
    }
    double u = unit_uniform(eng) * total;
    double cum = 0;
    for (size_t i = 0; i < order.size(); ++i) {
        cum += w[i];
        if (u < cum) return order[i];
    }
    return order.back();
}

}  // namespace detail

template <typename T>
std::vector<std::vector<int32_t>> greedy_decode_batch(const TransformerParams<T>& p,
                                                      const std::vector<std::vector<int32_t>>& srcs,
                                                      int64_t max_len) {
    size_t n = srcs.size();
    std::vector<std::vector<int32_t>> outs(n);
    std::vector<bool> done(n, false);
    for (int64_t t = 0; t < max_len; ++t) {
        std::vector<size_t> live;
        for (size_t i = 0; i < n; ++i)
            if (!done[i]) live.push_back(i);
        if (live.empty()) break;
        std::vector<std::vector<int32_t>> bs, bp;
        for (size_t i : live) {
            bs.push_back(srcs[i]);
            bp.push_back(outs[i]);
        }
        auto logits = detail::step_logits(p, bs, bp);
        for (size_t r = 0; r < live.size(); ++r) {
            int32_t tok = detail::argmax_lowest(logits[r]);
            outs[live[r]].push_back(tok);
            if (tok == Vocabulary::EOS) done[live[r]] = true;
        }
    }
    return outs;
}

template <typename T>
std::vector<int32_t> greedy_decode(const TransformerParams<T>& p, const std::vector<int32_t>& src,
                                   int64_t max_len) {
    return greedy_decode_batch(p, {src}, max_len)[0];
}

// Per-sentence RNG streams: sentence i uses engine(mix_seed(cfg.seed, "sample",
// first_sample_index + i)), one draw per generated token, so results do not
// depend on batch composition.
template <typename T>
std::vector<std::vector<int32_t>> sample_decode_batch(const TransformerParams<T>& p,
                                                      const std::vector<std::vector<int32_t>>& srcs,
                                                      const DecodeConfig& cfg,
                                                      uint64_t first_sample_index = 0) {
    if (cfg.temperature <= 0.0)
        throw InvalidTemperature("temperature must be > 0, got " +
                                 std::to_string(cfg.temperature));
    if (cfg.top_k < 1 || cfg.top_k > p.cfg.vocab_size)
        throw InvalidConfig("top_k must be in [1, vocab_size], got " +
                            std::to_string(cfg.top_k));
    size_t n = srcs.size();
    std::vector<std::mt19937_64> engines;
    engines.reserve(n);
    for (size_t i = 0; i < n; ++i)
        engines.push_back(make_engine(mix_seed(cfg.seed, tag_of("sample"), first_sample_index + i)));
    std::vector<std::vector<int32_t>> outs(n);
    std::vector<bool> done(n, false);
    for (int64_t t = 0; t < cfg.max_len; ++t) {
        std::vector<size_t> live;
        for (size_t i = 0; i < n; ++i)
            if (!done[i]) live.push_back(i);
        if (live.empty()) break;
        std::vector<std::vector<int32_t>> bs, bp;
        for (size_t i : live) {
            bs.push_back(srcs[i]);
            bp.push_back(outs[i]);
        }
        auto logits = detail::step_logits(p, bs, bp);
        for (size_t r = 0; r < live.size(); ++r) {
            size_t i = live[r];
            int32_t tok = detail::sample_step(logits[r], cfg.temperature, cfg.top_k, engines[i]);
            outs[i].push_back(tok);
            if (tok == Vocabulary::EOS) done[i] = true;
        }
    }
    return outs;
}

template <typename T>
std::vector<int32_t> sample_decode(const TransformerParams<T>& p, const std::vector<int32_t>& src,
                                   const DecodeConfig& cfg, uint64_t sample_index = 0) {
    return sample_decode_batch(p, {src}, cfg, sample_index)[0];
}

// Candidates are pruned by summed log-prob during the search; the final
// hypothesis is chosen by length-normalized log-prob (sum / length) over the
// completed pool. A hypothesis still alive at max_len completes without EOS.
template <typename T>
std::vector<int32_t> beam_decode(const TransformerParams<T>& p, const std::vector<int32_t>& src,
                                 int64_t beam_size, int64_t max_len) {
    if (beam_size < 1) throw InvalidConfig("beam_size must be >= 1");
    if (max_len < 1) throw InvalidConfig("max_len must be >= 1");
    struct Hyp {
        std::vector<int32_t> toks;
        double sum = 0.0;
    };
    std::vector<Hyp> live{Hyp{}};
    std::vector<Hyp> done;
    for (int64_t t = 0; t < max_len && !live.empty(); ++t) {
        std::vector<std::vector<int32_t>> bs(live.size(), src), bp;
        bp.reserve(live.size());
        for (const auto& h : live) bp.push_back(h.toks);
        auto logits = detail::step_logits(p, bs, bp);
        struct Cand {
            double sum;
            int32_t tok;
            size_t beam;
        };
        std::vector<Cand> cands;
        cands.reserve(live.size() * static_cast<size_t>(p.cfg.vocab_size));
        for (size_t b = 0; b < live.size(); ++b) {
            auto logp = detail::log_softmax_row(logits[b]);
            for (size_t v = 0; v < logp.size(); ++v)
                cands.push_back({live[b].sum + logp[v], static_cast<int32_t>(v), b});
        }
        size_t keep = std::min<size_t>(static_cast<size_t>(beam_size), cands.size());
        std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(),
                          [](const Cand& a, const Cand& b) {
                              if (a.sum != b.sum) return a.sum > b.sum;
                              if (a.tok != b.tok) return a.tok < b.tok;
                              return a.beam < b.beam;
                          });
        std::vector<Hyp> next;
        for (size_t c = 0; c < keep; ++c) {
            Hyp h = live[cands[c].beam];
            h.toks.push_back(cands[c].tok);
            h.sum = cands[c].sum;
            if (cands[c].tok == Vocabulary::EOS || t + 1 == max_len)
                done.push_back(std::move(h));
            else
                next.push_back(std::move(h));
        }
        live = std::move(next);
    }
    auto norm = [](const Hyp& h) { return h.sum / static_cast<double>(h.toks.size()); };
    size_t best = 0;
    for (size_t i = 1; i < done.size(); ++i) {
        double a = norm(done[i]), b = norm(done[best]);
        if (a > b || (a == b && done[i].toks < done[best].toks)) best = i;
    }
    return done[best].toks;
}

template <typename T>
std::vector<std::vector<int32_t>> beam_decode_batch(const TransformerParams<T>& p,
                                                    const std::vector<std::vector<int32_t>>& srcs,
                                                    int64_t beam_size, int64_t max_len) {
    std::vector<std::vector<int32_t>> outs;
    outs.reserve(srcs.size());
    for (const auto& s : srcs) outs.push_back(beam_decode(p, s, beam_size, max_len));
    return outs;
}

template <typename T>
std::vector<std::vector<int32_t>> decode_batch(const TransformerParams<T>& p,
                                               const std::vector<std::vector<int32_t>>& srcs,
                                               const DecodeConfig& cfg,
                                               uint64_t first_sample_index = 0) {
    switch (cfg.mode) {
        case DecodeMode::greedy: return greedy_decode_batch(p, srcs, cfg.max_len);
        case DecodeMode::sample: return sample_decode_batch(p, srcs, cfg, first_sample_index);
        case DecodeMode::beam: return beam_decode_batch(p, srcs, cfg.beam_size, cfg.max_len);
    }
    throw InvalidConfig("unknown decode mode");
}

}  // namespace sgrep
