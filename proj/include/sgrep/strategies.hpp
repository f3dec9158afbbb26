// Experience-stream training strategies: incremental, joint, real replay,
// self-generated replay, EWC, and A-GEM, plus the stream driver that
// produces per-experience score matrices.
#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sgrep/decode.hpp"
#include "sgrep/metrics.hpp"
#include "sgrep/model.hpp"
#include "sgrep/optim.hpp"
#include "sgrep/replay.hpp"
#include "sgrep/sgrep.hpp"
#include "sgrep/stream.hpp"

namespace sgrep {

enum class StrategyKind { incremental, joint, replay_real, sgrep, ewc, agem };

inline std::string strategy_kind_name(StrategyKind k) {
    switch (k) {
        case StrategyKind::incremental: return "incremental";
        case StrategyKind::joint: return "joint";
        case StrategyKind::replay_real: return "replay_real";
        case StrategyKind::sgrep: return "sgrep";
        case StrategyKind::ewc: return "ewc";
        case StrategyKind::agem: return "agem";
    }
    throw InvalidConfig("bad strategy kind");
}

inline StrategyKind strategy_kind_from(const std::string& s) {
    if (s == "incremental") return StrategyKind::incremental;
    if (s == "joint") return StrategyKind::joint;
    if (s == "replay_real") return StrategyKind::replay_real;
    if (s == "sgrep") return StrategyKind::sgrep;
    if (s == "ewc") return StrategyKind::ewc;
    if (s == "agem") return StrategyKind::agem;
    throw InvalidConfig("unknown strategy kind '" + s + "'");
}

struct StrategyConfig {
    StrategyKind kind = StrategyKind::incremental;

    double lambda = 0.0;  // EWC penalty weight
    bool ewc_accumulate = false;
    int64_t fisher_samples = 1000;

    int64_t agem_batch = 150;

    double buffer_pct = 0.0;   // replay memory as a fraction of the stream
    int64_t n_generate = 0;    // pseudo pairs per direction per experience
    int64_t gen_attempts_factor = 20;

    double lr = 5e-4;
    double dropout = 0.1;  // applied to the model config by the runner
    int64_t batch_size = 150;
    int64_t max_epochs = 50;
    int64_t patience = 10;
    int64_t eval_every = 5000;
    int64_t warmup_steps = 100;
    int64_t total_steps = 0;  // 0: max_epochs * steps_per_epoch
    std::string early_metric = "loss";  // or "bleu"

    void validate() const {
        if (lambda < 0) throw InvalidConfig("lambda must be >= 0");
        if (fisher_samples < 1) throw InvalidConfig("fisher_samples must be >= 1");
        if (agem_batch < 1) throw InvalidConfig("agem_batch must be >= 1");
        if (buffer_pct < 0 || buffer_pct > 1)
            throw InvalidConfig("buffer_pct must be in [0, 1]");
        if (n_generate < 0) throw InvalidConfig("n_generate must be >= 0");
        if (gen_attempts_factor < 1) throw InvalidConfig("gen_attempts_factor must be >= 1");
        if (lr <= 0) throw InvalidConfig("lr must be > 0");
        if (dropout < 0 || dropout >= 1) throw InvalidConfig("dropout must be in [0, 1)");
        if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
        if (max_epochs < 1) throw InvalidConfig("max_epochs must be >= 1");
        if (patience < 1) throw InvalidConfig("patience must be >= 1");
        if (eval_every < 1) throw InvalidConfig("eval_every must be >= 1");
        if (warmup_steps < 0) throw InvalidConfig("warmup_steps must be >= 0");
        if (total_steps < 0) throw InvalidConfig("total_steps must be >= 0");
        if (early_metric != "loss" && early_metric != "bleu")
            throw InvalidConfig("early_metric must be loss or bleu");
    }
};

inline void to_json(nlohmann::json& j, const StrategyConfig& c) {
    j = nlohmann::json{{"kind", strategy_kind_name(c.kind)},
                       {"lambda", c.lambda},
                       {"ewc_accumulate", c.ewc_accumulate},
                       {"fisher_samples", c.fisher_samples},
                       {"agem_batch", c.agem_batch},
                       {"buffer_pct", c.buffer_pct},
                       {"n_generate", c.n_generate},
                       {"gen_attempts_factor", c.gen_attempts_factor},
                       {"lr", c.lr},
                       {"dropout", c.dropout},
                       {"batch_size", c.batch_size},
                       {"max_epochs", c.max_epochs},
                       {"patience", c.patience},
                       {"eval_every", c.eval_every},
                       {"warmup_steps", c.warmup_steps},
                       {"total_steps", c.total_steps},
                       {"early_metric", c.early_metric}};
}

inline void from_json(const nlohmann::json& j, StrategyConfig& c) {
    StrategyConfig d;
    c.kind = strategy_kind_from(j.value("kind", strategy_kind_name(d.kind)));
    c.lambda = j.value("lambda", d.lambda);
    c.ewc_accumulate = j.value("ewc_accumulate", d.ewc_accumulate);
    c.fisher_samples = j.value("fisher_samples", d.fisher_samples);
    c.agem_batch = j.value("agem_batch", d.agem_batch);
    c.buffer_pct = j.value("buffer_pct", d.buffer_pct);
    c.n_generate = j.value("n_generate", d.n_generate);
    c.gen_attempts_factor = j.value("gen_attempts_factor", d.gen_attempts_factor);
    c.lr = j.value("lr", d.lr);
    c.dropout = j.value("dropout", d.dropout);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.patience = j.value("patience", d.patience);
    c.eval_every = j.value("eval_every", d.eval_every);
    c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
    c.total_steps = j.value("total_steps", d.total_steps);
    c.early_metric = j.value("early_metric", d.early_metric);
    c.validate();
}

struct TrainLogEntry {
    int64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
};

struct DevEval {
    int64_t step = 0;
    double metric = 0.0;  // dev loss, or negated dev BLEU
};

struct TrainLog {
    std::vector<TrainLogEntry> steps;
    std::vector<DevEval> evals;
    bool early_stopped = false;
    int64_t best_step = -1;
    double best_metric = std::numeric_limits<double>::infinity();
    double wallclock_s = 0.0;
};

// ---------------------------------------------------------------------------
// EWC: empirical diagonal Fisher and the quadratic anchor penalty.

template <typename T>
struct FisherState {
    std::vector<std::pair<std::string, Tensor<T>>> fisher;
    std::vector<std::pair<std::string, Tensor<T>>> theta_star;
};

// Mean squared per-sample gradient for each parameter. sample_loss(k) must
// build a fresh scalar loss for sample k.
template <typename T, typename LossFn>
std::vector<Tensor<T>> empirical_fisher(const std::vector<Var<T>*>& params,
                                        LossFn&& sample_loss, int64_t n_samples) {
    if (n_samples < 1) throw EmptySample("empirical_fisher: need at least one sample");
    std::vector<std::vector<double>> acc(params.size());
    for (size_t i = 0; i < params.size(); ++i)
        acc[i].assign(static_cast<size_t>(params[i]->value().size()), 0.0);
    for (int64_t k = 0; k < n_samples; ++k) {
        for (auto* p : params) p->zero_grad();
        Var<T> loss = sample_loss(k);
        backward(loss);
        for (size_t i = 0; i < params.size(); ++i) {
            const Tensor<T>& g = params[i]->node()->grad;
            if (g.size() == 0) continue;
            for (int64_t j = 0; j < g.size(); ++j) {
                double gv = static_cast<double>(g.data[j]);
                acc[i][j] += gv * gv;
            }
        }
    }
    std::vector<Tensor<T>> out;
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor<T> f(params[i]->value().shape);
        for (int64_t j = 0; j < f.size(); ++j)
            f.data[j] = static_cast<T>(acc[i][j] / static_cast<double>(n_samples));
        out.push_back(std::move(f));
    }
    return out;
}

// Diagonal Fisher of the sequence loss over pairs sampled uniformly (with
// replacement) from the pool, one pair per backward pass; theta_star is a
// bitwise snapshot of the current parameters.
template <typename T>
FisherState<T> compute_fisher(TransformerParams<T>& model, const Vocabulary& vocab,
                              const std::vector<ParallelPair>& pool, int64_t n_samples,
                              uint64_t seed) {
    if (pool.empty()) throw EmptySample("compute_fisher: empty data pool");
    if (n_samples < 1) throw EmptySample("compute_fisher: n_samples must be >= 1");
    auto eng = make_engine(mix_seed(seed, tag_of("fisher")));
    std::vector<const ParallelPair*> picks;
    for (int64_t k = 0; k < n_samples; ++k)
        picks.push_back(&pool[static_cast<size_t>(eng() % pool.size())]);

    std::vector<Var<T>*> vars;
    for (auto& [name, v] : model.params) vars.push_back(&v);
    auto fishers = empirical_fisher<T>(
        vars,
        [&](int64_t k) {
            const ParallelPair& p = *picks[static_cast<size_t>(k)];
            IdMatrix src = pad_batch({encode_source(vocab, p.src, p.tgt_lang)});
            IdMatrix tout = pad_batch({encode_target(vocab, p.tgt)});
            IdMatrix tin = decoder_input(tout);
            return sequence_loss(model, src, tin, tout, false, 0);
        },
        n_samples);

    FisherState<T> st;
    for (size_t i = 0; i < model.params.size(); ++i) {
        st.fisher.emplace_back(model.params[i].first, std::move(fishers[i]));
        st.theta_star.emplace_back(model.params[i].first, model.params[i].second.value());
    }
    return st;
}

// ce_loss + (lambda/2) * sum_i F_i (theta_i - theta*_i)^2, built on the
// autodiff graph so the penalty gradient lambda * F . (theta - theta*) flows
// into the parameters.
template <typename T>
Var<T> ewc_penalized_loss(Var<T> ce_loss, std::vector<std::pair<std::string, Var<T>>>& params,
                          const FisherState<T>& fisher, double lambda) {
    if (fisher.fisher.size() != params.size() || fisher.theta_star.size() != params.size())
        throw ShapeMismatch("fisher state does not mirror the parameter list");
    if (lambda == 0.0) return ce_loss;
    Var<T> pen;
    bool first = true;
    for (size_t i = 0; i < params.size(); ++i) {
        auto& [name, var] = params[i];
        const auto& [fname, fval] = fisher.fisher[i];
        const auto& [tname, tval] = fisher.theta_star[i];
        if (fname != name || tname != name || fval.shape != var.value().shape ||
            tval.shape != var.value().shape)
            throw ShapeMismatch("fisher state does not mirror parameter " + name);
        Var<T> diff = sub(var, constant(tval));
        Var<T> term = sum_all(mul(constant(fval), mul(diff, diff)));
        pen = first ? term : add(pen, term);
        first = false;
    }
    return add(ce_loss, mulc(pen, static_cast<T>(lambda * 0.5)));
}

template <typename T>
Var<T> ewc_penalized_loss(Var<T> ce_loss, std::vector<std::pair<std::string, Var<T>>>& params,
                          const std::vector<FisherState<T>>& anchors, double lambda) {
    for (const auto& a : anchors) ce_loss = ewc_penalized_loss(ce_loss, params, a, lambda);
    return ce_loss;
}

// ---------------------------------------------------------------------------
// A-GEM: gradient projection against a reference gradient from memory.

template <typename T>
std::vector<double> flatten_grads(const TransformerParams<T>& p) {
    std::vector<double> out;
    for (const auto& [name, var] : p.params) {
        const Tensor<T>& g = var.node()->grad;
        if (g.size() == 0) {
            out.insert(out.end(), static_cast<size_t>(var.value().size()), 0.0);
        } else {
            for (int64_t j = 0; j < g.size(); ++j)
                out.push_back(static_cast<double>(g.data[j]));
        }
    }
    return out;
}

template <typename T>
void set_grads(TransformerParams<T>& p, const std::vector<double>& flat) {
    size_t off = 0;
    for (auto& [name, var] : p.params) {
        Tensor<T>& g = var.node()->ensure_grad();
        for (int64_t j = 0; j < g.size(); ++j)
            g.data[j] = static_cast<T>(flat[off + static_cast<size_t>(j)]);
        off += static_cast<size_t>(g.size());
    }
    if (off != flat.size())
        throw ShapeMismatch("set_grads: " + std::to_string(flat.size()) + " values for " +
                            std::to_string(off) + " parameters");
}

// g unchanged when it does not conflict with g_ref (or g_ref is zero);
// otherwise the component along g_ref is removed.
inline std::vector<double> agem_project(const std::vector<double>& g,
                                        const std::vector<double>& g_ref,
                                        bool* projected = nullptr) {
    if (g.size() != g_ref.size())
        throw ShapeMismatch("agem_project: gradient sizes " + std::to_string(g.size()) +
                            " vs " + std::to_string(g_ref.size()));
    if (projected) *projected = false;
    double dot = 0.0, ref_sq = 0.0;
    for (size_t i = 0; i < g.size(); ++i) {
        dot += g[i] * g_ref[i];
        ref_sq += g_ref[i] * g_ref[i];
    }
    if (ref_sq == 0.0 || dot >= 0.0) return g;
    double scale = dot / ref_sq;
    std::vector<double> out(g.size());
    for (size_t i = 0; i < g.size(); ++i) out[i] = g[i] - scale * g_ref[i];
    if (projected) *projected = true;
    return out;
}

// Flattened gradient of the sequence loss on a uniformly sampled memory
// batch. Batches larger than the memory sample with replacement.
template <typename T>
std::vector<double> agem_reference_grad(TransformerParams<T>& model, const Vocabulary& vocab,
                                        const ReplayBuffer& buffer, int64_t batch_size,
                                        uint64_t seed, bool* oversampled = nullptr) {
    if (buffer.items.empty()) throw EmptyBuffer("agem_reference_grad: empty memory");
    if (batch_size < 1) throw InvalidConfig("agem_reference_grad: batch_size must be >= 1");
    auto n = static_cast<int64_t>(buffer.items.size());
    auto eng = make_engine(mix_seed(seed, tag_of("agem-sample")));
    std::vector<int64_t> picks;
    if (batch_size > n) {
        if (oversampled) *oversampled = true;
        for (int64_t k = 0; k < batch_size; ++k)
            picks.push_back(static_cast<int64_t>(eng() % static_cast<uint64_t>(n)));
    } else {
        if (oversampled) *oversampled = false;
        std::vector<int64_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        for (int64_t i = 0; i < batch_size; ++i) {
            auto j = i + static_cast<int64_t>(eng() % static_cast<uint64_t>(n - i));
            std::swap(idx[i], idx[j]);
        }
        picks.assign(idx.begin(), idx.begin() + batch_size);
    }
    std::vector<std::vector<int32_t>> srcs, touts;
    for (int64_t k : picks) {
        const auto& p = buffer.items[static_cast<size_t>(k)];
        srcs.push_back(encode_source(vocab, p.src, p.tgt_lang));
        touts.push_back(encode_target(vocab, p.tgt));
    }
    IdMatrix src = pad_batch(srcs);
    IdMatrix tout = pad_batch(touts);
    IdMatrix tin = decoder_input(tout);
    model.zero_grad();
    Var<T> loss = sequence_loss(model, src, tin, tout, true, mix_seed(seed, tag_of("agem-drop")));
    backward(loss);
    return flatten_grads(model);
}

// Optional per-step instrumentation. Gradients arrive flattened in parameter
// order, already in the form the optimizer will consume.
struct TrainHooks {
    std::function<void(const std::vector<double>& grad, const std::vector<double>& ref)>
        on_agem_step;
};

// ---------------------------------------------------------------------------
// Per-experience training loop.

namespace detail {

struct EncodedRow {
    std::vector<int32_t> src, tout;
};

template <typename T>
std::vector<EncodedRow> encode_pairs(const Vocabulary& vocab,
                                     const std::vector<ParallelPair>& pairs) {
    std::vector<EncodedRow> rows(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        rows[i].src = encode_source(vocab, pairs[i].src, pairs[i].tgt_lang);
        rows[i].tout = encode_target(vocab, pairs[i].tgt);
    }
    return rows;
}

inline int64_t non_pad_count(const IdMatrix& m) {
    int64_t n = 0;
    for (int32_t id : m.ids) n += id != Vocabulary::PAD;
    return n;
}

// Teacher-forced mean dev loss, token-weighted across fixed-size chunks.
template <typename T>
double dev_loss(TransformerParams<T>& model, const std::vector<EncodedRow>& rows,
                int64_t chunk) {
    double loss_sum = 0.0;
    int64_t tok_sum = 0;
    for (size_t at = 0; at < rows.size(); at += static_cast<size_t>(chunk)) {
        size_t end = std::min(rows.size(), at + static_cast<size_t>(chunk));
        std::vector<std::vector<int32_t>> bs, bt;
        for (size_t i = at; i < end; ++i) {
            bs.push_back(rows[i].src);
            bt.push_back(rows[i].tout);
        }
        IdMatrix src = pad_batch(bs);
        IdMatrix tout = pad_batch(bt);
        IdMatrix tin = decoder_input(tout);
        Var<T> loss = sequence_loss(model, src, tin, tout, false, 0);
        int64_t toks = non_pad_count(tout);
        loss_sum += static_cast<double>(loss.value().data[0]) * static_cast<double>(toks);
        tok_sum += toks;
    }
    return tok_sum > 0 ? loss_sum / static_cast<double>(tok_sum) : 0.0;
}

// Greedy corpus BLEU on a pair list, decoded in fixed-size chunks.
template <typename T>
double dev_bleu(TransformerParams<T>& model, const Vocabulary& vocab,
                const std::vector<ParallelPair>& pairs, int64_t chunk) {
    DecodeConfig dc;
    dc.mode = DecodeMode::greedy;
    dc.max_len = model.cfg.max_len;
    std::vector<std::string> hyps, refs;
    for (size_t at = 0; at < pairs.size(); at += static_cast<size_t>(chunk)) {
        size_t end = std::min(pairs.size(), at + static_cast<size_t>(chunk));
        std::vector<std::vector<int32_t>> srcs;
        for (size_t i = at; i < end; ++i)
            srcs.push_back(encode_source(vocab, pairs[i].src, pairs[i].tgt_lang));
        auto outs = decode_batch(model, srcs, dc);
        for (size_t i = at; i < end; ++i) {
            hyps.push_back(vocab.decode(outs[i - at]));
            refs.push_back(pairs[i].tgt);
        }
    }
    return corpus_bleu(hyps, refs);
}

}  // namespace detail

// Adam with linear warmup and cosine decay, epoch-shuffled batches, dev
// evaluation every eval_every steps with early stopping. EWC anchors add the
// quadratic penalty; an A-GEM memory projects each step's gradient.
template <typename T>
TrainLog train_experience(TransformerParams<T>& model, const Vocabulary& vocab,
                          const std::vector<ParallelPair>& train_set,
                          const std::vector<ParallelPair>& dev_set,
                          const StrategyConfig& cfg, uint64_t seed,
                          const std::vector<FisherState<T>>* ewc_anchors = nullptr,
                          const ReplayBuffer* agem_memory = nullptr,
                          const TrainHooks* hooks = nullptr) {
    cfg.validate();
    if (train_set.empty()) throw EmptyTrainSet("train_experience: empty train set");
    auto t0 = std::chrono::steady_clock::now();

    auto rows = detail::encode_pairs<T>(vocab, train_set);
    auto dev_rows = detail::encode_pairs<T>(vocab, dev_set);

    auto n = static_cast<int64_t>(rows.size());
    int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    int64_t total = cfg.total_steps > 0 ? cfg.total_steps : cfg.max_epochs * steps_per_epoch;
    LrSchedule sched{cfg.lr, cfg.warmup_steps, std::max(total, cfg.warmup_steps + 1)};

    bool use_ewc = cfg.kind == StrategyKind::ewc && ewc_anchors && !ewc_anchors->empty() &&
                   cfg.lambda > 0;
    bool use_agem = cfg.kind == StrategyKind::agem && agem_memory && !agem_memory->items.empty();

    std::vector<AdamState<T>> states(model.params.size());
    TrainLog log;
    double best = std::numeric_limits<double>::infinity();
    int64_t since_best = 0, gstep = 0;
    bool stop = false;

    auto dev_metric = [&]() -> double {
        if (cfg.early_metric == "bleu")
            return -detail::dev_bleu(model, vocab, dev_set, cfg.batch_size);
        return detail::dev_loss(model, dev_rows, cfg.batch_size);
    };

    for (int64_t epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
        std::vector<int64_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        seeded_shuffle(order, mix_seed(seed, tag_of("epoch"), static_cast<uint64_t>(epoch)));
        for (int64_t b = 0; b < steps_per_epoch && !stop; ++b) {
            std::vector<std::vector<int32_t>> bs, bt;
            for (int64_t i = b * cfg.batch_size; i < std::min(n, (b + 1) * cfg.batch_size); ++i) {
                bs.push_back(rows[static_cast<size_t>(order[i])].src);
                bt.push_back(rows[static_cast<size_t>(order[i])].tout);
            }
            IdMatrix src = pad_batch(bs);
            IdMatrix tout = pad_batch(bt);
            IdMatrix tin = decoder_input(tout);

            std::vector<double> g_ref;
            if (use_agem)
                g_ref = agem_reference_grad(model, vocab, *agem_memory, cfg.agem_batch,
                                            mix_seed(seed, tag_of("agem"), gstep));

            model.zero_grad();
            Var<T> loss = sequence_loss(model, src, tin, tout, true,
                                        mix_seed(seed, tag_of("drop"), gstep));
            if (use_ewc) loss = ewc_penalized_loss(loss, model.params, *ewc_anchors, cfg.lambda);
            backward(loss);

            if (use_agem) {
                auto g = agem_project(flatten_grads(model), g_ref);
                set_grads(model, g);
                if (hooks && hooks->on_agem_step) hooks->on_agem_step(g, g_ref);
            }

            double lr = lr_at(gstep, sched);
            for (size_t i = 0; i < model.params.size(); ++i)
                adam_step(model.params[i].second.node()->value, model.params[i].second.grad(),
                          states[i], lr);

            log.steps.push_back({gstep, static_cast<double>(loss.value().data[0]), lr});
            gstep += 1;

            if (!dev_set.empty() && gstep % cfg.eval_every == 0) {
                double m = dev_metric();
                log.evals.push_back({gstep, m});
                if (m < best) {
                    best = m;
                    log.best_step = gstep;
                    log.best_metric = m;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if (since_best >= cfg.patience) {
                        log.early_stopped = true;
                        stop = true;
                    }
                }
            }
        }
    }
    log.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return log;
}

// ---------------------------------------------------------------------------
// Stream driver.

inline std::vector<std::string> direction_labels(const Stream& stream) {
    std::vector<std::string> out;
    for (const auto& exp : stream.experiences)
        for (const auto& [s, t] : exp.directions) out.push_back(s + "-" + t);
    return out;
}

// Corpus BLEU of the model on one direction's test pairs.
template <typename T>
double evaluate_direction(TransformerParams<T>& model, const Vocabulary& vocab,
                          const std::vector<ParallelPair>& test_pairs, const std::string& src_lang,
                          const std::string& tgt_lang, const DecodeConfig& dcfg,
                          int64_t chunk = 64) {
    std::vector<std::string> hyps, refs;
    std::vector<std::vector<int32_t>> srcs;
    for (const auto& p : test_pairs) {
        if (p.src_lang != src_lang || p.tgt_lang != tgt_lang) continue;
        srcs.push_back(encode_source(vocab, p.src, p.tgt_lang));
        refs.push_back(p.tgt);
    }
    if (srcs.empty()) throw EmptyCorpus("no test pairs for " + src_lang + "-" + tgt_lang);
    for (size_t at = 0; at < srcs.size(); at += static_cast<size_t>(chunk)) {
        size_t end = std::min(srcs.size(), at + static_cast<size_t>(chunk));
        std::vector<std::vector<int32_t>> part(srcs.begin() + static_cast<int64_t>(at),
                                               srcs.begin() + static_cast<int64_t>(end));
        for (auto& ids : decode_batch(model, part, dcfg)) hyps.push_back(vocab.decode(ids));
    }
    return corpus_bleu(hyps, refs);
}

// One score-matrix row: every direction of every experience, stream order.
template <typename T>
std::vector<double> evaluate_all_directions(TransformerParams<T>& model, const Vocabulary& vocab,
                                            const Stream& stream, const DecodeConfig& dcfg) {
    std::vector<double> row;
    for (const auto& exp : stream.experiences)
        for (const auto& [s, t] : exp.directions)
            row.push_back(evaluate_direction(model, vocab, exp.test, s, t, dcfg));
    return row;
}

template <typename T>
struct StreamState {
    ScoreMatrix matrix;
    std::vector<TrainLog> logs;
    ReplayBuffer buffer{0, 0};
    std::vector<FisherState<T>> anchors;
    int64_t next_experience = 0;
    int64_t total_experiences = 0;
    // What the latest experience generated (self-generated replay only).
    std::vector<ParallelPair> last_generated;
    std::vector<std::pair<std::string, GenerationReport>> last_reports;
};

inline bool strategy_uses_buffer(StrategyKind k) {
    return k == StrategyKind::replay_real || k == StrategyKind::sgrep ||
           k == StrategyKind::agem;
}

template <typename T>
StreamState<T> init_stream_state(const Stream& stream, const StrategyConfig& cfg,
                                 uint64_t seed) {
    cfg.validate();
    if (stream.experiences.empty()) throw EmptyCorpus("stream has no experiences");
    StreamState<T> st;
    st.total_experiences = static_cast<int64_t>(stream.experiences.size());
    st.matrix.directions = direction_labels(stream);
    if (strategy_uses_buffer(cfg.kind) && cfg.buffer_pct > 0) {
        int64_t total = 0;
        for (const auto& exp : stream.experiences)
            total += static_cast<int64_t>(exp.train.size());
        st.buffer = make_buffer(buffer_capacity(cfg.buffer_pct, total),
                                mix_seed(seed, tag_of("buffer")));
    }
    return st;
}

// Train on the next experience, evaluate every direction, then update the
// strategy's carried state (replay memories, Fisher anchors). Joint training
// consumes the whole stream in its single run.
template <typename T>
void run_next_experience(StreamState<T>& st, TransformerParams<T>& model, const Stream& stream,
                         const Vocabulary& vocab, const StrategyConfig& cfg,
                         const DecodeConfig& eval_decode, uint64_t seed,
                         const TrainHooks* hooks = nullptr) {
    int64_t i = st.next_experience;
    if (i >= st.total_experiences) throw InvalidConfig("stream already finished");
    const Experience& exp = stream.experiences[static_cast<size_t>(i)];

    std::vector<ParallelPair> train, dev;
    std::string row_label;
    if (cfg.kind == StrategyKind::joint) {
        for (const auto& e : stream.experiences) {
            train.insert(train.end(), e.train.begin(), e.train.end());
            dev.insert(dev.end(), e.dev.begin(), e.dev.end());
        }
        row_label = "joint";
    } else if ((cfg.kind == StrategyKind::replay_real || cfg.kind == StrategyKind::sgrep) &&
               !st.buffer.items.empty()) {
        train = compose_train_set(exp.train, st.buffer, mix_seed(seed, tag_of("compose"), i));
        dev = exp.dev;
        row_label = "exp" + std::to_string(i);
    } else {
        train = exp.train;
        dev = exp.dev;
        row_label = "exp" + std::to_string(i);
    }

    st.logs.push_back(train_experience(model, vocab, train, dev, cfg,
                                       mix_seed(seed, tag_of("experience"), i),
                                       cfg.kind == StrategyKind::ewc ? &st.anchors : nullptr,
                                       cfg.kind == StrategyKind::agem ? &st.buffer : nullptr,
                                       hooks));

    st.matrix.row_labels.push_back(row_label);
    st.matrix.scores.push_back(evaluate_all_directions(model, vocab, stream, eval_decode));
    st.matrix.validate();

    // Carried state updates happen after evaluation.
    st.last_generated.clear();
    st.last_reports.clear();
    if ((cfg.kind == StrategyKind::replay_real || cfg.kind == StrategyKind::agem) &&
        st.buffer.capacity > 0) {
        reservoir_update(st.buffer, exp.train);
    } else if (cfg.kind == StrategyKind::sgrep && st.buffer.capacity > 0 && cfg.n_generate > 0) {
        auto filter = make_filter(stream);
        for (size_t d = 0; d < exp.directions.size(); ++d) {
            const auto& [s, t] = exp.directions[d];
            // Two tokens of headroom so re-encoding a generated sentence
            // (direction token + EOS) still fits the model's max_len.
            auto budget = make_budget(cfg.n_generate, vocab.size(), model.cfg.max_len - 2,
                                      mix_seed(seed, tag_of("generate"), i, d));
            budget.max_attempts = cfg.gen_attempts_factor * cfg.n_generate;
            GenerationReport report;
            auto items =
                generate_replay_data(model, vocab, cfg.n_generate, s, t, budget, filter, &report);
            st.last_generated.insert(st.last_generated.end(), items.begin(), items.end());
            st.last_reports.emplace_back(s + "-" + t, std::move(report));
            reservoir_update(st.buffer, items);
        }
    } else if (cfg.kind == StrategyKind::ewc) {
        auto anchor = compute_fisher(model, vocab, exp.train, cfg.fisher_samples,
                                     mix_seed(seed, tag_of("anchor"), i));
        if (cfg.ewc_accumulate)
            st.anchors.push_back(std::move(anchor));
        else
            st.anchors = {std::move(anchor)};
    }

    st.next_experience = cfg.kind == StrategyKind::joint ? st.total_experiences : i + 1;
}

template <typename T>
StreamState<T> run_stream(
    TransformerParams<T>& model, const Stream& stream, const Vocabulary& vocab,
    const StrategyConfig& cfg, const DecodeConfig& eval_decode, uint64_t seed,
    const std::function<void(const StreamState<T>&, const TransformerParams<T>&)>&
        on_experience = {}) {
    auto st = init_stream_state<T>(stream, cfg, seed);
    while (st.next_experience < st.total_experiences) {
        run_next_experience(st, model, stream, vocab, cfg, eval_decode, seed);
        if (on_experience) on_experience(st, model);
    }
    return st;
}

}  // namespace sgrep
