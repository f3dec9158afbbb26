// Pre-LN encoder-decoder transformer, bias-less linear layers, sinusoidal
// positions, tied embeddings by default. Teacher-forced forward pass over
// padded id matrices.
#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "sgrep/nn.hpp"
#include "sgrep/vocab.hpp"

namespace sgrep {

struct ModelConfig {
    int64_t n_enc_layers = 2;
    int64_t n_dec_layers = 2;
    int64_t n_heads = 4;
    int64_t d_model = 64;
    int64_t d_ff = 128;
    int64_t vocab_size = 0;
    int64_t max_len = 64;
    double dropout = 0.1;
    bool tie_embeddings = true;

    void validate() const {
        if (n_enc_layers < 1 || n_dec_layers < 1) throw InvalidConfig("layers must be >= 1");
        if (n_heads < 1) throw InvalidConfig("n_heads must be >= 1");
        if (d_model % n_heads != 0)
            throw InvalidConfig("d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " + std::to_string(n_heads));
        if (vocab_size < 3) throw InvalidConfig("vocab_size must cover the reserved specials");
        if (max_len < 2) throw InvalidConfig("max_len must be >= 2");
        if (dropout < 0.0 || dropout >= 1.0) throw InvalidConfig("dropout must be in [0,1)");
        if (d_ff < 1) throw InvalidConfig("d_ff must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"n_enc_layers", c.n_enc_layers}, {"n_dec_layers", c.n_dec_layers},
         {"n_heads", c.n_heads},           {"d_model", c.d_model},
         {"d_ff", c.d_ff},                 {"vocab_size", c.vocab_size},
         {"max_len", c.max_len},           {"dropout", c.dropout},
         {"tie_embeddings", c.tie_embeddings}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.n_enc_layers = j.value("n_enc_layers", d.n_enc_layers);
    c.n_dec_layers = j.value("n_dec_layers", d.n_dec_layers);
    c.n_heads = j.value("n_heads", d.n_heads);
    c.d_model = j.value("d_model", d.d_model);
    c.d_ff = j.value("d_ff", d.d_ff);
    c.vocab_size = j.value("vocab_size", d.vocab_size);
    c.max_len = j.value("max_len", d.max_len);
    c.dropout = j.value("dropout", d.dropout);
    c.tie_embeddings = j.value("tie_embeddings", d.tie_embeddings);
}

// Closed-form trainable parameter count for a config.
inline int64_t param_count_formula(const ModelConfig& c) {
    int64_t d = c.d_model, ff = c.d_ff;
    int64_t enc_layer = 4 * d * d + 2 * d * ff + 4 * d;      // attn + ffn + 2 norms
    int64_t dec_layer = 8 * d * d + 2 * d * ff + 6 * d;      // self + cross + ffn + 3 norms
    int64_t total = c.vocab_size * d;                        // embedding
    total += c.n_enc_layers * enc_layer + 2 * d;             // + final norm
    total += c.n_dec_layers * dec_layer + 2 * d;
    if (!c.tie_embeddings) total += d * c.vocab_size;
    return total;
}

template <typename T>
struct TransformerParams {
    ModelConfig cfg;
    std::vector<std::pair<std::string, Var<T>>> params;  // manifest order
    std::unordered_map<std::string, size_t> index;
    Tensor<T> positions;  // fixed sinusoidal table, not trained

    Var<T>& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ManifestError("no parameter named '" + name + "'");
        return params[it->second].second;
    }
    const Var<T>& at(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw ManifestError("no parameter named '" + name + "'");
        return params[it->second].second;
    }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& [name, v] : params) n += v.value().size();
        return n;
    }

    void zero_grad() const {
        for (const auto& [name, v] : params) v.zero_grad();
    }
};

namespace detail {

template <typename T>
void add_param(TransformerParams<T>& p, const std::string& name, Tensor<T> t) {
    p.index[name] = p.params.size();
    p.params.emplace_back(name, Var<T>(std::move(t), true));
}

template <typename T>
void add_layer_stack(TransformerParams<T>& p, const std::string& side, int64_t layers,
                     bool cross, std::mt19937_64& eng) {
    const auto& c = p.cfg;
    T w_std = static_cast<T>(1.0 / std::sqrt(static_cast<double>(c.d_model)));
    auto mat = [&](Shape s) { return randn<T>(std::move(s), eng, w_std); };
    for (int64_t i = 0; i < layers; ++i) {
        std::string base = side + "." + std::to_string(i) + ".";
        int norm = 1;
        auto add_norm = [&] {
            add_param(p, base + "norm" + std::to_string(norm) + ".gain",
                      Tensor<T>::full({c.d_model}, T(1)));
            add_param(p, base + "norm" + std::to_string(norm) + ".bias",
                      Tensor<T>({c.d_model}));
            ++norm;
        };
        auto add_attn = [&](const std::string& what) {
            for (const char* w : {"wq", "wk", "wv", "wo"})
                add_param(p, base + what + "." + w, mat({c.d_model, c.d_model}));
        };
        add_norm();
        add_attn(cross ? "self" : "attn");
        if (cross) {
            add_norm();
            add_attn("cross");
        }
        add_norm();
        add_param(p, base + "ffn.w1", mat({c.d_model, c.d_ff}));
        add_param(p, base + "ffn.w2", mat({c.d_ff, c.d_model}));
    }
    add_param(p, side + ".final_norm.gain", Tensor<T>::full({c.d_model}, T(1)));
    add_param(p, side + ".final_norm.bias", Tensor<T>({c.d_model}));
}

}  // namespace detail

// Deterministic scaled-normal initialization (stddev 1/sqrt(d_model)).
template <typename T>
TransformerParams<T> init_model(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    TransformerParams<T> p;
    p.cfg = cfg;
    auto eng = make_engine(mix_seed(seed, tag_of("init")));
    T w_std = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
    detail::add_param(p, "embed.weight", randn<T>({cfg.vocab_size, cfg.d_model}, eng, w_std));
    detail::add_layer_stack(p, "enc", cfg.n_enc_layers, false, eng);
    detail::add_layer_stack(p, "dec", cfg.n_dec_layers, true, eng);
    if (!cfg.tie_embeddings)
        detail::add_param(p, "out_proj.weight",
                          randn<T>({cfg.d_model, cfg.vocab_size}, eng, w_std));
    p.positions = sinusoidal_positions<T>(cfg.max_len, cfg.d_model);
    return p;
}

// Padded id matrix, row-major (rows, cols).
struct IdMatrix {
    std::vector<int32_t> ids;
    int64_t rows = 0, cols = 0;

    IdMatrix() = default;
    IdMatrix(int64_t r, int64_t c) : ids(static_cast<size_t>(r * c), Vocabulary::PAD), rows(r), cols(c) {}
    int32_t& at(int64_t r, int64_t c) { return ids[r * cols + c]; }
    int32_t at(int64_t r, int64_t c) const { return ids[r * cols + c]; }
};

// Left-aligned pad-to-rectangle of a batch of id sequences.
inline IdMatrix pad_batch(const std::vector<std::vector<int32_t>>& rows) {
    int64_t cols = 1;
    for (const auto& r : rows) cols = std::max<int64_t>(cols, static_cast<int64_t>(r.size()));
    IdMatrix m(static_cast<int64_t>(rows.size()), cols);
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j) m.at(i, j) = rows[i][j];
    return m;
}

// Teacher-forcing decoder input: PAD start symbol, then the target shifted
// right by one.
inline IdMatrix decoder_input(const IdMatrix& tgt_out) {
    IdMatrix tin(tgt_out.rows, tgt_out.cols);
    for (int64_t r = 0; r < tgt_out.rows; ++r)
        for (int64_t c = 0; c + 1 < tgt_out.cols; ++c) tin.at(r, c + 1) = tgt_out.at(r, c);
    return tin;
}

namespace detail {

constexpr double kMaskValue = -1e9;

// Additive key-padding mask, shape (B,1,1,S).
template <typename T>
Var<T> pad_mask(const IdMatrix& ids) {
    Tensor<T> m({ids.rows, 1, 1, ids.cols});
    for (int64_t i = 0; i < ids.rows; ++i)
        for (int64_t j = 0; j < ids.cols; ++j)
            m.data[i * ids.cols + j] =
                ids.at(i, j) == Vocabulary::PAD ? static_cast<T>(kMaskValue) : T(0);
    return Var<T>(std::move(m));
}

// Causal + key-padding mask for decoder self-attention, shape (B,1,T,T).
// Position 0 always holds the PAD start symbol and stays visible; only
// trailing pads are masked as keys.
template <typename T>
Var<T> causal_mask(const IdMatrix& ids) {
    int64_t B = ids.rows, L = ids.cols;
    Tensor<T> m({B, 1, L, L});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < L; ++t)
            for (int64_t j = 0; j < L; ++j)
                m.data[(b * L + t) * L + j] =
                    (j > t || (j > 0 && ids.at(b, j) == Vocabulary::PAD))
                        ? static_cast<T>(kMaskValue)
                        : T(0);
    return Var<T>(std::move(m));
}

template <typename T>
struct FwdCtx {
    double p = 0.0;
    uint64_t seed = 0;
    uint64_t site = 0;
    Var<T> drop(Var<T> x) {
        if (p <= 0.0) return x;
        return dropout(x, p, mix_seed(seed, site++));
    }
};

template <typename T>
Var<T> split_heads(const Var<T>& x, int64_t B, int64_t L, int64_t H, int64_t dk) {
    return transpose(reshape(x, {B, L, H, dk}), {0, 2, 1, 3});  // (B,H,L,dk)
}

template <typename T>
Var<T> attention_block(const TransformerParams<T>& p, const std::string& prefix,
                       const Var<T>& q_in, const Var<T>& kv_in, const Var<T>& mask,
                       FwdCtx<T>& ctx) {
    const auto& c = p.cfg;
    int64_t H = c.n_heads, dk = c.d_model / H;
    int64_t B = q_in.shape()[0], Lq = q_in.shape()[1], Lk = kv_in.shape()[1];
    Var<T> q = split_heads(linear(q_in, p.at(prefix + ".wq")), B, Lq, H, dk);
    Var<T> k = split_heads(linear(kv_in, p.at(prefix + ".wk")), B, Lk, H, dk);
    Var<T> v = split_heads(linear(kv_in, p.at(prefix + ".wv")), B, Lk, H, dk);
    Var<T> scores = mulc(matmul(q, transpose(k, {0, 1, 3, 2})),
                         static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk))));
    scores = add(scores, mask);
    Var<T> attn = ctx.drop(softmax_lastdim(scores));
    Var<T> out = transpose(matmul(attn, v), {0, 2, 1, 3});  // (B,Lq,H,dk)
    out = reshape(out, {B, Lq, c.d_model});
    return linear(out, p.at(prefix + ".wo"));
}

template <typename T>
Var<T> ffn_block(const TransformerParams<T>& p, const std::string& base, const Var<T>& x) {
    return linear(relu(linear(x, p.at(base + "ffn.w1"))), p.at(base + "ffn.w2"));
}

template <typename T>
Var<T> embed_with_positions(const TransformerParams<T>& p, const IdMatrix& ids, FwdCtx<T>& ctx) {
    const auto& c = p.cfg;
    Var<T> e = embedding(p.at("embed.weight"), ids.ids, {ids.rows, ids.cols});
    e = mulc(e, static_cast<T>(std::sqrt(static_cast<double>(c.d_model))));
    Tensor<T> pe({1, ids.cols, c.d_model});
    std::copy(p.positions.data.begin(), p.positions.data.begin() + ids.cols * c.d_model,
              pe.data.begin());
    return ctx.drop(add(e, Var<T>(std::move(pe))));
}

template <typename T>
Var<T> norm_at(const TransformerParams<T>& p, const std::string& base, int norm,
               const Var<T>& x) {
    std::string n = base + "norm" + std::to_string(norm) + ".";
    return layer_norm(x, p.at(n + "gain"), p.at(n + "bias"));
}

}  // namespace detail

template <typename T>
Var<T> encode(const TransformerParams<T>& p, const IdMatrix& src, detail::FwdCtx<T>& ctx) {
    Var<T> mask = detail::pad_mask<T>(src);
    Var<T> x = detail::embed_with_positions(p, src, ctx);
    for (int64_t i = 0; i < p.cfg.n_enc_layers; ++i) {
        std::string base = "enc." + std::to_string(i) + ".";
        Var<T> a = detail::attention_block(p, base + "attn", detail::norm_at(p, base, 1, x),
                                           detail::norm_at(p, base, 1, x), mask, ctx);
        x = add(x, ctx.drop(a));
        Var<T> f = detail::ffn_block(p, base, detail::norm_at(p, base, 2, x));
        x = add(x, ctx.drop(f));
    }
    return layer_norm(x, p.at("enc.final_norm.gain"), p.at("enc.final_norm.bias"));
}

// Teacher-forced logits over a shifted decoder input. src rows carry one
// leading direction token; tgt_in rows start with PAD (the decoder start
// symbol). Returns (B, T, V).
template <typename T>
Var<T> forward(const TransformerParams<T>& p, const IdMatrix& src, const IdMatrix& tgt_in,
               bool train = false, uint64_t dropout_seed = 0) {
    const auto& c = p.cfg;
    if (src.cols > c.max_len || tgt_in.cols > c.max_len)
        throw LengthExceedsMaxLen("sequence length " +
                                  std::to_string(std::max(src.cols, tgt_in.cols)) +
                                  " exceeds max_len " + std::to_string(c.max_len));
    if (src.rows != tgt_in.rows) throw ShapeMismatch("src and tgt batch sizes differ");

    detail::FwdCtx<T> ctx{train ? c.dropout : 0.0, dropout_seed, 0};
    Var<T> enc_out = encode(p, src, ctx);
    Var<T> src_mask = detail::pad_mask<T>(src);
    Var<T> self_mask = detail::causal_mask<T>(tgt_in);

    Var<T> x = detail::embed_with_positions(p, tgt_in, ctx);
    for (int64_t i = 0; i < c.n_dec_layers; ++i) {
        std::string base = "dec." + std::to_string(i) + ".";
        Var<T> h = detail::norm_at(p, base, 1, x);
        x = add(x, ctx.drop(detail::attention_block(p, base + "self", h, h, self_mask, ctx)));
        Var<T> h2 = detail::norm_at(p, base, 2, x);
        x = add(x, ctx.drop(detail::attention_block(p, base + "cross", h2, enc_out, src_mask, ctx)));
        Var<T> h3 = detail::norm_at(p, base, 3, x);
        x = add(x, ctx.drop(detail::ffn_block(p, base, h3)));
    }
    x = layer_norm(x, p.at("dec.final_norm.gain"), p.at("dec.final_norm.bias"));

    if (c.tie_embeddings) return linear(x, transpose(p.at("embed.weight"), {1, 0}));
    return linear(x, p.at("out_proj.weight"));
}

// Teacher-forced loss against tgt_out (PAD positions ignored).
template <typename T>
Var<T> sequence_loss(const TransformerParams<T>& p, const IdMatrix& src, const IdMatrix& tgt_in,
                     const IdMatrix& tgt_out, bool train = false, uint64_t dropout_seed = 0) {
    Var<T> logits = forward(p, src, tgt_in, train, dropout_seed);
    return cross_entropy(logits, tgt_out.ids, Vocabulary::PAD);
}

}  // namespace sgrep
