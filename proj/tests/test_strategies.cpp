#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "sgrep/strategies.hpp"
#include "support/oracles.hpp"

using namespace sgrep;

namespace {

nlohmann::json synth_exp(int id, const std::string& l1, const std::string& l2, int64_t train,
                         int64_t dev, int64_t test, uint64_t seed) {
    return {{"id", id},
            {"src_lang", l1},
            {"tgt_lang", l2},
            {"train", {{"synth", {{"size", train}, {"seed", seed}}}}},
            {"dev", {{"synth", {{"size", dev}, {"seed", seed + 1}}}}},
            {"test", {{"synth", {{"size", test}, {"seed", seed + 2}}}}}};
}

// aa<->bb then cc<->dd, distinct word forms per language.
Stream two_experience_stream(int64_t train = 8, int64_t dev = 4, int64_t test = 4) {
    nlohmann::json m = {
        {"grammar_seed", 11},
        {"languages",
         {{"aa", {{"kind", "identity"}}},
          {"bb", {{"kind", "caesar"}, {"shift", 7}}},
          {"cc", {{"kind", "caesar"}, {"shift", 3}}},
          {"dd", {{"kind", "vowel_double"}}}}},
        {"experiences",
         {synth_exp(1, "aa", "bb", train, dev, test, 100),
          synth_exp(2, "cc", "dd", train, dev, test, 200)}}};
    return make_stream(m);
}

// Every language is the identity transform, so all lexicons coincide and the
// pseudo-sentence filter accepts any mix of real words.
Stream identity_stream(int64_t train = 8, int64_t dev = 4, int64_t test = 4) {
    nlohmann::json m = {
        {"grammar_seed", 11},
        {"languages",
         {{"aa", {{"kind", "identity"}}},
          {"bb", {{"kind", "identity"}}},
          {"cc", {{"kind", "identity"}}},
          {"dd", {{"kind", "identity"}}}}},
        {"experiences",
         {synth_exp(1, "aa", "bb", train, dev, test, 100),
          synth_exp(2, "cc", "dd", train, dev, test, 200)}}};
    return make_stream(m);
}

ModelConfig tiny_cfg(int64_t vocab_size, int64_t d_model = 16, int64_t max_len = 20) {
    ModelConfig c;
    c.n_enc_layers = 1;
    c.n_dec_layers = 1;
    c.n_heads = 2;
    c.d_model = d_model;
    c.d_ff = 2 * d_model;
    c.vocab_size = vocab_size;
    c.max_len = max_len;
    c.dropout = 0.0;
    return c;
}

StrategyConfig quick_cfg(StrategyKind kind) {
    StrategyConfig c;
    c.kind = kind;
    c.lr = 1e-3;
    c.batch_size = 8;
    c.max_epochs = 2;
    c.eval_every = 1000;  // no dev evals during the short runs
    c.warmup_steps = 2;
    c.fisher_samples = 2;
    return c;
}

template <typename T>
bool params_equal(const TransformerParams<T>& a, const TransformerParams<T>& b) {
    if (a.params.size() != b.params.size()) return false;
    for (size_t i = 0; i < a.params.size(); ++i) {
        if (a.params[i].first != b.params[i].first) return false;
        const auto& va = a.params[i].second.value();
        const auto& vb = b.params[i].second.value();
        if (va.shape != vb.shape) return false;
        for (int64_t j = 0; j < va.size(); ++j)
            if (va.data[j] != vb.data[j]) return false;
    }
    return true;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

TEST_CASE("gradient projection removes only conflicting components") {
    bool flag = true;
    SECTION("aligned gradients pass through untouched") {
        std::vector<double> g{1, 1}, ref{1, 0};
        REQUIRE(agem_project(g, ref, &flag) == g);
        REQUIRE_FALSE(flag);
    }
    SECTION("orthogonal result after projecting a conflict") {
        std::vector<double> g{1, 0}, ref{-1, 1};
        auto out = agem_project(g, ref, &flag);
        REQUIRE(flag);
        REQUIRE(out[0] == Catch::Approx(0.5).margin(1e-15));
        REQUIRE(out[1] == Catch::Approx(0.5).margin(1e-15));
        REQUIRE(dot(out, ref) == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("zero reference leaves the gradient alone") {
        std::vector<double> g{3, -2}, ref{0, 0};
        REQUIRE(agem_project(g, ref, &flag) == g);
        REQUIRE_FALSE(flag);
    }
    SECTION("mismatched sizes are rejected") {
        REQUIRE_THROWS_AS(agem_project({1, 2}, {1}), ShapeMismatch);
    }
    SECTION("projected gradients never conflict with the reference") {
        auto eng = make_engine(404);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> g(8), ref(8);
            for (auto& x : g) x = u(eng);
            for (auto& x : ref) x = u(eng);
            auto out = agem_project(g, ref);
            REQUIRE(dot(out, ref) >= -1e-6 * norm(out) * norm(ref));
        }
    }
}

TEST_CASE("anchor penalty matches the closed form") {
    using V = Var<double>;
    auto scalar_var = [](double x) { return V(Tensor<double>::scalar(x), true); };

    std::vector<std::pair<std::string, V>> params;
    params.emplace_back("w", scalar_var(5.0));

    FisherState<double> anchor;
    anchor.fisher.emplace_back("w", Tensor<double>::scalar(2.0));
    anchor.theta_star.emplace_back("w", Tensor<double>::scalar(2.0));

    V ce(Tensor<double>::scalar(1.25), false);

    SECTION("lambda/2 * F * (theta - theta_star)^2") {
        V loss = ewc_penalized_loss(ce, params, anchor, 4.0);
        REQUIRE(loss.value().data[0] == Catch::Approx(1.25 + 36.0).margin(1e-12));
    }
    SECTION("lambda zero returns the task loss node itself") {
        V loss = ewc_penalized_loss(ce, params, anchor, 0.0);
        REQUIRE(loss.node() == ce.node());
    }
    SECTION("no penalty at the anchor point") {
        params[0].second.value().data[0] = 2.0;
        V loss = ewc_penalized_loss(ce, params, anchor, 4.0);
        REQUIRE(loss.value().data[0] == Catch::Approx(1.25).margin(1e-12));
    }
    SECTION("multiple anchors add their penalties") {
        FisherState<double> second;
        second.fisher.emplace_back("w", Tensor<double>::scalar(1.0));
        second.theta_star.emplace_back("w", Tensor<double>::scalar(4.0));
        std::vector<FisherState<double>> anchors{anchor, second};
        V loss = ewc_penalized_loss(ce, params, anchors, 4.0);
        REQUIRE(loss.value().data[0] == Catch::Approx(1.25 + 36.0 + 2.0).margin(1e-12));
    }
    SECTION("misaligned state is rejected") {
        FisherState<double> bad = anchor;
        bad.fisher[0].first = "v";
        REQUIRE_THROWS_AS(ewc_penalized_loss(ce, params, bad, 1.0), ShapeMismatch);
        FisherState<double> wrong_shape = anchor;
        wrong_shape.theta_star[0].second = Tensor<double>({2});
        REQUIRE_THROWS_AS(ewc_penalized_loss(ce, params, wrong_shape, 1.0), ShapeMismatch);
        FisherState<double> short_state;
        REQUIRE_THROWS_AS(ewc_penalized_loss(ce, params, short_state, 1.0), ShapeMismatch);
    }
}

TEST_CASE("anchor penalty gradient is lambda F (theta - theta_star)") {
    using V = Var<double>;
    Tensor<double> tv({3}, {1.0, -2.0, 0.5});
    std::vector<std::pair<std::string, V>> params;
    params.emplace_back("w", V(tv, true));
    V& w = params[0].second;

    FisherState<double> anchor;
    anchor.fisher.emplace_back("w", Tensor<double>({3}, {2.0, 0.25, 3.0}));
    anchor.theta_star.emplace_back("w", Tensor<double>({3}, {0.5, 1.0, -1.0}));
    double lambda = 1.7;

    V ce = sum_all(mul(w, w));  // d/dw = 2w
    V loss = ewc_penalized_loss(ce, params, anchor, lambda);
    backward(loss);

    for (int64_t i = 0; i < 3; ++i) {
        double theta = tv.data[i];
        double f = anchor.fisher[0].second.data[i];
        double star = anchor.theta_star[0].second.data[i];
        double want = 2.0 * theta + lambda * f * (theta - star);
        REQUIRE(oracles::rel_err(w.grad().data[i], want) < 1e-12);
    }
}

TEST_CASE("empirical fisher matches the two class softmax closed form") {
    // p = softmax(ln 3, 0) = (0.75, 0.25); per-sample squared gradients are
    // (0.0625, 0.0625) for class 0 and (0.5625, 0.5625) for class 1, so a
    // 3:1 class mix gives exactly 0.1875 in both coordinates.
    Var<double> w(Tensor<double>({1, 2}, {std::log(3.0), 0.0}), true);
    std::vector<Var<double>*> params{&w};

    const int64_t n = 10000;
    auto fisher = empirical_fisher<double>(
        params,
        [&](int64_t k) {
            std::vector<int32_t> target{k < 7500 ? 0 : 1};
            return cross_entropy(w, target, -1);
        },
        n);

    REQUIRE(fisher.size() == 1);
    REQUIRE(fisher[0].shape == Shape{1, 2});
    REQUIRE(fisher[0].data[0] == Catch::Approx(0.1875).margin(1e-12));
    REQUIRE(fisher[0].data[1] == Catch::Approx(0.1875).margin(1e-12));

    REQUIRE_THROWS_AS(
        empirical_fisher<double>(params, [&](int64_t) { return sum_all(w); }, 0), EmptySample);
}

TEST_CASE("fisher state mirrors the model and snapshots parameters") {
    auto stream = two_experience_stream();
    auto vocab = stream_vocab(stream);
    auto model = init_model<float>(tiny_cfg(vocab.size()), 31);
    const auto& pool = stream.experiences[0].train;

    auto st = compute_fisher(model, vocab, pool, 5, 77);
    REQUIRE(st.fisher.size() == model.params.size());
    REQUIRE(st.theta_star.size() == model.params.size());
    for (size_t i = 0; i < model.params.size(); ++i) {
        REQUIRE(st.fisher[i].first == model.params[i].first);
        REQUIRE(st.fisher[i].second.shape == model.params[i].second.value().shape);
        for (double f : st.fisher[i].second.data) REQUIRE(f >= 0.0);
        const auto& theta = model.params[i].second.value();
        REQUIRE(st.theta_star[i].second.data == theta.data);
    }

    auto again = compute_fisher(model, vocab, pool, 5, 77);
    for (size_t i = 0; i < st.fisher.size(); ++i)
        REQUIRE(again.fisher[i].second.data == st.fisher[i].second.data);

    REQUIRE_THROWS_AS(compute_fisher(model, vocab, {}, 5, 77), EmptySample);
    REQUIRE_THROWS_AS(compute_fisher(model, vocab, pool, 0, 77), EmptySample);
}

TEST_CASE("flattened gradients round trip through the model") {
    auto stream = two_experience_stream();
    auto vocab = stream_vocab(stream);
    auto model = init_model<float>(tiny_cfg(vocab.size()), 13);

    const auto& p0 = stream.experiences[0].train[0];
    IdMatrix src = pad_batch({encode_source(vocab, p0.src, p0.tgt_lang)});
    IdMatrix tout = pad_batch({encode_target(vocab, p0.tgt)});
    IdMatrix tin = decoder_input(tout);
    model.zero_grad();
    backward(sequence_loss(model, src, tin, tout, false, 0));

    auto flat = flatten_grads(model);
    REQUIRE(static_cast<int64_t>(flat.size()) == model.param_count());

    set_grads(model, flat);
    REQUIRE(flatten_grads(model) == flat);

    auto bumped = flat;
    bumped[0] += 1.0;
    set_grads(model, bumped);
    REQUIRE(flatten_grads(model)[0] == Catch::Approx(flat[0] + 1.0).margin(1e-6));

    bumped.pop_back();
    REQUIRE_THROWS_AS(set_grads(model, bumped), ShapeMismatch);
}

TEST_CASE("reference gradients sample the memory deterministically") {
    auto stream = two_experience_stream();
    auto vocab = stream_vocab(stream);
    auto model = init_model<float>(tiny_cfg(vocab.size()), 19);

    ReplayBuffer buf = make_buffer(8, 5);
    reservoir_update(buf, {stream.experiences[0].train.begin(),
                           stream.experiences[0].train.begin() + 3});
    REQUIRE(buf.items.size() == 3);

    bool oversampled = true;
    auto g1 = agem_reference_grad(model, vocab, buf, 2, 42, &oversampled);
    REQUIRE_FALSE(oversampled);
    REQUIRE(static_cast<int64_t>(g1.size()) == model.param_count());

    auto g2 = agem_reference_grad(model, vocab, buf, 2, 42, &oversampled);
    REQUIRE(g1 == g2);

    auto g3 = agem_reference_grad(model, vocab, buf, 2, 43);
    REQUIRE(g1 != g3);

    agem_reference_grad(model, vocab, buf, 5, 42, &oversampled);
    REQUIRE(oversampled);

    ReplayBuffer empty = make_buffer(4, 5);
    REQUIRE_THROWS_AS(agem_reference_grad(model, vocab, empty, 2, 42), EmptyBuffer);
    REQUIRE_THROWS_AS(agem_reference_grad(model, vocab, buf, 0, 42), InvalidConfig);
}

TEST_CASE("training fits a tiny identity task") {
    auto stream = identity_stream(48, 8, 8);
    auto vocab = stream_vocab(stream);
    auto model = init_model<float>(tiny_cfg(vocab.size(), 32), 7);
    const auto& exp = stream.experiences[0];

    StrategyConfig cfg;
    cfg.lr = 3e-3;
    cfg.batch_size = 16;
    cfg.max_epochs = 250;
    cfg.eval_every = 6;
    cfg.patience = 15;
    cfg.warmup_steps = 30;

    auto log = train_experience(model, vocab, exp.train, exp.dev, cfg, 3);

    REQUIRE_FALSE(log.steps.empty());
    for (const auto& s : log.steps) REQUIRE(std::isfinite(s.loss));
    REQUIRE(log.steps.front().loss > log.steps.back().loss);
    REQUIRE_FALSE(log.evals.empty());
    double best = std::numeric_limits<double>::infinity();
    int64_t best_step = -1;
    for (const auto& e : log.evals)
        if (e.metric < best) {
            best = e.metric;
            best_step = e.step;
        }
    REQUIRE(log.best_metric == best);
    REQUIRE(log.best_step == best_step);
    REQUIRE(log.wallclock_s > 0.0);

    DecodeConfig dc;
    dc.max_len = model.cfg.max_len;
    for (const auto& [s, t] : exp.directions)
        REQUIRE(evaluate_direction(model, vocab, exp.train, s, t, dc) > 60.0);

    REQUIRE_THROWS_AS(train_experience(model, vocab, {}, exp.dev, cfg, 3), EmptyTrainSet);
}

TEST_CASE("dev evaluation drives early stopping") {
    auto stream = identity_stream(16, 4, 4);
    auto vocab = stream_vocab(stream);
    const auto& exp = stream.experiences[0];

    SECTION("divergent learning rate trips the patience counter") {
        auto model = init_model<float>(tiny_cfg(vocab.size()), 7);
        StrategyConfig cfg;
        cfg.lr = 1.0;
        cfg.batch_size = 8;
        cfg.max_epochs = 10;
        cfg.eval_every = 1;
        cfg.patience = 1;
        cfg.warmup_steps = 0;
        auto log = train_experience(model, vocab, exp.train, exp.dev, cfg, 3);
        REQUIRE(log.early_stopped);
        REQUIRE(static_cast<int64_t>(log.steps.size()) == log.evals.back().step);
        int64_t after_best = 0;
        for (const auto& e : log.evals) after_best += e.step > log.best_step;
        REQUIRE(after_best == cfg.patience);
    }
    SECTION("no dev set means no evals and no stopping") {
        auto model = init_model<float>(tiny_cfg(vocab.size()), 7);
        StrategyConfig cfg;
        cfg.lr = 1e-3;
        cfg.batch_size = 8;
        cfg.max_epochs = 2;
        cfg.eval_every = 1;
        auto log = train_experience(model, vocab, exp.train, {}, cfg, 3);
        REQUIRE(log.evals.empty());
        REQUIRE_FALSE(log.early_stopped);
        REQUIRE(log.best_step == -1);
        REQUIRE(static_cast<int64_t>(log.steps.size()) == 2 * ((32 + 7) / 8));
    }
    SECTION("negated corpus bleu as the dev metric") {
        auto model = init_model<float>(tiny_cfg(vocab.size()), 7);
        StrategyConfig cfg;
        cfg.lr = 1e-3;
        cfg.batch_size = 8;
        cfg.max_epochs = 1;
        cfg.eval_every = 2;
        cfg.early_metric = "bleu";
        auto log = train_experience(model, vocab, exp.train, exp.dev, cfg, 3);
        REQUIRE_FALSE(log.evals.empty());
        for (const auto& e : log.evals) {
            REQUIRE(e.metric <= 0.0);
            REQUIRE(e.metric >= -100.0);
        }
    }
}

TEST_CASE("identical seeds reproduce the training trajectory bitwise") {
    auto stream = two_experience_stream();
    auto vocab = stream_vocab(stream);
    const auto& exp = stream.experiences[0];
    StrategyConfig cfg = quick_cfg(StrategyKind::incremental);

    auto a = init_model<float>(tiny_cfg(vocab.size()), 9);
    auto b = init_model<float>(tiny_cfg(vocab.size()), 9);
    auto log_a = train_experience(a, vocab, exp.train, exp.dev, cfg, 4);
    auto log_b = train_experience(b, vocab, exp.train, exp.dev, cfg, 4);
    REQUIRE(params_equal(a, b));
    REQUIRE(log_a.steps.size() == log_b.steps.size());
    for (size_t i = 0; i < log_a.steps.size(); ++i)
        REQUIRE(log_a.steps[i].loss == log_b.steps[i].loss);

    auto c = init_model<float>(tiny_cfg(vocab.size()), 9);
    train_experience(c, vocab, exp.train, exp.dev, cfg, 5);
    REQUIRE_FALSE(params_equal(a, c));
}

TEST_CASE("degenerate strategies follow the incremental trajectory") {
    auto stream = two_experience_stream();
    auto vocab = stream_vocab(stream);
    DecodeConfig dc;
    dc.max_len = 20;

    auto run = [&](StrategyConfig cfg) {
        auto model = init_model<float>(tiny_cfg(vocab.size()), 11);
        auto st = run_stream(model, stream, vocab, cfg, dc, 21);
        return std::make_pair(std::move(model), std::move(st));
    };

    auto [base_model, base_state] = run(quick_cfg(StrategyKind::incremental));
    REQUIRE(base_state.matrix.row_labels == std::vector<std::string>{"exp0", "exp1"});
    REQUIRE(base_state.matrix.scores.size() == 2);
    REQUIRE(base_state.matrix.scores[0].size() == 4);

    SECTION("ewc with lambda zero") {
        auto cfg = quick_cfg(StrategyKind::ewc);
        cfg.lambda = 0.0;
        auto [model, st] = run(cfg);
        REQUIRE(params_equal(model, base_model));
        REQUIRE(st.matrix.scores == base_state.matrix.scores);
        REQUIRE(st.anchors.size() == 1);  // state still carried faithfully
    }
    SECTION("replay with no buffer capacity") {
        auto cfg = quick_cfg(StrategyKind::replay_real);
        cfg.buffer_pct = 0.0;
        auto [model, st] = run(cfg);
        REQUIRE(params_equal(model, base_model));
        REQUIRE(st.matrix.scores == base_state.matrix.scores);
        REQUIRE(st.buffer.items.empty());
    }
    SECTION("self generated replay with no buffer capacity") {
        auto cfg = quick_cfg(StrategyKind::sgrep);
        cfg.buffer_pct = 0.0;
        cfg.n_generate = 3;
        auto [model, st] = run(cfg);
        REQUIRE(params_equal(model, base_model));
        REQUIRE(st.matrix.scores == base_state.matrix.scores);
    }
    SECTION("gradient memory with no buffer capacity") {
        auto cfg = quick_cfg(StrategyKind::agem);
        cfg.buffer_pct = 0.0;
        auto [model, st] = run(cfg);
        REQUIRE(params_equal(model, base_model));
        REQUIRE(st.matrix.scores == base_state.matrix.scores);
    }
}

TEST_CASE("replay memories fill and grow the composed train set") {
    auto stream = two_experience_stream();
    auto vocab = stream_vocab(stream);
    DecodeConfig dc;
    dc.max_len = 20;

    SECTION("real replay") {
        auto cfg = quick_cfg(StrategyKind::replay_real);
        cfg.buffer_pct = 0.25;  // 0.25 * 32 train pairs = capacity 8
        auto model = init_model<float>(tiny_cfg(vocab.size()), 11);
        auto st = run_stream(model, stream, vocab, cfg, dc, 21);
        REQUIRE(st.buffer.capacity == 8);
        REQUIRE(st.buffer.items.size() == 8);
        REQUIRE(st.buffer.seen_count == 32);
        for (const auto& it : st.buffer.items) REQUIRE(it.provenance == Provenance::real);
        // exp0 trains on 16 pairs (2 steps/epoch), exp1 on 16+8 (3 steps/epoch)
        REQUIRE(st.logs[0].steps.size() == 4);
        REQUIRE(st.logs[1].steps.size() == 6);
    }
    SECTION("gradient memory") {
        auto cfg = quick_cfg(StrategyKind::agem);
        cfg.buffer_pct = 0.25;
        auto model = init_model<float>(tiny_cfg(vocab.size()), 11);
        auto st = run_stream(model, stream, vocab, cfg, dc, 21);
        REQUIRE(st.buffer.items.size() == 8);
        // memory feeds projections, never the composed train set
        REQUIRE(st.logs[0].steps.size() == 4);
        REQUIRE(st.logs[1].steps.size() == 4);
    }
    SECTION("joint training sees the whole stream at once") {
        auto cfg = quick_cfg(StrategyKind::joint);
        auto model = init_model<float>(tiny_cfg(vocab.size()), 11);
        auto st = run_stream(model, stream, vocab, cfg, dc, 21);
        REQUIRE(st.matrix.row_labels == std::vector<std::string>{"joint"});
        REQUIRE(st.matrix.scores.size() == 1);
        REQUIRE(st.logs.size() == 1);
        REQUIRE(st.logs[0].steps.size() == 8);  // 32 pairs, batch 8, 2 epochs
    }
}

TEST_CASE("self generated replay populates the buffer with pseudo pairs") {
    auto stream = identity_stream();
    auto vocab = stream_vocab(stream);
    auto model = init_model<float>(tiny_cfg(vocab.size()), 11);
    DecodeConfig dc;
    dc.max_len = 20;

    auto cfg = quick_cfg(StrategyKind::sgrep);
    cfg.buffer_pct = 0.25;
    cfg.n_generate = 3;
    cfg.gen_attempts_factor = 300;

    auto st = init_stream_state<float>(stream, cfg, 21);
    REQUIRE(st.buffer.capacity == 8);

    run_next_experience(st, model, stream, vocab, cfg, dc, 21);
    REQUIRE(st.buffer.items.size() == 6);  // 3 per direction of exp0
    REQUIRE(st.buffer.seen_count == 6);
    for (const auto& it : st.buffer.items) {
        REQUIRE(it.provenance == Provenance::pseudo);
        REQUIRE_FALSE(it.tgt.empty());
        bool forward = it.src_lang == "aa" && it.tgt_lang == "bb";
        bool backward = it.src_lang == "bb" && it.tgt_lang == "aa";
        REQUIRE((forward || backward));
    }

    run_next_experience(st, model, stream, vocab, cfg, dc, 21);
    REQUIRE(st.next_experience == 2);
    // exp1 trained on 16 real + 6 pseudo pairs: ceil(22/8) = 3 steps/epoch
    REQUIRE(st.logs[1].steps.size() == 6);
    REQUIRE(st.buffer.seen_count == 12);
    REQUIRE(st.buffer.items.size() == 8);
    REQUIRE(st.matrix.scores.size() == 2);
}

TEST_CASE("stream state validates shapes and labels") {
    auto stream = two_experience_stream();
    auto vocab = stream_vocab(stream);

    REQUIRE(direction_labels(stream) ==
            std::vector<std::string>{"aa-bb", "bb-aa", "cc-dd", "dd-cc"});

    auto st = init_stream_state<float>(stream, quick_cfg(StrategyKind::incremental), 3);
    REQUIRE(st.matrix.directions == direction_labels(stream));
    REQUIRE(st.total_experiences == 2);
    REQUIRE(st.buffer.capacity == 0);

    auto model = init_model<float>(tiny_cfg(vocab.size()), 11);
    DecodeConfig dc;
    dc.max_len = 20;
    st.next_experience = 2;
    REQUIRE_THROWS_AS(
        run_next_experience(st, model, stream, vocab, quick_cfg(StrategyKind::incremental), dc, 3),
        InvalidConfig);

    REQUIRE_THROWS_AS(
        evaluate_direction(model, vocab, stream.experiences[0].test, "aa", "cc", dc),
        EmptyCorpus);
}

TEST_CASE("strategy config round trips through json and validates") {
    StrategyConfig c;
    c.kind = StrategyKind::sgrep;
    c.lambda = 2.5;
    c.ewc_accumulate = true;
    c.fisher_samples = 321;
    c.agem_batch = 17;
    c.buffer_pct = 0.2;
    c.n_generate = 180;
    c.gen_attempts_factor = 50;
    c.lr = 7e-4;
    c.dropout = 0.2;
    c.batch_size = 64;
    c.max_epochs = 12;
    c.patience = 3;
    c.eval_every = 250;
    c.warmup_steps = 40;
    c.total_steps = 9000;
    c.early_metric = "bleu";

    nlohmann::json j = c;
    auto back = j.get<StrategyConfig>();
    REQUIRE(back.kind == c.kind);
    REQUIRE(back.lambda == c.lambda);
    REQUIRE(back.ewc_accumulate == c.ewc_accumulate);
    REQUIRE(back.fisher_samples == c.fisher_samples);
    REQUIRE(back.agem_batch == c.agem_batch);
    REQUIRE(back.buffer_pct == c.buffer_pct);
    REQUIRE(back.n_generate == c.n_generate);
    REQUIRE(back.gen_attempts_factor == c.gen_attempts_factor);
    REQUIRE(back.lr == c.lr);
    REQUIRE(back.dropout == c.dropout);
    REQUIRE(back.batch_size == c.batch_size);
    REQUIRE(back.max_epochs == c.max_epochs);
    REQUIRE(back.patience == c.patience);
    REQUIRE(back.eval_every == c.eval_every);
    REQUIRE(back.warmup_steps == c.warmup_steps);
    REQUIRE(back.total_steps == c.total_steps);
    REQUIRE(back.early_metric == c.early_metric);

    REQUIRE(nlohmann::json::object().get<StrategyConfig>().kind == StrategyKind::incremental);

    auto reject = [](nlohmann::json patch) {
        nlohmann::json base = StrategyConfig{};
        base.update(patch);
        REQUIRE_THROWS_AS(base.get<StrategyConfig>(), InvalidConfig);
    };
    reject({{"kind", "sgd"}});
    reject({{"lambda", -1.0}});
    reject({{"lr", 0.0}});
    reject({{"dropout", 1.0}});
    reject({{"buffer_pct", 1.5}});
    reject({{"patience", 0}});
    reject({{"batch_size", 0}});
    reject({{"early_metric", "accuracy"}});
    reject({{"fisher_samples", 0}});
    reject({{"total_steps", -1}});

    for (auto kind : {StrategyKind::incremental, StrategyKind::joint, StrategyKind::replay_real,
                      StrategyKind::sgrep, StrategyKind::ewc, StrategyKind::agem})
        REQUIRE(strategy_kind_from(strategy_kind_name(kind)) == kind);
    REQUIRE_THROWS_AS(strategy_kind_from("ser"), InvalidConfig);
}
