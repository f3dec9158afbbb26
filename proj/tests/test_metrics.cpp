#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "sgrep/metrics.hpp"
#include "support/oracles.hpp"
#include "support/reference_scores.hpp"

using namespace sgrep;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<std::vector<std::string>> tok_all(const std::vector<std::string>& sents) {
    std::vector<std::vector<std::string>> out;
    for (const auto& s : sents) out.push_back(split_ws(s));
    return out;
}

ParallelPair mk_pair(const std::string& src, const std::string& tgt) {
    ParallelPair p;
    p.src = src;
    p.tgt = tgt;
    p.src_lang = "aa";
    p.tgt_lang = "bb";
    return p;
}

ScoreMatrix demo_matrix() {
    ScoreMatrix m;
    m.directions = {"aa-bb", "bb-aa", "cc-dd", "dd-cc"};
    m.row_labels = {"exp0", "exp1", "exp2"};
    m.scores = {{40.0, 38.0, 0.0, 0.0}, {30.0, 28.0, 35.0, 33.0}, {20.0, 18.0, 25.0, 23.0}};
    return m;
}

}  // namespace

TEST_CASE("corpus bleu matches the brute-force oracle on twenty hand cases") {
    struct Case {
        std::vector<std::string> hyps, refs;
    };
    std::vector<Case> cases = {
        {{"the cat sat on the mat"}, {"the cat sat on the mat"}},
        {{"the the the the"}, {"the cat"}},
        {{"a b c d e"}, {"a b c d e f g h i j"}},
        {{"a b c d e f"}, {"a b c d"}},
        {{"hello"}, {"hello"}},
        {{"hello"}, {"world"}},
        {{"good morning"}, {"good evening"}},
        {{"cat cat cat"}, {"the cat sat"}},
        {{"the cat sat", "dogs run fast here", "a b"},
         {"the cat sat", "dogs sprint fast here", "a c"}},
        {{"resumption of the session"}, {"resumption of the original session"}},
        {{"The cat"}, {"the cat"}},
        {{"mat the on sat cat the"}, {"the cat sat on the mat"}},
        {{""}, {"a b"}},
        {{"a b c"}, {""}},
        {{""}, {""}},
        {{"x y z w", "x y z w", "p q r s t"}, {"x y z w", "x y z w", "p q r s t"}},
        {{"the cat sat on mats", ""}, {"the cat sat on mats", "non empty"}},
        {{"1 2 3 4 5"}, {"1 2 3 4 5 6 7"}},
        {{"it is it is it is"}, {"it is it is"}},
        {{"a b c"}, {"a b c"}},
    };
    REQUIRE(cases.size() == 20);
    for (size_t i = 0; i < cases.size(); ++i) {
        INFO("case " << i);
        double got = corpus_bleu(cases[i].hyps, cases[i].refs);
        double want = oracles::bleu_brute(tok_all(cases[i].hyps), tok_all(cases[i].refs));
        REQUIRE_THAT(got, WithinAbs(want, 1e-9));
        REQUIRE(got >= 0.0);
        REQUIRE(got <= 100.0 + 1e-9);
    }
}

TEST_CASE("corpus bleu closed-form spot checks") {
    // Repeated-token clipping: 1-gram precision 1/4, smoothed higher orders
    // 1/(2*3), 1/(4*2), 1/(8*1); no brevity penalty (hyp longer than ref).
    double smoothed = corpus_bleu({"the the the the"}, {"the cat"});
    REQUIRE_THAT(smoothed, WithinAbs(100.0 * std::pow(1.0 / 1536.0, 0.25), 1e-9));

    // Perfect precisions at half the reference length: BP = e^{1-2}.
    double bp = corpus_bleu({"a b c d e"}, {"a b c d e f g h i j"});
    REQUIRE_THAT(bp, WithinAbs(100.0 * std::exp(-1.0), 1e-9));

    // Hypotheses shorter than 4 tokens shrink the effective order.
    REQUIRE_THAT(corpus_bleu({"a b c"}, {"a b c"}), WithinAbs(100.0, 1e-9));
}

TEST_CASE("corpus bleu is 100 exactly on a perfect corpus and below otherwise") {
    std::vector<std::string> refs = {"the cat sat on the mat", "dogs run fast", "a b c d"};
    REQUIRE_THAT(corpus_bleu(refs, refs), WithinAbs(100.0, 1e-9));

    auto hyps = refs;
    hyps[1] = "dogs walk fast";
    REQUIRE(corpus_bleu(hyps, refs) < 100.0 - 1e-6);
}

TEST_CASE("corpus bleu is invariant under consistent pair reordering") {
    std::vector<std::string> hyps = {"the cat sat", "dogs run fast here", "a b"};
    std::vector<std::string> refs = {"the cat sat", "dogs sprint fast here", "a c"};
    double base = corpus_bleu(hyps, refs);
    std::vector<size_t> perm = {2, 0, 1};
    std::vector<std::string> h2, r2;
    for (size_t i : perm) {
        h2.push_back(hyps[i]);
        r2.push_back(refs[i]);
    }
    REQUIRE(corpus_bleu(h2, r2) == base);
}

TEST_CASE("corpus bleu input validation") {
    REQUIRE_THROWS_AS(corpus_bleu({"a", "b"}, {"a"}), LengthMismatch);
    REQUIRE_THROWS_AS(corpus_bleu({}, {}), EmptyInput);
    REQUIRE_THROWS_AS(corpus_bleu({"a"}, {"a"}, 0), InvalidConfig);
}

TEST_CASE("row averages match the frozen reference table") {
    for (const auto& row : refscores::table()) {
        INFO(row.system);
        REQUIRE_THAT(avg_bleu(row.bleu), WithinAbs(row.printed_avg, 0.01));
    }
    REQUIRE_THAT(avg_bleu({7.0, 7.0, 7.0}), WithinAbs(7.0, 1e-12));
    REQUIRE_THAT(avg_bleu({42.5}), WithinAbs(42.5, 1e-12));
    REQUIRE_THROWS_AS(avg_bleu({}), EmptyInput);
}

TEST_CASE("delta lp against the upper bound reproduces the reference deltas") {
    const auto& joint = refscores::row("joint").bleu;

    double d_sgrep = delta_lp(joint, refscores::row("sgrep_0.2_250").bleu);
    REQUIRE_THAT(d_sgrep, WithinAbs(5.46, 0.01));
    REQUIRE(std::abs(d_sgrep - refscores::row("sgrep_0.2_250").printed_delta) <= 0.15);

    double d_incr = delta_lp(joint, refscores::row("incremental").bleu);
    REQUIRE_THAT(d_incr, WithinAbs(20.37, 0.01));
    REQUIRE(std::abs(d_incr - refscores::row("incremental").printed_delta) <= 0.15);

    double d_replay = delta_lp(joint, refscores::row("replay_0.1").bleu);
    REQUIRE_THAT(d_replay, WithinAbs(1.82, 0.01));
    REQUIRE(std::abs(d_replay - refscores::row("replay_0.1").printed_delta) <= 0.15);
}

TEST_CASE("delta lp identities") {
    std::vector<double> u = {30.0, 20.0}, s = {20.0, 10.0};
    REQUIRE(delta_lp(u, u) == 0.0);
    REQUIRE(delta_lp(u, s) == 10.0);
    REQUIRE(delta_lp(u, s) == avg_bleu(u) - avg_bleu(s));

    // Mean-of-differences reading agrees to rounding.
    double per_dir = ((u[0] - s[0]) + (u[1] - s[1])) / 2.0;
    REQUIRE_THAT(delta_lp(u, s), WithinAbs(per_dir, 1e-12));

    REQUIRE_THROWS_AS(delta_lp({1.0}, {1.0, 2.0}), LengthMismatch);
}

TEST_CASE("forgetting series averages the first experience's directions per row") {
    auto m = demo_matrix();
    auto series = forgetting_series(m, {"aa-bb", "bb-aa"});
    REQUIRE(series.size() == 3);
    REQUIRE_THAT(series[0], WithinAbs(39.0, 1e-12));
    REQUIRE_THAT(series[1], WithinAbs(29.0, 1e-12));
    REQUIRE_THAT(series[2], WithinAbs(19.0, 1e-12));

    // Monotone rows give a monotone series; a constant matrix a flat one.
    REQUIRE(series[0] > series[1]);
    REQUIRE(series[1] > series[2]);
    ScoreMatrix flat;
    flat.directions = {"aa-bb"};
    flat.row_labels = {"exp0", "exp1"};
    flat.scores = {{5.0}, {5.0}};
    auto fs = forgetting_series(flat, {"aa-bb"});
    REQUIRE(fs == std::vector<double>{5.0, 5.0});

    // Single-experience matrix: one point, the row mean.
    ScoreMatrix one;
    one.directions = {"aa-bb", "bb-aa"};
    one.row_labels = {"exp0"};
    one.scores = {{10.0, 20.0}};
    REQUIRE_THAT(forgetting_series(one, {"aa-bb", "bb-aa"})[0], WithinAbs(15.0, 1e-12));

    REQUIRE_THROWS_AS(forgetting_series(m, {}), EmptyInput);
    REQUIRE_THROWS_AS(forgetting_series(m, {"nope"}), InvalidConfig);
}

TEST_CASE("score matrix validation and json round trip") {
    auto m = demo_matrix();
    m.validate();
    REQUIRE(m.direction_index("cc-dd") == 2);

    nlohmann::json j = m;
    auto back = j.get<ScoreMatrix>();
    REQUIRE(back.directions == m.directions);
    REQUIRE(back.row_labels == m.row_labels);
    REQUIRE(back.scores == m.scores);

    auto ragged = m;
    ragged.scores[1].pop_back();
    REQUIRE_THROWS_AS(ragged.validate(), ShapeMismatch);
    auto mislabeled = m;
    mislabeled.row_labels.pop_back();
    REQUIRE_THROWS_AS(mislabeled.validate(), ShapeMismatch);
}

TEST_CASE("token frequencies and top-k selection") {
    auto freq = token_frequencies({"a a b", "a c"});
    REQUIRE(freq.at("a") == 3);
    REQUIRE(freq.at("b") == 1);
    REQUIRE(freq.at("c") == 1);

    // Frequency ties break lexicographically.
    REQUIRE(top_k_tokens(freq, 2) == std::vector<std::string>{"a", "b"});
    REQUIRE_THROWS_AS(top_k_tokens(freq, 0), KTooLarge);
    REQUIRE_THROWS_AS(top_k_tokens(freq, 4), KTooLarge);
}

TEST_CASE("token overlap percentages") {
    auto a = token_frequencies({"a a a b b c"});
    SECTION("identical corpora overlap fully at every k") {
        for (int64_t k = 1; k <= 3; ++k) REQUIRE_THAT(token_overlap(a, a, k), WithinAbs(100.0, 1e-12));
    }
    SECTION("disjoint token sets never overlap") {
        auto b = token_frequencies({"x y z"});
        REQUIRE_THAT(token_overlap(a, b, 3), WithinAbs(0.0, 1e-12));
    }
    SECTION("hand-counted half overlap") {
        auto ta = token_frequencies({"a a b"});
        auto tb = token_frequencies({"b b c"});
        REQUIRE_THAT(token_overlap(ta, tb, 2), WithinAbs(50.0, 1e-12));
    }
    SECTION("lexicographic tie-break decides the boundary") {
        auto ta = token_frequencies({"x x x x x b c"});   // top-2 {x, b}
        auto tb = token_frequencies({"x x x x x c d"});   // top-2 {x, c}
        REQUIRE_THAT(token_overlap(ta, tb, 2), WithinAbs(50.0, 1e-12));
    }
    SECTION("symmetry") {
        auto ta = token_frequencies({"a b c d e", "a b"});
        auto tb = token_frequencies({"c d e f", "f g"});
        for (int64_t k = 1; k <= 4; ++k)
            REQUIRE(token_overlap(ta, tb, k) == token_overlap(tb, ta, k));
    }
    SECTION("report aligns with the requested k list") {
        auto ta = token_frequencies({"a a b"});
        auto tb = token_frequencies({"b b c"});
        auto rep = overlap_report(ta, tb, {1, 2});
        REQUIRE(rep.ks == std::vector<int64_t>{1, 2});
        REQUIRE_THAT(rep.pct[0], WithinAbs(0.0, 1e-12));
        REQUIRE_THAT(rep.pct[1], WithinAbs(50.0, 1e-12));
    }
}

TEST_CASE("leakage report counts exact normalized matches per side") {
    std::vector<ParallelPair> train = {mk_pair("a b", "p q r"), mk_pair("c d e f", "s t"),
                                       mk_pair("g h", "u v w")};

    SECTION("disjoint corpora leak nothing") {
        std::vector<ParallelPair> gen = {mk_pair("z z", "y y"), mk_pair("w", "x")};
        auto r = leakage_report(gen, train);
        REQUIRE(r.generated_count == 2);
        REQUIRE(r.leaked_source_count == 0);
        REQUIRE(r.leaked_target_count == 0);
        REQUIRE(r.pct_leaked_source == 0.0);
        REQUIRE(r.pct_leaked_target == 0.0);
        REQUIRE(r.avg_leaked_source_len == 0.0);
    }
    SECTION("one planted source out of four is exactly 25 percent") {
        std::vector<ParallelPair> gen = {mk_pair("a b", "fresh one"), mk_pair("k l", "fresh two"),
                                         mk_pair("m n", "fresh three"), mk_pair("o p", "fresh four")};
        auto r = leakage_report(gen, train);
        REQUIRE(r.leaked_source_count == 1);
        REQUIRE(r.pct_leaked_source == 25.0);
        REQUIRE(r.leaked_target_count == 0);
    }
    SECTION("leaked length averages over the planted sentences") {
        std::vector<ParallelPair> gen = {mk_pair("a b", "x"), mk_pair("c d e f", "y"),
                                         mk_pair("q q q", "z")};
        auto r = leakage_report(gen, train);
        REQUIRE(r.leaked_source_count == 2);
        REQUIRE_THAT(r.avg_leaked_source_len, WithinAbs(3.0, 1e-12));
    }
    SECTION("matching ignores whitespace differences") {
        std::vector<ParallelPair> gen = {mk_pair("  a   b ", "p  q r")};
        auto r = leakage_report(gen, train);
        REQUIRE(r.leaked_source_count == 1);
        REQUIRE(r.leaked_target_count == 1);
        REQUIRE(r.pct_leaked_source == 100.0);
    }
    SECTION("empty generated corpus reports zeros") {
        auto r = leakage_report({}, train);
        REQUIRE(r.generated_count == 0);
        REQUIRE(r.pct_leaked_source == 0.0);
    }
}

TEST_CASE("self bleu diversity") {
    SECTION("identical sentences score 100") {
        std::vector<std::string> same(4, "the cat sat on the mat");
        REQUIRE_THAT(self_bleu(same, 4, 3, 11), WithinAbs(100.0, 1e-9));
    }
    SECTION("full-population sampling is deterministic across runs and seeds") {
        std::vector<std::string> sents = {"the cat sat", "the dog sat", "a bird flew high"};
        double a = self_bleu(sents, 8, 1, 1);
        double b = self_bleu(sents, 8, 7, 999);
        REQUIRE(a == b);
    }
    SECTION("three sentences match the exhaustive pairwise oracle") {
        std::vector<std::string> sents = {"the cat sat", "the dog sat", "a bird flew high"};
        auto toks = tok_all(sents);
        double want = 0.0;
        for (size_t i = 0; i < toks.size(); ++i) {
            std::vector<std::vector<std::string>> refs;
            for (size_t j = 0; j < toks.size(); ++j)
                if (j != i) refs.push_back(toks[j]);
            want += oracles::bleu_multi_brute(toks[i], refs);
        }
        want /= 3.0;
        REQUIRE_THAT(self_bleu(sents, 3, 5, 42), WithinAbs(want, 1e-9));
    }
    SECTION("subsampled runs are seed-deterministic") {
        std::vector<std::string> sents = {
            "the quick brown fox jumps over the lazy dog",
            "the quick brown fox sleeps",
            "a completely different sentence",
            "numbers one two three four",
            "the quick fox",
            "over the lazy dog again",
            "one two three",
            "alpha beta gamma delta",
            "beta gamma",
            "the lazy dog sleeps here",
        };
        double a = self_bleu(sents, 4, 3, 7);
        REQUIRE(a == self_bleu(sents, 4, 3, 7));
        REQUIRE(a != self_bleu(sents, 4, 3, 8));
    }
    SECTION("input validation") {
        REQUIRE_THROWS_AS(self_bleu({"only one"}, 2, 1, 0), TooFewSentences);
        REQUIRE_THROWS_AS(self_bleu({"a", "b"}, 1, 1, 0), TooFewSentences);
        REQUIRE_THROWS_AS(self_bleu({"a", "b"}, 2, 0, 0), InvalidConfig);
    }
}

TEST_CASE("corpus statistics") {
    SECTION("hand-counted duplicates and lengths") {
        std::vector<ParallelPair> corpus = {mk_pair("a b", "x x x"), mk_pair("a b", "y"),
                                            mk_pair("c", "x x x")};
        auto st = corpus_stats(corpus);
        REQUIRE(st.size == 3);
        REQUIRE(st.source.duplicates == 1);
        REQUIRE_THAT(st.source.avg_len, WithinAbs(5.0 / 3.0, 1e-12));
        REQUIRE(st.source.min_len == 1);
        REQUIRE(st.source.max_len == 2);
        REQUIRE(st.target.duplicates == 1);
        REQUIRE_THAT(st.target.avg_len, WithinAbs(7.0 / 3.0, 1e-12));
        // Population stddev of source lengths {2, 2, 1}.
        REQUIRE_THAT(st.source.stddev_len, WithinAbs(std::sqrt(2.0 / 9.0), 1e-12));
    }
    SECTION("empty corpus is all zeros") {
        auto st = corpus_stats({});
        REQUIRE(st.size == 0);
        REQUIRE(st.source.avg_len == 0.0);
        REQUIRE(st.source.min_len == 0);
        REQUIRE(st.source.duplicates == 0);
    }
    SECTION("singleton corpus degenerates") {
        auto st = corpus_stats({mk_pair("a b c", "d")});
        REQUIRE(st.source.min_len == 3);
        REQUIRE(st.source.max_len == 3);
        REQUIRE_THAT(st.source.avg_len, WithinAbs(3.0, 1e-12));
        REQUIRE(st.source.stddev_len == 0.0);
    }
    SECTION("duplicate detection normalizes whitespace") {
        auto st = corpus_stats({mk_pair("a  b", "x"), mk_pair("a b", "y")});
        REQUIRE(st.source.duplicates == 1);
    }
}

TEST_CASE("reports serialize to json") {
    auto rep = overlap_report(token_frequencies({"a b"}), token_frequencies({"a c"}), {1, 2});
    nlohmann::json jo = rep;
    REQUIRE(jo.at("k").size() == 2);

    LeakageReport lr = leakage_report({mk_pair("a", "b")}, {mk_pair("a", "z")});
    nlohmann::json jl = lr;
    REQUIRE(jl.at("pct_leaked_source").get<double>() == 100.0);
    REQUIRE(jl.at("pct_leaked_target").get<double>() == 0.0);

    nlohmann::json js = corpus_stats({mk_pair("a b", "c")});
    REQUIRE(js.at("source").at("avg_len").get<double>() == 2.0);
}
