#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "streamattn/error.hpp"
#include "streamattn/metrics.hpp"
#include "streamattn/rng.hpp"

using namespace streamattn;

namespace {

std::vector<std::size_t> waitk_g(std::size_t k, std::size_t n, std::size_t len) {
    std::vector<std::size_t> g(len);
    for (std::size_t j = 0; j < len; ++j) g[j] = std::min(k + j, n);
    return g;
}

}  // namespace

TEST_CASE("token accuracy examples") {
    CHECK(token_accuracy(TokenSeq{1, 2, 3}, TokenSeq{1, 2, 3}) == 1.0);
    CHECK(token_accuracy(TokenSeq{1, 9, 3}, TokenSeq{1, 2, 3}) == doctest::Approx(2.0 / 3.0));
    CHECK(token_accuracy(TokenSeq{}, TokenSeq{1}) == 0.0);
    CHECK(token_accuracy(TokenSeq{}, TokenSeq{}) == 1.0);
    CHECK(token_accuracy(TokenSeq{1, 2, 3, 4}, TokenSeq{1, 2}) == 0.5);
}

TEST_CASE("BLEU examples") {
    const std::vector<TokenSeq> refs{{3, 4, 5, 6, 7}, {8, 9, 10}};
    CHECK(corpus_bleu(refs, refs) == doctest::Approx(100.0));

    // p1 = 3/4, p2 = 2/3, p3 = 1/2, p4 = 0/1 smoothed to 1/2; no brevity penalty.
    const std::vector<TokenSeq> hyp{{3, 4, 5, 6}}, ref{{3, 4, 5, 7}};
    const double expect = 100.0 * std::pow(0.75 * (2.0 / 3.0) * 0.5 * 0.5, 0.25);
    CHECK(corpus_bleu(hyp, ref) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(corpus_bleu(hyp, ref) == doctest::Approx(59.46).epsilon(1e-3));

    const std::vector<TokenSeq> short_hyp{{3}}, long_ref{{3, 4, 5, 6, 7, 8, 9, 10, 11, 12}};
    CHECK(corpus_bleu(short_hyp, long_ref) < 1.0);

    CHECK_THROWS_AS(corpus_bleu(std::vector<TokenSeq>{}, std::vector<TokenSeq>{}), ContractError);
    CHECK_THROWS_AS(corpus_bleu(hyp, refs), ContractError);
}

TEST_CASE("BLEU is invariant to sentence order") {
    SplitMix64 rng(3);
    std::vector<TokenSeq> hyps, refs;
    for (int s = 0; s < 20; ++s) {
        TokenSeq h(4 + rng.below(6)), r(4 + rng.below(6));
        for (auto& t : h) t = static_cast<TokenId>(3 + rng.below(5));
        for (auto& t : r) t = static_cast<TokenId>(3 + rng.below(5));
        hyps.push_back(h);
        refs.push_back(r);
    }
    const double base = corpus_bleu(hyps, refs);
    std::reverse(hyps.begin(), hyps.end());
    std::reverse(refs.begin(), refs.end());
    CHECK(corpus_bleu(hyps, refs) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("average lagging of wait-k equals k") {
    for (std::size_t k : {1, 3, 5, 7}) {
        for (std::size_t n = k; n <= 20; ++n) {
            const auto g = waitk_g(k, n, n);
            const auto s = lagging(g, n, n);
            CHECK(s.al == doctest::Approx(static_cast<double>(k)).epsilon(1e-12));
            CHECK(s.laal == doctest::Approx(s.al).epsilon(1e-12));
        }
    }
}

TEST_CASE("lagging examples and contracts") {
    // Fully offline: tau = 1, AL = n.
    const std::vector<std::size_t> offline(6, 6);
    CHECK(lagging(offline, 6, 6).al == doctest::Approx(6.0));
    // Longer hypothesis: LAAL scales by the hypothesis length and is at least AL.
    const auto g = waitk_g(2, 6, 9);
    const auto s = lagging(g, 6, 6);
    CHECK(s.laal >= s.al);
    CHECK_THROWS_AS(lagging(g, 0, 6), ContractError);
    CHECK_THROWS_AS(lagging(std::vector<std::size_t>{}, 3, 3), ContractError);

    std::vector<LatencyInput> corpus{{waitk_g(3, 5, 5), 5, 5}, {waitk_g(1, 4, 4), 4, 4}};
    const auto rep = corpus_lagging(corpus);
    CHECK(rep.al == doctest::Approx(2.0));
    CHECK(rep.sentence_al.size() == 2);
}
