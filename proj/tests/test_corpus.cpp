#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "streamattn/corpus.hpp"
#include "streamattn/error.hpp"
#include "streamattn/rng.hpp"

using namespace streamattn;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& contents) {
    const fs::path p = fs::temp_directory_path() / ("streamattn_test_" + name);
    std::ofstream(p) << contents;
    return p;
}

}  // namespace

TEST_CASE("SplitMix64 reference outputs") {
    SplitMix64 a(1234567);
    CHECK(a.next() == 6457827717110365317ULL);
    CHECK(a.next() == 3203168211198807973ULL);
    CHECK(a.next() == 9817491932198370423ULL);
    CHECK(SplitMix64(0).next() == 0xE220A8397B1DCDAFULL);
    SplitMix64 b(9);
    for (int i = 0; i < 1000; ++i) {
        CHECK(b.below(7) < 7);
        const double u = b.uniform();
        CHECK((u >= 0.0 && u < 1.0));
    }
}

TEST_CASE("generated corpus matches an independent reimplementation") {
    // Values computed by a separate Python implementation of the generator.
    SyntheticTaskSpec spec;
    spec.kind = TaskKind::MappedTranslation;
    const auto pairs = generate(spec, 2);
    CHECK(pairs[0].source == TokenSeq{38, 15, 50, 8, 63, 34, 39, 30, 52, 4, 59, 49, 42, 41, 42});
    CHECK(pairs[0].target == TokenSeq{13, 54, 43, 29, 39, 52, 60, 53, 32, 40, 7, 62, 34, 59, 59, 2});
    CHECK(pairs[1].source == TokenSeq{43, 35, 33, 53, 61, 11, 21, 59, 14, 12, 61, 55, 47});
    CHECK(pairs[1].target == TokenSeq{17, 14, 37, 33, 28, 57, 62, 31, 46, 11, 15, 57, 3, 2});
    const auto sigma = task_bijection(spec);
    CHECK(TokenSeq(sigma.begin(), sigma.begin() + 10) == TokenSeq{0, 1, 2, 27, 32, 48, 22, 9, 43, 49});
}

TEST_CASE("task examples") {
    std::vector<TokenId> identity(16);
    std::iota(identity.begin(), identity.end(), 0);
    CHECK(map_translate(TokenSeq{5, 7, 9, 4}, identity) == TokenSeq{7, 5, 4, 9});
    CHECK(map_translate(TokenSeq{5, 7, 9}, identity) == TokenSeq{7, 5, 9});

    SyntheticTaskSpec copy;
    copy.kind = TaskKind::Copy;
    for (const auto& p : generate(copy, 50)) {
        TokenSeq expect = p.source;
        expect.push_back(kEos);
        CHECK(p.target == expect);
    }
}

TEST_CASE("bijection and generated corpora respect the vocabulary contract") {
    SyntheticTaskSpec spec;
    spec.vocab_size = 20;
    spec.len_min = 2;
    spec.len_max = 5;
    spec.seed = 77;
    const auto sigma = task_bijection(spec);
    CHECK(std::set<TokenId>(sigma.begin(), sigma.end()).size() == sigma.size());
    for (TokenId t = 0; t < kFirstContent; ++t) CHECK(sigma[static_cast<std::size_t>(t)] == t);

    const auto corpus = generate(spec, 300);
    CHECK(corpus == generate(spec, 300));
    for (const auto& p : corpus) {
        CHECK(p.source.size() >= 2);
        CHECK(p.source.size() <= 5);
        CHECK(p.target.back() == kEos);
        for (TokenId t : p.source) CHECK((t >= kFirstContent && t < 20));
        CHECK(unmap_translate(strip_eos(p.target), sigma) == p.source);
    }
}

TEST_CASE("degenerate specs are rejected") {
    SyntheticTaskSpec spec;
    spec.vocab_size = 3;
    CHECK_THROWS_AS(generate(spec, 1), ContractError);
    spec.vocab_size = 10;
    spec.len_min = 0;
    CHECK_THROWS_AS(generate(spec, 1), ContractError);
    spec.len_min = 5;
    spec.len_max = 4;
    CHECK_THROWS_AS(generate(spec, 1), ContractError);
    spec.len_max = 6;
    CHECK_THROWS_AS(generate(spec, 0), ContractError);
}

TEST_CASE("JSONL round trip and EOS appending") {
    const auto path = temp_file("eos.jsonl", "{\"source\":[3],\"target\":[3]}\n\n{\"source\":[4,5],\"target\":[6,2]}\n");
    const auto pairs = load_jsonl(path);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].source == TokenSeq{3});
    CHECK(pairs[0].target == TokenSeq{3, kEos});
    CHECK(pairs[1].target == TokenSeq{6, kEos});

    const fs::path out = fs::temp_directory_path() / "streamattn_test_roundtrip.jsonl";
    write_jsonl(out, pairs);
    CHECK(load_jsonl(out) == pairs);
    CHECK(load_jsonl(temp_file("empty.jsonl", "")).empty());
}

TEST_CASE("JSONL errors carry the line number or the offending id") {
    const auto bad_type = temp_file("badtype.jsonl", "{\"source\":[3],\"target\":[3]}\n{\"source\":[3],\"target\":\"x\"}\n");
    try {
        load_jsonl(bad_type);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(load_jsonl(temp_file("garbage.jsonl", "not json\n")), ParseError);
    CHECK_THROWS_AS(load_jsonl(temp_file("missing.jsonl", "{\"source\":[3]}\n")), ParseError);

    const auto oov = temp_file("oov.jsonl", "{\"source\":[3, 99],\"target\":[3]}\n");
    try {
        load_jsonl(oov, 64);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("99") != std::string::npos);
    }
    CHECK_THROWS_AS(load_jsonl(fs::temp_directory_path() / "streamattn_no_such_file.jsonl"), IoError);
}
