#include <doctest.h>

#include <string>
#include <vector>

#include "streamattn/error.hpp"
#include "streamattn/paradigm.hpp"

using namespace streamattn;

namespace {

TokenSeq seq(std::size_t n, TokenId first) {
    TokenSeq out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = first + static_cast<TokenId>(i);
    return out;
}

std::vector<std::size_t> rows_of(const ArrangedSequence& arr, Role role) {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < arr.size(); ++r) {
        if (arr.roles[r] == role) out.push_back(r);
    }
    return out;
}

struct QuietWarnings {
    WarningSink previous = set_warning_sink([](std::string_view) {});
    ~QuietWarnings() { set_warning_sink(previous); }
};

}  // namespace

TEST_CASE("wait-k schedule examples") {
    CHECK(waitk_schedule(1, 3, 3).reads == std::vector<std::size_t>{1, 2, 3});
    CHECK(waitk_schedule(5, 3, 4).reads == std::vector<std::size_t>{3, 3, 3, 3});
    CHECK(waitk_schedule(3, 5, 2).reads == std::vector<std::size_t>{3, 4});
    CHECK(waitk_schedule(2, 3, 5).reads == std::vector<std::size_t>{2, 3, 3, 3, 3});
    CHECK(waitk_schedule(2, 3, 5).g(1) == 2);
    CHECK_THROWS_AS(waitk_schedule(0, 3, 3), ContractError);
    CHECK_THROWS_AS(waitk_schedule(-2, 3, 3), ContractError);
    CHECK_THROWS_AS(waitk_schedule(1, 0, 3), ContractError);
}

TEST_CASE("wait-k schedule is monotone in k and bounded by the source") {
    for (std::int64_t src = 1; src <= 12; ++src) {
        for (std::int64_t tgt = 1; tgt <= 12; ++tgt) {
            for (std::int64_t k = 1; k <= 8; ++k) {
                const auto a = waitk_schedule(k, src, tgt);
                const auto b = waitk_schedule(k + 1, src, tgt);
                CHECK(a.g(1) == static_cast<std::size_t>(std::min(k, src)));
                for (std::size_t j = 1; j <= a.target_len(); ++j) {
                    CHECK(a.g(j) <= b.g(j));
                    CHECK(a.g(j) <= static_cast<std::size_t>(src));
                    if (j > 1) CHECK(a.g(j) >= a.g(j - 1));
                }
            }
        }
    }
}

TEST_CASE("paradigm names round-trip") {
    for (ParadigmId p : kAllParadigms) CHECK(parse_paradigm(paradigm_name(p)) == p);
    CHECK_FALSE(parse_paradigm("bogus").has_value());
    for (auto r : {PositionRemoval::None, PositionRemoval::Source, PositionRemoval::Target, PositionRemoval::All}) {
        CHECK(parse_removal(removal_name(r)) == r);
    }
}

TEST_CASE("layout examples") {
    const TokenSeq src{10, 11}, tgt{20, 21};
    const auto sched = waitk_schedule(1, 2, 2);

    const auto group = arrange(ParadigmId::GroupStream, sched, PositionId(0.0), src, tgt);
    CHECK(group.positions == std::vector<double>{0, 1, 0, 1});
    CHECK_FALSE(group.allowed(0, 2));
    CHECK(mask_report(group).source_to_target_edges == 0);

    const auto offline =
        arrange(ParadigmId::BatchOffline, waitk_schedule(1, 3, 2), PositionId(0.0), seq(3, 10), seq(2, 20));
    CHECK(offline.positions == std::vector<double>{0, 1, 2, 3, 4});
    const auto off_report = mask_report(offline);
    CHECK(off_report.target_future_source_edges == 0);
    for (std::size_t r : rows_of(offline, Role::Target)) {
        for (std::size_t c : rows_of(offline, Role::Source)) CHECK(offline.allowed(r, c));
    }

    const auto nore = arrange(ParadigmId::BatchNoRe, sched, PositionId(0.0), src, tgt);
    // Physical order a, b, x, y.
    CHECK(nore.allowed(2, 0));
    CHECK_FALSE(nore.allowed(2, 1));
    CHECK(nore.allowed(2, 2));
    CHECK_FALSE(nore.allowed(2, 3));
    for (std::size_t c = 0; c < 4; ++c) CHECK(nore.allowed(3, c));
    // Arrival order a, x, b, y gives interleaved ids.
    CHECK(nore.positions == std::vector<double>{0, 2, 1, 3});

    const auto inter = arrange(ParadigmId::Interleaved, sched, PositionId(0.0), src, tgt);
    CHECK(mask_report(inter).source_to_target_edges > 0);
    CHECK(inter.tokens == TokenSeq{10, 20, 11, 21});
    CHECK(inter.positions == std::vector<double>{0, 1, 2, 3});
}

TEST_CASE("loss mask covers rows whose next token is a target token") {
    const TokenSeq src = seq(3, 10), tgt{kBos, 20, 21, kEos};
    for (ParadigmId p : kAllParadigms) {
        CAPTURE(paradigm_name(p));
        const auto arr = arrange(p, waitk_schedule(2, 3, 4), PositionId(0.0), src, tgt);
        const auto targets = rows_of(arr, Role::Target);
        REQUIRE(targets.size() == 4);
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const std::size_t r = targets[i];
            CHECK(arr.loss_mask[r] == (i + 1 < targets.size() ? 1 : 0));
            if (i + 1 < targets.size()) CHECK(arr.labels[r] == tgt[i + 1]);
        }
        for (std::size_t r : rows_of(arr, Role::Source)) CHECK(arr.loss_mask[r] == 0);
    }
}

TEST_CASE("exhaustive layout invariants") {
    QuietWarnings quiet;
    for (std::size_t k : {1, 3, 5, 7}) {
        for (std::size_t m = 1; m <= 16; ++m) {
            for (std::size_t n = 1; n <= 16; ++n) {
                const auto sched = waitk_schedule(static_cast<std::int64_t>(k), static_cast<std::int64_t>(m),
                                                  static_cast<std::int64_t>(n));
                const TokenSeq src = seq(m, 3), tgt = seq(n, 3);
                ArrangedSequence posre, allre;
                for (ParadigmId p : kAllParadigms) {
                    const auto arr = arrange(p, sched, PositionId(0.0), src, tgt);
                    CAPTURE(paradigm_name(p));
                    CAPTURE(k);
                    CAPTURE(m);
                    CAPTURE(n);
                    REQUIRE(check_arrangement(arr).empty());
                    for (std::size_t r = 0; r < arr.size(); ++r) CHECK(arr.allowed(r, r));
                    const auto sources = rows_of(arr, Role::Source);
                    const auto targets = rows_of(arr, Role::Target);
                    const bool streaming = p != ParadigmId::BatchOffline;
                    if (streaming && p != ParadigmId::Interleaved) {
                        CHECK(mask_report(arr).source_to_target_edges == 0);
                    }
                    if (streaming) {
                        for (std::size_t j = 0; j < targets.size(); ++j) {
                            for (std::size_t i = 0; i < sources.size(); ++i) {
                                CHECK(arr.allowed(targets[j], sources[i]) == (i < sched.g(j + 1)));
                            }
                        }
                    }
                    if (p == ParadigmId::Interleaved) {
                        for (std::size_t r = 0; r < arr.size(); ++r) {
                            CHECK(arr.arrival_index[r] == r);
                            for (std::size_t c = 0; c < arr.size(); ++c) CHECK(arr.allowed(r, c) == (c <= r));
                        }
                    }
                    if (p == ParadigmId::BatchPosRe) posre = arr;
                    if (p == ParadigmId::BatchAllRe) allre = arr;
                }
                CHECK(posre.attn_mask == allre.attn_mask);
                CHECK(posre.positions == allre.positions);

                const auto group = arrange(ParadigmId::GroupStream, sched, PositionId(static_cast<double>(m)), src, tgt);
                const auto offline = arrange(ParadigmId::BatchOffline, sched, PositionId(0.0), src, tgt);
                CHECK(group.positions == offline.positions);
            }
        }
    }
}

TEST_CASE("positions within each role increase by one in contiguous layouts") {
    QuietWarnings quiet;
    const auto sched = waitk_schedule(2, 6, 5);
    for (ParadigmId p : {ParadigmId::BatchOffline, ParadigmId::BatchPosRe, ParadigmId::GroupStream}) {
        const auto arr = arrange(p, sched, PositionId(0.5), seq(6, 3), seq(5, 3));
        for (Role role : {Role::Source, Role::Target}) {
            const auto rows = rows_of(arr, role);
            for (std::size_t i = 1; i < rows.size(); ++i) {
                CHECK(arr.positions[rows[i]] - arr.positions[rows[i - 1]] == 1.0);
            }
        }
    }
}

TEST_CASE("phi is ignored with a warning outside the group layout") {
    std::vector<std::string> seen;
    const auto previous = set_warning_sink([&](std::string_view m) { seen.emplace_back(m); });
    const auto a = arrange(ParadigmId::BatchNoRe, waitk_schedule(1, 2, 2), PositionId(4.0), seq(2, 3), seq(2, 3));
    set_warning_sink(previous);
    const auto b = arrange(ParadigmId::BatchNoRe, waitk_schedule(1, 2, 2), PositionId(0.0), seq(2, 3), seq(2, 3));
    CHECK(a.positions == b.positions);
    REQUIRE(seen.size() == 1);
    CHECK(seen[0].find("phi") != std::string::npos);
}

TEST_CASE("position removal zeroes the chosen roles") {
    const auto sched = waitk_schedule(1, 3, 3);
    auto arr = arrange(ParadigmId::BatchNoRe, sched, PositionId(0.0), seq(3, 3), seq(3, 3));
    auto tgt_only = arr;
    remove_positions(tgt_only, PositionRemoval::Target);
    for (std::size_t r = 0; r < arr.size(); ++r) {
        if (arr.roles[r] == Role::Target) {
            CHECK(tgt_only.positions[r] == 0.0);
            CHECK(tgt_only.source_frame_positions[r] == 0.0);
        } else {
            CHECK(tgt_only.positions[r] == arr.positions[r]);
        }
    }
    remove_positions(arr, PositionRemoval::All);
    for (double p : arr.positions) CHECK(p == 0.0);
}

TEST_CASE("check_arrangement reports a corrupted mask") {
    auto arr = arrange(ParadigmId::GroupStream, waitk_schedule(1, 2, 2), PositionId(0.0), seq(2, 3), seq(2, 3));
    CHECK(check_arrangement(arr).empty());
    arr.attn_mask[0 * arr.size() + 2] = 1;  // source row attends a target
    CHECK_FALSE(check_arrangement(arr).empty());
}
