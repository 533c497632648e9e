#include "streamattn/paradigm.hpp"

#include <algorithm>
#include <array>
#include <sstream>
#include <utility>

namespace streamattn {

namespace {

constexpr std::array<std::pair<ParadigmId, std::string_view>, 6> kParadigmNames{{
    {ParadigmId::BatchOffline, "offline"},
    {ParadigmId::Interleaved, "interleaved"},
    {ParadigmId::BatchNoRe, "batch-no-re"},
    {ParadigmId::BatchPosRe, "batch-pos-re"},
    {ParadigmId::BatchAllRe, "batch-all-re"},
    {ParadigmId::GroupStream, "group"},
}};

constexpr std::array<std::pair<PositionRemoval, std::string_view>, 4> kRemovalNames{{
    {PositionRemoval::None, "none"},
    {PositionRemoval::Source, "source"},
    {PositionRemoval::Target, "target"},
    {PositionRemoval::All, "all"},
}};

/// Index of each physical token within its own role.
std::vector<std::size_t> role_indices(const std::vector<Role>& roles) {
    std::vector<std::size_t> out(roles.size());
    std::size_t src = 0, tgt = 0;
    for (std::size_t i = 0; i < roles.size(); ++i) out[i] = roles[i] == Role::Source ? src++ : tgt++;
    return out;
}

}  // namespace

std::string_view paradigm_name(ParadigmId id) noexcept {
    for (const auto& [p, name] : kParadigmNames) {
        if (p == id) return name;
    }
    return "unknown";
}

std::optional<ParadigmId> parse_paradigm(std::string_view name) noexcept {
    for (const auto& [p, n] : kParadigmNames) {
        if (n == name) return p;
    }
    return std::nullopt;
}

std::string_view removal_name(PositionRemoval r) noexcept {
    for (const auto& [p, name] : kRemovalNames) {
        if (p == r) return name;
    }
    return "unknown";
}

std::optional<PositionRemoval> parse_removal(std::string_view name) noexcept {
    for (const auto& [p, n] : kRemovalNames) {
        if (n == name) return p;
    }
    return std::nullopt;
}

WaitkSchedule waitk_schedule(std::int64_t k, std::int64_t source_len, std::int64_t target_len) {
    STREAMATTN_REQUIRE(k >= 1, "waitk_schedule: k must be positive");
    STREAMATTN_REQUIRE(source_len >= 1 && target_len >= 1, "waitk_schedule: lengths must be positive");
    WaitkSchedule s;
    s.k = static_cast<std::size_t>(k);
    s.source_len = static_cast<std::size_t>(source_len);
    s.reads.resize(static_cast<std::size_t>(target_len));
    for (std::size_t j = 1; j <= s.reads.size(); ++j) {
        s.reads[j - 1] = std::min(s.k + j - 1, s.source_len);
    }
    return s;
}

std::size_t ArrangedSequence::source_len() const {
    return static_cast<std::size_t>(std::count(roles.begin(), roles.end(), Role::Source));
}

std::size_t ArrangedSequence::target_len() const { return roles.size() - source_len(); }

ArrangedSequence arrange(ParadigmId paradigm, const WaitkSchedule& schedule, PositionId phi,
                         const TokenSeq& source, const TokenSeq& target) {
    const std::size_t m = source.size();
    const std::size_t n = target.size();
    const bool offline = paradigm == ParadigmId::BatchOffline;

    std::vector<std::size_t> reads(n, m);
    if (!offline) {
        STREAMATTN_REQUIRE(schedule.reads.size() == n, "arrange: schedule does not cover the target length");
        std::size_t prev = 0;
        for (std::size_t t = 0; t < n; ++t) {
            STREAMATTN_REQUIRE(schedule.reads[t] <= m, "arrange: schedule reads past the source");
            STREAMATTN_REQUIRE(schedule.reads[t] >= prev, "arrange: schedule must be non-decreasing");
            prev = reads[t] = schedule.reads[t];
        }
    }
    if (paradigm != ParadigmId::GroupStream && phi.value() != 0.0) {
        warn("phi is ignored by paradigm " + std::string(paradigm_name(paradigm)));
    }

    // Arrival order as (role, index-within-role).
    std::vector<std::pair<Role, std::size_t>> arrival_seq;
    arrival_seq.reserve(m + n);
    if (offline) {
        for (std::size_t i = 0; i < m; ++i) arrival_seq.emplace_back(Role::Source, i);
        for (std::size_t t = 0; t < n; ++t) arrival_seq.emplace_back(Role::Target, t);
    } else {
        std::size_t next_src = 0;
        for (std::size_t t = 0; t < n; ++t) {
            while (next_src < reads[t]) arrival_seq.emplace_back(Role::Source, next_src++);
            arrival_seq.emplace_back(Role::Target, t);
        }
        while (next_src < m) arrival_seq.emplace_back(Role::Source, next_src++);
    }
    std::vector<std::size_t> src_arrival(m), tgt_arrival(n);
    for (std::size_t a = 0; a < arrival_seq.size(); ++a) {
        const auto [role, idx] = arrival_seq[a];
        (role == Role::Source ? src_arrival : tgt_arrival)[idx] = a;
    }

    // Physical order: arrival order for Interleaved, source block then target block otherwise.
    std::vector<std::pair<Role, std::size_t>> physical;
    if (paradigm == ParadigmId::Interleaved) {
        physical = arrival_seq;
    } else {
        for (std::size_t i = 0; i < m; ++i) physical.emplace_back(Role::Source, i);
        for (std::size_t t = 0; t < n; ++t) physical.emplace_back(Role::Target, t);
    }

    auto position_of = [&](Role role, std::size_t idx) -> double {
        switch (paradigm) {
            case ParadigmId::Interleaved:
            case ParadigmId::BatchNoRe:
                return static_cast<double>(role == Role::Source ? src_arrival[idx] : tgt_arrival[idx]);
            case ParadigmId::GroupStream:
                return role == Role::Source ? static_cast<double>(idx) : phi.value() + static_cast<double>(idx);
            case ParadigmId::BatchOffline:
            case ParadigmId::BatchPosRe:
            case ParadigmId::BatchAllRe:
                break;
        }
        return static_cast<double>(role == Role::Source ? idx : m + idx);
    };

    ArrangedSequence arr;
    arr.paradigm = paradigm;
    const std::size_t total = m + n;
    arr.tokens.resize(total);
    arr.roles.resize(total);
    arr.arrival_index.resize(total);
    arr.positions.resize(total);
    arr.target_reads.assign(total, 0);
    arr.labels.assign(total, -1);
    arr.loss_mask.assign(total, 0);
    arr.attn_mask.assign(total * total, 0);

    for (std::size_t p = 0; p < total; ++p) {
        const auto [role, idx] = physical[p];
        arr.roles[p] = role;
        arr.tokens[p] = role == Role::Source ? source[idx] : target[idx];
        arr.arrival_index[p] = role == Role::Source ? src_arrival[idx] : tgt_arrival[idx];
        arr.positions[p] = position_of(role, idx);
        if (role == Role::Target) {
            arr.target_reads[p] = reads[idx];
            if (idx + 1 < n) {
                arr.labels[p] = target[idx + 1];
                arr.loss_mask[p] = 1;
            }
        }
    }
    arr.source_frame_positions = arr.positions;

    const bool plain_causal = offline || paradigm == ParadigmId::Interleaved;
    for (std::size_t r = 0; r < total; ++r) {
        const auto [rrole, ridx] = physical[r];
        for (std::size_t c = 0; c < total; ++c) {
            const auto [crole, cidx] = physical[c];
            bool ok;
            if (plain_causal) {
                ok = c <= r;
            } else if (rrole == Role::Source) {
                ok = crole == Role::Source && cidx <= ridx;
            } else {
                ok = crole == Role::Source ? cidx < reads[ridx] : cidx <= ridx;
            }
            arr.attn_mask[r * total + c] = ok ? 1 : 0;
        }
    }
    return arr;
}

void remove_positions(ArrangedSequence& arr, PositionRemoval removal) {
    if (removal == PositionRemoval::None) return;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const bool hit = removal == PositionRemoval::All ||
                         (removal == PositionRemoval::Source && arr.roles[i] == Role::Source) ||
                         (removal == PositionRemoval::Target && arr.roles[i] == Role::Target);
        if (hit) {
            arr.positions[i] = 0.0;
            arr.source_frame_positions[i] = 0.0;
        }
    }
}

MaskReport mask_report(const ArrangedSequence& arr) {
    MaskReport rep;
    const auto idx = role_indices(arr.roles);
    std::size_t allowed = 0;
    for (std::size_t r = 0; r < arr.size(); ++r) {
        for (std::size_t c = 0; c < arr.size(); ++c) {
            if (!arr.allowed(r, c)) continue;
            ++allowed;
            if (arr.roles[r] == Role::Source && arr.roles[c] == Role::Target) ++rep.source_to_target_edges;
            if (arr.roles[r] == Role::Target && arr.roles[c] == Role::Source && idx[c] >= arr.target_reads[r]) {
                ++rep.target_future_source_edges;
            }
        }
    }
    const double n = static_cast<double>(arr.size());
    rep.density = arr.size() == 0 ? 0.0 : static_cast<double>(allowed) / (n * n);
    return rep;
}

std::string check_arrangement(const ArrangedSequence& arr) {
    std::ostringstream err;
    const std::size_t n = arr.size();
    if (arr.roles.size() != n || arr.positions.size() != n || arr.source_frame_positions.size() != n ||
        arr.arrival_index.size() != n || arr.labels.size() != n || arr.loss_mask.size() != n ||
        arr.target_reads.size() != n || arr.attn_mask.size() != n * n) {
        return "field sizes disagree";
    }
    const auto idx = role_indices(arr.roles);
    const bool contiguous = arr.paradigm != ParadigmId::Interleaved && arr.paradigm != ParadigmId::BatchNoRe;
    const bool streaming_mask = arr.paradigm != ParadigmId::Interleaved && arr.paradigm != ParadigmId::BatchOffline;

    for (std::size_t r = 0; r < n; ++r) {
        if (!arr.allowed(r, r)) {
            err << "row " << r << " does not attend itself";
            return err.str();
        }
        for (std::size_t c = 0; c < n; ++c) {
            if (!arr.allowed(r, c)) {
                if (arr.roles[r] == Role::Target && arr.roles[c] == Role::Source && idx[c] < arr.target_reads[r]) {
                    err << "target row " << r << " cannot see available source " << idx[c];
                    return err.str();
                }
                continue;
            }
            if (arr.arrival_index[c] > arr.arrival_index[r]) {
                err << "row " << r << " attends column " << c << " that arrives later";
                return err.str();
            }
            if (streaming_mask && arr.roles[r] == Role::Source && arr.roles[c] == Role::Target) {
                err << "source row " << r << " attends target column " << c;
                return err.str();
            }
            if (arr.roles[r] == Role::Target && arr.roles[c] == Role::Source && idx[c] >= arr.target_reads[r]) {
                err << "target row " << r << " attends unread source " << idx[c];
                return err.str();
            }
        }
        if (arr.loss_mask[r]) {
            // The label must be the next target-role token.
            bool found = false;
            for (std::size_t c = 0; c < n; ++c) {
                if (arr.roles[r] == Role::Target && arr.roles[c] == Role::Target && idx[c] == idx[r] + 1) {
                    found = arr.tokens[c] == arr.labels[r];
                }
            }
            if (!found) {
                err << "loss row " << r << " does not predict the next target token";
                return err.str();
            }
        }
    }

    // Positions within each role increase along arrival order (by exactly 1
    // in the contiguous layouts).
    for (Role role : {Role::Source, Role::Target}) {
        std::vector<std::pair<std::size_t, double>> seq;
        for (std::size_t i = 0; i < n; ++i) {
            if (arr.roles[i] == role) seq.emplace_back(arr.arrival_index[i], arr.positions[i]);
        }
        std::sort(seq.begin(), seq.end());
        for (std::size_t i = 1; i < seq.size(); ++i) {
            const double step = seq[i].second - seq[i - 1].second;
            if (step <= 0.0 || (contiguous && step != 1.0)) {
                err << (role == Role::Source ? "source" : "target") << " positions are not "
                    << (contiguous ? "contiguous" : "increasing") << " at role index " << i;
                return err.str();
            }
        }
    }
    return {};
}

}  // namespace streamattn
