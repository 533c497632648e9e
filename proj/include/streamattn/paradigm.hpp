#pragma once

// Training-time sequence layouts for the six processing paradigms and the
// wait-k read/write schedule they share with the streaming decoder.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "streamattn/rope.hpp"
#include "streamattn/types.hpp"

namespace streamattn {

enum class ParadigmId : std::uint8_t {
    BatchOffline,  ///< full source, contiguous positions, causal mask
    Interleaved,   ///< arrival order, sequential positions, plain causal mask
    BatchNoRe,     ///< batch layout, interleaved positions, no re-encoding
    BatchPosRe,    ///< batch layout, target positions refreshed after each read
    BatchAllRe,    ///< batch layout, target hidden states recomputed after each read
    GroupStream,   ///< source from 0, target from phi, nothing re-encoded
};

inline constexpr ParadigmId kAllParadigms[] = {
    ParadigmId::BatchOffline, ParadigmId::Interleaved, ParadigmId::BatchNoRe,
    ParadigmId::BatchPosRe,   ParadigmId::BatchAllRe,  ParadigmId::GroupStream,
};

/// The five paradigms that run under a read/write schedule.
inline constexpr ParadigmId kStreamingParadigms[] = {
    ParadigmId::Interleaved, ParadigmId::BatchNoRe, ParadigmId::BatchPosRe,
    ParadigmId::BatchAllRe,  ParadigmId::GroupStream,
};

/// CLI names: offline, interleaved, batch-no-re, batch-pos-re, batch-all-re, group.
std::string_view paradigm_name(ParadigmId id) noexcept;
std::optional<ParadigmId> parse_paradigm(std::string_view name) noexcept;

enum class Role : std::uint8_t { Source, Target };

/// Wait-k schedule. reads[j-1] = g(j) = min(k + j - 1, source_len) is the
/// number of source tokens available when target token j (1-based) is encoded.
struct WaitkSchedule {
    std::size_t k = 1;
    std::size_t source_len = 0;
    std::vector<std::size_t> reads;

    std::size_t g(std::size_t j) const { return reads.at(j - 1); }
    std::size_t target_len() const noexcept { return reads.size(); }
};

WaitkSchedule waitk_schedule(std::int64_t k, std::int64_t source_len, std::int64_t target_len);

/// Which roles get the constant position id 0 (position-removal ablation).
enum class PositionRemoval : std::uint8_t { None, Source, Target, All };

std::string_view removal_name(PositionRemoval r) noexcept;
std::optional<PositionRemoval> parse_removal(std::string_view name) noexcept;

/// One training/analysis layout. Index order is the physical order of the
/// sequence fed to the model; masks are row = query, column = key.
struct ArrangedSequence {
    ParadigmId paradigm = ParadigmId::BatchOffline;
    TokenSeq tokens;
    std::vector<Role> roles;
    /// Order in which a streaming run encodes each token.
    std::vector<std::size_t> arrival_index;
    /// Rotary position of each token, used for its key and for its query
    /// against target-role keys.
    std::vector<double> positions;
    /// Position of each row's query when it scores source-role keys. Equal to
    /// `positions` for every layout built by `arrange`; differs only when a
    /// replay needs a per-row source frame (position re-encoding).
    std::vector<double> source_frame_positions;
    /// Number of source tokens visible to each target row (0 for source rows).
    std::vector<std::size_t> target_reads;
    /// Row-major size() x size(); 1 = row may attend column.
    std::vector<std::uint8_t> attn_mask;
    /// Token each row is trained to predict, or -1.
    std::vector<TokenId> labels;
    std::vector<std::uint8_t> loss_mask;

    std::size_t size() const noexcept { return tokens.size(); }
    bool allowed(std::size_t row, std::size_t col) const { return attn_mask[row * tokens.size() + col] != 0; }
    std::size_t source_len() const;
    std::size_t target_len() const;
};

/// Builds the layout of `paradigm` for (source, target). `target` is the
/// target-role token list as the model sees it (normally BOS, content, EOS);
/// target token t is encoded with g(t+1) sources visible and predicts
/// target[t+1]. The schedule must cover target.size() entries; BatchOffline
/// ignores it. phi is only meaningful for GroupStream.
ArrangedSequence arrange(ParadigmId paradigm, const WaitkSchedule& schedule, PositionId phi,
                         const TokenSeq& source, const TokenSeq& target);

/// Applies the constant-zero position ablation to the chosen roles.
void remove_positions(ArrangedSequence& arr, PositionRemoval removal);

struct MaskReport {
    std::size_t source_to_target_edges = 0;
    /// Target rows attending a source column beyond their visible read count.
    std::size_t target_future_source_edges = 0;
    /// Allowed entries / size()^2.
    double density = 0.0;
};

MaskReport mask_report(const ArrangedSequence& arr);

/// Checks the structural invariants every arrangement must satisfy; returns
/// a description of the first violation or an empty string.
std::string check_arrangement(const ArrangedSequence& arr);

}  // namespace streamattn
