#pragma once

// Wait-k streaming decoder over split source/target KV caches.
//
// Keys are cached unrotated. Each cache row also memoizes its rotated key and
// the position it was rotated at, so a key is only re-rotated when the active
// paradigm moves it (BatchPosRe after a read). BatchAllRe recomputes every
// cached target row after a read that delivered new source tokens (or before
// every write when `allre_on_write` is set).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "streamattn/model.hpp"
#include "streamattn/paradigm.hpp"

namespace streamattn {

enum class FinishReason : std::uint8_t { Eos, LengthCap, FixedLength };

std::string_view finish_name(FinishReason r) noexcept;

struct OpCounters {
    /// Query-key score evaluations, summed over layers.
    std::uint64_t attention_ops = 0;
    /// Key or query vector rotations, summed over layers.
    std::uint64_t rotation_ops = 0;
    /// Target rows whose hidden states were recomputed (KV re-encoding).
    std::uint64_t recomputed_rows = 0;

    std::uint64_t total() const noexcept { return attention_ops + rotation_ops; }
};

struct DecodeTrace {
    /// Emitted content tokens (EOS excluded unless a fixed length is forced).
    TokenSeq tokens;
    /// g[j] = source tokens read when tokens[j] was emitted.
    std::vector<std::size_t> g;
    /// Wall time per emitted token, including the read that preceded it.
    std::vector<double> step_ms;
    FinishReason finish = FinishReason::Eos;
    /// Logits of every write step, recorded on request.
    std::vector<std::vector<double>> step_logits;
    OpCounters ops;
};

struct DecodeOptions {
    ParadigmId paradigm = ParadigmId::GroupStream;
    std::size_t k = 1;
    double phi = 0.0;
    PositionRemoval removal = PositionRemoval::None;
    /// BatchAllRe only: re-encode before every write instead of after reads.
    bool allre_on_write = false;
    /// Word-boundary rule for emitted tokens; empty = every token ends a word.
    std::function<bool(TokenId)> boundary;
    /// When non-zero, emit exactly this many tokens and ignore EOS (benchmarks).
    std::size_t fixed_target_len = 0;
    /// Emission cap; 0 selects 2 * |source| + 8.
    std::size_t max_len = 0;
    bool record_logits = false;
};

/// Per-layer cache storage of one role. Rows are appended in encode order.
template <typename Scalar>
struct RoleCache {
    std::vector<Scalar> keys;      ///< unrotated, rows x d
    std::vector<Scalar> values;    ///< rows x d
    std::vector<Scalar> rotated;   ///< memoized rotated keys
    std::vector<double> rotated_at;
    std::size_t rows = 0;
};

template <typename Scalar>
struct SplitKvCache {
    std::vector<RoleCache<Scalar>> source;  ///< one per layer
    std::vector<RoleCache<Scalar>> target;
    std::vector<double> source_positions;   ///< position id each source row was encoded at
    std::vector<double> target_positions;   ///< arrival-based ids (Interleaved, BatchNoRe)
    TokenSeq target_tokens;                 ///< tokens behind the target rows

    std::size_t source_len() const noexcept { return source_positions.size(); }
    std::size_t target_len() const noexcept { return target_tokens.size(); }
};

template <typename Scalar>
class DecodeSession {
public:
    enum class Action : std::uint8_t { Read, Write };

    DecodeSession(const Transformer<Scalar>& model, DecodeOptions options);

    /// Encodes new source tokens into the source cache and flips to Write.
    void read_step(std::span<const TokenId> new_tokens);
    /// Encodes the last emitted token (BOS first), predicts the next one
    /// greedily (ties to the lowest id) and returns it.
    TokenId write_step();

    Action action() const noexcept { return action_; }
    bool finished() const noexcept { return finished_; }
    /// Number of completed reads.
    std::size_t index() const noexcept { return index_; }
    /// Words completed so far (drives the next read size).
    std::size_t words() const noexcept { return words_; }
    const DecodeOptions& options() const noexcept { return options_; }
    const SplitKvCache<Scalar>& cache() const noexcept { return cache_; }
    const DecodeTrace& trace() const noexcept { return trace_; }
    DecodeTrace take_trace();
    /// Sets the emission cap from the source length when max_len is 0.
    void set_source_length(std::size_t source_len);

private:
    using Matrix = typename Transformer<Scalar>::Matrix;
    using RowVector = typename Transformer<Scalar>::RowVector;

    double source_key_position(std::size_t i) const;
    double target_key_position(std::size_t t) const;
    double target_query_position(std::size_t t) const;
    /// Runs one token through every layer, writing its K/V at `row` of the
    /// role's cache; returns the final hidden state.
    RowVector encode_row(TokenId token, Role role, std::size_t row, double pos, double frame);
    void reencode_targets();
    const RotationTable& table(double position);

    const Transformer<Scalar>& model_;
    DecodeOptions options_;
    SplitKvCache<Scalar> cache_;
    DecodeTrace trace_;
    Action action_ = Action::Read;
    bool finished_ = false;
    std::size_t index_ = 0;
    std::size_t words_ = 0;
    std::size_t arrival_ = 0;
    std::size_t cap_ = 0;
    TokenId next_token_ = kBos;
    double pending_ms_ = 0.0;
    std::unordered_map<double, RotationTable> tables_;
};

/// Runs the read/write loop of a fresh session over a complete source.
template <typename Scalar>
DecodeTrace decode(DecodeSession<Scalar>& session, std::span<const TokenId> source);

template <typename Scalar>
DecodeTrace decode(const Transformer<Scalar>& model, const DecodeOptions& options, std::span<const TokenId> source);

/// Reference decoder without caches: every step rebuilds the arrangement of
/// the current prefix and runs a full forward pass.
template <typename Scalar>
DecodeTrace oracle_decode(const Transformer<Scalar>& model, const DecodeOptions& options,
                          std::span<const TokenId> source);

/// Arrangement whose last target row reproduces one decoder write step.
/// `reads[t]` is the source count when target row t was encoded.
ArrangedSequence prefix_arrangement(const DecodeOptions& options, std::span<const TokenId> source,
                                    const TokenSeq& target_prefix, const std::vector<std::size_t>& reads);

extern template class DecodeSession<float>;
extern template class DecodeSession<double>;

}  // namespace streamattn
