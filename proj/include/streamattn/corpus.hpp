#pragma once

// Synthetic parallel data and JSONL corpus I/O.
//
// JSONL format, one pair per line:
//   {"source": [5, 7, 9], "target": [7, 5, 9, 2]}
// Targets are EOS (2) terminated; load_jsonl appends EOS when missing.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "streamattn/types.hpp"

namespace streamattn {

enum class TaskKind : std::uint8_t { Copy, MappedTranslation };

struct SyntheticTaskSpec {
    TaskKind kind = TaskKind::MappedTranslation;
    int vocab_size = 64;
    int len_min = 8;
    int len_max = 16;
    std::uint64_t seed = 1;

    void validate() const;
};

struct ParallelPair {
    TokenSeq source;
    TokenSeq target;  ///< ends with kEos

    bool operator==(const ParallelPair&) const = default;
};

/// Content bijection sigma used by MappedTranslation; sigma[t] for every
/// content id t, identity on the reserved ids.
std::vector<TokenId> task_bijection(const SyntheticTaskSpec& spec);

/// sigma applied elementwise, then the adjacent pairs starting at even
/// indices are swapped. No EOS is appended.
TokenSeq map_translate(std::span<const TokenId> source, std::span<const TokenId> sigma);

/// Inverse of map_translate given the inverse bijection.
TokenSeq unmap_translate(std::span<const TokenId> target, std::span<const TokenId> sigma);

/// n pairs, deterministic in (spec, n). Lengths and tokens are drawn from a
/// SplitMix64 stream; sigma from an independent fork of the same seed.
std::vector<ParallelPair> generate(const SyntheticTaskSpec& spec, std::size_t n);

/// Parses a JSONL corpus. vocab_size > 0 enables the out-of-vocabulary check.
std::vector<ParallelPair> load_jsonl(const std::filesystem::path& path, int vocab_size = 0);

void write_jsonl(const std::filesystem::path& path, std::span<const ParallelPair> pairs);

/// Content tokens of a target (trailing EOS removed).
TokenSeq strip_eos(std::span<const TokenId> seq);

}  // namespace streamattn
