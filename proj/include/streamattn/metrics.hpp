#pragma once

// Quality and latency metrics over decode traces.
//
// Latency (g(j) = source tokens read before emitting hypothesis token j):
//   tau   = first j with g(j) = |x| (|hyp| when the source is never finished)
//   AL    = 1/tau * sum_{j<=tau} [ g(j) - (j-1) / gamma ],  gamma = |ref| / |x|
//   LAAL  = the same with gamma = max(|ref|, |hyp|) / |x|
// Corpus values are means over sentences.

#include <cstddef>
#include <span>
#include <vector>

#include "streamattn/types.hpp"

namespace streamattn {

/// Exact-position matches / max(len). Both empty gives 1.
double token_accuracy(std::span<const TokenId> hyp, std::span<const TokenId> ref);

/// Corpus BLEU-4 in [0, 100]. Zero n-gram match counts for n >= 2 are
/// smoothed to 1 / (candidates + 1); brevity penalty exp(1 - r/c) when c < r.
double corpus_bleu(std::span<const TokenSeq> hyps, std::span<const TokenSeq> refs);

struct LatencyReport {
    double al = 0.0;
    double laal = 0.0;
    std::vector<double> sentence_al;
    std::vector<double> sentence_laal;
};

struct SentenceLatency {
    double al = 0.0;
    double laal = 0.0;
};

/// g has one entry per hypothesis token.
SentenceLatency lagging(std::span<const std::size_t> g, std::size_t source_len, std::size_t ref_len);

struct LatencyInput {
    std::vector<std::size_t> g;
    std::size_t source_len = 0;
    std::size_t ref_len = 0;
};

LatencyReport corpus_lagging(std::span<const LatencyInput> sentences);

}  // namespace streamattn
