#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "streamattn/corpus.hpp"
#include "streamattn/model.hpp"
#include "streamattn/paradigm.hpp"
#include "streamattn/rng.hpp"
#include "streamattn/train.hpp"

namespace testing {

inline streamattn::ModelConfig tiny_config(int layers = 1, int heads = 1, int d_model = 8, int vocab = 11) {
    streamattn::ModelConfig cfg;
    cfg.layers = layers;
    cfg.heads = heads;
    cfg.d_model = d_model;
    cfg.ffn_mult = 2;
    cfg.vocab_size = vocab;
    cfg.max_positions = 256;
    cfg.precision = streamattn::Precision::Fp64;
    return cfg;
}

inline streamattn::TokenSeq random_tokens(streamattn::SplitMix64& rng, std::size_t n, int vocab) {
    streamattn::TokenSeq out(n);
    const auto content = static_cast<std::uint64_t>(vocab - streamattn::kFirstContent);
    for (auto& t : out) t = streamattn::kFirstContent + static_cast<streamattn::TokenId>(rng.below(content));
    return out;
}

inline streamattn::ParallelPair random_pair(streamattn::SplitMix64& rng, std::size_t src_len, std::size_t tgt_len,
                                            int vocab) {
    streamattn::ParallelPair p{random_tokens(rng, src_len, vocab), random_tokens(rng, tgt_len, vocab)};
    p.target.push_back(streamattn::kEos);
    return p;
}

struct GradCheck {
    double max_rel = 0.0;
    std::size_t checked = 0;
};

/// Central differences on every coordinate of a model (fp64).
/// Relative error uses max(|a|, |n|, floor) as denominator.
inline GradCheck gradient_check(streamattn::Transformer<double>& model, const streamattn::ArrangedSequence& arr,
                                double h = 1e-5, double floor = 1e-6) {
    const auto analytic = model.backward(arr);
    auto params = model.mutable_params();
    GradCheck out;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        const double up = model.loss(arr);
        params[i] = saved - h;
        const double down = model.loss(arr);
        params[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
        out.max_rel = std::max(out.max_rel, std::abs(numeric - analytic[i]) / denom);
        ++out.checked;
    }
    return out;
}

}  // namespace testing
