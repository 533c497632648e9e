#pragma once

// Adam training loop over paradigm arrangements, plus held-out evaluation by
// streaming decode.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "streamattn/corpus.hpp"
#include "streamattn/model.hpp"
#include "streamattn/paradigm.hpp"
#include "streamattn/stream.hpp"

namespace streamattn {

struct TrainOptions {
    ParadigmId paradigm = ParadigmId::GroupStream;
    std::size_t k = 3;
    double phi = 0.0;
    PositionRemoval removal = PositionRemoval::None;
    double lr = 2e-3;
    std::size_t steps = 2000;
    std::size_t batch = 32;
    std::uint64_t seed = 1;
    /// Linear warmup steps, then optional linear decay to 0 at `steps`.
    std::size_t warmup = 100;
    bool linear_decay = true;
    /// Global gradient-norm clip; 0 disables.
    double clip_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Called after every step with (1-based step, batch loss).
    std::function<void(std::size_t, double)> on_step;
};

/// Layout of one training pair: target role = BOS + pair.target.
ArrangedSequence training_arrangement(ParadigmId paradigm, std::size_t k, double phi, PositionRemoval removal,
                                      const ParallelPair& pair);

template <typename Scalar>
struct TrainResult {
    Transformer<Scalar> model;
    std::vector<double> losses;
};

/// Deterministic in (cfg, options, corpus). Throws DivergenceError on a
/// non-finite batch loss.
template <typename Scalar>
TrainResult<Scalar> train(const ModelConfig& cfg, const TrainOptions& options, std::span<const ParallelPair> corpus);

/// Continues training an existing model in place.
template <typename Scalar>
std::vector<double> train_model(Transformer<Scalar>& model, const TrainOptions& options,
                                std::span<const ParallelPair> corpus);

struct EvalSummary {
    double accuracy = 0.0;  ///< mean sentence token accuracy, in [0, 1]
    double bleu = 0.0;
    double al = 0.0;
    double laal = 0.0;
};

/// Decodes every source with `options` and scores it against the target.
template <typename Scalar>
EvalSummary evaluate(const Transformer<Scalar>& model, const DecodeOptions& options,
                     std::span<const ParallelPair> pairs, std::vector<DecodeTrace>* traces = nullptr);

/// Mean teacher-forced next-token accuracy over the loss rows.
template <typename Scalar>
double next_token_accuracy(const Transformer<Scalar>& model, std::span<const ArrangedSequence> arrangements);

}  // namespace streamattn
