#include "streamattn/train.hpp"

#include <cmath>

#include "streamattn/error.hpp"
#include "streamattn/metrics.hpp"
#include "streamattn/rng.hpp"

namespace streamattn {

namespace {
constexpr std::uint64_t kInitSalt = 0x494e4954ULL;   // "INIT"
constexpr std::uint64_t kBatchSalt = 0x42415443ULL;  // "BATC"
}  // namespace

ArrangedSequence training_arrangement(ParadigmId paradigm, std::size_t k, double phi, PositionRemoval removal,
                                      const ParallelPair& pair) {
    STREAMATTN_REQUIRE(!pair.source.empty(), "training pair has an empty source");
    TokenSeq target;
    target.reserve(pair.target.size() + 1);
    target.push_back(kBos);
    target.insert(target.end(), pair.target.begin(), pair.target.end());
    const auto schedule = waitk_schedule(static_cast<std::int64_t>(k), static_cast<std::int64_t>(pair.source.size()),
                                         static_cast<std::int64_t>(target.size()));
    auto arr = arrange(paradigm, schedule, PositionId(paradigm == ParadigmId::GroupStream ? phi : 0.0), pair.source,
                       target);
    if (paradigm == ParadigmId::BatchPosRe) {
        // Train under the frame the decoder uses: target row t queries the
        // source as if it sat right after the g(t+1) sources read so far.
        std::size_t t = 0;
        for (std::size_t r = 0; r < arr.size(); ++r) {
            if (arr.roles[r] != Role::Target) continue;
            arr.source_frame_positions[r] = static_cast<double>(schedule.g(t + 1) + t);
            ++t;
        }
    }
    remove_positions(arr, removal);
    return arr;
}

template <typename Scalar>
std::vector<double> train_model(Transformer<Scalar>& model, const TrainOptions& o,
                                std::span<const ParallelPair> corpus) {
    STREAMATTN_REQUIRE(!corpus.empty(), "train: empty corpus");
    STREAMATTN_REQUIRE(o.batch >= 1, "train: batch must be >= 1");
    STREAMATTN_REQUIRE(o.lr >= 0.0, "train: lr must be >= 0");

    std::vector<ArrangedSequence> arrangements;
    arrangements.reserve(corpus.size());
    for (const auto& pair : corpus) arrangements.push_back(training_arrangement(o.paradigm, o.k, o.phi, o.removal, pair));

    SplitMix64 root(o.seed);
    SplitMix64 batch_rng = root.fork(kBatchSalt);
    auto params = model.mutable_params();
    const std::size_t n = params.size();
    std::vector<Scalar> grad(n);
    std::vector<double> m(n, 0.0), v(n, 0.0);
    std::vector<double> losses;
    losses.reserve(o.steps);
    const Scalar inv_batch = Scalar(1.0 / static_cast<double>(o.batch));

    for (std::size_t step = 1; step <= o.steps; ++step) {
        std::fill(grad.begin(), grad.end(), Scalar(0));
        double loss = 0.0;
        for (std::size_t b = 0; b < o.batch; ++b) {
            const auto idx = static_cast<std::size_t>(batch_rng.below(arrangements.size()));
            loss += model.accumulate_gradient(arrangements[idx], grad, inv_batch);
        }
        loss /= static_cast<double>(o.batch);
        if (!std::isfinite(loss)) throw DivergenceError(step);
        losses.push_back(loss);

        double scale = 1.0;
        if (o.clip_norm > 0.0) {
            double sq = 0.0;
            for (Scalar g : grad) sq += static_cast<double>(g) * static_cast<double>(g);
            const double norm = std::sqrt(sq);
            if (!std::isfinite(norm)) throw DivergenceError(step);
            if (norm > o.clip_norm) scale = o.clip_norm / norm;
        }

        double lr = o.lr;
        if (o.warmup > 0 && step <= o.warmup) {
            lr *= static_cast<double>(step) / static_cast<double>(o.warmup);
        } else if (o.linear_decay && o.steps > o.warmup) {
            lr *= static_cast<double>(o.steps - step + 1) / static_cast<double>(o.steps - o.warmup);
        }
        const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < n; ++i) {
            const double g = static_cast<double>(grad[i]) * scale;
            m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
            v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
            const double update = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + o.eps);
            params[i] = static_cast<Scalar>(static_cast<double>(params[i]) - update);
        }
        if (o.on_step) o.on_step(step, loss);
    }
    return losses;
}

template <typename Scalar>
TrainResult<Scalar> train(const ModelConfig& cfg, const TrainOptions& options, std::span<const ParallelPair> corpus) {
    SplitMix64 root(options.seed);
    auto model = Transformer<Scalar>::initialize(cfg, root.fork(kInitSalt).next());
    auto losses = train_model(model, options, corpus);
    return {std::move(model), std::move(losses)};
}

template <typename Scalar>
EvalSummary evaluate(const Transformer<Scalar>& model, const DecodeOptions& options,
                     std::span<const ParallelPair> pairs, std::vector<DecodeTrace>* traces) {
    STREAMATTN_REQUIRE(!pairs.empty(), "evaluate: no pairs");
    std::vector<TokenSeq> hyps, refs;
    std::vector<LatencyInput> lat;
    double acc = 0.0;
    for (const auto& pair : pairs) {
        auto trace = decode(model, options, pair.source);
        TokenSeq ref = strip_eos(pair.target);
        acc += token_accuracy(trace.tokens, ref);
        lat.push_back({trace.g, pair.source.size(), ref.size()});
        hyps.push_back(trace.tokens);
        refs.push_back(std::move(ref));
        if (traces) traces->push_back(std::move(trace));
    }
    EvalSummary s;
    s.accuracy = acc / static_cast<double>(pairs.size());
    s.bleu = corpus_bleu(hyps, refs);
    const auto rep = corpus_lagging(lat);
    s.al = rep.al;
    s.laal = rep.laal;
    return s;
}

template <typename Scalar>
double next_token_accuracy(const Transformer<Scalar>& model, std::span<const ArrangedSequence> arrangements) {
    std::size_t hits = 0, total = 0;
    for (const auto& arr : arrangements) {
        const auto out = model.forward(arr);
        for (std::size_t r = 0; r < arr.size(); ++r) {
            if (!arr.loss_mask[r]) continue;
            Eigen::Index best = 0;
            out.logits.row(static_cast<Eigen::Index>(r)).maxCoeff(&best);
            hits += static_cast<TokenId>(best) == arr.labels[r] ? 1 : 0;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

template TrainResult<float> train(const ModelConfig&, const TrainOptions&, std::span<const ParallelPair>);
template TrainResult<double> train(const ModelConfig&, const TrainOptions&, std::span<const ParallelPair>);
template std::vector<double> train_model(Transformer<float>&, const TrainOptions&, std::span<const ParallelPair>);
template std::vector<double> train_model(Transformer<double>&, const TrainOptions&, std::span<const ParallelPair>);
template EvalSummary evaluate(const Transformer<float>&, const DecodeOptions&, std::span<const ParallelPair>,
                              std::vector<DecodeTrace>*);
template EvalSummary evaluate(const Transformer<double>&, const DecodeOptions&, std::span<const ParallelPair>,
                              std::vector<DecodeTrace>*);
template double next_token_accuracy(const Transformer<float>&, std::span<const ArrangedSequence>);
template double next_token_accuracy(const Transformer<double>&, std::span<const ArrangedSequence>);

}  // namespace streamattn
