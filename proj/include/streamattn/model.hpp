#pragma once

// Minimal decoder-only transformer: pre-norm blocks with RMSNorm, multi-head
// rotary attention driven by an ArrangedSequence, tanh-GELU feed-forward,
// untied (or tied) output head. Forward, loss and exact reverse-mode
// gradients; the incremental decoder in stream.hpp reuses the row kernels.
//
// Parameter layout (flat buffer, tensors in this order, row-major):
//   embedding            V x d
//   per layer l:         attn_norm 1 x d, wq d x d, wk d x d, wv d x d,
//                        wo d x d, ffn_norm 1 x d, w1 d x f, w2 f x d
//   final_norm           1 x d
//   head                 d x V   (absent when tied; logits use embedding^T)
// Projections act on row vectors: y = x * W.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "streamattn/paradigm.hpp"
#include "streamattn/rope.hpp"

namespace streamattn {

enum class Precision : std::uint8_t { Fp32, Fp64 };

std::string_view precision_name(Precision p) noexcept;
std::optional<Precision> parse_precision(std::string_view name) noexcept;

struct ModelConfig {
    int layers = 2;
    int heads = 4;
    int d_model = 64;
    int ffn_mult = 4;
    int vocab_size = 64;
    int max_positions = 256;
    Precision precision = Precision::Fp32;
    bool tied_head = false;
    double rope_base = RotaryParams::kDefaultBase;

    int d_head() const noexcept { return d_model / heads; }
    int d_ffn() const noexcept { return d_model * ffn_mult; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct TensorInfo {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;

    std::size_t size() const noexcept { return rows * cols; }
};

class ParamLayout {
public:
    static constexpr std::size_t kPerLayer = 8;
    enum LayerSlot : std::size_t { AttnNorm, Wq, Wk, Wv, Wo, FfnNorm, W1, W2 };

    explicit ParamLayout(const ModelConfig& cfg);

    std::span<const TensorInfo> tensors() const noexcept { return tensors_; }
    std::size_t total() const noexcept { return total_; }
    std::size_t embedding() const noexcept { return 0; }
    std::size_t layer(std::size_t l, LayerSlot slot) const noexcept { return 1 + l * kPerLayer + slot; }
    std::size_t final_norm() const noexcept { return final_norm_; }
    /// Index of the output head tensor, or the embedding when tied.
    std::size_t head() const noexcept { return head_; }

private:
    std::vector<TensorInfo> tensors_;
    std::size_t total_ = 0;
    std::size_t final_norm_ = 0;
    std::size_t head_ = 0;
};

inline constexpr double kNormEps = 1e-5;

template <typename Scalar>
struct ForwardOutput {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    Matrix logits;  ///< rows = sequence, cols = vocab
    /// attention[layer][head], seq x seq; empty unless requested.
    std::vector<std::vector<Matrix>> attention;
    /// Scaled pre-softmax scores, same indexing; masked entries are -inf.
    std::vector<std::vector<Matrix>> scores;
};

/// Mean negative log-likelihood of arr.labels over the loss-masked rows.
template <typename Scalar>
double masked_nll(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& logits,
                  const ArrangedSequence& arr);

template <typename Scalar>
class Transformer {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
    using ConstMap = Eigen::Map<const Matrix>;
    using Map = Eigen::Map<Matrix>;

    struct LayerWeights {
        ConstMap attn_norm, wq, wk, wv, wo, ffn_norm, w1, w2;
    };

    /// Wraps existing parameters; size must match the layout.
    Transformer(ModelConfig cfg, std::vector<Scalar> params);

    /// Seeded initialization: embedding N(0,1), projections N(0, 1/fan_in)
    /// with the residual outputs (wo, w2) further scaled by 1/sqrt(2L),
    /// norm gains 1.
    static Transformer initialize(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return cfg_; }
    const ParamLayout& layout() const noexcept { return layout_; }
    const RotaryParams& rotary() const noexcept { return rotary_; }
    std::span<const Scalar> params() const noexcept { return params_; }
    std::span<Scalar> mutable_params() noexcept { return params_; }

    ConstMap tensor(std::size_t index) const;
    LayerWeights layer(std::size_t l) const;

    ForwardOutput<Scalar> forward(const ArrangedSequence& arr, bool capture_attention = false) const;

    /// Mean NLL over the loss-masked rows of `arr`.
    double loss(const ArrangedSequence& arr) const;

    /// Adds scale * d(loss)/d(params) into grad (same layout as params) and
    /// returns the loss.
    double accumulate_gradient(const ArrangedSequence& arr, std::span<Scalar> grad, Scalar scale = Scalar(1)) const;

    /// Full gradient of loss(arr).
    std::vector<Scalar> backward(const ArrangedSequence& arr) const;

    /// Logits of one final-layer hidden row (before the final norm).
    RowVector logits_from_hidden(const RowVector& hidden) const;

    /// Throws when |query_pos - key_pos| exceeds max_positions.
    void check_distance(double query_pos, double key_pos) const;

private:
    struct Cache;
    void run(const ArrangedSequence& arr, Cache& cache, bool capture) const;

    ModelConfig cfg_;
    ParamLayout layout_;
    RotaryParams rotary_;
    std::vector<Scalar> params_;
};

/// Row kernels shared by the full forward pass and the incremental decoder.
namespace kernels {

/// out = x * inv_rms(x) * gain, row-wise; inv receives 1/rms per row.
template <typename Scalar>
void rms_norm(const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>& x,
              const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& gain,
              Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& out,
              Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& inv) {
    const auto d = static_cast<Scalar>(x.cols());
    inv = ((x.array().square().rowwise().sum() / d) + Scalar(kNormEps)).rsqrt().matrix();
    out = (x.array().colwise() * inv.array()).rowwise() * gain.array();
}

/// tanh-approximated GELU, elementwise.
template <typename Derived>
auto gelu(const Eigen::ArrayBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    const Scalar c = Scalar(0.7978845608028654);  // sqrt(2/pi)
    const Scalar a = Scalar(0.044715);
    return (Scalar(0.5) * x * (Scalar(1) + (c * (x + a * x.cube())).tanh())).eval();
}

template <typename Derived>
auto gelu_grad(const Eigen::ArrayBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    const Scalar c = Scalar(0.7978845608028654);
    const Scalar a = Scalar(0.044715);
    const auto t = (c * (x + a * x.cube())).tanh().eval();
    return (Scalar(0.5) * (Scalar(1) + t) +
            Scalar(0.5) * x * (Scalar(1) - t.square()) * c * (Scalar(1) + Scalar(3) * a * x.square()))
        .eval();
}

}  // namespace kernels

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace streamattn
