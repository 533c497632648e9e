#include "streamattn/model.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "streamattn/error.hpp"
#include "streamattn/rng.hpp"

namespace streamattn {

std::string_view precision_name(Precision p) noexcept { return p == Precision::Fp32 ? "fp32" : "fp64"; }

std::optional<Precision> parse_precision(std::string_view name) noexcept {
    if (name == "fp32") return Precision::Fp32;
    if (name == "fp64") return Precision::Fp64;
    return std::nullopt;
}

void ModelConfig::validate() const {
    STREAMATTN_REQUIRE(layers >= 1, "model: layers must be >= 1");
    STREAMATTN_REQUIRE(heads >= 1, "model: heads must be >= 1");
    STREAMATTN_REQUIRE(d_model >= 2 && d_model % heads == 0, "model: d_model must be divisible by heads");
    STREAMATTN_REQUIRE(d_head() % 2 == 0, "model: d_head must be even");
    STREAMATTN_REQUIRE(ffn_mult >= 1, "model: ffn_mult must be >= 1");
    STREAMATTN_REQUIRE(vocab_size >= 4, "model: vocab_size must be >= 4");
    STREAMATTN_REQUIRE(max_positions >= 1, "model: max_positions must be >= 1");
    STREAMATTN_REQUIRE(rope_base > 1.0, "model: rope_base must be > 1");
}

ParamLayout::ParamLayout(const ModelConfig& cfg) {
    cfg.validate();
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto f = static_cast<std::size_t>(cfg.d_ffn());
    const auto v = static_cast<std::size_t>(cfg.vocab_size);
    auto add = [this](std::string name, std::size_t rows, std::size_t cols) {
        tensors_.push_back({std::move(name), rows, cols, total_});
        total_ += rows * cols;
    };
    add("embedding", v, d);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        add(p + "attn_norm", 1, d);
        add(p + "wq", d, d);
        add(p + "wk", d, d);
        add(p + "wv", d, d);
        add(p + "wo", d, d);
        add(p + "ffn_norm", 1, d);
        add(p + "w1", d, f);
        add(p + "w2", f, d);
    }
    final_norm_ = tensors_.size();
    add("final_norm", 1, d);
    if (cfg.tied_head) {
        head_ = 0;
    } else {
        head_ = tensors_.size();
        add("head", d, v);
    }
}

template <typename Scalar>
Transformer<Scalar>::Transformer(ModelConfig cfg, std::vector<Scalar> params)
    : cfg_(cfg),
      layout_(cfg_),
      rotary_(static_cast<std::size_t>(cfg_.d_head()), cfg_.rope_base),
      params_(std::move(params)) {
    STREAMATTN_REQUIRE(params_.size() == layout_.total(), "model: parameter count does not match the layout");
}

template <typename Scalar>
Transformer<Scalar> Transformer<Scalar>::initialize(const ModelConfig& cfg, std::uint64_t seed) {
    const ParamLayout layout(cfg);
    std::vector<Scalar> params(layout.total());
    SplitMix64 rng(seed);
    const double residual_scale = 1.0 / std::sqrt(2.0 * cfg.layers);
    for (const auto& t : layout.tensors()) {
        const bool is_norm = t.rows == 1;
        const bool residual_out = t.name.ends_with(".wo") || t.name.ends_with(".w2");
        double stddev = t.name == "embedding" ? 1.0 : 1.0 / std::sqrt(static_cast<double>(t.rows));
        if (residual_out) stddev *= residual_scale;
        for (std::size_t i = 0; i < t.size(); ++i) {
            params[t.offset + i] = is_norm ? Scalar(1) : static_cast<Scalar>(stddev * rng.normal());
        }
    }
    return Transformer(cfg, std::move(params));
}

template <typename Scalar>
typename Transformer<Scalar>::ConstMap Transformer<Scalar>::tensor(std::size_t index) const {
    const auto& t = layout_.tensors()[index];
    return ConstMap(params_.data() + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
}

template <typename Scalar>
typename Transformer<Scalar>::LayerWeights Transformer<Scalar>::layer(std::size_t l) const {
    using S = ParamLayout;
    return {tensor(layout_.layer(l, S::AttnNorm)), tensor(layout_.layer(l, S::Wq)), tensor(layout_.layer(l, S::Wk)),
            tensor(layout_.layer(l, S::Wv)),       tensor(layout_.layer(l, S::Wo)), tensor(layout_.layer(l, S::FfnNorm)),
            tensor(layout_.layer(l, S::W1)),       tensor(layout_.layer(l, S::W2))};
}

template <typename Scalar>
void Transformer<Scalar>::check_distance(double query_pos, double key_pos) const {
    if (std::abs(query_pos - key_pos) > static_cast<double>(cfg_.max_positions)) {
        std::ostringstream msg;
        msg << "relative distance " << (query_pos - key_pos) << " exceeds max_positions " << cfg_.max_positions;
        throw ContractError(msg.str());
    }
}

template <typename Scalar>
typename Transformer<Scalar>::RowVector Transformer<Scalar>::logits_from_hidden(const RowVector& hidden) const {
    Matrix normed;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv;
    kernels::rms_norm<Scalar>(hidden, tensor(layout_.final_norm()), normed, inv);
    if (cfg_.tied_head) return normed * tensor(layout_.embedding()).transpose();
    return normed * tensor(layout_.head());
}

namespace {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rotates (or un-rotates) each head slice of each row by that row's table.
template <typename Scalar>
void rotate_rows(RowMatrix<Scalar>& m, const std::vector<const RotationTable*>& tables, std::size_t heads,
                 bool inverse) {
    const auto dh = static_cast<std::size_t>(m.cols()) / heads;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const RotationTable& table = *tables[static_cast<std::size_t>(r)];
        for (std::size_t h = 0; h < heads; ++h) {
            std::span<Scalar> slice(m.row(r).data() + h * dh, dh);
            if (inverse) {
                rotate_inverse_inplace(table, slice);
            } else {
                rotate_inplace(table, slice);
            }
        }
    }
}

}  // namespace

template <typename Scalar>
struct Transformer<Scalar>::Cache {
    using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    struct Layer {
        Matrix x_in, xn1;
        ColVector inv1;
        Matrix q_frame;   ///< queries rotated to the source frame
        Matrix q_target;  ///< queries rotated to positions (only when split)
        Matrix k, v;      ///< keys rotated, values
        std::vector<Matrix> probs;
        std::vector<Matrix> scores;
        Matrix o, x_mid, xn2;
        ColVector inv2;
        Matrix h, g;
    };

    std::map<double, RotationTable> tables;
    std::vector<const RotationTable*> pos_tables, frame_tables;
    bool split = false;
    std::vector<std::uint8_t> source_col;
    std::vector<Layer> layers;
    Matrix x_out, xf;
    ColVector invf;
    Matrix logits;
};

template <typename Scalar>
void Transformer<Scalar>::run(const ArrangedSequence& arr, Cache& c, bool capture) const {
    const std::size_t n = arr.size();
    STREAMATTN_REQUIRE(n >= 1, "forward: empty sequence");
    STREAMATTN_REQUIRE(arr.attn_mask.size() == n * n && arr.positions.size() == n &&
                           arr.source_frame_positions.size() == n && arr.roles.size() == n,
                       "forward: malformed arrangement");
    const auto d = static_cast<Eigen::Index>(cfg_.d_model);
    const auto heads = static_cast<std::size_t>(cfg_.heads);
    const auto dh = static_cast<Eigen::Index>(cfg_.d_head());
    const Scalar scale = Scalar(1.0 / std::sqrt(static_cast<double>(dh)));

    auto table_for = [&](double p) -> const RotationTable* {
        auto it = c.tables.find(p);
        if (it == c.tables.end()) it = c.tables.emplace(p, RotationTable(rotary_, p)).first;
        return &it->second;
    };
    c.pos_tables.resize(n);
    c.frame_tables.resize(n);
    c.source_col.resize(n);
    c.split = false;
    for (std::size_t i = 0; i < n; ++i) {
        c.pos_tables[i] = table_for(PositionId(arr.positions[i]).value());
        c.frame_tables[i] = table_for(PositionId(arr.source_frame_positions[i]).value());
        c.split = c.split || arr.source_frame_positions[i] != arr.positions[i];
        c.source_col[i] = arr.roles[i] == Role::Source ? 1 : 0;
    }
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t col = 0; col < n; ++col) {
            if (!arr.allowed(r, col)) continue;
            check_distance(c.source_col[col] ? arr.source_frame_positions[r] : arr.positions[r], arr.positions[col]);
        }
    }

    Matrix x(static_cast<Eigen::Index>(n), d);
    const auto emb = tensor(layout_.embedding());
    for (std::size_t i = 0; i < n; ++i) {
        const TokenId t = arr.tokens[i];
        STREAMATTN_REQUIRE(t >= 0 && t < cfg_.vocab_size, "forward: token id outside the vocabulary");
        x.row(static_cast<Eigen::Index>(i)) = emb.row(t);
    }

    constexpr Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
    c.layers.resize(static_cast<std::size_t>(cfg_.layers));
    for (std::size_t l = 0; l < c.layers.size(); ++l) {
        auto& L = c.layers[l];
        const auto w = layer(l);
        L.x_in = x;
        kernels::rms_norm<Scalar>(x, w.attn_norm, L.xn1, L.inv1);
        L.q_frame = L.xn1 * w.wq;
        L.k = L.xn1 * w.wk;
        L.v = L.xn1 * w.wv;
        if (c.split) {
            L.q_target = L.q_frame;
            rotate_rows(L.q_target, c.pos_tables, heads, false);
        }
        rotate_rows(L.q_frame, c.frame_tables, heads, false);
        rotate_rows(L.k, c.pos_tables, heads, false);

        L.o.resize(static_cast<Eigen::Index>(n), d);
        L.probs.resize(heads);
        L.scores.resize(capture ? heads : 0);
        for (std::size_t h = 0; h < heads; ++h) {
            const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
            Matrix s = L.q_frame.middleCols(c0, dh) * L.k.middleCols(c0, dh).transpose();
            if (c.split) {
                const Matrix st = L.q_target.middleCols(c0, dh) * L.k.middleCols(c0, dh).transpose();
                for (std::size_t col = 0; col < n; ++col) {
                    if (!c.source_col[col]) s.col(static_cast<Eigen::Index>(col)) = st.col(static_cast<Eigen::Index>(col));
                }
            }
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t col = 0; col < n; ++col) {
                    auto& e = s(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col));
                    e = arr.allowed(r, col) ? e * scale : neg_inf;
                }
            }
            if (capture) L.scores[h] = s;
            for (std::size_t r = 0; r < n; ++r) {
                const auto ri = static_cast<Eigen::Index>(r);
                const Scalar mx = s.row(ri).maxCoeff();
                Scalar sum = 0;
                for (std::size_t col = 0; col < n; ++col) {
                    const auto ci = static_cast<Eigen::Index>(col);
                    const Scalar e = arr.allowed(r, col) ? std::exp(s(ri, ci) - mx) : Scalar(0);
                    s(ri, ci) = e;
                    sum += e;
                }
                s.row(ri) /= sum;
            }
            L.o.middleCols(c0, dh) = s * L.v.middleCols(c0, dh);
            L.probs[h] = std::move(s);
        }
        L.x_mid = L.x_in + L.o * w.wo;
        kernels::rms_norm<Scalar>(L.x_mid, w.ffn_norm, L.xn2, L.inv2);
        L.h = L.xn2 * w.w1;
        L.g = kernels::gelu(L.h.array()).matrix();
        x = L.x_mid + L.g * w.w2;
    }
    c.x_out = x;
    kernels::rms_norm<Scalar>(x, tensor(layout_.final_norm()), c.xf, c.invf);
    if (cfg_.tied_head) {
        c.logits = c.xf * tensor(layout_.embedding()).transpose();
    } else {
        c.logits = c.xf * tensor(layout_.head());
    }
}

template <typename Scalar>
ForwardOutput<Scalar> Transformer<Scalar>::forward(const ArrangedSequence& arr, bool capture_attention) const {
    Cache c;
    run(arr, c, capture_attention);
    ForwardOutput<Scalar> out;
    out.logits = std::move(c.logits);
    if (capture_attention) {
        for (auto& L : c.layers) {
            out.attention.push_back(std::move(L.probs));
            out.scores.push_back(std::move(L.scores));
        }
    }
    return out;
}

namespace {

/// log-softmax of one logits row at index `label`, in double.
template <typename Row>
double log_prob(const Row& row, TokenId label) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < row.size(); ++j) mx = std::max(mx, static_cast<double>(row(j)));
    double sum = 0.0;
    for (Eigen::Index j = 0; j < row.size(); ++j) sum += std::exp(static_cast<double>(row(j)) - mx);
    return static_cast<double>(row(label)) - mx - std::log(sum);
}

std::size_t loss_rows(const ArrangedSequence& arr) {
    std::size_t count = 0;
    for (auto m : arr.loss_mask) count += m ? 1 : 0;
    STREAMATTN_REQUIRE(count > 0, "loss: loss mask selects no rows");
    return count;
}

}  // namespace

template <typename Scalar>
double masked_nll(const RowMatrix<Scalar>& logits, const ArrangedSequence& arr) {
    const std::size_t count = loss_rows(arr);
    STREAMATTN_REQUIRE(static_cast<std::size_t>(logits.rows()) == arr.size(), "loss: logits rows != sequence length");
    double total = 0.0;
    for (std::size_t r = 0; r < arr.size(); ++r) {
        if (arr.loss_mask[r]) total -= log_prob(logits.row(static_cast<Eigen::Index>(r)), arr.labels[r]);
    }
    return total / static_cast<double>(count);
}

template double masked_nll(const RowMatrix<float>&, const ArrangedSequence&);
template double masked_nll(const RowMatrix<double>&, const ArrangedSequence&);

template <typename Scalar>
double Transformer<Scalar>::loss(const ArrangedSequence& arr) const {
    loss_rows(arr);
    return masked_nll<Scalar>(forward(arr).logits, arr);
}

namespace {

/// Backward through out = x * inv * gain. Adds into dx and dgain.
template <typename Scalar>
void rms_norm_backward(const RowMatrix<Scalar>& x, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& inv,
                       const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& gain,
                       const RowMatrix<Scalar>& dout, RowMatrix<Scalar>& dx,
                       Eigen::Map<RowMatrix<Scalar>> dgain) {
    const auto d = static_cast<Scalar>(x.cols());
    const RowMatrix<Scalar> xhat = x.array().colwise() * inv.array();
    dgain += (dout.array() * xhat.array()).colwise().sum().matrix();
    const RowMatrix<Scalar> u = dout.array().rowwise() * gain.array();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> proj = (u.array() * xhat.array()).rowwise().sum() / d;
    dx += ((u.array() - xhat.array().colwise() * proj.array()).colwise() * inv.array()).matrix();
}

}  // namespace

template <typename Scalar>
double Transformer<Scalar>::accumulate_gradient(const ArrangedSequence& arr, std::span<Scalar> grad,
                                                Scalar scale) const {
    STREAMATTN_REQUIRE(grad.size() == params_.size(), "backward: gradient buffer has the wrong size");
    const std::size_t count = loss_rows(arr);
    Cache c;
    run(arr, c, false);

    const std::size_t n = arr.size();
    const auto ni = static_cast<Eigen::Index>(n);
    const auto d = static_cast<Eigen::Index>(cfg_.d_model);
    const auto heads = static_cast<std::size_t>(cfg_.heads);
    const auto dh = static_cast<Eigen::Index>(cfg_.d_head());
    const Scalar attn_scale = Scalar(1.0 / std::sqrt(static_cast<double>(dh)));
    auto gmap = [&](std::size_t index) {
        const auto& t = layout_.tensors()[index];
        return Map(grad.data() + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
    };

    // Loss and dlogits.
    double total = 0.0;
    Matrix dlogits = Matrix::Zero(ni, c.logits.cols());
    const Scalar row_weight = scale / static_cast<Scalar>(count);
    for (std::size_t r = 0; r < n; ++r) {
        if (!arr.loss_mask[r]) continue;
        const auto ri = static_cast<Eigen::Index>(r);
        const auto row = c.logits.row(ri);
        total -= log_prob(row, arr.labels[r]);
        const Scalar mx = row.maxCoeff();
        auto e = (row.array() - mx).exp().eval();
        e /= e.sum();
        dlogits.row(ri) = row_weight * e.matrix();
        dlogits(ri, arr.labels[r]) -= row_weight;
    }

    // Head and final norm.
    Matrix dxf;
    if (cfg_.tied_head) {
        gmap(layout_.embedding()) += dlogits.transpose() * c.xf;
        dxf = dlogits * tensor(layout_.embedding());
    } else {
        gmap(layout_.head()) += c.xf.transpose() * dlogits;
        dxf = dlogits * tensor(layout_.head()).transpose();
    }
    Matrix dx = Matrix::Zero(ni, d);
    rms_norm_backward<Scalar>(c.x_out, c.invf, tensor(layout_.final_norm()), dxf, dx, gmap(layout_.final_norm()));

    using Slot = ParamLayout;
    for (std::size_t li = c.layers.size(); li-- > 0;) {
        const auto& L = c.layers[li];
        const auto w = layer(li);

        // Feed-forward: x = x_mid + gelu(xn2 W1) W2.
        Matrix dx_mid = dx;
        gmap(layout_.layer(li, Slot::W2)) += L.g.transpose() * dx;
        const Matrix dh_pre = ((dx * w.w2.transpose()).array() * kernels::gelu_grad(L.h.array())).matrix();
        gmap(layout_.layer(li, Slot::W1)) += L.xn2.transpose() * dh_pre;
        const Matrix dxn2 = dh_pre * w.w1.transpose();
        rms_norm_backward<Scalar>(L.x_mid, L.inv2, w.ffn_norm, dxn2, dx_mid, gmap(layout_.layer(li, Slot::FfnNorm)));

        // Attention: x_mid = x_in + O Wo.
        Matrix dx_in = dx_mid;
        gmap(layout_.layer(li, Slot::Wo)) += L.o.transpose() * dx_mid;
        const Matrix d_o = dx_mid * w.wo.transpose();
        Matrix dq_frame = Matrix::Zero(ni, d);
        Matrix dq_target = Matrix::Zero(ni, c.split ? d : 0);
        Matrix dk = Matrix::Zero(ni, d);
        Matrix dv = Matrix::Zero(ni, d);
        for (std::size_t h = 0; h < heads; ++h) {
            const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
            const Matrix& p = L.probs[h];
            const auto d_oh = d_o.middleCols(c0, dh);
            dv.middleCols(c0, dh) = p.transpose() * d_oh;
            const Matrix dp = d_oh * L.v.middleCols(c0, dh).transpose();
            const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> rowdot = (dp.array() * p.array()).rowwise().sum();
            Matrix ds = (p.array() * (dp.array().colwise() - rowdot.array())).matrix() * attn_scale;
            if (c.split) {
                Matrix ds_target = Matrix::Zero(ni, ni);
                for (std::size_t col = 0; col < n; ++col) {
                    if (c.source_col[col]) continue;
                    const auto ci = static_cast<Eigen::Index>(col);
                    ds_target.col(ci) = ds.col(ci);
                    ds.col(ci).setZero();
                }
                dq_target.middleCols(c0, dh) = ds_target * L.k.middleCols(c0, dh);
                dk.middleCols(c0, dh) += ds_target.transpose() * L.q_target.middleCols(c0, dh);
            }
            dq_frame.middleCols(c0, dh) = ds * L.k.middleCols(c0, dh);
            dk.middleCols(c0, dh) += ds.transpose() * L.q_frame.middleCols(c0, dh);
        }
        rotate_rows(dq_frame, c.frame_tables, heads, true);
        if (c.split) {
            rotate_rows(dq_target, c.pos_tables, heads, true);
            dq_frame += dq_target;
        }
        rotate_rows(dk, c.pos_tables, heads, true);
        gmap(layout_.layer(li, Slot::Wq)) += L.xn1.transpose() * dq_frame;
        gmap(layout_.layer(li, Slot::Wk)) += L.xn1.transpose() * dk;
        gmap(layout_.layer(li, Slot::Wv)) += L.xn1.transpose() * dv;
        const Matrix dxn1 = dq_frame * w.wq.transpose() + dk * w.wk.transpose() + dv * w.wv.transpose();
        rms_norm_backward<Scalar>(L.x_in, L.inv1, w.attn_norm, dxn1, dx_in, gmap(layout_.layer(li, Slot::AttnNorm)));
        dx = std::move(dx_in);
    }

    auto demb = gmap(layout_.embedding());
    for (std::size_t i = 0; i < n; ++i) demb.row(arr.tokens[i]) += dx.row(static_cast<Eigen::Index>(i));
    return total / static_cast<double>(count);
}

template <typename Scalar>
std::vector<Scalar> Transformer<Scalar>::backward(const ArrangedSequence& arr) const {
    std::vector<Scalar> grad(params_.size(), Scalar(0));
    accumulate_gradient(arr, grad);
    return grad;
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace streamattn
