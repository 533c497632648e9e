#include "streamattn/rope.hpp"

namespace streamattn {

RotaryParams::RotaryParams(std::size_t head_dim, double base) : head_dim_(head_dim), base_(base) {
    STREAMATTN_REQUIRE(head_dim >= 2 && head_dim % 2 == 0, "rotary head_dim must be even and >= 2");
    STREAMATTN_REQUIRE(std::isfinite(base) && base > 1.0, "rotary base must be > 1");
    thetas_.resize(head_dim / 2);
    for (std::size_t i = 0; i < thetas_.size(); ++i) {
        thetas_[i] = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
    }
}

RotationTable::RotationTable(const RotaryParams& params, double position) {
    const auto thetas = params.thetas();
    cos.resize(thetas.size());
    sin.resize(thetas.size());
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        const double angle = position * thetas[i];
        cos[i] = std::cos(angle);
        sin[i] = std::sin(angle);
    }
}

std::vector<double> rotation_apply(const RotaryParams& params, std::span<const double> vec,
                                   PositionId m) {
    STREAMATTN_REQUIRE(vec.size() == params.head_dim(), "rotation_apply: vector length != head_dim");
    std::vector<double> out(vec.begin(), vec.end());
    rotate_inplace(RotationTable(params, m.value()), std::span<double>(out));
    return out;
}

double relative_score(const RotaryParams& params, std::span<const double> q,
                      std::span<const double> k, PositionId n, PositionId m) {
    STREAMATTN_REQUIRE(q.size() == params.head_dim() && k.size() == params.head_dim(),
                       "relative_score: vector length != head_dim");
    const double delta = m.value() - n.value();
    const auto thetas = params.thetas();
    double score = 0.0;
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        const double c = std::cos(delta * thetas[i]);
        const double s = std::sin(delta * thetas[i]);
        const double q0 = q[2 * i], q1 = q[2 * i + 1];
        const double k0 = k[2 * i], k1 = k[2 * i + 1];
        score += c * (q0 * k0 + q1 * k1) + s * (q1 * k0 - q0 * k1);
    }
    return score;
}

RealMatrix relative_distance_matrix(std::size_t source_len, std::size_t target_len, PositionId phi) {
    const std::size_t total = source_len + target_len;
    std::vector<double> pos(total);
    for (std::size_t i = 0; i < source_len; ++i) pos[i] = static_cast<double>(i);
    for (std::size_t j = 0; j < target_len; ++j) pos[source_len + j] = phi.value() + static_cast<double>(j);

    RealMatrix out(total, total);
    for (std::size_t r = 0; r < total; ++r) {
        for (std::size_t c = 0; c < total; ++c) out(r, c) = pos[r] - pos[c];
    }
    return out;
}

}  // namespace streamattn
