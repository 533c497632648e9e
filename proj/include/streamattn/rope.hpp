#pragma once

// Rotary position mathematics with real-valued position ids.
//
// Lane layout: block i rotates the adjacent pair (2i, 2i+1) by angle m * theta_i,
//   [x0', x1'] = [x0 cos - x1 sin, x0 sin + x1 cos].
// Cached keys are stored unrotated in this layout; every module that needs a
// rotation goes through the functions below.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "streamattn/error.hpp"
#include "streamattn/types.hpp"

namespace streamattn {

/// A position id. Reals are legal (group offsets such as 0.5).
class PositionId {
public:
    constexpr PositionId() = default;
    explicit PositionId(double value) : value_(value) {
        STREAMATTN_REQUIRE(std::isfinite(value) && value >= 0.0,
                           "position id must be finite and non-negative");
    }
    constexpr double value() const noexcept { return value_; }

private:
    double value_ = 0.0;
};

class RotaryParams {
public:
    static constexpr double kDefaultBase = 10000.0;

    explicit RotaryParams(std::size_t head_dim, double base = kDefaultBase);

    std::size_t head_dim() const noexcept { return head_dim_; }
    double base() const noexcept { return base_; }
    /// thetas[i] = base^(-2i/d), i = 0 .. d/2-1.
    std::span<const double> thetas() const noexcept { return thetas_; }

private:
    std::size_t head_dim_;
    double base_;
    std::vector<double> thetas_;
};

/// cos/sin of m * theta_i for one position, computed in double.
struct RotationTable {
    std::vector<double> cos;
    std::vector<double> sin;

    RotationTable() = default;
    RotationTable(const RotaryParams& params, double position);
};

/// Rotates vec in place by a precomputed table. Works for float and double
/// lanes; the trig itself is always double.
template <typename T>
void rotate_inplace(const RotationTable& table, std::span<T> vec) {
    const std::size_t half = table.cos.size();
    for (std::size_t i = 0; i < half; ++i) {
        const double x0 = static_cast<double>(vec[2 * i]);
        const double x1 = static_cast<double>(vec[2 * i + 1]);
        vec[2 * i] = static_cast<T>(x0 * table.cos[i] - x1 * table.sin[i]);
        vec[2 * i + 1] = static_cast<T>(x0 * table.sin[i] + x1 * table.cos[i]);
    }
}

/// Applies the transpose R(m)^T = R(-m), used by backpropagation.
template <typename T>
void rotate_inverse_inplace(const RotationTable& table, std::span<T> vec) {
    const std::size_t half = table.cos.size();
    for (std::size_t i = 0; i < half; ++i) {
        const double x0 = static_cast<double>(vec[2 * i]);
        const double x1 = static_cast<double>(vec[2 * i + 1]);
        vec[2 * i] = static_cast<T>(x0 * table.cos[i] + x1 * table.sin[i]);
        vec[2 * i + 1] = static_cast<T>(-x0 * table.sin[i] + x1 * table.cos[i]);
    }
}

/// R(m) * vec.
std::vector<double> rotation_apply(const RotaryParams& params, std::span<const double> vec,
                                   PositionId m);

/// q^T R(m - n) k, evaluated blockwise from the relative distance alone.
double relative_score(const RotaryParams& params, std::span<const double> q,
                      std::span<const double> k, PositionId n, PositionId m);

/// (M+N) x (M+N) matrix of p(query) - p(key) under the group layout: source
/// tokens at 0..M-1, target tokens at phi..phi+N-1. Rows and columns list the
/// source tokens first. All entries are populated, including ones a causal
/// mask would hide.
RealMatrix relative_distance_matrix(std::size_t source_len, std::size_t target_len, PositionId phi);

}  // namespace streamattn
