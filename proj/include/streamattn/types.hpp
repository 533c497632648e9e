#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace streamattn {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
/// First id usable for content tokens.
inline constexpr TokenId kFirstContent = 3;

/// Dense row-major matrix of doubles used by the analysis and layout code.
struct RealMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    RealMatrix() = default;
    RealMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    bool operator==(const RealMatrix&) const = default;
};

}  // namespace streamattn
