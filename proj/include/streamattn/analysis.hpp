#pragma once

// Attention extraction, column normalization, gamma transform, sink removal
// and CSV/SVG export.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "streamattn/model.hpp"
#include "streamattn/paradigm.hpp"
#include "streamattn/types.hpp"

namespace streamattn {

struct AttentionMap {
    std::size_t layer = 0;
    std::size_t head = 0;
    RealMatrix matrix;  ///< query x key
    std::vector<Role> row_roles;
    std::vector<Role> col_roles;
};

/// A'(i,j) = (A(i,j) - min_i A(i,j)) / (max_i A(i,j) - min_i A(i,j));
/// constant columns map to 0.
RealMatrix normalize_columns(const RealMatrix& a);

/// Entrywise a^gamma; gamma must be positive.
RealMatrix gamma_transform(const RealMatrix& a, double gamma = 0.5);

/// Drops key column 0 (the attention sink).
RealMatrix sink_strip(const RealMatrix& a);
AttentionMap sink_strip(const AttentionMap& map);

/// Header row of key indices, then one row per query; 6 significant digits.
std::string to_csv(const RealMatrix& a);
void write_csv(const std::filesystem::path& path, const RealMatrix& a);
RealMatrix parse_csv(const std::string& text);
RealMatrix read_csv(const std::filesystem::path& path);

/// Grayscale grid, one rectangle per entry (white = 0, black = max), with
/// S/T role labels on both axes.
std::string to_svg(const AttentionMap& map);
void write_svg(const std::filesystem::path& path, const AttentionMap& map);

/// Attention probabilities of one layer/head for an arrangement.
template <typename Scalar>
AttentionMap extract_attention(const Transformer<Scalar>& model, const ArrangedSequence& arr, std::size_t layer,
                               std::size_t head);

/// Rows = target tokens, columns = source tokens, in role-index order.
RealMatrix target_to_source(const AttentionMap& map);

/// Share of the total mass of `a` (target x source) lying on entries with
/// |target index - source index| <= band.
double diagonal_band_mass(const RealMatrix& a, std::size_t band);

}  // namespace streamattn
