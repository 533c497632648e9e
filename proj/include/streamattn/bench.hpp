#pragma once

// Decode-mode comparison: median wall time and exact op counts per
// (paradigm, k, source length), with speedup relative to BatchAllRe.
//
// CSV columns, one row per configuration:
//   paradigm,k,source_len,target_len,seconds,tokens_per_s,attention_ops,
//   rotation_ops,recomputed_rows,total_ops,speedup_vs_allre,mismatch
// speedup_vs_allre is empty when batch-all-re was not measured for that
// (k, source_len); mismatch is 1 when the configuration differs from the
// paradigm/k the model was trained for.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "streamattn/model.hpp"
#include "streamattn/paradigm.hpp"

namespace streamattn {

struct BenchConfig {
    std::vector<ParadigmId> paradigms;
    std::vector<std::size_t> k_list;
    std::vector<std::size_t> source_lengths;
    std::size_t repetitions = 3;
    /// Each timed sample repeats the decode until it lasts at least this
    /// long and reports the per-decode mean, so millisecond-scale decodes
    /// are not dominated by scheduler noise.
    double min_sample_seconds = 0.02;
    std::uint64_t seed = 1;
    double phi = 0.0;
    std::optional<ParadigmId> trained_paradigm;
    std::optional<std::size_t> trained_k;
};

struct BenchRow {
    ParadigmId paradigm = ParadigmId::GroupStream;
    std::size_t k = 1;
    std::size_t source_len = 0;
    std::size_t target_len = 0;
    double seconds = 0.0;
    double tokens_per_s = 0.0;
    std::uint64_t attention_ops = 0;
    std::uint64_t rotation_ops = 0;
    std::uint64_t recomputed_rows = 0;
    std::uint64_t total_ops = 0;
    std::optional<double> speedup;
    bool mismatch = false;
};

struct BenchReport {
    std::vector<BenchRow> rows;

    const BenchRow* find(ParadigmId paradigm, std::size_t k, std::size_t source_len) const;
};

/// Tiny model used when no checkpoint is given (L=2, H=2, d=32, V=64,
/// max_positions=1024).
ModelConfig bench_model_config();

/// Target length equals the source length; EOS is ignored so every mode
/// performs the same number of writes.
template <typename Scalar>
BenchReport run_bench(const Transformer<Scalar>& model, const BenchConfig& config);

std::string report_csv_text(const BenchReport& report);
void report_csv(const std::filesystem::path& path, const BenchReport& report);

}  // namespace streamattn
