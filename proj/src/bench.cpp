#include "streamattn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "streamattn/error.hpp"
#include "streamattn/rng.hpp"
#include "streamattn/stream.hpp"

namespace streamattn {

const BenchRow* BenchReport::find(ParadigmId paradigm, std::size_t k, std::size_t source_len) const {
    for (const auto& r : rows) {
        if (r.paradigm == paradigm && r.k == k && r.source_len == source_len) return &r;
    }
    return nullptr;
}

ModelConfig bench_model_config() {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.d_model = 32;
    cfg.vocab_size = 64;
    cfg.max_positions = 1024;
    cfg.precision = Precision::Fp32;
    return cfg;
}

template <typename Scalar>
BenchReport run_bench(const Transformer<Scalar>& model, const BenchConfig& config) {
    STREAMATTN_REQUIRE(config.repetitions >= 3, "bench: repetitions must be >= 3");
    using Clock = std::chrono::steady_clock;
    BenchReport report;
    SplitMix64 rng(config.seed);
    const auto vocab = static_cast<std::uint64_t>(model.config().vocab_size - kFirstContent);

    for (std::size_t len : config.source_lengths) {
        STREAMATTN_REQUIRE(len >= 1, "bench: source lengths must be >= 1");
        TokenSeq source(len);
        for (auto& t : source) t = kFirstContent + static_cast<TokenId>(rng.below(vocab));
        std::vector<DecodeOptions> options;
        std::vector<std::size_t> iterations;
        const std::size_t first = report.rows.size();
        for (std::size_t k : config.k_list) {
            for (ParadigmId p : config.paradigms) {
                DecodeOptions opt;
                opt.paradigm = p;
                opt.k = k;
                opt.phi = p == ParadigmId::GroupStream ? config.phi : 0.0;
                opt.fixed_target_len = len;
                options.push_back(opt);

                BenchRow row;
                row.paradigm = p;
                row.k = k;
                row.source_len = len;
                row.target_len = len;
                row.mismatch = (config.trained_paradigm && *config.trained_paradigm != p) ||
                               (config.trained_k && *config.trained_k != k);
                const auto start = Clock::now();
                const auto trace = decode(model, opt, source);  // warmup, also yields the exact op counts
                const double once = std::chrono::duration<double>(Clock::now() - start).count();
                iterations.push_back(
                    once > 0.0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(config.min_sample_seconds / once)))
                               : 1);
                row.attention_ops = trace.ops.attention_ops;
                row.rotation_ops = trace.ops.rotation_ops;
                row.recomputed_rows = trace.ops.recomputed_rows;
                row.total_ops = trace.ops.total();
                report.rows.push_back(row);
            }
        }
        // Round-robin over configurations so slow drift in machine load hits
        // every configuration alike instead of biasing whichever ran last.
        std::vector<std::vector<double>> times(options.size());
        for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
            for (std::size_t c = 0; c < options.size(); ++c) {
                const auto start = Clock::now();
                for (std::size_t i = 0; i < iterations[c]; ++i) (void)decode(model, options[c], source);
                times[c].push_back(std::chrono::duration<double>(Clock::now() - start).count() /
                                   static_cast<double>(iterations[c]));
            }
        }
        for (std::size_t c = 0; c < options.size(); ++c) {
            auto& t = times[c];
            std::sort(t.begin(), t.end());
            const std::size_t mid = t.size() / 2;
            BenchRow& row = report.rows[first + c];
            row.seconds = t.size() % 2 ? t[mid] : 0.5 * (t[mid - 1] + t[mid]);
            row.tokens_per_s = row.seconds > 0.0 ? static_cast<double>(len) / row.seconds : 0.0;
        }
    }
    for (auto& row : report.rows) {
        const BenchRow* base = report.find(ParadigmId::BatchAllRe, row.k, row.source_len);
        if (base && row.seconds > 0.0) row.speedup = row.paradigm == ParadigmId::BatchAllRe ? 1.0 : base->seconds / row.seconds;
    }
    return report;
}

std::string report_csv_text(const BenchReport& report) {
    std::ostringstream out;
    out << "paradigm,k,source_len,target_len,seconds,tokens_per_s,attention_ops,rotation_ops,recomputed_rows,"
           "total_ops,speedup_vs_allre,mismatch\n";
    out.precision(6);
    for (const auto& r : report.rows) {
        out << paradigm_name(r.paradigm) << ',' << r.k << ',' << r.source_len << ',' << r.target_len << ','
            << r.seconds << ',' << r.tokens_per_s << ',' << r.attention_ops << ',' << r.rotation_ops << ','
            << r.recomputed_rows << ',' << r.total_ops << ',';
        if (r.speedup) out << *r.speedup;
        out << ',' << (r.mismatch ? 1 : 0) << '\n';
    }
    return out.str();
}

void report_csv(const std::filesystem::path& path, const BenchReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << report_csv_text(report);
    if (!out) throw IoError("write failed for " + path.string());
}

template BenchReport run_bench(const Transformer<float>&, const BenchConfig&);
template BenchReport run_bench(const Transformer<double>&, const BenchConfig&);

}  // namespace streamattn
