#include "streamattn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "streamattn/error.hpp"

namespace streamattn {

double token_accuracy(std::span<const TokenId> hyp, std::span<const TokenId> ref) {
    const std::size_t longest = std::max(hyp.size(), ref.size());
    if (longest == 0) return 1.0;
    std::size_t matches = 0;
    for (std::size_t i = 0; i < std::min(hyp.size(), ref.size()); ++i) matches += hyp[i] == ref[i] ? 1 : 0;
    return static_cast<double>(matches) / static_cast<double>(longest);
}

namespace {

using NGramCounts = std::map<std::vector<TokenId>, std::size_t>;

NGramCounts ngrams(const TokenSeq& seq, std::size_t n) {
    NGramCounts counts;
    for (std::size_t i = 0; i + n <= seq.size(); ++i) {
        ++counts[TokenSeq(seq.begin() + static_cast<std::ptrdiff_t>(i), seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

}  // namespace

double corpus_bleu(std::span<const TokenSeq> hyps, std::span<const TokenSeq> refs) {
    STREAMATTN_REQUIRE(hyps.size() == refs.size(), "corpus_bleu: corpus sizes differ");
    if (hyps.empty()) throw ContractError("corpus_bleu: empty corpus");
    constexpr std::size_t kMaxN = 4;
    std::size_t matches[kMaxN] = {};
    std::size_t totals[kMaxN] = {};
    std::size_t hyp_len = 0, ref_len = 0;
    for (std::size_t s = 0; s < hyps.size(); ++s) {
        hyp_len += hyps[s].size();
        ref_len += refs[s].size();
        for (std::size_t n = 1; n <= kMaxN; ++n) {
            const auto h = ngrams(hyps[s], n);
            const auto r = ngrams(refs[s], n);
            for (const auto& [gram, count] : h) {
                totals[n - 1] += count;
                const auto it = r.find(gram);
                if (it != r.end()) matches[n - 1] += std::min(count, it->second);
            }
        }
    }
    if (hyp_len == 0) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 0; n < kMaxN; ++n) {
        double p;
        if (matches[n] > 0) {
            p = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
        } else if (n == 0) {
            return 0.0;
        } else {
            p = 1.0 / static_cast<double>(totals[n] + 1);
        }
        log_sum += std::log(p);
    }
    const double bp = hyp_len < ref_len ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
                                        : 1.0;
    return 100.0 * bp * std::exp(log_sum / static_cast<double>(kMaxN));
}

namespace {

double average_lagging(std::span<const std::size_t> g, std::size_t source_len, double gamma) {
    std::size_t tau = g.size();
    for (std::size_t j = 0; j < g.size(); ++j) {
        if (g[j] >= source_len) {
            tau = j + 1;
            break;
        }
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < tau; ++j) {
        sum += static_cast<double>(g[j]) - static_cast<double>(j) / gamma;
    }
    return sum / static_cast<double>(tau);
}

}  // namespace

SentenceLatency lagging(std::span<const std::size_t> g, std::size_t source_len, std::size_t ref_len) {
    if (source_len == 0) throw ContractError("lagging: zero source length");
    STREAMATTN_REQUIRE(!g.empty(), "lagging: empty trace");
    STREAMATTN_REQUIRE(ref_len >= 1, "lagging: empty reference");
    for (std::size_t j = 1; j < g.size(); ++j) {
        STREAMATTN_REQUIRE(g[j] >= g[j - 1], "lagging: read schedule must be non-decreasing");
    }
    const auto x = static_cast<double>(source_len);
    SentenceLatency out;
    out.al = average_lagging(g, source_len, static_cast<double>(ref_len) / x);
    out.laal = average_lagging(g, source_len, static_cast<double>(std::max(ref_len, g.size())) / x);
    return out;
}

LatencyReport corpus_lagging(std::span<const LatencyInput> sentences) {
    LatencyReport rep;
    for (const auto& s : sentences) {
        if (s.g.empty()) continue;
        const auto lat = lagging(s.g, s.source_len, s.ref_len);
        rep.sentence_al.push_back(lat.al);
        rep.sentence_laal.push_back(lat.laal);
    }
    if (!rep.sentence_al.empty()) {
        const auto n = static_cast<double>(rep.sentence_al.size());
        for (std::size_t i = 0; i < rep.sentence_al.size(); ++i) {
            rep.al += rep.sentence_al[i] / n;
            rep.laal += rep.sentence_laal[i] / n;
        }
    }
    return rep;
}

}  // namespace streamattn
