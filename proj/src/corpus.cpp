#include "streamattn/corpus.hpp"

#include <fstream>
#include <numeric>
#include <string>
#include <utility>

#include <json.hpp>

#include "streamattn/error.hpp"
#include "streamattn/rng.hpp"

namespace streamattn {

namespace {
constexpr std::uint64_t kSigmaSalt = 0x5349474dULL;   // "SIGM"
constexpr std::uint64_t kSampleSalt = 0x53414d50ULL;  // "SAMP"
}  // namespace

void SyntheticTaskSpec::validate() const {
    STREAMATTN_REQUIRE(vocab_size >= 4, "task spec: vocab_size must be >= 4");
    STREAMATTN_REQUIRE(len_min >= 1 && len_min <= len_max, "task spec: need 1 <= len_min <= len_max");
}

std::vector<TokenId> task_bijection(const SyntheticTaskSpec& spec) {
    spec.validate();
    std::vector<TokenId> sigma(static_cast<std::size_t>(spec.vocab_size));
    std::iota(sigma.begin(), sigma.end(), 0);
    SplitMix64 root(spec.seed);
    SplitMix64 rng = root.fork(kSigmaSalt);
    // Fisher-Yates over the content range only.
    for (std::size_t i = sigma.size() - 1; i > static_cast<std::size_t>(kFirstContent); --i) {
        const std::size_t span = i - static_cast<std::size_t>(kFirstContent) + 1;
        const std::size_t j = static_cast<std::size_t>(kFirstContent) + rng.below(span);
        std::swap(sigma[i], sigma[j]);
    }
    return sigma;
}

TokenSeq map_translate(std::span<const TokenId> source, std::span<const TokenId> sigma) {
    TokenSeq out;
    out.reserve(source.size());
    for (TokenId t : source) {
        STREAMATTN_REQUIRE(t >= 0 && static_cast<std::size_t>(t) < sigma.size(), "map_translate: token outside bijection");
        out.push_back(sigma[static_cast<std::size_t>(t)]);
    }
    for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
    return out;
}

TokenSeq unmap_translate(std::span<const TokenId> target, std::span<const TokenId> sigma) {
    std::vector<TokenId> inverse(sigma.size());
    for (std::size_t i = 0; i < sigma.size(); ++i) inverse[static_cast<std::size_t>(sigma[i])] = static_cast<TokenId>(i);
    TokenSeq out(target.begin(), target.end());
    for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
    for (TokenId& t : out) t = inverse[static_cast<std::size_t>(t)];
    return out;
}

std::vector<ParallelPair> generate(const SyntheticTaskSpec& spec, std::size_t n) {
    spec.validate();
    STREAMATTN_REQUIRE(n >= 1, "generate: n must be >= 1");
    const auto sigma = task_bijection(spec);
    SplitMix64 root(spec.seed);
    SplitMix64 rng = root.fork(kSampleSalt);

    const auto content = static_cast<std::uint64_t>(spec.vocab_size - kFirstContent);
    const auto len_span = static_cast<std::uint64_t>(spec.len_max - spec.len_min + 1);
    std::vector<ParallelPair> out;
    out.reserve(n);
    for (std::size_t p = 0; p < n; ++p) {
        const auto len = static_cast<std::size_t>(spec.len_min) + rng.below(len_span);
        ParallelPair pair;
        pair.source.resize(len);
        for (auto& t : pair.source) t = kFirstContent + static_cast<TokenId>(rng.below(content));
        pair.target = spec.kind == TaskKind::Copy ? pair.source : map_translate(pair.source, sigma);
        pair.target.push_back(kEos);
        out.push_back(std::move(pair));
    }
    return out;
}

namespace {

TokenSeq parse_tokens(const nlohmann::json& obj, const char* key, std::size_t line, int vocab_size) {
    if (!obj.contains(key)) throw ParseError(std::string("missing \"") + key + "\"", line);
    const auto& arr = obj.at(key);
    if (!arr.is_array()) throw ParseError(std::string("\"") + key + "\" must be an array of integers", line);
    TokenSeq out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_number_integer()) throw ParseError(std::string("\"") + key + "\" must be an array of integers", line);
        const auto id = v.get<std::int64_t>();
        if (id < 0 || (vocab_size > 0 && id >= vocab_size)) {
            throw ParseError("token id " + std::to_string(id) + " is out of vocabulary", line);
        }
        out.push_back(static_cast<TokenId>(id));
    }
    return out;
}

}  // namespace

std::vector<ParallelPair> load_jsonl(const std::filesystem::path& path, int vocab_size) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus " + path.string());
    std::vector<ParallelPair> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line);
        }
        if (!obj.is_object()) throw ParseError("expected a JSON object", line);
        ParallelPair pair;
        pair.source = parse_tokens(obj, "source", line, vocab_size);
        pair.target = parse_tokens(obj, "target", line, vocab_size);
        if (pair.target.empty() || pair.target.back() != kEos) pair.target.push_back(kEos);
        out.push_back(std::move(pair));
    }
    return out;
}

void write_jsonl(const std::filesystem::path& path, std::span<const ParallelPair> pairs) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write corpus " + path.string());
    for (const auto& p : pairs) {
        nlohmann::json obj{{"source", p.source}, {"target", p.target}};
        out << obj.dump() << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

TokenSeq strip_eos(std::span<const TokenId> seq) {
    TokenSeq out(seq.begin(), seq.end());
    if (!out.empty() && out.back() == kEos) out.pop_back();
    return out;
}

}  // namespace streamattn
