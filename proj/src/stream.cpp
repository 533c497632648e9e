#include "streamattn/stream.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "streamattn/error.hpp"

namespace streamattn {

std::string_view finish_name(FinishReason r) noexcept {
    switch (r) {
        case FinishReason::Eos:
            return "eos";
        case FinishReason::LengthCap:
            return "length_cap";
        case FinishReason::FixedLength:
            return "fixed_length";
    }
    return "unknown";
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

template <typename Row>
TokenId greedy(const Row& logits) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < logits.size(); ++j) {
        if (logits(j) > logits(best)) best = j;
    }
    return static_cast<TokenId>(best);
}

bool removes(PositionRemoval removal, Role role) {
    return removal == PositionRemoval::All || (removal == PositionRemoval::Source && role == Role::Source) ||
           (removal == PositionRemoval::Target && role == Role::Target);
}

std::size_t emission_cap(const DecodeOptions& options, std::size_t source_len) {
    if (options.fixed_target_len > 0) return options.fixed_target_len;
    return options.max_len > 0 ? options.max_len : 2 * source_len + 8;
}

}  // namespace

template <typename Scalar>
DecodeSession<Scalar>::DecodeSession(const Transformer<Scalar>& model, DecodeOptions options)
    : model_(model), options_(std::move(options)) {
    STREAMATTN_REQUIRE(options_.k >= 1, "decode: k must be >= 1");
    (void)PositionId(options_.phi);
    const auto layers = static_cast<std::size_t>(model_.config().layers);
    cache_.source.resize(layers);
    cache_.target.resize(layers);
    cap_ = options_.fixed_target_len > 0 ? options_.fixed_target_len : options_.max_len;
}

template <typename Scalar>
void DecodeSession<Scalar>::set_source_length(std::size_t source_len) {
    cap_ = emission_cap(options_, source_len);
}

template <typename Scalar>
DecodeTrace DecodeSession<Scalar>::take_trace() {
    return std::move(trace_);
}

template <typename Scalar>
const RotationTable& DecodeSession<Scalar>::table(double position) {
    auto it = tables_.find(position);
    if (it == tables_.end()) it = tables_.emplace(position, RotationTable(model_.rotary(), position)).first;
    return it->second;
}

template <typename Scalar>
double DecodeSession<Scalar>::source_key_position(std::size_t i) const {
    return removes(options_.removal, Role::Source) ? 0.0 : cache_.source_positions[i];
}

template <typename Scalar>
double DecodeSession<Scalar>::target_key_position(std::size_t t) const {
    if (removes(options_.removal, Role::Target)) return 0.0;
    switch (options_.paradigm) {
        case ParadigmId::GroupStream:
            return options_.phi + static_cast<double>(t);
        case ParadigmId::Interleaved:
        case ParadigmId::BatchNoRe:
            return cache_.target_positions[t];
        case ParadigmId::BatchOffline:
        case ParadigmId::BatchPosRe:
        case ParadigmId::BatchAllRe:
            break;
    }
    return static_cast<double>(cache_.source_len() + t);
}

template <typename Scalar>
double DecodeSession<Scalar>::target_query_position(std::size_t t) const {
    return target_key_position(t);
}

template <typename Scalar>
typename DecodeSession<Scalar>::RowVector DecodeSession<Scalar>::encode_row(TokenId token, Role role,
                                                                            std::size_t row, double pos,
                                                                            double frame) {
    const auto& cfg = model_.config();
    STREAMATTN_REQUIRE(token >= 0 && token < cfg.vocab_size, "decode: token id outside the vocabulary");
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto heads = static_cast<std::size_t>(cfg.heads);
    const auto dh = static_cast<std::size_t>(cfg.d_head());
    const Scalar scale = Scalar(1.0 / std::sqrt(static_cast<double>(dh)));

    const bool is_source = role == Role::Source;
    const std::size_t n_src = is_source ? row + 1 : cache_.source_len();
    std::size_t n_tgt = 0;
    if (!is_source) {
        n_tgt = row + 1;
    } else if (options_.paradigm == ParadigmId::Interleaved) {
        n_tgt = cache_.target[0].rows;
    }
    for (std::size_t i = 0; i < n_src; ++i) model_.check_distance(frame, source_key_position(i));
    for (std::size_t t = 0; t < n_tgt; ++t) model_.check_distance(pos, target_key_position(t));

    RowVector x = model_.tensor(model_.layout().embedding()).row(token);
    Matrix xn;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv;
    std::vector<Scalar> scores(n_src + n_tgt);
    for (std::size_t l = 0; l < cache_.source.size(); ++l) {
        const auto w = model_.layer(l);
        kernels::rms_norm<Scalar>(x, w.attn_norm, xn, inv);
        const RowVector q = xn * w.wq;
        const RowVector k = xn * w.wk;
        const RowVector v = xn * w.wv;

        RoleCache<Scalar>& own = is_source ? cache_.source[l] : cache_.target[l];
        if (row == own.rows) {
            own.keys.resize((row + 1) * d);
            own.values.resize((row + 1) * d);
            own.rotated.resize((row + 1) * d);
            own.rotated_at.resize(row + 1);
            ++own.rows;
        }
        std::copy(k.data(), k.data() + d, own.keys.begin() + static_cast<std::ptrdiff_t>(row * d));
        std::copy(v.data(), v.data() + d, own.values.begin() + static_cast<std::ptrdiff_t>(row * d));
        own.rotated_at[row] = std::numeric_limits<double>::quiet_NaN();

        // Queries: one rotation per frame in use.
        std::vector<Scalar> q_frame(q.data(), q.data() + d);
        for (std::size_t h = 0; h < heads; ++h) {
            rotate_inplace(table(frame), std::span<Scalar>(q_frame.data() + h * dh, dh));
        }
        ++trace_.ops.rotation_ops;
        std::vector<Scalar> q_pos = q_frame;
        if (n_tgt > 0 && pos != frame) {
            q_pos.assign(q.data(), q.data() + d);
            for (std::size_t h = 0; h < heads; ++h) {
                rotate_inplace(table(pos), std::span<Scalar>(q_pos.data() + h * dh, dh));
            }
            ++trace_.ops.rotation_ops;
        }

        auto rotated_key = [&](RoleCache<Scalar>& store, std::size_t i, double p) -> const Scalar* {
            Scalar* dst = store.rotated.data() + i * d;
            if (!(store.rotated_at[i] == p)) {
                std::copy(store.keys.begin() + static_cast<std::ptrdiff_t>(i * d),
                          store.keys.begin() + static_cast<std::ptrdiff_t>((i + 1) * d), dst);
                for (std::size_t h = 0; h < heads; ++h) {
                    rotate_inplace(table(p), std::span<Scalar>(dst + h * dh, dh));
                }
                store.rotated_at[i] = p;
                ++trace_.ops.rotation_ops;
            }
            return dst;
        };
        std::vector<const Scalar*> keys(n_src + n_tgt), vals(n_src + n_tgt);
        for (std::size_t i = 0; i < n_src; ++i) {
            keys[i] = rotated_key(cache_.source[l], i, source_key_position(i));
            vals[i] = cache_.source[l].values.data() + i * d;
        }
        for (std::size_t t = 0; t < n_tgt; ++t) {
            keys[n_src + t] = rotated_key(cache_.target[l], t, target_key_position(t));
            vals[n_src + t] = cache_.target[l].values.data() + t * d;
        }
        trace_.ops.attention_ops += n_src + n_tgt;

        RowVector o = RowVector::Zero(static_cast<Eigen::Index>(d));
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dh;
            using ConstVec = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>;
            const ConstVec qf(q_frame.data() + c0, static_cast<Eigen::Index>(dh));
            const ConstVec qp(q_pos.data() + c0, static_cast<Eigen::Index>(dh));
            Scalar mx = -std::numeric_limits<Scalar>::infinity();
            for (std::size_t j = 0; j < keys.size(); ++j) {
                const ConstVec key(keys[j] + c0, static_cast<Eigen::Index>(dh));
                scores[j] = (j < n_src ? qf.dot(key) : qp.dot(key)) * scale;
                mx = std::max(mx, scores[j]);
            }
            Scalar sum = 0;
            for (auto& s : scores) {
                s = std::exp(s - mx);
                sum += s;
            }
            auto oh = o.segment(static_cast<Eigen::Index>(c0), static_cast<Eigen::Index>(dh));
            for (std::size_t j = 0; j < keys.size(); ++j) {
                oh += (scores[j] / sum) * ConstVec(vals[j] + c0, static_cast<Eigen::Index>(dh));
            }
        }
        x += o * w.wo;
        kernels::rms_norm<Scalar>(x, w.ffn_norm, xn, inv);
        const RowVector hdn = xn * w.w1;
        x += kernels::gelu(hdn.array()).matrix() * w.w2;
    }
    return x;
}

template <typename Scalar>
void DecodeSession<Scalar>::reencode_targets() {
    for (std::size_t t = 0; t < cache_.target_len(); ++t) {
        const double p = target_query_position(t);
        encode_row(cache_.target_tokens[t], Role::Target, t, p, p);
        ++trace_.ops.recomputed_rows;
    }
}

template <typename Scalar>
void DecodeSession<Scalar>::read_step(std::span<const TokenId> new_tokens) {
    STREAMATTN_REQUIRE(!finished_, "read_step: session is finished");
    STREAMATTN_REQUIRE(action_ == Action::Read, "read_step: session expects a write");
    const auto start = Clock::now();
    const bool arrival_ids =
        options_.paradigm == ParadigmId::Interleaved || options_.paradigm == ParadigmId::BatchNoRe;
    for (TokenId token : new_tokens) {
        const std::size_t i = cache_.source_len();
        cache_.source_positions.push_back(arrival_ids ? static_cast<double>(arrival_) : static_cast<double>(i));
        ++arrival_;
        const double p = source_key_position(i);
        encode_row(token, Role::Source, i, p, p);
    }
    if (options_.paradigm == ParadigmId::BatchAllRe && !options_.allre_on_write && !new_tokens.empty()) {
        reencode_targets();
    }
    ++index_;
    action_ = Action::Write;
    pending_ms_ += elapsed_ms(start);
}

template <typename Scalar>
TokenId DecodeSession<Scalar>::write_step() {
    STREAMATTN_REQUIRE(!finished_, "write_step: session is finished");
    STREAMATTN_REQUIRE(action_ == Action::Write, "write_step: session expects a read");
    const auto start = Clock::now();
    if (options_.paradigm == ParadigmId::BatchAllRe && options_.allre_on_write) reencode_targets();

    const std::size_t t = cache_.target_len();
    cache_.target_tokens.push_back(next_token_);
    cache_.target_positions.push_back(static_cast<double>(arrival_));
    ++arrival_;
    const double p = target_query_position(t);
    const RowVector hidden = encode_row(next_token_, Role::Target, t, p, p);
    const RowVector logits = model_.logits_from_hidden(hidden);
    const TokenId token = greedy(logits);

    if (options_.record_logits) {
        trace_.step_logits.emplace_back(logits.data(), logits.data() + logits.size());
    }
    if (token == kEos && options_.fixed_target_len == 0) {
        finished_ = true;
        trace_.finish = FinishReason::Eos;
    } else {
        trace_.tokens.push_back(token);
        trace_.g.push_back(cache_.source_len());
        trace_.step_ms.push_back(pending_ms_ + elapsed_ms(start));
        pending_ms_ = 0.0;
        if (cap_ > 0 && trace_.tokens.size() >= cap_) {
            finished_ = true;
            trace_.finish = options_.fixed_target_len > 0 ? FinishReason::FixedLength : FinishReason::LengthCap;
        }
    }
    next_token_ = token;
    if (!options_.boundary || options_.boundary(token)) {
        ++words_;
        action_ = Action::Read;
    }
    return token;
}

template <typename Scalar>
DecodeTrace decode(DecodeSession<Scalar>& session, std::span<const TokenId> source) {
    STREAMATTN_REQUIRE(!source.empty(), "decode: empty source");
    STREAMATTN_REQUIRE(session.index() == 0 && session.cache().target_len() == 0, "decode: session is not fresh");
    session.set_source_length(source.size());
    const auto& opt = session.options();
    while (!session.finished()) {
        if (session.action() == DecodeSession<Scalar>::Action::Read) {
            const std::size_t want = opt.paradigm == ParadigmId::BatchOffline
                                         ? source.size()
                                         : std::min(opt.k + session.words(), source.size());
            const std::size_t have = session.cache().source_len();
            session.read_step(source.subspan(have, want - have));
        } else {
            session.write_step();
        }
    }
    return session.take_trace();
}

template <typename Scalar>
DecodeTrace decode(const Transformer<Scalar>& model, const DecodeOptions& options, std::span<const TokenId> source) {
    DecodeSession<Scalar> session(model, options);
    return decode(session, source);
}

ArrangedSequence prefix_arrangement(const DecodeOptions& options, std::span<const TokenId> source,
                                    const TokenSeq& target_prefix, const std::vector<std::size_t>& reads) {
    STREAMATTN_REQUIRE(reads.size() == target_prefix.size(), "prefix_arrangement: one read count per target row");
    WaitkSchedule schedule;
    schedule.k = options.k;
    schedule.source_len = source.size();
    schedule.reads = reads;
    const TokenSeq src(source.begin(), source.end());

    ArrangedSequence arr;
    switch (options.paradigm) {
        case ParadigmId::BatchOffline:
        case ParadigmId::BatchAllRe:
            // Every cached target row has been recomputed against the full prefix.
            arr = arrange(ParadigmId::BatchOffline, schedule, PositionId(0.0), src, target_prefix);
            break;
        case ParadigmId::GroupStream:
            arr = arrange(ParadigmId::GroupStream, schedule, PositionId(options.phi), src, target_prefix);
            break;
        case ParadigmId::BatchPosRe: {
            arr = arrange(ParadigmId::BatchPosRe, schedule, PositionId(0.0), src, target_prefix);
            // Target rows saw the source from the frame in force when they
            // were encoded; target-target distances do not depend on it.
            std::size_t t = 0;
            for (std::size_t r = 0; r < arr.size(); ++r) {
                if (arr.roles[r] != Role::Target) continue;
                arr.source_frame_positions[r] = static_cast<double>(reads[t] + t);
                ++t;
            }
            break;
        }
        case ParadigmId::BatchNoRe:
        case ParadigmId::Interleaved:
            arr = arrange(options.paradigm, schedule, PositionId(0.0), src, target_prefix);
            break;
    }
    remove_positions(arr, options.removal);
    return arr;
}

template <typename Scalar>
DecodeTrace oracle_decode(const Transformer<Scalar>& model, const DecodeOptions& options,
                          std::span<const TokenId> source) {
    STREAMATTN_REQUIRE(!source.empty(), "decode: empty source");
    STREAMATTN_REQUIRE(options.k >= 1, "decode: k must be >= 1");
    const std::size_t cap = emission_cap(options, source.size());
    DecodeTrace trace;
    TokenSeq prefix{kBos};
    std::vector<std::size_t> reads;
    std::size_t words = 0;
    while (true) {
        const auto start = Clock::now();
        const std::size_t s = options.paradigm == ParadigmId::BatchOffline
                                  ? source.size()
                                  : std::min(options.k + words, source.size());
        reads.push_back(s);
        const auto arr = prefix_arrangement(options, source.first(s), prefix, reads);
        const auto out = model.forward(arr);
        std::size_t row = 0;
        for (std::size_t r = 0, t = 0; r < arr.size(); ++r) {
            if (arr.roles[r] == Role::Target && t++ == prefix.size() - 1) row = r;
        }
        const auto logits = out.logits.row(static_cast<Eigen::Index>(row));
        const TokenId token = greedy(logits);
        if (options.record_logits) {
            std::vector<double> copy(static_cast<std::size_t>(logits.size()));
            for (Eigen::Index j = 0; j < logits.size(); ++j) copy[static_cast<std::size_t>(j)] = logits(j);
            trace.step_logits.push_back(std::move(copy));
        }
        if (token == kEos && options.fixed_target_len == 0) {
            trace.finish = FinishReason::Eos;
            break;
        }
        trace.tokens.push_back(token);
        trace.g.push_back(s);
        trace.step_ms.push_back(elapsed_ms(start));
        if (trace.tokens.size() >= cap) {
            trace.finish = options.fixed_target_len > 0 ? FinishReason::FixedLength : FinishReason::LengthCap;
            break;
        }
        prefix.push_back(token);
        if (!options.boundary || options.boundary(token)) ++words;
    }
    return trace;
}

template class DecodeSession<float>;
template class DecodeSession<double>;
template DecodeTrace decode(DecodeSession<float>&, std::span<const TokenId>);
template DecodeTrace decode(DecodeSession<double>&, std::span<const TokenId>);
template DecodeTrace decode(const Transformer<float>&, const DecodeOptions&, std::span<const TokenId>);
template DecodeTrace decode(const Transformer<double>&, const DecodeOptions&, std::span<const TokenId>);
template DecodeTrace oracle_decode(const Transformer<float>&, const DecodeOptions&, std::span<const TokenId>);
template DecodeTrace oracle_decode(const Transformer<double>&, const DecodeOptions&, std::span<const TokenId>);

}  // namespace streamattn
