// streamattn command-line driver.
//
//   streamattn [--seed N] [--precision fp32|fp64] [--config run.json] [--out DIR] <subcommand> ...
//
// Exit codes: 0 success, 1 usage error, 2 runtime error. Outputs go under
// --out (default $STREAMATTN_OUT, else "out").

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "streamattn/analysis.hpp"
#include "streamattn/bench.hpp"
#include "streamattn/checkpoint.hpp"
#include "streamattn/config.hpp"
#include "streamattn/corpus.hpp"
#include "streamattn/error.hpp"
#include "streamattn/metrics.hpp"
#include "streamattn/stream.hpp"
#include "streamattn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace streamattn;

namespace {

/// Bad flag values detected after parsing; mapped to exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::uint64_t seed = 1;
    std::string precision;
    std::string config;
    std::string out;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* out_opt = nullptr;
};

const std::vector<std::string> kParadigmNames{"offline", "interleaved", "batch-no-re", "batch-pos-re", "batch-all-re",
                                              "group"};
const std::vector<std::string> kRemovalNames{"none", "source", "target", "all"};

ParadigmId paradigm_or_throw(const std::string& name) {
    const auto p = parse_paradigm(name);
    if (!p) throw UsageError("unknown paradigm \"" + name + "\"");
    return *p;
}

PositionRemoval removal_or_throw(const std::string& name) {
    const auto r = parse_removal(name);
    if (!r) throw UsageError("unknown removal \"" + name + "\"");
    return *r;
}

template <typename F>
auto with_precision(Precision p, F&& f) {
    if (p == Precision::Fp64) return f(double{});
    return f(float{});
}

fs::path ensure_out(const std::string& dir) {
    const fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create output directory " + p.string() + ": " + ec.message());
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

/// Base config from --config, then global overrides.
RunConfig base_config(const Globals& g) {
    RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
    if (g.seed_opt->count() > 0) {
        cfg.seed = g.seed;
        cfg.task.seed = g.seed;
    }
    if (!g.precision.empty()) cfg.model.precision = *parse_precision(g.precision);
    if (g.out_opt->count() > 0) {
        cfg.out = g.out;
    } else if (const char* env = std::getenv("STREAMATTN_OUT"); env && *env) {
        cfg.out = env;
    }
    return cfg;
}

struct Corpora {
    std::vector<ParallelPair> train;
    std::vector<ParallelPair> heldout;
};

Corpora corpora_for(const RunConfig& cfg) {
    Corpora c;
    if (!cfg.train_corpus.empty()) {
        c.train = load_jsonl(cfg.train_corpus, cfg.model.vocab_size);
        if (!cfg.heldout_corpus.empty()) c.heldout = load_jsonl(cfg.heldout_corpus, cfg.model.vocab_size);
        return c;
    }
    auto all = generate(cfg.task, cfg.corpus_size);
    const auto split = all.size() - cfg.heldout_size;
    c.heldout.assign(all.begin() + static_cast<std::ptrdiff_t>(split), all.end());
    all.resize(split);
    c.train = std::move(all);
    return c;
}

TokenSeq parse_token_list(const std::string& text) {
    TokenSeq out;
    std::string cleaned = text;
    for (char& ch : cleaned) {
        if (ch == ',' || ch == '[' || ch == ']') ch = ' ';
    }
    std::istringstream in(cleaned);
    long long v;
    while (in >> v) out.push_back(static_cast<TokenId>(v));
    if (!in.eof()) throw UsageError("token list must contain integers: \"" + text + "\"");
    return out;
}

// --- gen-data ---------------------------------------------------------------

struct GenDataArgs {
    std::string kind;
    int vocab = 0;
    int len_min = 0;
    int len_max = 0;
    std::size_t n = 0;
    std::size_t heldout = 0;
};

int run_gen_data(const Globals& g, const GenDataArgs& a, const CLI::App& sub) {
    RunConfig cfg = base_config(g);
    if (sub.count("--kind")) cfg.task.kind = a.kind == "copy" ? TaskKind::Copy : TaskKind::MappedTranslation;
    if (sub.count("--vocab")) cfg.task.vocab_size = a.vocab;
    if (sub.count("--len-min")) cfg.task.len_min = a.len_min;
    if (sub.count("--len-max")) cfg.task.len_max = a.len_max;
    if (sub.count("--n")) cfg.corpus_size = a.n;
    if (sub.count("--heldout")) cfg.heldout_size = a.heldout;
    cfg.model.vocab_size = cfg.task.vocab_size;
    cfg.validate();
    const auto corpora = corpora_for(cfg);
    const fs::path out = ensure_out(cfg.out);
    write_jsonl(out / "train.jsonl", corpora.train);
    if (!corpora.heldout.empty()) write_jsonl(out / "heldout.jsonl", corpora.heldout);
    std::cout << "wrote " << corpora.train.size() << " training and " << corpora.heldout.size()
              << " held-out pairs to " << out.string() << '\n';
    return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
    std::string paradigm;
    std::size_t k = 0;
    double phi = 0.0;
    std::string removal;
    std::size_t steps = 0;
    double lr = 0.0;
    std::size_t batch = 0;
    std::string train_path;
    std::string heldout_path;
    bool quiet = false;
};

int run_train(const Globals& g, const TrainArgs& a, const CLI::App& sub) {
    RunConfig cfg = base_config(g);
    if (sub.count("--paradigm")) cfg.paradigm = paradigm_or_throw(a.paradigm);
    if (sub.count("--k")) cfg.k = a.k;
    if (sub.count("--phi")) cfg.phi = a.phi;
    if (sub.count("--removal")) cfg.removal = removal_or_throw(a.removal);
    if (sub.count("--steps")) cfg.train.steps = a.steps;
    if (sub.count("--lr")) cfg.train.lr = a.lr;
    if (sub.count("--batch")) cfg.train.batch = a.batch;
    if (sub.count("--train")) cfg.train_corpus = a.train_path;
    if (sub.count("--heldout")) cfg.heldout_corpus = a.heldout_path;
    cfg.validate();

    const auto corpora = corpora_for(cfg);
    const fs::path out = ensure_out(cfg.out);
    TrainOptions opt;
    opt.paradigm = cfg.paradigm;
    opt.k = cfg.k;
    opt.phi = cfg.phi;
    opt.removal = cfg.removal;
    opt.lr = cfg.train.lr;
    opt.steps = cfg.train.steps;
    opt.batch = cfg.train.batch;
    opt.warmup = cfg.train.warmup;
    opt.linear_decay = cfg.train.linear_decay;
    opt.clip_norm = cfg.train.clip_norm;
    opt.seed = cfg.seed;
    if (!a.quiet) {
        opt.on_step = [&](std::size_t step, double loss) {
            if (step % 100 == 0 || step == opt.steps) std::cerr << "step " << step << " loss " << loss << '\n';
        };
    }

    return with_precision(cfg.model.precision, [&](auto zero) {
        using Scalar = decltype(zero);
        auto result = train<Scalar>(cfg.model, opt, corpora.train);
        const json meta{{"paradigm", paradigm_name(cfg.paradigm)},
                        {"k", cfg.k},
                        {"phi", cfg.phi},
                        {"removal", removal_name(cfg.removal)},
                        {"run_config", config_to_json(cfg)}};
        save_checkpoint(out / "checkpoint.bin", result.model, cfg.seed, meta);
        std::ostringstream curve;
        curve << "step,loss\n";
        curve.precision(8);
        for (std::size_t i = 0; i < result.losses.size(); ++i) curve << i + 1 << ',' << result.losses[i] << '\n';
        write_text(out / "loss_curve.csv", curve.str());
        if (!corpora.heldout.empty()) {
            DecodeOptions dopt;
            dopt.paradigm = cfg.paradigm;
            dopt.k = cfg.k;
            dopt.phi = cfg.phi;
            dopt.removal = cfg.removal;
            const auto s = evaluate(result.model, dopt, corpora.heldout);
            std::vector<ArrangedSequence> arrs;
            for (const auto& pair : corpora.heldout) {
                arrs.push_back(training_arrangement(cfg.paradigm, cfg.k, cfg.phi, cfg.removal, pair));
            }
            const json metrics{{"accuracy", s.accuracy},
                               {"bleu", s.bleu},
                               {"al", s.al},
                               {"laal", s.laal},
                               {"next_token_accuracy", next_token_accuracy(result.model, std::span(arrs))}};
            write_text(out / "heldout_metrics.json", metrics.dump(2) + "\n");
            std::cout << "held-out accuracy " << s.accuracy << " bleu " << s.bleu << " al " << s.al << '\n';
        }
        std::cout << "wrote " << (out / "checkpoint.bin").string() << '\n';
        return 0;
    });
}

// --- decode -----------------------------------------------------------------

struct DecodeArgs {
    std::string checkpoint;
    std::string input;
    std::string output;
    std::string paradigm;
    std::size_t k = 0;
    double phi = 0.0;
    std::string removal;
    std::size_t max_len = 0;
    bool no_timings = false;
    bool allre_on_write = false;
};

bool given(const CLI::App& sub, const std::string& name) {
    const CLI::Option* o = sub.get_option_no_throw(name);
    return o != nullptr && o->count() > 0;
}

DecodeOptions decode_options_from(const Checkpoint& ck, const CLI::App& sub, const std::string& paradigm,
                                  std::size_t k, double phi, const std::string& removal) {
    DecodeOptions opt;
    const json& meta = ck.meta;
    opt.paradigm = given(sub, "--paradigm") ? paradigm_or_throw(paradigm)
                                           : paradigm_or_throw(meta.value("paradigm", std::string("group")));
    opt.k = given(sub, "--k") ? k : meta.value("k", std::size_t{3});
    opt.phi = given(sub, "--phi") ? phi : meta.value("phi", 0.0);
    opt.removal = given(sub, "--removal") ? removal_or_throw(removal)
                                         : removal_or_throw(meta.value("removal", std::string("none")));
    if (opt.k < 1) throw UsageError("--k must be >= 1");
    return opt;
}

int run_decode(const Globals& g, const DecodeArgs& a, const CLI::App& sub) {
    const RunConfig cfg = base_config(g);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    DecodeOptions opt = decode_options_from(ck, sub, a.paradigm, a.k, a.phi, a.removal);
    opt.max_len = a.max_len;
    opt.allre_on_write = a.allre_on_write;
    const auto pairs = load_jsonl(a.input, ck.config.vocab_size);
    const fs::path output = a.output.empty() ? ensure_out(cfg.out) / "decode.jsonl" : fs::path(a.output);
    const Precision precision = g.precision.empty() ? ck.config.precision : *parse_precision(g.precision);

    std::ostringstream text;
    with_precision(precision, [&](auto zero) {
        using Scalar = decltype(zero);
        const auto model = ck.to_model<Scalar>();
        for (const auto& pair : pairs) {
            const auto trace = decode(model, opt, pair.source);
            json line{{"tokens", trace.tokens}, {"g", trace.g}, {"finish", finish_name(trace.finish)}};
            if (!a.no_timings) line["step_ms"] = trace.step_ms;
            text << line.dump() << '\n';
        }
        return 0;
    });
    write_text(output, text.str());
    std::cout << "decoded " << pairs.size() << " sources to " << output.string() << '\n';
    return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
    std::string hyp;
    std::string ref;
    std::string output;
};

int run_eval(const Globals& g, const EvalArgs& a) {
    const RunConfig cfg = base_config(g);
    const auto refs = load_jsonl(a.ref);
    std::ifstream in(a.hyp);
    if (!in) throw IoError("cannot open " + a.hyp);
    std::vector<TokenSeq> hyps, ref_tokens;
    std::vector<LatencyInput> lat;
    double acc = 0.0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
        }
        if (!j.is_object() || !j.contains("tokens") || !j.contains("g")) {
            throw ParseError("decode record needs \"tokens\" and \"g\"", line_no);
        }
        const std::size_t idx = hyps.size();
        if (idx >= refs.size()) throw ParseError("more hypotheses than references", line_no);
        TokenSeq hyp = j.at("tokens").get<TokenSeq>();
        TokenSeq ref = strip_eos(refs[idx].target);
        acc += token_accuracy(hyp, ref);
        lat.push_back({j.at("g").get<std::vector<std::size_t>>(), refs[idx].source.size(), ref.size()});
        hyps.push_back(std::move(hyp));
        ref_tokens.push_back(std::move(ref));
    }
    if (hyps.size() != refs.size()) throw ParseError("hypothesis and reference counts differ");
    const auto latency = corpus_lagging(lat);
    const json metrics{{"bleu", corpus_bleu(hyps, ref_tokens)},
                       {"accuracy", acc / static_cast<double>(hyps.size())},
                       {"al", latency.al},
                       {"laal", latency.laal}};
    const fs::path output = a.output.empty() ? ensure_out(cfg.out) / "metrics.json" : fs::path(a.output);
    write_text(output, metrics.dump(2) + "\n");
    std::cout << metrics.dump() << '\n';
    return 0;
}

// --- masks ------------------------------------------------------------------

struct MasksArgs {
    std::string paradigm = "group";
    std::size_t k = 1;
    double phi = 0.0;
    std::size_t src_len = 4;
    std::size_t tgt_len = 4;
    std::string removal = "none";
    bool write_files = false;
};

int run_masks(const Globals& g, const MasksArgs& a) {
    const ParadigmId p = paradigm_or_throw(a.paradigm);
    if (a.k < 1 || a.src_len < 1 || a.tgt_len < 1) throw UsageError("--k, --src-len and --tgt-len must be >= 1");
    TokenSeq src(a.src_len), tgt(a.tgt_len);
    for (std::size_t i = 0; i < src.size(); ++i) src[i] = kFirstContent + static_cast<TokenId>(i);
    for (std::size_t i = 0; i < tgt.size(); ++i) tgt[i] = kFirstContent + static_cast<TokenId>(i);
    const auto schedule = waitk_schedule(static_cast<std::int64_t>(a.k), static_cast<std::int64_t>(a.src_len),
                                         static_cast<std::int64_t>(a.tgt_len));
    auto arr = arrange(p, schedule, PositionId(a.phi), src, tgt);
    remove_positions(arr, removal_or_throw(a.removal));

    std::ostringstream mask, positions, loss, roles;
    for (std::size_t r = 0; r < arr.size(); ++r) {
        for (std::size_t c = 0; c < arr.size(); ++c) mask << (c ? "," : "") << (arr.allowed(r, c) ? 1 : 0);
        mask << '\n';
        positions << (r ? "," : "") << arr.positions[r];
        loss << (r ? "," : "") << static_cast<int>(arr.loss_mask[r]);
        roles << (r ? "," : "") << (arr.roles[r] == Role::Source ? 'S' : 'T');
    }
    positions << '\n';
    loss << '\n';
    roles << '\n';
    std::cout << "# roles\n" << roles.str() << "# attn_mask\n" << mask.str() << "# positions\n" << positions.str()
              << "# loss_mask\n" << loss.str();
    if (a.write_files) {
        const RunConfig cfg = base_config(g);
        const fs::path out = ensure_out(cfg.out);
        write_text(out / "attn_mask.csv", mask.str());
        write_text(out / "positions.csv", positions.str());
        write_text(out / "loss_mask.csv", loss.str());
    }
    return 0;
}

// --- attn -------------------------------------------------------------------

struct AttnArgs {
    std::string checkpoint;
    std::string input;
    std::string target;
    std::size_t layer = 0;
    std::size_t head = 0;
    bool normalize = false;
    double gamma = 0.5;
    bool gamma_set = false;
    bool strip_sink = false;
    std::string format = "csv";
    std::string paradigm;
    std::size_t k = 0;
    double phi = 0.0;
};

int run_attn(const Globals& g, const AttnArgs& a, const CLI::App& sub) {
    const RunConfig cfg = base_config(g);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const DecodeOptions opt = decode_options_from(ck, sub, a.paradigm, a.k, a.phi, "none");
    const TokenSeq source = parse_token_list(a.input);
    if (source.empty()) throw UsageError("--input must contain at least one token id");
    const Precision precision = g.precision.empty() ? ck.config.precision : *parse_precision(g.precision);

    AttentionMap map = with_precision(precision, [&](auto zero) {
        using Scalar = decltype(zero);
        const auto model = ck.to_model<Scalar>();
        TokenSeq target{kBos};
        if (sub.count("--target")) {
            const TokenSeq given = parse_token_list(a.target);
            target.insert(target.end(), given.begin(), given.end());
        } else {
            const auto trace = decode(model, opt, source);
            target.insert(target.end(), trace.tokens.begin(), trace.tokens.end());
        }
        const auto schedule = waitk_schedule(static_cast<std::int64_t>(opt.k), static_cast<std::int64_t>(source.size()),
                                             static_cast<std::int64_t>(target.size()));
        auto arr = arrange(opt.paradigm, schedule,
                           PositionId(opt.paradigm == ParadigmId::GroupStream ? opt.phi : 0.0), source, target);
        remove_positions(arr, opt.removal);
        return extract_attention(model, arr, a.layer, a.head);
    });
    if (a.strip_sink) map = sink_strip(map);
    if (a.normalize) map.matrix = normalize_columns(map.matrix);
    if (a.gamma_set) {
        if (!a.normalize) throw UsageError("--gamma requires --normalize (entries must lie in [0, 1])");
        map.matrix = gamma_transform(map.matrix, a.gamma);
    } else if (a.normalize) {
        map.matrix = gamma_transform(map.matrix, a.gamma);
    }
    const fs::path out = ensure_out(cfg.out);
    const fs::path file =
        out / ("attn_l" + std::to_string(a.layer) + "_h" + std::to_string(a.head) + "." + a.format);
    if (a.format == "svg") {
        write_svg(file, map);
    } else {
        write_csv(file, map.matrix);
    }
    std::cout << "wrote " << file.string() << '\n';
    return 0;
}

// --- bench ------------------------------------------------------------------

struct BenchArgs {
    std::vector<std::string> paradigms{"group", "batch-no-re", "batch-pos-re", "batch-all-re"};
    std::vector<std::size_t> k_list{5, 9};
    std::vector<std::size_t> lengths{32, 64, 128};
    std::size_t reps = 3;
    std::string checkpoint;
};

int run_bench_cmd(const Globals& g, const BenchArgs& a) {
    const RunConfig cfg = base_config(g);
    BenchConfig bc;
    for (const auto& name : a.paradigms) bc.paradigms.push_back(paradigm_or_throw(name));
    bc.k_list = a.k_list;
    bc.source_lengths = a.lengths;
    bc.repetitions = a.reps;
    bc.seed = cfg.seed;
    if (a.reps < 3) throw UsageError("--reps must be >= 3");
    for (auto k : bc.k_list) {
        if (k < 1) throw UsageError("--k values must be >= 1");
    }

    std::optional<Checkpoint> ck;
    ModelConfig mc = bench_model_config();
    if (!a.checkpoint.empty()) {
        ck = load_checkpoint(a.checkpoint);
        mc = ck->config;
        if (ck->meta.contains("paradigm")) bc.trained_paradigm = parse_paradigm(ck->meta.at("paradigm").get<std::string>());
        if (ck->meta.contains("k")) bc.trained_k = ck->meta.at("k").get<std::size_t>();
    }
    const Precision precision = g.precision.empty() ? mc.precision : *parse_precision(g.precision);
    const BenchReport report = with_precision(precision, [&](auto zero) {
        using Scalar = decltype(zero);
        const auto model = ck ? ck->to_model<Scalar>() : Transformer<Scalar>::initialize(mc, cfg.seed);
        return run_bench(model, bc);
    });
    const fs::path out = ensure_out(cfg.out);
    report_csv(out / "bench.csv", report);
    std::cout << report_csv_text(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming attention experiment kit"};
    app.fallthrough();  // global options may follow the subcommand
    app.require_subcommand(1);
    Globals g;
    g.seed_opt = app.add_option("--seed", g.seed, "Master seed");
    app.add_option("--precision", g.precision, "Model precision")->check(CLI::IsMember({"fp32", "fp64"}));
    app.add_option("--config", g.config, "JSON run configuration");
    g.out_opt = app.add_option("--out", g.out, "Output directory (default $STREAMATTN_OUT or ./out)");

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic parallel corpus");
    gen_cmd->add_option("--kind", gen.kind, "Task kind")->check(CLI::IsMember({"copy", "mapped"}));
    gen_cmd->add_option("--vocab", gen.vocab, "Vocabulary size");
    gen_cmd->add_option("--len-min", gen.len_min, "Minimum source length");
    gen_cmd->add_option("--len-max", gen.len_max, "Maximum source length");
    gen_cmd->add_option("--n", gen.n, "Total pairs generated");
    gen_cmd->add_option("--heldout", gen.heldout, "Pairs split off into heldout.jsonl");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train a model under one paradigm");
    train_cmd->add_option("--paradigm", tr.paradigm)->check(CLI::IsMember(kParadigmNames));
    train_cmd->add_option("--k", tr.k, "Wait-k");
    train_cmd->add_option("--phi", tr.phi, "Group start offset");
    train_cmd->add_option("--removal", tr.removal)->check(CLI::IsMember(kRemovalNames));
    train_cmd->add_option("--steps", tr.steps);
    train_cmd->add_option("--lr", tr.lr);
    train_cmd->add_option("--batch", tr.batch);
    train_cmd->add_option("--train", tr.train_path, "Training corpus JSONL");
    train_cmd->add_option("--heldout", tr.heldout_path, "Held-out corpus JSONL");
    train_cmd->add_flag("--quiet", tr.quiet, "No progress output");

    DecodeArgs de;
    auto* decode_cmd = app.add_subcommand("decode", "Streaming decode of a JSONL corpus");
    decode_cmd->add_option("--checkpoint", de.checkpoint)->required();
    decode_cmd->add_option("--input", de.input, "JSONL with \"source\" arrays")->required();
    decode_cmd->add_option("--output", de.output, "Output JSONL (default <out>/decode.jsonl)");
    decode_cmd->add_option("--paradigm", de.paradigm)->check(CLI::IsMember(kParadigmNames));
    decode_cmd->add_option("--k", de.k);
    decode_cmd->add_option("--phi", de.phi);
    decode_cmd->add_option("--removal", de.removal)->check(CLI::IsMember(kRemovalNames));
    decode_cmd->add_option("--max-len", de.max_len, "Emission cap (default 2*|source|+8)");
    decode_cmd->add_flag("--no-timings", de.no_timings, "Omit step_ms for byte-stable output");
    decode_cmd->add_flag("--allre-on-write", de.allre_on_write, "batch-all-re re-encodes before every write");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Score decode output against references");
    eval_cmd->add_option("--hyp", ev.hyp, "decode output JSONL")->required();
    eval_cmd->add_option("--ref", ev.ref, "reference corpus JSONL")->required();
    eval_cmd->add_option("--output", ev.output, "Metrics JSON (default <out>/metrics.json)");

    MasksArgs ma;
    auto* masks_cmd = app.add_subcommand("masks", "Print the layout of one paradigm as CSV");
    masks_cmd->add_option("--paradigm", ma.paradigm)->check(CLI::IsMember(kParadigmNames));
    masks_cmd->add_option("--k", ma.k);
    masks_cmd->add_option("--phi", ma.phi);
    masks_cmd->add_option("--src-len", ma.src_len);
    masks_cmd->add_option("--tgt-len", ma.tgt_len, "Number of target-role tokens");
    masks_cmd->add_option("--removal", ma.removal)->check(CLI::IsMember(kRemovalNames));
    masks_cmd->add_flag("--write", ma.write_files, "Also write CSV files under --out");

    AttnArgs at;
    auto* attn_cmd = app.add_subcommand("attn", "Export one attention map");
    attn_cmd->add_option("--checkpoint", at.checkpoint)->required();
    attn_cmd->add_option("--input", at.input, "Source token ids, e.g. \"5,9,12\"")->required();
    attn_cmd->add_option("--target", at.target, "Target token ids (default: greedy decode)");
    attn_cmd->add_option("--layer", at.layer)->required();
    attn_cmd->add_option("--head", at.head)->required();
    attn_cmd->add_flag("--normalize", at.normalize, "Column normalization");
    auto* gamma_opt = attn_cmd->add_option("--gamma", at.gamma, "Gamma after normalization (default 0.5)");
    attn_cmd->add_flag("--strip-sink", at.strip_sink, "Drop key column 0");
    attn_cmd->add_option("--format", at.format)->check(CLI::IsMember({"csv", "svg"}));
    attn_cmd->add_option("--paradigm", at.paradigm)->check(CLI::IsMember(kParadigmNames));
    attn_cmd->add_option("--k", at.k);
    attn_cmd->add_option("--phi", at.phi);

    BenchArgs be;
    auto* bench_cmd = app.add_subcommand("bench", "Compare decoding modes");
    bench_cmd->add_option("--paradigms", be.paradigms)->delimiter(',')->check(CLI::IsMember(kParadigmNames));
    bench_cmd->add_option("--k", be.k_list)->delimiter(',');
    bench_cmd->add_option("--lengths", be.lengths)->delimiter(',');
    bench_cmd->add_option("--reps", be.reps);
    bench_cmd->add_option("--checkpoint", be.checkpoint, "Model to time (default: untrained tiny model)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    std::string which = "streamattn";
    try {
        if (gen_cmd->parsed()) {
            which = "gen-data";
            return run_gen_data(g, gen, *gen_cmd);
        }
        if (train_cmd->parsed()) {
            which = "train";
            return run_train(g, tr, *train_cmd);
        }
        if (decode_cmd->parsed()) {
            which = "decode";
            return run_decode(g, de, *decode_cmd);
        }
        if (eval_cmd->parsed()) {
            which = "eval";
            return run_eval(g, ev);
        }
        if (masks_cmd->parsed()) {
            which = "masks";
            return run_masks(g, ma);
        }
        if (attn_cmd->parsed()) {
            which = "attn";
            at.gamma_set = gamma_opt->count() > 0;
            return run_attn(g, at, *attn_cmd);
        }
        if (bench_cmd->parsed()) {
            which = "bench";
            return run_bench_cmd(g, be);
        }
    } catch (const UsageError& e) {
        std::cerr << which << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << which << ": " << e.what() << '\n';
        return 2;
    }
    return 1;
}
