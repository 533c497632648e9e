#include "streamattn/config.hpp"

#include <fstream>
#include <set>

#include "streamattn/error.hpp"

namespace streamattn {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
    if (!obj.is_object()) throw ParseError("\"" + where + "\" must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        if (!known.contains(key)) {
            throw ParseError("unknown key \"" + (where.empty() ? key : where + "." + key) + "\"");
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& dst, const std::string& where) {
    if (!obj.contains(key)) return;
    const std::string name = where.empty() ? key : where + "." + key;
    const json& v = obj.at(key);
    if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ParseError("\"" + name + "\" must be a boolean");
        dst = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ParseError("\"" + name + "\" must be an integer");
        if constexpr (std::is_unsigned_v<T>) {
            if (v.is_number_unsigned() || v.get<std::int64_t>() >= 0) {
                dst = v.get<T>();
                return;
            }
            throw ParseError("\"" + name + "\" must be non-negative");
        } else {
            dst = v.get<T>();
        }
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ParseError("\"" + name + "\" must be a number");
        dst = v.get<T>();
    } else {
        if (!v.is_string()) throw ParseError("\"" + name + "\" must be a string");
        dst = v.get<std::string>();
    }
}

template <typename Enum, typename Parser>
void read_enum(const json& obj, const char* key, Enum& dst, Parser parse, const std::string& where) {
    std::string text;
    read(obj, key, text, where);
    if (text.empty()) return;
    const auto parsed = parse(text);
    if (!parsed) {
        throw ParseError("\"" + (where.empty() ? std::string(key) : where + "." + key) + "\" has invalid value \"" +
                         text + "\"");
    }
    dst = *parsed;
}

std::optional<TaskKind> parse_task_kind(std::string_view name) {
    if (name == "copy") return TaskKind::Copy;
    if (name == "mapped") return TaskKind::MappedTranslation;
    return std::nullopt;
}

void read_model(const json& j, ModelConfig& m, const std::string& where) {
    reject_unknown(j, {"layers", "heads", "d_model", "ffn_mult", "vocab_size", "max_positions", "precision",
                       "tied_head", "rope_base"},
                   where);
    read(j, "layers", m.layers, where);
    read(j, "heads", m.heads, where);
    read(j, "d_model", m.d_model, where);
    read(j, "ffn_mult", m.ffn_mult, where);
    read(j, "vocab_size", m.vocab_size, where);
    read(j, "max_positions", m.max_positions, where);
    read_enum(j, "precision", m.precision, parse_precision, where);
    read(j, "tied_head", m.tied_head, where);
    read(j, "rope_base", m.rope_base, where);
}

}  // namespace

std::string_view task_kind_name(TaskKind kind) noexcept { return kind == TaskKind::Copy ? "copy" : "mapped"; }

void RunConfig::validate() const {
    model.validate();
    task.validate();
    STREAMATTN_REQUIRE(k >= 1, "config: k must be >= 1");
    (void)PositionId(phi);
    STREAMATTN_REQUIRE(task.vocab_size == model.vocab_size, "config: task.vocab_size must equal model.vocab_size");
    STREAMATTN_REQUIRE(train.batch >= 1, "config: train.batch must be >= 1");
    STREAMATTN_REQUIRE(train.lr >= 0.0, "config: train.lr must be >= 0");
    STREAMATTN_REQUIRE(train.clip_norm >= 0.0, "config: train.clip_norm must be >= 0");
    STREAMATTN_REQUIRE(corpus_size >= 1, "config: corpus_size must be >= 1");
    STREAMATTN_REQUIRE(train_corpus.empty() ? heldout_size < corpus_size : true,
                       "config: heldout_size must be smaller than corpus_size");
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig m;
    read_model(j, m, "model");
    m.validate();
    return m;
}

json model_config_to_json(const ModelConfig& m) {
    return {{"layers", m.layers},
            {"heads", m.heads},
            {"d_model", m.d_model},
            {"ffn_mult", m.ffn_mult},
            {"vocab_size", m.vocab_size},
            {"max_positions", m.max_positions},
            {"precision", precision_name(m.precision)},
            {"tied_head", m.tied_head},
            {"rope_base", m.rope_base}};
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    reject_unknown(j, {"model", "paradigm", "k", "phi", "removal", "task", "corpus_size", "heldout_size",
                       "train_corpus", "heldout_corpus", "train", "seed", "out"},
                   "");
    if (j.contains("model")) read_model(j.at("model"), c.model, "model");
    read_enum(j, "paradigm", c.paradigm, parse_paradigm, "");
    read(j, "k", c.k, "");
    read(j, "phi", c.phi, "");
    read_enum(j, "removal", c.removal, parse_removal, "");
    c.task.vocab_size = c.model.vocab_size;
    if (j.contains("task")) {
        const json& t = j.at("task");
        reject_unknown(t, {"kind", "vocab_size", "len_min", "len_max"}, "task");
        read_enum(t, "kind", c.task.kind, parse_task_kind, "task");
        read(t, "vocab_size", c.task.vocab_size, "task");
        read(t, "len_min", c.task.len_min, "task");
        read(t, "len_max", c.task.len_max, "task");
    }
    read(j, "corpus_size", c.corpus_size, "");
    read(j, "heldout_size", c.heldout_size, "");
    read(j, "train_corpus", c.train_corpus, "");
    read(j, "heldout_corpus", c.heldout_corpus, "");
    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown(t, {"lr", "steps", "batch", "warmup", "linear_decay", "clip_norm"}, "train");
        read(t, "lr", c.train.lr, "train");
        read(t, "steps", c.train.steps, "train");
        read(t, "batch", c.train.batch, "train");
        read(t, "warmup", c.train.warmup, "train");
        read(t, "linear_decay", c.train.linear_decay, "train");
        read(t, "clip_norm", c.train.clip_norm, "train");
    }
    read(j, "seed", c.seed, "");
    read(j, "out", c.out, "");
    c.task.seed = c.seed;
    try {
        c.validate();
    } catch (const ContractError& e) {
        throw ParseError(e.what());
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

json config_to_json(const RunConfig& c) {
    return {{"model", model_config_to_json(c.model)},
            {"paradigm", paradigm_name(c.paradigm)},
            {"k", c.k},
            {"phi", c.phi},
            {"removal", removal_name(c.removal)},
            {"task",
             {{"kind", task_kind_name(c.task.kind)},
              {"vocab_size", c.task.vocab_size},
              {"len_min", c.task.len_min},
              {"len_max", c.task.len_max}}},
            {"corpus_size", c.corpus_size},
            {"heldout_size", c.heldout_size},
            {"train_corpus", c.train_corpus},
            {"heldout_corpus", c.heldout_corpus},
            {"train",
             {{"lr", c.train.lr},
              {"steps", c.train.steps},
              {"batch", c.train.batch},
              {"warmup", c.train.warmup},
              {"linear_decay", c.train.linear_decay},
              {"clip_norm", c.train.clip_norm}}},
            {"seed", c.seed},
            {"out", c.out}};
}

}  // namespace streamattn
