#pragma once

// Run configuration shared by the CLI subcommands. JSON schema (all keys
// optional, unknown keys rejected, defaults shown):
//
// {
//   "model": {"layers": 2, "heads": 4, "d_model": 64, "ffn_mult": 4,
//             "vocab_size": 64, "max_positions": 256, "precision": "fp32",
//             "tied_head": false, "rope_base": 10000},
//   "paradigm": "group", "k": 3, "phi": 0.0, "removal": "none",
//   "task": {"kind": "mapped", "vocab_size": 64, "len_min": 8, "len_max": 16},
//   "corpus_size": 10000, "heldout_size": 200,
//   "train_corpus": "", "heldout_corpus": "",
//   "train": {"lr": 0.002, "steps": 2000, "batch": 32, "warmup": 100,
//             "linear_decay": true, "clip_norm": 1.0},
//   "seed": 1, "out": "out"
// }
//
// task.vocab_size is kept equal to model.vocab_size. An empty train_corpus
// generates the synthetic task; the held-out set is then the last
// heldout_size pairs of the generated corpus.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "streamattn/corpus.hpp"
#include "streamattn/model.hpp"
#include "streamattn/paradigm.hpp"

namespace streamattn {

struct TrainHyper {
    double lr = 2e-3;
    std::size_t steps = 2000;
    std::size_t batch = 32;
    std::size_t warmup = 100;
    bool linear_decay = true;
    double clip_norm = 1.0;
};

struct RunConfig {
    ModelConfig model;
    ParadigmId paradigm = ParadigmId::GroupStream;
    std::size_t k = 3;
    double phi = 0.0;
    PositionRemoval removal = PositionRemoval::None;
    SyntheticTaskSpec task;
    std::size_t corpus_size = 10000;
    std::size_t heldout_size = 200;
    std::string train_corpus;
    std::string heldout_corpus;
    TrainHyper train;
    std::uint64_t seed = 1;
    std::string out = "out";

    void validate() const;
};

/// Schema violations throw ParseError naming the key.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const RunConfig& cfg);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

std::string_view task_kind_name(TaskKind kind) noexcept;

}  // namespace streamattn
