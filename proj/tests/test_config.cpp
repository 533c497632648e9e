#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "streamattn/checkpoint.hpp"
#include "streamattn/config.hpp"
#include "streamattn/error.hpp"
#include "support.hpp"

using namespace streamattn;
namespace fs = std::filesystem;
using nlohmann::json;

TEST_CASE("empty config yields the documented defaults") {
    const auto cfg = config_from_json(json::object());
    CHECK(cfg.model == ModelConfig{});
    CHECK(cfg.paradigm == ParadigmId::GroupStream);
    CHECK(cfg.k == 3);
    CHECK(cfg.train.steps == 2000);
    CHECK(cfg.corpus_size == 10000);
    CHECK(cfg.heldout_size == 200);
}

TEST_CASE("config round-trips through JSON") {
    auto cfg = config_from_json(json::parse(R"({
        "model": {"layers": 1, "heads": 2, "d_model": 16, "vocab_size": 32, "precision": "fp64"},
        "task": {"kind": "copy", "vocab_size": 32, "len_min": 2, "len_max": 4},
        "paradigm": "batch-pos-re", "k": 5, "phi": 0.5, "removal": "target",
        "train": {"lr": 0.01, "steps": 7, "batch": 3},
        "seed": 99
    })"));
    CHECK(cfg.model.layers == 1);
    CHECK(cfg.model.precision == Precision::Fp64);
    CHECK(cfg.task.kind == TaskKind::Copy);
    CHECK(cfg.paradigm == ParadigmId::BatchPosRe);
    CHECK(cfg.removal == PositionRemoval::Target);
    CHECK(cfg.train.batch == 3);
    const auto again = config_from_json(config_to_json(cfg));
    CHECK(config_to_json(again) == config_to_json(cfg));
}

TEST_CASE("config errors name the offending key") {
    auto message = [](const char* text) {
        try {
            config_from_json(json::parse(text));
        } catch (const std::exception& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message(R"({"bogus": 1})").find("bogus") != std::string::npos);
    CHECK(message(R"({"model": {"depth": 3}})").find("model.depth") != std::string::npos);
    CHECK(message(R"({"paradigm": "bogus"})").find("\"paradigm\" has invalid value \"bogus\"") != std::string::npos);
    CHECK(message(R"({"k": "three"})").find("\"k\"") != std::string::npos);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"k": 0})")), ParseError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"model": {"heads": 3}})")), ParseError);
    CHECK_THROWS_AS(load_config(fs::temp_directory_path() / "streamattn_missing_config.json"), IoError);
}

TEST_CASE("checkpoints round-trip parameters, config and metadata") {
    for (auto precision : {Precision::Fp32, Precision::Fp64}) {
        auto cfg = testing::tiny_config(2, 2, 8, 11);
        cfg.precision = precision;
        const auto path = fs::temp_directory_path() / "streamattn_test_ckpt.bin";
        const json meta{{"paradigm", "group"}, {"k", 3}};
        std::vector<double> restored;
        if (precision == Precision::Fp64) {
            const auto model = Transformer<double>::initialize(cfg, 5);
            save_checkpoint(path, model, 5, meta);
            const auto ck = load_checkpoint(path);
            CHECK(ck.params == std::vector<double>(model.params().begin(), model.params().end()));
            restored = ck.params;
        } else {
            const auto model = Transformer<float>::initialize(cfg, 5);
            save_checkpoint(path, model, 5, meta);
            const auto ck = load_checkpoint(path);
            const auto back = ck.to_model<float>();
            CHECK(std::equal(back.params().begin(), back.params().end(), model.params().begin()));
        }
        const auto ck = load_checkpoint(path);
        CHECK(ck.config == cfg);
        CHECK(ck.seed == 5);
        CHECK(ck.meta == meta);
    }
}

TEST_CASE("corrupted checkpoints are rejected") {
    const auto bad = fs::temp_directory_path() / "streamattn_test_bad.bin";
    std::ofstream(bad) << "NOTACKPT0000000000";
    CHECK_THROWS_AS(load_checkpoint(bad), ParseError);

    const auto path = fs::temp_directory_path() / "streamattn_test_trunc.bin";
    save_checkpoint(path, Transformer<double>::initialize(testing::tiny_config(), 1), 1);
    fs::resize_file(path, fs::file_size(path) - 8);
    CHECK_THROWS(load_checkpoint(path));
    CHECK_THROWS_AS(load_checkpoint(fs::temp_directory_path() / "streamattn_none.bin"), IoError);
}
