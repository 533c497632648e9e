#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "streamattn/analysis.hpp"
#include "streamattn/checkpoint.hpp"
#include "streamattn/corpus.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

/// Runs the CLI with `args`, capturing stdout; stderr is discarded.
Result cli(const std::string& args, const std::string& env = "") {
    const fs::path capture = fs::temp_directory_path() / "streamattn_cli_stdout.txt";
    const std::string cmd = env + " " + STREAMATTN_CLI_PATH + " " + args + " > " + capture.string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(capture);
    std::ostringstream text;
    text << in.rdbuf();
    r.out = text.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("streamattn_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("masks prints the layout and rejects bad enums") {
    const auto r = cli("masks --paradigm batch-no-re --k 1 --src-len 2 --tgt-len 2");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("# attn_mask\n1,0,0,0\n1,1,0,0\n1,0,1,0\n1,1,1,1\n") != std::string::npos);
    CHECK(r.out.find("# positions\n0,2,1,3\n") != std::string::npos);
    CHECK(r.out.find("# loss_mask\n0,0,1,0\n") != std::string::npos);
    CHECK(cli("masks --paradigm bogus").code == 1);
    CHECK(cli("masks --removal sideways").code == 1);
    CHECK(cli("").code == 1);
    CHECK(cli("--help").code == 0);
}

TEST_CASE("end-to-end: gen-data, train, decode, eval, attn, bench") {
    const auto dir = fresh_dir("e2e");
    const auto config = dir / "run.json";
    std::ofstream(config) << R"({
        "model": {"layers": 1, "heads": 2, "d_model": 16, "vocab_size": 16},
        "task": {"vocab_size": 16, "len_min": 3, "len_max": 6},
        "corpus_size": 60, "heldout_size": 10,
        "train": {"steps": 5, "batch": 4}, "k": 2
    })";
    const std::string base = "--config " + config.string() + " --out " + dir.string();

    REQUIRE(cli(base + " gen-data").code == 0);
    const auto train_set = streamattn::load_jsonl(dir / "train.jsonl");
    const auto heldout = streamattn::load_jsonl(dir / "heldout.jsonl");
    CHECK(train_set.size() == 50);
    CHECK(heldout.size() == 10);

    REQUIRE(cli(base + " train --quiet").code == 0);
    const auto ck = streamattn::load_checkpoint(dir / "checkpoint.bin");
    CHECK(ck.config.d_model == 16);
    CHECK(ck.meta.at("paradigm") == "group");
    CHECK(ck.meta.at("k") == 2);
    const auto curve = slurp(dir / "loss_curve.csv");
    CHECK(curve.rfind("step,loss\n", 0) == 0);
    CHECK(std::count(curve.begin(), curve.end(), '\n') == 6);

    const std::string dec = "decode --checkpoint " + (dir / "checkpoint.bin").string() + " --input " +
                            (dir / "heldout.jsonl").string() + " --no-timings --output ";
    REQUIRE(cli(base + " " + dec + (dir / "a.jsonl").string()).code == 0);
    REQUIRE(cli(base + " " + dec + (dir / "b.jsonl").string()).code == 0);
    const auto a = slurp(dir / "a.jsonl");
    CHECK(a == slurp(dir / "b.jsonl"));
    std::istringstream lines(a);
    std::string first;
    std::getline(lines, first);
    const auto rec = json::parse(first);
    CHECK(rec.contains("tokens"));
    CHECK(rec.contains("g"));
    CHECK(rec.contains("finish"));
    CHECK_FALSE(rec.contains("step_ms"));
    CHECK(rec.at("g").size() == rec.at("tokens").size());

    REQUIRE(cli(base + " " + "decode --checkpoint " + (dir / "checkpoint.bin").string() + " --input " +
                (dir / "heldout.jsonl").string() + " --k 4 --paradigm batch-all-re")
                .code == 0);
    std::ifstream timed(dir / "decode.jsonl");
    std::getline(timed, first);
    CHECK(json::parse(first).contains("step_ms"));

    REQUIRE(cli(base + " eval --hyp " + (dir / "a.jsonl").string() + " --ref " + (dir / "heldout.jsonl").string())
                .code == 0);
    const auto metrics = json::parse(slurp(dir / "metrics.json"));
    for (const char* key : {"bleu", "accuracy", "al", "laal"}) CHECK(metrics.contains(key));
    CHECK(metrics.at("accuracy").get<double>() >= 0.0);
    CHECK(metrics.at("accuracy").get<double>() <= 1.0);
    CHECK(cli(base + " eval --hyp " + (dir / "a.jsonl").string() + " --ref " + (dir / "train.jsonl").string()).code ==
          2);

    const std::string attn = "attn --checkpoint " + (dir / "checkpoint.bin").string() + " --input 5,6,7 --layer 0 --head 1";
    REQUIRE(cli(base + " " + attn + " --normalize --strip-sink").code == 0);
    const auto map = streamattn::read_csv(dir / "attn_l0_h1.csv");
    CHECK(map.rows >= 4);
    for (double v : map.data) CHECK((v >= 0.0 && v <= 1.0));
    REQUIRE(cli(base + " " + attn + " --format svg").code == 0);
    CHECK(slurp(dir / "attn_l0_h1.svg").rfind("<svg", 0) == 0);
    CHECK(cli(base + " " + attn + " --format png").code == 1);
    CHECK(cli(base + " attn --checkpoint " + (dir / "checkpoint.bin").string() + " --input 5 --layer 3 --head 0").code ==
          2);

    REQUIRE(cli(base + " bench --paradigms group,batch-all-re --k 2 --lengths 6 --reps 3").code == 0);
    const auto bench = slurp(dir / "bench.csv");
    CHECK(std::count(bench.begin(), bench.end(), '\n') == 3);
    CHECK(cli(base + " bench --reps 2").code == 1);
}

TEST_CASE("runtime failures exit with code 2 and the output directory honours STREAMATTN_OUT") {
    CHECK(cli("decode --checkpoint /nonexistent/ck.bin --input /nonexistent/in.jsonl").code == 2);
    const auto dir = fresh_dir("env");
    const auto r = cli("masks --write --src-len 2 --tgt-len 2", "STREAMATTN_OUT=" + dir.string());
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "attn_mask.csv"));
    CHECK(fs::exists(dir / "positions.csv"));
    CHECK(slurp(dir / "loss_mask.csv") == "0,0,1,0\n");
}
