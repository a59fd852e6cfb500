#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stylebc/cli.hpp"
#include "stylebc/dataset_io.hpp"
#include "stylebc/neural.hpp"
#include "test_support.hpp"

using namespace stylebc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string recipe_path(const std::string& name) { return (test::data_dir() / "recipes" / (name + ".json")).string(); }
std::string maze_path() { return (test::data_dir() / "mazes" / "medium_maze.txt").string(); }

int count_lines_starting(const std::string& text, const std::string& prefix) {
    std::istringstream in(text);
    int n = 0;
    for (std::string line; std::getline(in, line);)
        if (line.rfind(prefix, 0) == 0) ++n;
    return n;
}

/// gen-data, train and eval into `dir`; returns the eval directory.
fs::path pipeline(const fs::path& dir) {
    const auto g = run({"gen-data", "--recipe", recipe_path("only_forward"), "--maze", maze_path(), "--out",
                        (dir / "data").string()});
    REQUIRE_MESSAGE(g.code == 0, g.err);
    const auto ds = (dir / "data" / "only_forward.jsonl").string();
    const auto t = run({"train", "--algo", "wzbc", "--dataset", ds, "--steps", "200", "--out",
                        (dir / "run").string()});
    REQUIRE_MESSAGE(t.code == 0, t.err);
    const auto e = run({"eval", "--checkpoint", (dir / "run" / "checkpoint.swr").string(), "--dataset", ds, "--maze",
                        maze_path(), "--rollouts", "40", "--seeds", "0", "1", "--out", (dir / "eval").string()});
    REQUIRE_MESSAGE(e.code == 0, e.err);
    return dir / "eval";
}

}  // namespace

TEST_CASE("gen-data writes the recipe's trajectories") {
    const auto dir = test::scratch_dir("cli_gen");
    const auto r = run({"gen-data", "--recipe", recipe_path("only_forward"), "--maze", maze_path(), "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
    CHECK(r.out.find("wrote 100 trajectories") != std::string::npos);
    const Dataset ds = read_dataset(dir / "only_forward.jsonl");
    CHECK(ds.size() == 100);
    CHECK(ds.meta.maze_name == "medium_maze");
}

TEST_CASE("gen-data resolves the maze by name from the bundled data") {
    const auto dir = test::scratch_dir("cli_gen_name");
    const auto r = run({"gen-data", "--recipe", recipe_path("one_side"), "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
    CHECK(read_dataset(dir / "one_side.jsonl").size() == 100);
}

TEST_CASE("train accepts algorithm and hyperparameter flags") {
    const auto dir = test::scratch_dir("cli_train");
    REQUIRE(run({"gen-data", "--recipe", recipe_path("one_side"), "--maze", maze_path(), "--out", dir.string()}).code == 0);
    const auto ds = (dir / "one_side.jsonl").string();
    const auto r = run({"train", "--algo", "wzbc", "--beta", "10.0", "--relabel-p", "0.8", "--dataset", ds, "--steps", "50", "--out", (dir / "run").string()});
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
    CHECK(r.out.rfind("wzbc: 50 steps", 0) == 0);
    CHECK(fs::exists(dir / "run" / "checkpoint.swr"));
    CHECK(fs::exists(dir / "run" / "loss.csv"));
    const auto report = nlohmann::json::parse(slurp(dir / "run" / "report.json"));
    CHECK(report.is_object());
    const auto model = neural::load_checkpoint(dir / "run" / "checkpoint.swr");
    CHECK(model.codebook.rows == 100);

    SUBCASE("with a precomputed dissimilarity matrix") {
        REQUIRE(run({"dissim", "--dataset", ds, "--out", (dir / "nu").string()}).code == 0);
        CHECK(fs::exists(dir / "nu" / "nu.csv"));
        const auto r2 = run({"train", "--algo", "wzbc", "--dataset", ds, "--nu",
                             (dir / "nu" / "nu.bin").string(), "--steps", "50", "--out", (dir / "run2").string()});
        REQUIRE_MESSAGE(r2.code == cli::kExitOk, r2.err);
        CHECK(slurp(dir / "run" / "checkpoint.swr") == slurp(dir / "run2" / "checkpoint.swr"));
    }
}

TEST_CASE("usage errors exit with code 2") {
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"no-such-command"}).code == cli::kExitUsage);
    CHECK(run({"train", "--algo", "dqn", "--dataset", maze_path(), "--out", "x"}).code == cli::kExitUsage);
    const auto r = run({"eval", "--checkpoint", maze_path(), "--dataset", maze_path(), "--rollouts", "0", "--out", "x"});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.find("--rollouts") != std::string::npos);
    CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("config violations are listed one per line") {
    const auto dir = test::scratch_dir("cli_config");
    REQUIRE(run({"gen-data", "--recipe", recipe_path("one_side"), "--maze", maze_path(), "--out", dir.string()}).code == 0);
    const auto cfg = dir / "bad.json";
    std::ofstream(cfg) << R"({"train": {"relabel_p": 1.5, "beta": -1, "bogus": 3}})";
    const auto r = run({"train", "--config", cfg.string(), "--dataset", (dir / "one_side.jsonl").string(), "--out", (dir / "run").string()});
    CHECK(r.code == cli::kExitUsage);
    CHECK(r.err.rfind("invalid configuration:", 0) == 0);
    CHECK(count_lines_starting(r.err, "  ") == 3);
    CHECK(r.err.find("relabel_p") != std::string::npos);
    CHECK(r.err.find("beta") != std::string::npos);
    CHECK(r.err.find("bogus: unknown key") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "run"));

    const auto flags = run({"train", "--relabel-p", "2", "--beta", "-3", "--dataset",
                            (dir / "one_side.jsonl").string(), "--out", (dir / "run").string()});
    CHECK(flags.code == cli::kExitUsage);
    CHECK(count_lines_starting(flags.err, "  ") == 2);
}

TEST_CASE("runtime errors exit with code 1") {
    const auto dir = test::scratch_dir("cli_runtime");
    const auto bad = dir / "bad.jsonl";
    std::ofstream(bad) << "{\"format\":\"nope\"}\n";
    const auto r = run({"dissim", "--dataset", bad.string(), "--out", dir.string()});
    CHECK(r.code == cli::kExitFailure);
    CHECK(r.err.find("stylebc-dataset header") != std::string::npos);
}

TEST_CASE("validate-maze prints the layout and reports parse errors") {
    const auto r = run({"validate-maze", maze_path()});
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
    CHECK(r.out.rfind("medium_maze: 11x11, 8 doors", 0) == 0);
    CHECK(r.out.find("###1###2###") != std::string::npos);

    const auto dir = test::scratch_dir("cli_maze");
    std::ofstream(dir / "bad.txt") << "###\n#Sx\n###\n";
    const auto bad = run({"validate-maze", (dir / "bad.txt").string()});
    CHECK(bad.code == cli::kExitFailure);
    CHECK(bad.err.find("line 2") != std::string::npos);
}

TEST_CASE("density exports a normalized grid") {
    const auto dir = test::scratch_dir("cli_density");
    REQUIRE(run({"gen-data", "--recipe", recipe_path("only_forward"), "--maze", maze_path(), "--out", dir.string()}).code == 0);
    const auto r = run({"density", "--dataset", (dir / "only_forward.jsonl").string(), "--maze", maze_path(), "--beta",
                        "0", "--ref", "3", "--resolution", "16", "--out", (dir / "d").string()});
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
    const auto j = nlohmann::json::parse(slurp(dir / "d" / "density.json"));
    CHECK(j["resolution"] == 16);
    CHECK(j["mass"].size() == 256);
    CHECK(j["total"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(count_lines_starting(slurp(dir / "d" / "density.csv"), "") == 257);

    CHECK(run({"density", "--dataset", (dir / "only_forward.jsonl").string(), "--ref", "100", "--out",
               (dir / "d2").string()}).code == cli::kExitFailure);
}

TEST_CASE("full pipeline is byte-for-byte reproducible") {
    const auto a = pipeline(test::scratch_dir("cli_pipe_a"));
    const auto b = pipeline(test::scratch_dir("cli_pipe_b"));
    const std::string ma = slurp(a / "metrics.json");
    CHECK(ma == slurp(b / "metrics.json"));
    CHECK(slurp(a / "histograms.json") == slurp(b / "histograms.json"));
    CHECK(slurp(a / "density.csv") == slurp(b / "density.csv"));
    const auto m = nlohmann::json::parse(ma);
    CHECK(m["per_seed"].size() == 2);
}

TEST_CASE("control writes per-seed comparisons") {
    const auto dir = test::scratch_dir("cli_control");
    REQUIRE(run({"gen-data", "--recipe", recipe_path("only_forward"), "--maze", maze_path(), "--out", dir.string()}).code == 0);
    const auto ds = (dir / "only_forward.jsonl").string();
    REQUIRE(run({"train", "--algo", "zbc", "--dataset", ds, "--steps", "30", "--out",
                 (dir / "run").string()}).code == 0);
    const auto r = run({"control", "--checkpoint", (dir / "run" / "checkpoint.swr").string(), "--dataset", ds,
                        "--min", "70", "--max", "80", "--rollouts", "10", "--seeds", "0", "1",
                        "--out", (dir / "c").string()});
    REQUIRE_MESSAGE(r.code == cli::kExitOk, r.err);
    CHECK(count_lines_starting(r.out, "seed ") == 2);
    CHECK(fs::exists(dir / "c" / "control.json"));

    const auto bad = run({"control", "--checkpoint", (dir / "run" / "checkpoint.swr").string(), "--dataset", ds,
                          "--maze", maze_path(), "--min", "1000", "--max", "2000", "--out", (dir / "c2").string()});
    CHECK(bad.code != cli::kExitOk);
}
