#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>

#include "cllmrec/config.hpp"
#include "doctest.h"

using namespace cllmrec;
namespace fs = std::filesystem;

TEST_CASE("defaults parse and validate") {
    RunConfig cfg = RunConfig::parse("");
    CHECK(cfg.tau == 2.0);
    CHECK(cfg.epsilon == 0.1);
    CHECK(cfg.candidate_pool == 20);
    CHECK(cfg.encoder_backend == "stub");
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("serialize then parse is the identity") {
    RunConfig cfg;
    cfg.run_dir = "out/exp1";
    cfg.seed = 7;
    cfg.seeds = {1, 2, 3};
    cfg.tau = 1.5;
    cfg.fixture = true;
    cfg.use_dkt = false;
    std::string text = cfg.serialize();
    RunConfig back = RunConfig::parse(text);
    CHECK(back.run_dir == "out/exp1");
    CHECK(back.seed == 7);
    CHECK(back.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(back.tau == 1.5);
    CHECK(back.fixture);
    CHECK_FALSE(back.use_dkt);
    CHECK(back.serialize() == text);
}

TEST_CASE("parsing handles comments, blanks, quotes and lists") {
    RunConfig cfg = RunConfig::parse(
        "# a comment\n"
        "\n"
        "[run]\n"
        "run_dir = \"my dir\"\n"
        "ks = [1, 5, 10]\n"
        "[student]\n"
        "lr = 0.025\n");
    CHECK(cfg.run_dir == "my dir");
    CHECK(cfg.ks == std::vector<int>{1, 5, 10});
    CHECK(cfg.student_lr == 0.025);
}

TEST_CASE("unknown and malformed fields name the offender") {
    CHECK_THROWS_WITH_AS(RunConfig::parse("[run]\nbogus = 1\n"),
                         doctest::Contains("invalid config field: run.bogus"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::parse("[student]\nlr = abc\n"),
                         doctest::Contains("invalid config field student.lr"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::parse("[run]\nno equals sign\n"), doctest::Contains("line 2"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::parse("[reranker]\nuse_dkt = maybe\n"),
                         doctest::Contains("true/false"), ConfigError);
}

TEST_CASE("validation names the offending field") {
    CHECK_THROWS_WITH_AS(RunConfig::parse("[student]\ntau = 0\n"),
                         doctest::Contains("invalid config field student.tau"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::parse("[teacher]\nepsilon = 1.0\n"),
                         doctest::Contains("teacher.epsilon"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::parse("[teacher]\nchunk_size = 0\n"),
                         doctest::Contains("teacher.chunk_size"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::parse("[teacher]\nscore_min = 9\n"),
                         doctest::Contains("teacher.score_min"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::parse("[encoder]\nbackend = \"magic\"\n"),
                         doctest::Contains("encoder.backend"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::parse("[encoder]\ndim = 4\n"), doctest::Contains("encoder.dim"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::parse("[teacher]\nmode = \"oracle\"\n"),
                         doctest::Contains("teacher.mode"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::parse("[joint]\nlambda2 = -1\n"), doctest::Contains("joint.lambda2"),
                         ConfigError);
}

TEST_CASE("save and load round-trip through a file") {
    fs::path p = fs::temp_directory_path() / "cfg_rt_test.toml";
    RunConfig cfg;
    cfg.run_dir = "runs/a";
    cfg.kd_epochs = 123;
    cfg.save(p.string());
    RunConfig back = RunConfig::load(p.string());
    CHECK(back.run_dir == "runs/a");
    CHECK(back.kd_epochs == 123);
    fs::remove(p);
    CHECK_THROWS(RunConfig::load(p.string()));
}
