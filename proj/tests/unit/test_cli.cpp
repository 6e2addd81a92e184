#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hardneg/cli.hpp"
#include "hardneg/config.hpp"
#include "helpers.hpp"

using namespace hardneg;
namespace fs = std::filesystem;

namespace {

struct Invocation {
    int code;
    std::string out;
    std::string err;
};

Invocation run(std::vector<std::string> args) {
    args.insert(args.begin(), "hardneg");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small enough that a full eval finishes in well under a second per method.
fs::path tiny_config(const fs::path& dir) {
    const Json encoder = {{"conv_layers", {{{"out_channels", 6}, {"kernel_size", 5}, {"stride", 2}}}},
                          {"embedding_dim", 8},
                          {"projection_dim", 4}};
    const Json j = {{"synth", {{"num_classes", 3}, {"samples_per_class", 16}, {"time_length", 20}}},
                    {"pretrain", {{"epochs", 2}, {"batch_size", 8}}},
                    {"encoder_configs", {{"inertial", encoder}, {"skeleton", encoder}}},
                    {"finetune", {{"epochs", 2}, {"fusion_width", 8}}},
                    {"num_seeds", 2}};
    const fs::path p = dir / "tiny.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

}  // namespace

TEST_CASE("usage errors exit 2 with help text") {
    Invocation r = run({"pretrain", "--no-such-flag"});
    CHECK(r.code == 2);
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("selfcheck passes") {
    const Invocation r = run({"selfcheck"});
    CHECK(r.code == 0);
    CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("missing output directory is a config error") {
    const auto dir = testing::scratch_dir("cli_noout");
    unsetenv(kOutputRootEnv);
    CHECK(run({"synth-data", "-c", tiny_config(dir).string()}).code == 2);
    setenv(kOutputRootEnv, (dir / "root").c_str(), 1);
    CHECK(run({"synth-data", "-c", tiny_config(dir).string()}).code == 0);
    CHECK(fs::exists(dir / "root" / "synth-data" / "meta.json"));
    unsetenv(kOutputRootEnv);
}

TEST_CASE("bad data exits 3, bad config exits 2") {
    const auto dir = testing::scratch_dir("cli_codes");
    const fs::path cfg = tiny_config(dir);
    fs::create_directories(dir / "empty");
    CHECK(run({"pretrain", "-c", cfg.string(), "-d", (dir / "empty").string(), "-o", (dir / "o").string()}).code == 3);
    std::ofstream(dir / "bad.json") << R"({"pretrain": {"temprature": 0.1}})";
    const Invocation r = run({"pretrain", "-c", (dir / "bad.json").string(), "-o", (dir / "o").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("temprature") != std::string::npos);
    CHECK(run({"sweep-beta", "-c", cfg.string(), "-o", (dir / "o").string(), "--betas", "1,x"}).code == 2);
}

TEST_CASE("synth-data, pretrain and finetune chain through files") {
    const auto dir = testing::scratch_dir("cli_chain");
    const fs::path cfg = tiny_config(dir);
    REQUIRE(run({"synth-data", "-c", cfg.string(), "-o", (dir / "data").string()}).code == 0);
    const CanonicalDataset ds = load_canonical(dir / "data");
    CHECK(ds == generate_synthetic(load_run_config(cfg).synth));

    REQUIRE(run({"pretrain", "-c", cfg.string(), "-d", (dir / "data").string(), "-o", (dir / "pre").string()}).code == 0);
    CHECK(fs::exists(dir / "pre" / "inertial.ckpt"));
    CHECK(fs::exists(dir / "pre" / "skeleton.ckpt"));
    CHECK(slurp(dir / "pre" / "loss_history.csv").rfind("epoch,mean_loss,learning_rate\n", 0) == 0);

    const Invocation fine = run({"finetune", "-c", cfg.string(), "-d", (dir / "data").string(), "-e",
                                 (dir / "pre").string(), "-o", (dir / "fine").string()});
    REQUIRE(fine.code == 0);
    CHECK(fs::exists(dir / "fine" / "metrics.csv"));
    CHECK(fs::exists(dir / "fine" / "metrics.json"));
    CHECK(fs::exists(dir / "fine" / "resolved_config.json"));

    CHECK(run({"finetune", "-c", cfg.string(), "-o", (dir / "fine2").string()}).code == 2);
}

TEST_CASE("re-running from the echoed config reproduces outputs bitwise") {
    const auto dir = testing::scratch_dir("cli_echo");
    const fs::path cfg = tiny_config(dir);
    REQUIRE(run({"eval", "-c", cfg.string(), "-o", (dir / "a").string(), "--methods", "cmc,supervised"}).code == 0);
    REQUIRE(run({"eval", "-c", (dir / "a" / "resolved_config.json").string(), "-o", (dir / "b").string()}).code == 0);
    CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
    CHECK(slurp(dir / "a" / "metrics.json") == slurp(dir / "b" / "metrics.json"));
    CHECK(slurp(dir / "a" / "resolved_config.json") == slurp(dir / "b" / "resolved_config.json"));
}

TEST_CASE("limited-labels writes one row per method and fraction") {
    const auto dir = testing::scratch_dir("cli_limited");
    const fs::path cfg = tiny_config(dir);
    const Invocation r = run({"limited-labels", "-c", cfg.string(), "-o", (dir / "l").string(), "--fractions",
                              "0.02,0.05,0.10,0.25,0.50", "--methods", "cmc,supervised"});
    REQUIRE(r.code == 0);
    const Json j = Json::parse(slurp(dir / "l" / "limited_labels.json"));
    CHECK(j["rows"].size() == 10);
}
