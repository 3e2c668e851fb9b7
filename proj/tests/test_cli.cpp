#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "edgechain/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Out {
    int code = 0;
    std::string out;
    std::string err;
};

Out cli(std::vector<std::string> args) {
    args.insert(args.begin(), "edgechain");
    std::vector<const char*> argv;
    for (auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = edgechain::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("edgechain-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) +
                "-" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        config_ = (dir_ / "small.jsonc").string();
        std::ofstream(config_) << R"({
  // tiny run
  "seeds": [1],
  "timeslots": 15,
  "system": {"alpha": 100, "beta": 1.35, "capacity": [300, 250, 250, 250]},
  "fleet": {"devices_per_level": 3, "legacy_devices": 1},
  "ledger": {"difficulty_bits": 4}
})";
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path dir_;
    std::string config_;
};

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_F(Cli, RunWritesArtifactsAndReplayPasses) {
    const auto out = dir_ / "run";
    auto r = cli({"run", "--config", config_, "--out", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"manifest.json", "config.json", "metrics.csv"}) EXPECT_TRUE(fs::exists(out / f)) << f;
    for (const char* f : {"chain.jsonl", "events.jsonl", "decisions.jsonl", "credit_traj.csv", "utilization.csv",
                          "state.json"}) {
        EXPECT_TRUE(fs::exists(out / "seed-1" / f)) << f;
    }
    auto rp = cli({"replay", (out / "seed-1" / "chain.jsonl").string()});
    EXPECT_EQ(rp.code, 0) << rp.err;
    EXPECT_NE(rp.out.find("audit: PASS"), std::string::npos);
    EXPECT_NE(rp.out.find("matches"), std::string::npos);
}

TEST_F(Cli, FlippedByteFailsAudit) {
    const auto out = dir_ / "run";
    ASSERT_EQ(cli({"run", "--config", config_, "--out", out.string()}).code, 0);
    const auto chain = out / "seed-1" / "chain.jsonl";
    std::string text = read(chain);
    const auto pos = text.find("\"nonce\":") + 8;
    text[pos] = text[pos] == '1' ? '2' : '1';
    write(chain, text);
    auto rp = cli({"replay", chain.string()});
    EXPECT_EQ(rp.code, 2);
    EXPECT_NE(rp.out.find("audit: FAIL") + rp.err.find("audit: FAIL"), 2 * std::string::npos);
}

TEST_F(Cli, EmptyChainFileIsAnError) {
    write(dir_ / "empty.jsonl", "");
    EXPECT_EQ(cli({"replay", (dir_ / "empty.jsonl").string()}).code, 1);
}

TEST_F(Cli, MissingAlphaIsKeyedError) {
    write(dir_ / "bad.json", R"({"system": {"capacity": [1, 1, 1, 1]}})");
    auto r = cli({"run", "--config", (dir_ / "bad.json").string(), "--out", (dir_ / "x").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("system.alpha"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir_ / "x" / "seed-1"));
}

TEST_F(Cli, UnknownSchedulerRejected) {
    auto r = cli({"compare", "--config", config_, "--scheduler", "pricing,lottery", "--out", (dir_ / "c").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("lottery"), std::string::npos);
}

TEST_F(Cli, UnwritableOutputFailsBeforeSimulation) {
    write(dir_ / "file", "x");
    auto r = cli({"run", "--config", config_, "--out", (dir_ / "file" / "sub").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(Cli, EnvironmentSuppliesOutputDir) {
    const auto env_dir = dir_ / "from-env";
    ::setenv(edgechain::cli::kOutEnv, env_dir.c_str(), 1);
    auto r = cli({"sweep-beta", "--config", config_, "--beta", "1.0,1.35", "--jobs", "1"});
    ::unsetenv(edgechain::cli::kOutEnv);
    ASSERT_EQ(r.code, 0) << r.err;
    ASSERT_TRUE(fs::exists(env_dir / "beta_sweep.csv"));
    const std::string csv = read(env_dir / "beta_sweep.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "beta,seed,acceptance_rate");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST_F(Cli, CompareAndScaleWriteCsvs) {
    auto r = cli({"compare", "--config", config_, "--out", (dir_ / "cmp").string(), "--jobs", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir_ / "cmp" / "scheduler_cmp.csv"));
    r = cli({"scale", "--config", config_, "--scale", "1,0.5", "--out", (dir_ / "sc").string(), "--jobs", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string csv = read(dir_ / "sc" / "scale_sweep.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 3);
}

TEST_F(Cli, VersionAndUsage) {
    auto v = cli({"--version"});
    EXPECT_EQ(v.code, 0);
    EXPECT_NE(v.out.find(edgechain::cli::kVersion), std::string::npos);
    EXPECT_EQ(cli({}).code, 1);
}
