#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int status = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("dirmax-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    /// Runs the CLI inside the scratch directory.
    Outcome run(const std::string& args) {
        auto out = dir_ / "stdout.txt";
        auto err = dir_ / "stderr.txt";
        std::string cmd = "cd '" + dir_.string() + "' && '" + DIRMAX_CLI + "' " + args + " >'" + out.string() +
                          "' 2>'" + err.string() + "'";
        int raw = std::system(cmd.c_str());
        Outcome r;
        r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    void write(const std::string& name, const std::string& text) {
        std::ofstream os(dir_ / name);
        os << text;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, UnknownFlagIsUsageError) {
    auto r = run("verify --bogus 3");
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
    EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
}

TEST_F(Cli, MissingSubcommandIsUsageError) {
    EXPECT_EQ(run("").status, 2);
    EXPECT_EQ(run("--m 4").status, 2);
    EXPECT_EQ(run("sweep sideways").status, 2);
    EXPECT_EQ(run("maximal").status, 2);
}

TEST_F(Cli, BadValuesAreUsageErrors) {
    EXPECT_EQ(run("kakeya --delta 3/8").status, 2);
    EXPECT_EQ(run("enumerate --delta 3/2").status, 2);
    EXPECT_EQ(run("enumerate --offstep w3").status, 2);
    EXPECT_EQ(run("enumerate --m 4 --mw 3").status, 2);
    EXPECT_EQ(run("verify --lambda0 1/2").status, 2);
    EXPECT_EQ(run("enumerate --config missing.cfg").status, 2);
}

TEST_F(Cli, DeltaSweepWritesHeaderAndOneRowPerDelta) {
    auto r = run("sweep delta --delta 1/8,1/16,1/32 --seeds 1 --out s.csv");
    ASSERT_EQ(r.status, 0) << r.err;
    auto csv = slurp(path("s.csv"));
    EXPECT_EQ(line_count(csv), 4u);
    EXPECT_EQ(csv.rfind("delta,log2_inv_delta,", 0), 0u);
    EXPECT_NE(csv.find("\n1/2^3,3,"), std::string::npos);
    auto fit = slurp(path("s.csv.fit"));
    EXPECT_NE(fit.find("fit_status=ok\n"), std::string::npos);
}

TEST_F(Cli, SweepsAreByteIdenticalAcrossRunsAndWorkerCounts) {
    const std::string kinds[] = {"delta --delta 1/8,1/16 --seeds 1", "lp --delta 1/8,1/16", "logN --m 6 --N 2,4 --seeds 1"};
    for (const auto& kind : kinds) {
        ASSERT_EQ(run("sweep " + kind + " --out a.csv").status, 0) << kind;
        ASSERT_EQ(run("sweep " + kind + " --threads 4 --out b.csv").status, 0);
        ASSERT_EQ(run("sweep " + kind + " --threads 1 --out c.csv").status, 0);
        auto a = slurp(path("a.csv"));
        EXPECT_FALSE(a.empty());
        EXPECT_EQ(a, slurp(path("b.csv"))) << kind;
        EXPECT_EQ(a, slurp(path("c.csv"))) << kind;
    }
}

TEST_F(Cli, VerifyPassesOnTheShippedCorpus) {
    auto r = run("verify --m 4 --out v.txt");
    EXPECT_EQ(r.status, 0) << r.err;
    EXPECT_EQ(r.out, "pass\n");
    auto text = slurp(path("v.txt"));
    EXPECT_NE(text.find("instances=50 lambda0=2\n"), std::string::npos);
    EXPECT_NE(text.find("\nresult: pass\n"), std::string::npos);
    EXPECT_FALSE(fs::exists(path("v.txt.reproducers")));
}

TEST_F(Cli, VerifyIsByteIdenticalAcrossRunsAndWorkerCounts) {
    auto a = run("verify --m 4");
    auto b = run("verify --m 4 --threads 4");
    auto c = run("verify --m 4 --threads 1");
    EXPECT_EQ(a.status, 0);
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(a.out, c.out);
}

TEST_F(Cli, ConfigFileIsOverriddenByFlags) {
    write("run.cfg", "# enumeration setup\nm=5\nmw=2\ndelta=1/4\noffstep=w2\n");
    auto from_file = run("enumerate --config run.cfg");
    ASSERT_EQ(from_file.status, 0) << from_file.err;
    EXPECT_NE(from_file.out.find("m=5\nmw=2\noffstep=w2\ndelta=1/2^2\n"), std::string::npos) << from_file.out;
    auto overridden = run("enumerate --config run.cfg --m 4 --delta 1/2");
    ASSERT_EQ(overridden.status, 0);
    EXPECT_NE(overridden.out.find("m=4\nmw=2\noffstep=w2\ndelta=1/2^1\n"), std::string::npos) << overridden.out;
    write("bad.cfg", "colour=red\n");
    EXPECT_EQ(run("enumerate --config bad.cfg").status, 2);
}

TEST_F(Cli, EnumerateExportsTheFamily) {
    auto r = run("enumerate --m 4 --mw 2 --field identity --out fam.txt");
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_NE(r.out.find("family_size="), std::string::npos);
    EXPECT_EQ(slurp(path("fam.txt")).rfind("family 1", 0), 0u);
}

TEST_F(Cli, DecomposeEmitsVersionedJson) {
    auto r = run("decompose --m 5 --mw 3 --field ladder --delta 1/2");
    ASSERT_EQ(r.status, 0) << r.err;
    auto j = nlohmann::ordered_json::parse(r.out);
    EXPECT_EQ(j.begin().key(), "format");
    EXPECT_EQ(j["format"], "decomposition 1");
    EXPECT_EQ(r.out, run("decompose --m 5 --mw 3 --field ladder --delta 1/2").out);
}

TEST_F(Cli, BadnessWritesTableAndTraces) {
    auto r = run("badness --m 4 --mw 2 --set covered --out b.csv");
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_EQ(slurp(path("b.csv")).rfind("k,base,slope,off,nu,badness\n", 0), 0u);
    EXPECT_EQ(slurp(path("b.csv.shrink.csv")).rfind("step,measure\n", 0), 0u);
    EXPECT_EQ(slurp(path("b.csv.bands.csv")).rfind("k,members,", 0), 0u);
}

TEST_F(Cli, KakeyaInstanceFeedsTheMaximalCommand) {
    auto r = run("kakeya --delta 1/8 --out k");
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_NE(r.out.find("construction=bisect-translate\n"), std::string::npos);
    EXPECT_EQ(slurp(path("k.meta")).rfind("construction=", 0), 0u);
    auto m = run("maximal --input k.grid --field-file k.field --delta 1/8 --out mk.grid");
    ASSERT_EQ(m.status, 0) << m.err;
    auto grid = slurp(path("mk.grid"));
    EXPECT_EQ(grid.rfind("maxgrid 1\nm 6 mw 3 offstep w\n", 0), 0u);
    ASSERT_EQ(run("maximal --input k.grid --field-file k.field --delta 1/8 --threads 1 --out mk2.grid").status, 0);
    EXPECT_EQ(grid, slurp(path("mk2.grid")));
}
