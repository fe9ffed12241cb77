#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "evsem/evsem.hpp"

using namespace evsem;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string out;
};

RunResult run(const std::string& args) {
    const std::string cmd = std::string(EVSEM_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    const int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::map<std::string, std::string> key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("evsem_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write_spec(double noise, double gamma, std::uint64_t seed = 5) {
        const fs::path p = dir_ / "scene.spec";
        write_text(p, "seed=" + std::to_string(seed) + "\nextent=2\nnum_classes=4\npoints_per_scan=1200\nnum_scans=3\nnoise_rate=" +
                          text::format_exact(noise) + "\nvacuity_correlation=" + text::format_exact(gamma) + "\n");
        return p;
    }

    fs::path write_config(const std::string& extra = "") {
        const fs::path p = dir_ / "map.cfg";
        write_text(p, "resolution=0.1\nnum_classes=4\n" + extra);
        return p;
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, BuildWithZeroScansGivesEmptyMap) {
    fs::create_directories(dir_ / "scans");
    write_text(dir_ / "poses.txt", "");
    const auto r = run("build --scans " + path("scans") + " --poses " + path("poses.txt") + " --config " + write_config().string() + " --out " +
                       path("m.map"));
    ASSERT_EQ(r.exit_code, 0);
    const auto map = deserialize_map(dir_ / "m.map");
    EXPECT_TRUE(map.empty());
    EXPECT_TRUE(fs::exists(path("m.map.manifest")));
}

TEST_F(CliTest, SinglePointScanAndQuery) {
    fs::create_directories(dir_ / "scans");
    // one point at the center of voxel (2,3,4), one-hot evidence on class 1
    const Vec3 c = voxel_center({2, 3, 4}, 0.1);
    write_text(dir_ / "scans" / "a.esm", "ESM1 1 3\n" + text::format_exact(c.x()) + " " + text::format_exact(c.y()) + " " +
                                             text::format_exact(c.z()) + " 0 1000000 0\n");
    write_text(dir_ / "poses.txt", "1 0 0 0 0 1 0 0 0 0 1 0\n");
    write_text(dir_ / "map.cfg", "resolution=0.1\nnum_classes=3\nweighting=uniform\n");
    ASSERT_EQ(run("build --scans " + path("scans") + " --poses " + path("poses.txt") + " --config " + path("map.cfg") + " --out " + path("m.map")).exit_code, 0);
    const auto map = deserialize_map(dir_ / "m.map");
    const auto alpha = *map.find({2, 3, 4});
    EXPECT_DOUBLE_EQ(alpha[0], 0.001);
    EXPECT_DOUBLE_EQ(alpha[1], 1.001);

    const std::string point = text::format_exact(c.x()) + "," + text::format_exact(c.y()) + "," + text::format_exact(c.z());
    const auto hit = run("query --map " + path("m.map") + " --point \"" + point + "\"");
    ASSERT_EQ(hit.exit_code, 0);
    EXPECT_EQ(hit.out.substr(0, 8), "class=1 ");

    const auto miss = run("query --map " + path("m.map") + " --point \"5,5,5\"");
    ASSERT_EQ(miss.exit_code, 0);
    EXPECT_EQ(miss.out, "class=0 probs=0.333333,0.333333,0.333333 vacuity=1.000000\n");

    EXPECT_EQ(run("query --map " + path("m.map") + " --point \"1,2\"").exit_code, 1);
    EXPECT_EQ(run("query --map " + path("m.map") + " --point \"1,x,2\"").exit_code, 1);
}

TEST_F(CliTest, QueryMatchesLibrary) {
    const auto spec = write_spec(0.3, 0.5);
    ASSERT_EQ(run("synth --spec " + spec.string() + " --out " + path("data")).exit_code, 0);
    ASSERT_EQ(run("build --scans " + path("data/scans") + " --poses " + path("data/poses.txt") + " --config " + write_config().string() +
                  " --out " + path("m.map")).exit_code,
              0);
    const auto map = deserialize_map(dir_ / "m.map");
    for (const Vec3& p : {Vec3(0.55, 0.73, 0.05), Vec3(1.21, 1.9, 0.04), Vec3(-3, 0, 0)}) {
        const auto q = map.query_point(p);
        std::string expected = "class=" + std::to_string(q.label) + " probs=";
        for (std::size_t c = 0; c < q.probs.size(); ++c) expected += (c ? "," : "") + text::format_fixed(q.probs[c], 6);
        expected += " vacuity=" + text::format_fixed(q.vacuity, 6) + "\n";
        const auto r = run("query --map " + path("m.map") + " --point \"" + text::format_exact(p.x()) + "," + text::format_exact(p.y()) +
                           "," + text::format_exact(p.z()) + "\"");
        EXPECT_EQ(r.out, expected);
    }
}

TEST_F(CliTest, SynthIsDeterministic) {
    const auto spec = write_spec(0.4, 1.0);
    ASSERT_EQ(run("synth --spec " + spec.string() + " --out " + path("a")).exit_code, 0);
    ASSERT_EQ(run("synth --spec " + spec.string() + " --out " + path("b")).exit_code, 0);
    std::vector<std::string> names;
    for (const auto& e : fs::recursive_directory_iterator(dir_ / "a")) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir_ / "a");
        names.push_back(rel.string());
        EXPECT_EQ(slurp(e.path()), slurp(dir_ / "b" / rel)) << rel;
    }
    EXPECT_EQ(names.size(), 5u);  // 3 scans, poses, truth
    EXPECT_TRUE(fs::exists(path("a.manifest")));
    EXPECT_EQ(key_values(slurp(dir_ / "a.manifest"))["seed"], "5");
}

TEST_F(CliTest, NoiselessPipelineIsPerfectOnObservedVoxels) {
    const auto spec = write_spec(0.0, 1.0);
    ASSERT_EQ(run("synth --spec " + spec.string() + " --out " + path("data")).exit_code, 0);
    ASSERT_EQ(run("build --scans " + path("data/scans") + " --poses " + path("data/poses.txt") + " --config " + write_config().string() +
                  " --out " + path("m.map")).exit_code,
              0);
    const auto r = run("eval --map " + path("m.map") + " --truth " + path("data/truth.txt") + " --include-unobserved false");
    ASSERT_EQ(r.exit_code, 0);
    const auto kv = key_values(r.out);
    EXPECT_EQ(kv.at("accuracy"), "1");
    EXPECT_EQ(kv.count("miou"), 1u);
    EXPECT_EQ(kv.count("confusion_0"), 1u);
}

TEST_F(CliTest, CliMatchesLibraryPipeline) {
    const auto spec_path = write_spec(0.4, 1.0, 11);
    ASSERT_EQ(run("synth --spec " + spec_path.string() + " --out " + path("data")).exit_code, 0);
    ASSERT_EQ(run("build --scans " + path("data/scans") + " --poses " + path("data/poses.txt") + " --config " + write_config().string() +
                  " --out " + path("m.map")).exit_code,
              0);
    const auto spec = read_synthetic_spec(spec_path.string());
    const auto cfg = read_map_config(write_config().string());
    const auto library_map = build_map(cfg, generate_synthetic(spec));
    EXPECT_EQ(encode_map(deserialize_map(dir_ / "m.map")), encode_map(library_map));

    const auto r = run("eval --map " + path("m.map") + " --truth " + path("data/truth.txt"));
    const auto report = evaluate(library_map, generate_synthetic(spec).truth);
    EXPECT_EQ(key_values(r.out).at("miou"), text::format_exact(report.miou));
}

TEST_F(CliTest, BuildFailuresLeaveNoMap) {
    fs::create_directories(dir_ / "scans");
    write_text(dir_ / "scans" / "a.esm", "ESM1 2 4\n0 0 0 1 1 1 1\n0 0 0 1 1 1\n");
    write_text(dir_ / "poses.txt", "1 0 0 0 0 1 0 0 0 0 1 0\n");
    const auto cfg = write_config();
    EXPECT_EQ(run("build --scans " + path("scans") + " --poses " + path("poses.txt") + " --config " + cfg.string() + " --out " + path("m.map")).exit_code, 1);
    EXPECT_FALSE(fs::exists(dir_ / "m.map"));

    // pose count mismatch
    write_text(dir_ / "scans" / "a.esm", "ESM1 1 4\n0 0 0 1 1 1 1\n");
    write_text(dir_ / "poses.txt", "");
    EXPECT_EQ(run("build --scans " + path("scans") + " --poses " + path("poses.txt") + " --config " + cfg.string() + " --out " + path("m.map")).exit_code, 1);
    EXPECT_FALSE(fs::exists(dir_ / "m.map"));

    // K mismatch against the config
    write_text(dir_ / "poses.txt", "1 0 0 0 0 1 0 0 0 0 1 0\n");
    write_text(dir_ / "map.cfg", "num_classes=3\n");
    EXPECT_EQ(run("build --scans " + path("scans") + " --poses " + path("poses.txt") + " --config " + path("map.cfg") + " --out " + path("m.map")).exit_code, 1);

    // unwritable destination is an internal error
    write_config();
    EXPECT_EQ(run("build --scans " + path("scans") + " --poses " + path("poses.txt") + " --config " + cfg.string() + " --out " +
                  path("missing_dir/m.map")).exit_code,
              2);
}

TEST_F(CliTest, EvalAndArgumentErrors) {
    write_text(dir_ / "empty.txt", "");
    VoxelMap map(MapConfig{});
    serialize_map(map, dir_ / "m.map");
    EXPECT_EQ(run("eval --map " + path("m.map") + " --truth " + path("empty.txt")).exit_code, 1);
    EXPECT_EQ(run("eval --map " + path("nope.map") + " --truth " + path("empty.txt")).exit_code, 1);
    write_text(dir_ / "corrupt.map", "ESMMAP1 garbage");
    write_text(dir_ / "truth.txt", "0 0 0 1\n");
    EXPECT_EQ(run("eval --map " + path("corrupt.map") + " --truth " + path("truth.txt")).exit_code, 1);
    EXPECT_EQ(run("eval --map " + path("m.map")).exit_code, 1);
    EXPECT_EQ(run("frobnicate").exit_code, 1);
    EXPECT_EQ(run("").exit_code, 1);
    EXPECT_EQ(run("--help").exit_code, 0);
}

TEST_F(CliTest, AblateWritesCsv) {
    const auto spec = write_spec(0.4, 1.0);
    ASSERT_EQ(run("ablate --spec " + spec.string() + " --sweep weighting=one_minus_vacuity --out " + path("one.csv")).exit_code, 0);
    std::istringstream one(slurp(dir_ / "one.csv"));
    std::string header, row, extra;
    std::getline(one, header);
    std::getline(one, row);
    EXPECT_EQ(header, "param,accuracy,miou,duration_s");
    EXPECT_EQ(row.substr(0, 18), "one_minus_vacuity,");
    EXPECT_FALSE(std::getline(one, extra));

    ASSERT_EQ(run("ablate --spec " + spec.string() + " --sweep length_scale=0.1,0.3,0.9 --out " + path("ls.csv")).exit_code, 0);
    std::istringstream ls(slurp(dir_ / "ls.csv"));
    std::getline(ls, header);
    int rows = 0;
    while (std::getline(ls, row)) {
        const auto cols = text::split(row, ',');
        ASSERT_EQ(cols.size(), 4u);
        for (int c : {1, 2}) {
            const double v = *text::parse_double(cols[static_cast<std::size_t>(c)]);
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        ++rows;
    }
    EXPECT_EQ(rows, 3);
    EXPECT_TRUE(fs::exists(path("ls.csv.manifest")));
}

TEST_F(CliTest, AblateRejectsUnknownParam) {
    const auto spec = write_spec(0.0, 1.0);
    const std::string cmd = std::string(EVSEM_CLI_PATH) + " ablate --spec " + spec.string() + " --sweep colour=1,2 --out " + path("x.csv") + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    std::string out;
    char buf[1024];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    const int status = pclose(pipe);
    EXPECT_EQ(WEXITSTATUS(status), 1);
    for (const char* name : {"weighting", "label_mode", "length_scale", "resolution", "w_min", "noise_rate"}) {
        EXPECT_NE(out.find(name), std::string::npos) << name;
    }
    EXPECT_FALSE(fs::exists(dir_ / "x.csv"));
}

TEST_F(CliTest, SynthRejectsInvalidSpec) {
    write_text(dir_ / "bad.spec", "num_classes=1\n");
    EXPECT_EQ(run("synth --spec " + path("bad.spec") + " --out " + path("d")).exit_code, 1);
}
