#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "evsem/evsem.hpp"

using namespace evsem;
namespace fs = std::filesystem;

namespace {

Pose random_pose(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Eigen::Quaterniond q = Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng)).normalized();
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = q.toRotationMatrix();
    m.topRightCorner<3, 1>() = Vec3(u(rng), u(rng), u(rng)) * 5.0;
    return Pose(m);
}

std::vector<SemanticPoint> random_points(std::mt19937_64& rng, std::size_t n, std::size_t k) {
    std::uniform_real_distribution<double> pos(-10.0, 10.0);
    std::exponential_distribution<double> ev(0.3);
    std::vector<SemanticPoint> pts;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> e(k);
        for (auto& v : e) v = ev(rng);
        pts.push_back({{pos(rng), pos(rng), pos(rng)}, EvidenceVector(e)});
    }
    return pts;
}

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("evsem_test_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST(Pose, RejectsInvalidMatrices) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m(0, 0) = 2.0;
    EXPECT_THROW(Pose{m}, ValidationError);
    m = Eigen::Matrix4d::Identity();
    m(0, 0) = -1.0;  // reflection
    EXPECT_THROW(Pose{m}, ValidationError);
    m = Eigen::Matrix4d::Identity();
    m(3, 0) = 0.5;
    EXPECT_THROW(Pose{m}, ValidationError);
}

TEST(TransformPoints, IdentityAndTranslation) {
    std::mt19937_64 rng(1);
    const auto pts = random_points(rng, 20, 3);
    EXPECT_EQ(transform_points(Pose(), pts), pts);
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m(0, 3) = 1.0;
    const auto moved = transform_points(Pose(m), pts);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_EQ(moved[i].position.x(), pts[i].position.x() + 1.0);
        EXPECT_EQ(moved[i].position.y(), pts[i].position.y());
        EXPECT_EQ(moved[i].payload, pts[i].payload);
    }
}

TEST(TransformPoints, CompositionMatchesTwoSteps) {
    std::mt19937_64 rng(2);
    for (int n = 0; n < 50; ++n) {
        const Pose a = random_pose(rng), b = random_pose(rng);
        const auto pts = random_points(rng, 30, 3);
        const auto once = transform_points(a * b, pts);
        const auto twice = transform_points(a, transform_points(b, pts));
        for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_LT((once[i].position - twice[i].position).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(PoseFile, RoundTripAndErrors) {
    std::mt19937_64 rng(3);
    std::vector<Pose> poses{random_pose(rng), random_pose(rng), Pose()};
    std::stringstream ss;
    write_poses(ss, poses);
    const auto back = read_poses(ss);
    ASSERT_EQ(back.size(), poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) EXPECT_EQ(back[i].matrix(), poses[i].matrix());

    std::stringstream bad("1 0 0 0 0 1 0 0 0 0 1\n");
    EXPECT_THROW(read_poses(bad), ParseError);
    std::stringstream skew("2 0 0 0 0 1 0 0 0 0 1 0\n");
    EXPECT_THROW(read_poses(skew), ParseError);
}

TEST(ScanFormat, EmptyAndSinglePoint) {
    std::stringstream empty("ESM1 0 3\n");
    const Scan s0 = read_scan(empty);
    EXPECT_TRUE(s0.points.empty());
    EXPECT_EQ(s0.num_classes, 3u);

    std::stringstream one("ESM1 1 3\n0.5 -1.25 2 0 9 0.5\n");
    const Scan s1 = read_scan(one);
    ASSERT_EQ(s1.points.size(), 1u);
    EXPECT_EQ(s1.points[0].position, Vec3(0.5, -1.25, 2.0));
    EXPECT_EQ(std::get<EvidenceVector>(s1.points[0].payload), EvidenceVector({0, 9, 0.5}));
}

TEST(ScanFormat, RoundTripRandomPoints) {
    std::mt19937_64 rng(4);
    const auto pts = random_points(rng, 1000, 5);
    std::stringstream ss;
    write_scan(ss, pts, 5);
    const Scan back = read_scan(ss);
    EXPECT_EQ(back.num_classes, 5u);
    EXPECT_EQ(back.points, pts);
}

TEST(ScanFormat, HardLabelsBecomeEquivalentEvidence) {
    const std::vector<SemanticPoint> pts{{Vec3(1, 2, 3), HardLabel{1, 0.75}}};
    std::stringstream ss;
    write_scan(ss, pts, 4);
    const Scan back = read_scan(ss);
    const auto& e = std::get<EvidenceVector>(back.points[0].payload);
    EXPECT_EQ(e[0], 0.0);
    EXPECT_NEAR(vacuity(dirichlet_from_evidence(e)), 0.25, 1e-15);
}

TEST(ScanFormat, ErrorsCarryLineNumbers) {
    const auto line_of = [](const std::string& body) -> std::size_t {
        std::stringstream ss(body);
        try {
            read_scan(ss);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of("ESM2 1 3\n"), 1u);
    EXPECT_EQ(line_of("ESM1 x 3\n"), 1u);
    EXPECT_EQ(line_of("ESM1 2 3\n0 0 0 1 1 1\n0 0 0 1 1\n"), 3u);
    EXPECT_EQ(line_of("ESM1 1 3\n0 0 0 1 -1 1\n"), 2u);
    EXPECT_EQ(line_of("ESM1 1 3\n0 nan 0 1 1 1\n"), 2u);
    EXPECT_EQ(line_of("ESM1 1 3\n0 0 0 1 1 inf\n"), 2u);
    EXPECT_NE(line_of("ESM1 2 3\n0 0 0 1 1 1\n"), 0u);  // truncated
    EXPECT_EQ(line_of("ESM1 1 3\n0 0 0 1 1 1\n0 0 0 1 1 1\n"), 3u);
    EXPECT_NE(line_of(""), 0u + 1u);  // missing header still throws
}

TEST(MapFormat, EmptyAndSingleVoxelRoundTrip) {
    MapConfig cfg;
    cfg.num_classes = 5;
    cfg.label_mode = LabelMode::soft_probs;
    cfg.weighting = Weighting::uniform;
    cfg.weight_floor = 0.125;
    VoxelMap empty(cfg);
    const VoxelMap back = decode_map(encode_map(empty));
    EXPECT_EQ(back.config(), cfg);
    EXPECT_TRUE(back.empty());

    VoxelMap one(cfg);
    const std::vector<double> alpha{0.001, 3.5, 0.25, 1e-3, 7.0};
    one.assign_cell({-4, 0, 9}, alpha);
    one.set_scan_count(3);
    const VoxelMap back1 = decode_map(encode_map(one));
    EXPECT_EQ(back1.scan_count(), 3u);
    const auto got = *back1.find({-4, 0, 9});
    EXPECT_TRUE(std::equal(got.begin(), got.end(), alpha.begin()));
}

TEST(MapFormat, RandomMapBitIdenticalThroughFile) {
    std::mt19937_64 rng(5);
    MapConfig cfg;
    cfg.num_classes = 4;
    VoxelMap map(cfg);
    std::uniform_int_distribution<std::int32_t> idx(-500, 500);
    std::uniform_real_distribution<double> a(0.001, 100.0);
    while (map.size() < 10000) {
        std::vector<double> alpha(4);
        for (auto& v : alpha) v = a(rng);
        map.assign_cell({idx(rng), idx(rng), idx(rng)}, alpha);
    }
    const fs::path dir = temp_dir("map");
    serialize_map(map, dir / "m.bin");
    EXPECT_FALSE(fs::exists(dir / "m.bin.tmp"));
    const VoxelMap back = deserialize_map(dir / "m.bin");
    ASSERT_EQ(back.sorted_keys(), map.sorted_keys());
    map.for_each([&](const VoxelKey& k, std::span<const double> alpha) {
        const auto got = *back.find(k);
        for (std::size_t c = 0; c < alpha.size(); ++c) EXPECT_EQ(std::bit_cast<std::uint64_t>(got[c]), std::bit_cast<std::uint64_t>(alpha[c]));
    });
    EXPECT_EQ(encode_map(back), encode_map(map));
}

TEST(MapFormat, LoadErrors) {
    MapConfig cfg;
    VoxelMap map(cfg);
    const std::vector<double> alpha{1.0, 2.0, 3.0};
    map.assign_cell({1, 2, 3}, alpha);
    const auto bytes = encode_map(map);

    auto version = bytes;
    version[6] = '2';
    EXPECT_THROW(decode_map(version), LoadError);

    auto magic = bytes;
    magic[0] = 'X';
    EXPECT_THROW(decode_map(magic), LoadError);

    for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() - 1}) {
        EXPECT_THROW(decode_map({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)}), LoadError) << cut;
    }

    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(decode_map(trailing), LoadError);

    // alpha below the prior violates the map invariant
    auto below = bytes;
    const double tiny = 1e-9;
    const auto bits = std::bit_cast<std::uint64_t>(tiny);
    const std::size_t first_alpha = bytes.size() - 3 * 8;
    for (int b = 0; b < 8; ++b) below[first_alpha + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(bits >> (8 * b));
    EXPECT_THROW(decode_map(below), LoadError);

    EXPECT_THROW(deserialize_map("/nonexistent/evsem.map"), LoadError);
}

TEST(MapConfigFile, ParsesAndRejects) {
    std::stringstream ok(
        "# desk scene\nresolution=0.05\nnum_classes=5\nprior_alpha=0.01\nlength_scale=0.2\nsignal_scale=2\n"
        "weight_floor=0.1\nlabel_mode=soft_probs\nweighting=uniform\n");
    const MapConfig cfg = map_config_from(read_key_values(ok, "ok"));
    EXPECT_EQ(cfg.resolution, 0.05);
    EXPECT_EQ(cfg.num_classes, 5u);
    EXPECT_EQ(cfg.kernel.length_scale, 0.2);
    EXPECT_EQ(cfg.label_mode, LabelMode::soft_probs);
    EXPECT_EQ(cfg.weighting, Weighting::uniform);

    std::stringstream round;
    write_key_values(round, map_config_entries(cfg));
    EXPECT_EQ(map_config_from(read_key_values(round, "round")), cfg);

    for (const char* bad : {"resolution=-1\n", "unknown=1\n", "weighting=sometimes\n", "resolution\n", "num_classes=1\n",
                            "resolution=0.1\nresolution=0.2\n", "num_classes=-3\n"}) {
        std::stringstream ss(bad);
        EXPECT_THROW(map_config_from(read_key_values(ss, "bad")), ParseError) << bad;
    }
}

TEST(SyntheticSpecFile, RoundTrip) {
    SyntheticSceneSpec spec;
    spec.seed = 1234;
    spec.noise_rate = 0.4;
    spec.vacuity_correlation = 0.5;
    std::stringstream ss;
    write_key_values(ss, synthetic_spec_entries(spec));
    EXPECT_EQ(synthetic_spec_from(read_key_values(ss, "spec")), spec);
    std::stringstream bad("noise_rate=1.5\n");
    EXPECT_THROW(synthetic_spec_from(read_key_values(bad, "bad")), ParseError);
}
