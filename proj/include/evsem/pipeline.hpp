#pragma once

// End-to-end glue: dataset files on disk, map building, and ablation sweeps.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evsem/config_io.hpp"
#include "evsem/errors.hpp"
#include "evsem/metrics.hpp"
#include "evsem/pose.hpp"
#include "evsem/scan_io.hpp"
#include "evsem/synthetic.hpp"
#include "evsem/text.hpp"
#include "evsem/voxel_map.hpp"

namespace evsem {

inline constexpr std::string_view kScanExtension = ".esm";

/// Transforms a sensor-frame scan into the world frame and integrates it.
inline void integrate_scan(VoxelMap& map, const Pose& pose, std::span<const SemanticPoint> sensor_points) {
    const auto world = transform_points(pose, sensor_points);
    map.update_scan(world);
}

inline VoxelMap build_map(const MapConfig& config, const SyntheticDataset& data) {
    VoxelMap map(config);
    for (const auto& scan : data.scans) integrate_scan(map, scan.pose, scan.points);
    return map;
}

/// Scan files (*.esm) directly under `dir`, in lexicographic filename order.
inline std::vector<std::filesystem::path> list_scan_files(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ValidationError("scan directory " + dir.string() + " does not exist");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == kScanExtension) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

struct DatasetLayout {
    std::filesystem::path scans_dir;
    std::filesystem::path poses;
    std::filesystem::path truth;
};

inline DatasetLayout dataset_layout(const std::filesystem::path& dir) {
    return {dir / "scans", dir / "poses.txt", dir / "truth.txt"};
}

inline std::string scan_filename(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scan_%05zu.esm", index);
    return buf;
}

/// Writes scans, poses and ground truth under `dir`.
inline DatasetLayout write_dataset(const std::filesystem::path& dir, const SyntheticDataset& data, std::size_t num_classes) {
    const DatasetLayout layout = dataset_layout(dir);
    std::filesystem::create_directories(layout.scans_dir);
    std::vector<Pose> poses;
    for (std::size_t s = 0; s < data.scans.size(); ++s) {
        write_scan((layout.scans_dir / scan_filename(s)).string(), data.scans[s].points, num_classes);
        poses.push_back(data.scans[s].pose);
    }
    {
        std::ofstream out(layout.poses, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + layout.poses.string() + " for writing");
        write_poses(out, poses);
    }
    write_ground_truth(layout.truth.string(), data.truth);
    return layout;
}

/// Reads scans from `scans_dir` and pairs the n-th file with the n-th pose.
inline VoxelMap build_map_from_files(const MapConfig& config, const std::filesystem::path& scans_dir,
                                     const std::filesystem::path& poses_path) {
    const auto files = list_scan_files(scans_dir);
    const auto poses = read_poses(poses_path.string());
    if (poses.size() != files.size()) {
        throw ValidationError("found " + std::to_string(files.size()) + " scan files but " + std::to_string(poses.size()) + " poses");
    }
    VoxelMap map(config);
    for (std::size_t s = 0; s < files.size(); ++s) {
        const Scan scan = read_scan(files[s].string());
        if (scan.num_classes != config.num_classes) {
            throw ValidationError(files[s].string() + " declares K=" + std::to_string(scan.num_classes) + " but the config has num_classes=" +
                                  std::to_string(config.num_classes));
        }
        integrate_scan(map, poses[s], scan.points);
    }
    return map;
}

// Ablation sweeps.

inline const std::vector<std::string>& sweepable_params() {
    static const std::vector<std::string> names{"weighting", "label_mode", "length_scale", "resolution", "w_min", "noise_rate"};
    return names;
}

struct AblationRow {
    std::string value;
    MetricsReport metrics;
    double duration_s = 0.0;
};

/// Applies one sweep value. `resolution` moves both the map and the
/// ground-truth grid; `noise_rate` changes the generated data.
inline void apply_sweep_value(const std::string& param, const std::string& value, MapConfig& cfg, SyntheticSceneSpec& spec) {
    const auto number = [&]() {
        const auto d = text::parse_double(value);
        if (!d) throw ValidationError("sweep value '" + value + "' for " + param + " is not a number");
        return *d;
    };
    if (param == "weighting") cfg.weighting = parse_weighting(value);
    else if (param == "label_mode") cfg.label_mode = parse_label_mode(value);
    else if (param == "length_scale") cfg.kernel.length_scale = number();
    else if (param == "resolution") cfg.resolution = spec.resolution = number();
    else if (param == "w_min") cfg.weight_floor = number();
    else if (param == "noise_rate") spec.noise_rate = number();
    else {
        std::string valid;
        for (const auto& n : sweepable_params()) valid += (valid.empty() ? "" : ", ") + n;
        throw ValidationError("unknown sweep parameter '" + param + "'; valid: " + valid);
    }
    cfg.validate();
    spec.validate();
}

inline std::vector<AblationRow> run_ablation(const SyntheticSceneSpec& base_spec, const MapConfig& base_cfg, const std::string& param,
                                             const std::vector<std::string>& values, EvalOptions options = {}) {
    if (values.empty()) throw ValidationError("sweep needs at least one value");
    // Validate every value before doing any work.
    for (const auto& v : values) {
        MapConfig cfg = base_cfg;
        SyntheticSceneSpec spec = base_spec;
        apply_sweep_value(param, v, cfg, spec);
    }
    std::vector<AblationRow> rows;
    for (const auto& v : values) {
        MapConfig cfg = base_cfg;
        SyntheticSceneSpec spec = base_spec;
        apply_sweep_value(param, v, cfg, spec);
        const auto start = std::chrono::steady_clock::now();
        const SyntheticDataset data = generate_synthetic(spec);
        const VoxelMap map = build_map(cfg, data);
        MetricsReport metrics = evaluate(map, data.truth, options);
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        rows.push_back({v, std::move(metrics), elapsed.count()});
    }
    return rows;
}

}  // namespace evsem
