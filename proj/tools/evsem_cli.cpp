// evsem: build, evaluate and query evidential semantic maps, synthesize
// desk-scale datasets and run ablation sweeps.
//
// Exit codes: 0 success, 1 validation or parse failure, 2 internal error.

#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "evsem/evsem.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInternal = 2;

using Entries = std::vector<std::pair<std::string, std::string>>;

class Manifest {
public:
    explicit Manifest(std::string command) : start_(std::chrono::steady_clock::now()) { add("command", std::move(command)); }

    void add(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }

    void add_all(const std::string& prefix, const Entries& entries) {
        for (const auto& [k, v] : entries) add(prefix + k, v);
    }

    void add_metrics(const std::string& prefix, const evsem::MetricsReport& m) {
        add(prefix + "accuracy", evsem::text::format_exact(m.overall_accuracy));
        add(prefix + "miou", evsem::text::format_exact(m.miou));
        add(prefix + "evaluated_voxels", std::to_string(m.evaluated_voxels));
    }

    /// Writes to `path`, or to stderr when no path is given.
    void emit(const std::optional<fs::path>& path) {
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
        add("duration_s", evsem::text::format_fixed(elapsed.count(), 6));
        if (!path) {
            evsem::write_key_values(std::cerr, entries_);
            return;
        }
        std::ofstream out(*path, std::ios::binary | std::ios::trunc);
        if (!out) throw evsem::Error("cannot write manifest " + path->string());
        evsem::write_key_values(out, entries_);
    }

private:
    std::chrono::steady_clock::time_point start_;
    Entries entries_;
};

std::optional<fs::path> manifest_path(const std::string& flag, const fs::path& fallback) {
    if (!flag.empty()) return fs::path(flag);
    return fallback;
}

std::optional<fs::path> manifest_path(const std::string& flag) {
    if (!flag.empty()) return fs::path(flag);
    return std::nullopt;
}

void print_metrics(std::ostream& out, const evsem::MetricsReport& m) {
    using evsem::text::format_exact;
    out << "accuracy=" << format_exact(m.overall_accuracy) << '\n';
    out << "miou=" << format_exact(m.miou) << '\n';
    out << "evaluated_voxels=" << m.evaluated_voxels << '\n';
    for (std::size_t c = 0; c < m.per_class_iou.size(); ++c) {
        out << "iou_" << c << '=' << (m.per_class_iou[c] ? format_exact(*m.per_class_iou[c]) : std::string("absent")) << '\n';
    }
    for (std::size_t t = 0; t < m.confusion.size(); ++t) {
        out << "confusion_" << t << '=';
        for (std::size_t p = 0; p < m.confusion[t].size(); ++p) out << (p ? "," : "") << m.confusion[t][p];
        out << '\n';
    }
}

evsem::Vec3 parse_point(const std::string& s) {
    const auto parts = evsem::text::split(s, ',');
    if (parts.size() != 3) throw evsem::ValidationError("--point expects \"x,y,z\", got \"" + s + "\"");
    evsem::Vec3 p;
    for (int i = 0; i < 3; ++i) {
        const auto v = evsem::text::parse_double(parts[static_cast<std::size_t>(i)]);
        if (!v || !std::isfinite(*v)) throw evsem::ValidationError("--point component '" + std::string(parts[static_cast<std::size_t>(i)]) + "' is not a finite number");
        p[i] = *v;
    }
    return p;
}

struct BuildArgs {
    std::string scans, poses, config, out, manifest;
};

int cmd_build(const BuildArgs& a) {
    Manifest manifest("build");
    const evsem::MapConfig cfg = evsem::read_map_config(a.config);
    const evsem::VoxelMap map = evsem::build_map_from_files(cfg, a.scans, a.poses);
    evsem::serialize_map(map, a.out);
    manifest.add_all("config.", evsem::map_config_entries(cfg));
    manifest.add("input.scans", a.scans);
    manifest.add("input.poses", a.poses);
    manifest.add("input.config", a.config);
    manifest.add("output.map", a.out);
    manifest.add("scan_count", std::to_string(map.scan_count()));
    manifest.add("voxels", std::to_string(map.size()));
    manifest.emit(manifest_path(a.manifest, fs::path(a.out + ".manifest")));
    return kExitOk;
}

struct EvalArgs {
    std::string map, truth, manifest;
    bool include_unobserved = true;
};

int cmd_eval(const EvalArgs& a) {
    Manifest manifest("eval");
    const evsem::VoxelMap map = evsem::deserialize_map(a.map);
    const evsem::GroundTruth truth = evsem::read_ground_truth(a.truth);
    const evsem::MetricsReport report = evsem::evaluate(map, truth, {a.include_unobserved});
    print_metrics(std::cout, report);
    manifest.add_all("config.", evsem::map_config_entries(map.config()));
    manifest.add("input.map", a.map);
    manifest.add("input.truth", a.truth);
    manifest.add("include_unobserved", a.include_unobserved ? "true" : "false");
    manifest.add_metrics("metrics.", report);
    manifest.emit(manifest_path(a.manifest));
    return kExitOk;
}

struct QueryArgs {
    std::string map, point, manifest;
};

int cmd_query(const QueryArgs& a) {
    Manifest manifest("query");
    const evsem::Vec3 p = parse_point(a.point);
    const evsem::VoxelMap map = evsem::deserialize_map(a.map);
    const evsem::VoxelQuery q = map.query_point(p);
    std::cout << "class=" << q.label << " probs=";
    for (std::size_t c = 0; c < q.probs.size(); ++c) std::cout << (c ? "," : "") << evsem::text::format_fixed(q.probs[c], 6);
    std::cout << " vacuity=" << evsem::text::format_fixed(q.vacuity, 6) << '\n';
    manifest.add_all("config.", evsem::map_config_entries(map.config()));
    manifest.add("input.map", a.map);
    manifest.add("input.point", a.point);
    manifest.emit(manifest_path(a.manifest));
    return kExitOk;
}

struct SynthArgs {
    std::string spec, out, manifest;
};

int cmd_synth(const SynthArgs& a) {
    Manifest manifest("synth");
    const evsem::SyntheticSceneSpec spec = evsem::read_synthetic_spec(a.spec);
    const evsem::SyntheticDataset data = evsem::generate_synthetic(spec);
    const auto layout = evsem::write_dataset(a.out, data, spec.num_classes);
    manifest.add_all("spec.", evsem::synthetic_spec_entries(spec));
    manifest.add("seed", std::to_string(spec.seed));
    manifest.add("input.spec", a.spec);
    manifest.add("output.scans", layout.scans_dir.string());
    manifest.add("output.poses", layout.poses.string());
    manifest.add("output.truth", layout.truth.string());
    // Kept outside the output directory so reruns leave identical directory contents.
    fs::path out_dir = fs::path(a.out);
    if (!out_dir.has_filename()) out_dir = out_dir.parent_path();
    manifest.emit(manifest_path(a.manifest, fs::path(out_dir.string() + ".manifest")));
    return kExitOk;
}

struct AblateArgs {
    std::string spec, sweep, out, config, manifest;
    bool include_unobserved = true;
};

int cmd_ablate(const AblateArgs& a) {
    Manifest manifest("ablate");
    const evsem::SyntheticSceneSpec spec = evsem::read_synthetic_spec(a.spec);
    evsem::MapConfig cfg;
    cfg.num_classes = spec.num_classes;
    cfg.resolution = spec.resolution;
    if (!a.config.empty()) {
        cfg = evsem::read_map_config(a.config);
        if (cfg.num_classes != spec.num_classes) throw evsem::ValidationError("config num_classes does not match the scene spec");
        if (cfg.resolution != spec.resolution) throw evsem::ValidationError("config resolution must equal the scene spec's ground-truth resolution");
    }

    const auto eq = a.sweep.find('=');
    if (eq == std::string::npos) throw evsem::ValidationError("--sweep expects PARAM=v1,v2,...");
    const std::string param(evsem::text::trim(std::string_view(a.sweep).substr(0, eq)));
    std::vector<std::string> values;
    for (auto v : evsem::text::split(std::string_view(a.sweep).substr(eq + 1), ',')) values.emplace_back(v);

    const auto rows = evsem::run_ablation(spec, cfg, param, values, {a.include_unobserved});

    const fs::path out_path(a.out);
    fs::path tmp = out_path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw evsem::Error("cannot write " + tmp.string());
        out << "param,accuracy,miou,duration_s\n";
        for (const auto& row : rows) {
            out << row.value << ',' << evsem::text::format_exact(row.metrics.overall_accuracy) << ','
                << evsem::text::format_exact(row.metrics.miou) << ',' << evsem::text::format_fixed(row.duration_s, 6) << '\n';
        }
    }
    fs::rename(tmp, out_path);

    manifest.add_all("spec.", evsem::synthetic_spec_entries(spec));
    manifest.add_all("config.", evsem::map_config_entries(cfg));
    manifest.add("seed", std::to_string(spec.seed));
    manifest.add("sweep", a.sweep);
    manifest.add("input.spec", a.spec);
    if (!a.config.empty()) manifest.add("input.config", a.config);
    manifest.add("output.csv", a.out);
    for (const auto& row : rows) manifest.add_metrics("metrics." + row.value + ".", row.metrics);
    manifest.emit(manifest_path(a.manifest, fs::path(a.out + ".manifest")));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Evidential semantic mapping with uncertainty-aware Bayesian kernel inference"};
    app.require_subcommand(1);

    BuildArgs build;
    auto* build_cmd = app.add_subcommand("build", "Build a map from scans and poses");
    build_cmd->add_option("--scans", build.scans, "Directory of *.esm scan files")->required();
    build_cmd->add_option("--poses", build.poses, "Pose file, one line per scan")->required();
    build_cmd->add_option("--config", build.config, "Map config (key=value)")->required();
    build_cmd->add_option("--out", build.out, "Output map file")->required();
    build_cmd->add_option("--manifest", build.manifest, "Manifest path (default: <out>.manifest)");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a map against ground truth");
    eval_cmd->add_option("--map", eval.map, "Map file")->required();
    eval_cmd->add_option("--truth", eval.truth, "Ground-truth file (i j k class_id)")->required();
    eval_cmd->add_option("--include-unobserved", eval.include_unobserved, "Score voxels absent from the map (default true)");
    eval_cmd->add_option("--manifest", eval.manifest, "Manifest path (default: stderr)");

    QueryArgs query;
    auto* query_cmd = app.add_subcommand("query", "Query the map at a point");
    query_cmd->add_option("--map", query.map, "Map file")->required();
    query_cmd->add_option("--point", query.point, "\"x,y,z\" in meters")->required();
    query_cmd->add_option("--manifest", query.manifest, "Manifest path (default: stderr)");

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
    synth_cmd->add_option("--spec", synth.spec, "Scene spec (key=value)")->required();
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();
    synth_cmd->add_option("--manifest", synth.manifest, "Manifest path (default: <out>.manifest)");

    AblateArgs ablate;
    auto* ablate_cmd = app.add_subcommand("ablate", "Sweep one parameter over synthetic data");
    ablate_cmd->add_option("--spec", ablate.spec, "Scene spec (key=value)")->required();
    ablate_cmd->add_option("--sweep", ablate.sweep, "PARAM=v1,v2,...")->required();
    ablate_cmd->add_option("--out", ablate.out, "Output CSV")->required();
    ablate_cmd->add_option("--config", ablate.config, "Base map config (key=value)");
    ablate_cmd->add_option("--include-unobserved", ablate.include_unobserved, "Score voxels absent from the map (default true)");
    ablate_cmd->add_option("--manifest", ablate.manifest, "Manifest path (default: <out>.manifest)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*build_cmd) return cmd_build(build);
        if (*eval_cmd) return cmd_eval(eval);
        if (*query_cmd) return cmd_query(query);
        if (*synth_cmd) return cmd_synth(synth);
        if (*ablate_cmd) return cmd_ablate(ablate);
    } catch (const evsem::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitInternal;
}
