#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "evsem/errors.hpp"
#include "evsem/text.hpp"
#include "evsem/voxel_map.hpp"

namespace evsem {

/// Ground-truth class per voxel, ordered by key.
using GroundTruth = std::map<VoxelKey, std::size_t>;

struct MetricsReport {
    double overall_accuracy = 0.0;
    std::vector<std::optional<double>> per_class_iou;  // nullopt: class absent from evaluated truth
    double miou = 0.0;
    std::uint64_t evaluated_voxels = 0;
    std::vector<std::vector<std::uint64_t>> confusion;  // [truth][predicted]
};

struct EvalOptions {
    /// Score ground-truth voxels the map never touched, as the prior's argmax.
    bool include_unobserved = true;
};

inline MetricsReport metrics_from_confusion(std::vector<std::vector<std::uint64_t>> confusion) {
    const std::size_t k = confusion.size();
    MetricsReport report;
    std::vector<std::uint64_t> row(k, 0), col(k, 0);
    std::uint64_t total = 0, correct = 0;
    for (std::size_t t = 0; t < k; ++t) {
        if (confusion[t].size() != k) throw ValidationError("confusion matrix must be square");
        for (std::size_t p = 0; p < k; ++p) {
            row[t] += confusion[t][p];
            col[p] += confusion[t][p];
            total += confusion[t][p];
        }
        correct += confusion[t][t];
    }
    report.evaluated_voxels = total;
    report.overall_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    report.per_class_iou.assign(k, std::nullopt);
    double iou_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < k; ++c) {
        if (row[c] == 0) continue;
        const std::uint64_t tp = confusion[c][c];
        const std::uint64_t denom = row[c] + col[c] - tp;
        const double iou = static_cast<double>(tp) / static_cast<double>(denom);
        report.per_class_iou[c] = iou;
        iou_sum += iou;
        ++present;
    }
    report.miou = present ? iou_sum / static_cast<double>(present) : 0.0;
    report.confusion = std::move(confusion);
    return report;
}

inline MetricsReport evaluate(const VoxelMap& map, const GroundTruth& truth, EvalOptions options = {}) {
    if (truth.empty()) throw ValidationError("ground truth is empty");
    const std::size_t k = map.num_classes();
    std::vector<std::vector<std::uint64_t>> confusion(k, std::vector<std::uint64_t>(k, 0));
    for (const auto& [key, cls] : truth) {
        if (cls >= k) throw ValidationError("ground-truth class " + std::to_string(cls) + " out of range");
        if (!options.include_unobserved && !map.find(key)) continue;
        ++confusion[cls][map.query_voxel(key).label];
    }
    return metrics_from_confusion(std::move(confusion));
}

inline GroundTruth read_ground_truth(std::istream& in, const std::string& source = "<truth>") {
    GroundTruth truth;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        const auto tok = text::split_ws(line);
        if (tok.size() != 4) throw ParseError(source, lineno, "expected 'i j k class_id'");
        const auto i = text::parse_int<std::int32_t>(tok[0]);
        const auto j = text::parse_int<std::int32_t>(tok[1]);
        const auto l = text::parse_int<std::int32_t>(tok[2]);
        const auto c = text::parse_int<std::size_t>(tok[3]);
        if (!i || !j || !l || !c) throw ParseError(source, lineno, "malformed integer");
        if (!truth.emplace(VoxelKey{*i, *j, *l}, *c).second) throw ParseError(source, lineno, "duplicate voxel");
    }
    return truth;
}

inline GroundTruth read_ground_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open ground-truth file " + path);
    return read_ground_truth(in, path);
}

inline void write_ground_truth(std::ostream& out, const GroundTruth& truth) {
    for (const auto& [key, cls] : truth) out << key.i << ' ' << key.j << ' ' << key.k << ' ' << cls << '\n';
}

inline void write_ground_truth(const std::string& path, const GroundTruth& truth) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path + " for writing");
    write_ground_truth(out, truth);
}

}  // namespace evsem
