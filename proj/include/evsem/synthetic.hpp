#pragma once

// Seeded desk-scale scene generator standing in for perceptually degraded
// field data.
//
// The scene is a gentle height field over [0, extent)^2 split into bands of
// terrain classes along x. Band edges fall on ground-truth voxel boundaries,
// so each voxel column holds exactly one class. Every scan samples the
// surface by jittered stratification, expresses the points in a random
// sensor frame, and attaches evidence:
//
//   clean point                 high_evidence on the true class
//   corrupted, prob gamma       low_evidence spread uniformly over all classes
//   corrupted, prob 1 - gamma   high_evidence on a random wrong class
//
// A point is corrupted with probability noise_rate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

#include "evsem/errors.hpp"
#include "evsem/metrics.hpp"
#include "evsem/pose.hpp"
#include "evsem/random.hpp"
#include "evsem/voxel_map.hpp"

namespace evsem {

struct SyntheticSceneSpec {
    std::uint64_t seed = 0;
    double extent = 4.0;  // meters along x and y
    std::size_t num_classes = 4;
    std::size_t points_per_scan = 5000;
    std::size_t num_scans = 10;
    double noise_rate = 0.0;
    double vacuity_correlation = 1.0;
    double resolution = 0.1;  // ground-truth voxel size
    double high_evidence = 20.0;
    double low_evidence = 0.2;

    void validate() const {
        if (num_classes < 2) throw ValidationError("synthetic spec: num_classes must be >= 2");
        if (!(extent > 0.0) || !std::isfinite(extent)) throw ValidationError("synthetic spec: extent must be positive");
        if (!(resolution > 0.0) || !std::isfinite(resolution)) throw ValidationError("synthetic spec: resolution must be positive");
        if (extent / resolution > 1e6) throw ValidationError("synthetic spec: extent / resolution is too large");
        if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw ValidationError("synthetic spec: noise_rate must lie in [0,1]");
        if (!(vacuity_correlation >= 0.0 && vacuity_correlation <= 1.0)) {
            throw ValidationError("synthetic spec: vacuity_correlation must lie in [0,1]");
        }
        if (!(high_evidence >= 0.0) || !std::isfinite(high_evidence)) throw ValidationError("synthetic spec: high_evidence must be >= 0");
        if (!(low_evidence >= 0.0) || !std::isfinite(low_evidence)) throw ValidationError("synthetic spec: low_evidence must be >= 0");
    }

    friend bool operator==(const SyntheticSceneSpec&, const SyntheticSceneSpec&) = default;
};

struct SyntheticScan {
    Pose pose;                          // sensor to world
    std::vector<SemanticPoint> points;  // sensor frame
    std::vector<std::size_t> true_labels;
    std::vector<bool> corrupted;
};

struct SyntheticDataset {
    std::vector<SyntheticScan> scans;
    GroundTruth truth;
};

/// Class per voxel column along x, as contiguous bands.
class BandLayout {
public:
    BandLayout(const SyntheticSceneSpec& spec, SplitMix64& rng) : resolution_(spec.resolution) {
        const auto columns = static_cast<std::int64_t>(std::ceil(spec.extent / spec.resolution));
        const double min_width = 0.15 * spec.extent;
        const double max_width = 0.35 * spec.extent;
        std::size_t previous = spec.num_classes;
        std::int64_t start = 0;
        while (start < columns) {
            const auto width = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(rng.uniform(min_width, max_width) / spec.resolution)));
            std::size_t cls = static_cast<std::size_t>(rng.below(spec.num_classes));
            if (cls == previous) cls = (cls + 1 + rng.below(spec.num_classes - 1)) % spec.num_classes;
            starts_.push_back(start);
            classes_.push_back(cls);
            previous = cls;
            start += width;
        }
    }

    std::size_t class_of_column(std::int64_t column) const {
        const auto it = std::upper_bound(starts_.begin(), starts_.end(), column);
        if (it == starts_.begin()) return classes_.front();
        return classes_[static_cast<std::size_t>(it - starts_.begin() - 1)];
    }

    std::size_t class_at(double x) const { return class_of_column(static_cast<std::int64_t>(std::floor(x / resolution_))); }

    std::size_t num_bands() const noexcept { return starts_.size(); }

private:
    double resolution_;
    std::vector<std::int64_t> starts_;
    std::vector<std::size_t> classes_;
};

inline double terrain_height(double x, double y, double extent) {
    const double tau = 2.0 * std::numbers::pi;
    return 0.02 + 0.05 * (1.0 + std::sin(tau * x / extent)) * (1.0 + std::cos(tau * y / extent)) / 4.0;
}

inline SyntheticDataset generate_synthetic(const SyntheticSceneSpec& spec) {
    spec.validate();
    const std::size_t k = spec.num_classes;
    SplitMix64 layout_rng(derive_seed(spec.seed, 0));
    const BandLayout layout(spec, layout_rng);

    SyntheticDataset data;
    data.scans.reserve(spec.num_scans);
    const auto grid = static_cast<std::uint64_t>(std::ceil(std::sqrt(static_cast<double>(spec.points_per_scan))));
    const double cell = spec.extent / static_cast<double>(std::max<std::uint64_t>(grid, 1));

    for (std::size_t s = 0; s < spec.num_scans; ++s) {
        SplitMix64 rng(derive_seed(spec.seed, s + 1));

        const double yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m(0, 0) = std::cos(yaw);
        m(0, 1) = -std::sin(yaw);
        m(1, 0) = std::sin(yaw);
        m(1, 1) = std::cos(yaw);
        m(0, 3) = 0.5 * spec.extent + rng.uniform(-0.25, 0.25) * spec.extent;
        m(1, 3) = 0.5 * spec.extent + rng.uniform(-0.25, 0.25) * spec.extent;
        m(2, 3) = rng.uniform(0.3, 0.6);
        SyntheticScan scan{Pose(m), {}, {}, {}};
        const Pose world_to_sensor = scan.pose.inverse();

        // Partial Fisher-Yates picks points_per_scan distinct strata.
        std::vector<std::uint64_t> strata(grid * grid);
        std::iota(strata.begin(), strata.end(), 0);
        scan.points.reserve(spec.points_per_scan);
        for (std::size_t n = 0; n < spec.points_per_scan; ++n) {
            std::swap(strata[n], strata[n + rng.below(strata.size() - n)]);
            const std::uint64_t gx = strata[n] % grid;
            const std::uint64_t gy = strata[n] / grid;
            const double x = (static_cast<double>(gx) + rng.uniform()) * cell;
            const double y = (static_cast<double>(gy) + rng.uniform()) * cell;
            const Vec3 world(x, y, terrain_height(x, y, spec.extent));

            const std::size_t truth = layout.class_at(x);
            std::vector<double> evidence(k, 0.0);
            const bool corrupted = rng.bernoulli(spec.noise_rate);
            if (!corrupted) {
                evidence[truth] = spec.high_evidence;
            } else {
                const std::size_t wrong = (truth + 1 + rng.below(k - 1)) % k;
                if (rng.bernoulli(spec.vacuity_correlation)) {
                    std::fill(evidence.begin(), evidence.end(), spec.low_evidence / static_cast<double>(k));
                } else {
                    evidence[wrong] = spec.high_evidence;
                }
            }
            scan.points.push_back({world_to_sensor.apply(world), EvidenceVector(std::move(evidence))});
            scan.true_labels.push_back(truth);
            scan.corrupted.push_back(corrupted);
            data.truth.emplace(key_of(world, spec.resolution), truth);
        }
        data.scans.push_back(std::move(scan));
    }
    return data;
}

}  // namespace evsem
