#pragma once

// Sparse voxel map of Dirichlet concentrations updated by uncertainty-aware
// Bayesian kernel inference.
//
// Each measurement i contributes k(|x_i - x*|) * w_i * ybar_i to every voxel
// center x* inside the kernel support, where w_i is derived from the
// measurement's evidential vacuity and ybar_i is its label vector.
//
// Thread safety: a VoxelMap is single-writer. Const member functions may run
// concurrently with each other, never with update_scan.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "evsem/errors.hpp"
#include "evsem/evidence.hpp"
#include "evsem/kernel.hpp"

namespace evsem {

using Vec3 = Eigen::Vector3d;

struct VoxelKey {
    std::int32_t i = 0;
    std::int32_t j = 0;
    std::int32_t k = 0;

    friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey& key) const noexcept {
        // Mix of three large primes, as in most spatial hash grids.
        const auto h = static_cast<std::uint64_t>(static_cast<std::uint32_t>(key.i)) * 73856093ULL ^
                       static_cast<std::uint64_t>(static_cast<std::uint32_t>(key.j)) * 19349669ULL ^
                       static_cast<std::uint64_t>(static_cast<std::uint32_t>(key.k)) * 83492791ULL;
        return static_cast<std::size_t>(h);
    }
};

enum class LabelMode { hard_onehot, soft_probs };
enum class Weighting { uniform, one_minus_vacuity };

struct MapConfig {
    double resolution = 0.1;
    std::size_t num_classes = 3;
    double prior_alpha = 0.001;
    KernelParams kernel{};
    double weight_floor = 0.0;
    LabelMode label_mode = LabelMode::hard_onehot;
    Weighting weighting = Weighting::one_minus_vacuity;

    void validate() const {
        if (!(resolution > 0.0) || !std::isfinite(resolution)) throw ValidationError("resolution must be positive and finite");
        if (num_classes < 2) throw ValidationError("num_classes must be >= 2");
        if (!(prior_alpha > 0.0) || !std::isfinite(prior_alpha)) throw ValidationError("prior_alpha must be positive and finite");
        if (!(weight_floor >= 0.0 && weight_floor <= 1.0)) throw ValidationError("weight_floor must lie in [0,1]");
        kernel.validate();
    }

    friend bool operator==(const MapConfig&, const MapConfig&) = default;
};

/// A hard class label with a confidence in [0,1].
struct HardLabel {
    std::size_t label = 0;
    double confidence = 1.0;

    friend bool operator==(const HardLabel&, const HardLabel&) = default;
};

struct SemanticPoint {
    Vec3 position = Vec3::Zero();
    std::variant<EvidenceVector, HardLabel> payload;

    friend bool operator==(const SemanticPoint& a, const SemanticPoint& b) {
        return a.position == b.position && a.payload == b.payload;
    }
};

inline std::int32_t grid_index(double coord, double resolution) {
    const double cell = std::floor(coord / resolution);
    if (!std::isfinite(cell) || cell < std::numeric_limits<std::int32_t>::min() ||
        cell > std::numeric_limits<std::int32_t>::max()) {
        throw ValidationError("coordinate " + std::to_string(coord) + " lies outside the addressable grid");
    }
    return static_cast<std::int32_t>(cell);
}

inline VoxelKey key_of(const Vec3& position, double resolution) {
    if (!position.allFinite()) throw ValidationError("position must be finite");
    return {grid_index(position.x(), resolution), grid_index(position.y(), resolution), grid_index(position.z(), resolution)};
}

inline Vec3 voxel_center(const VoxelKey& key, double resolution) {
    return {(key.i + 0.5) * resolution, (key.j + 0.5) * resolution, (key.k + 0.5) * resolution};
}

namespace detail {

inline void validate_point(const SemanticPoint& point, const MapConfig& config) {
    if (!point.position.allFinite()) throw ValidationError("point position must be finite");
    if (const auto* e = std::get_if<EvidenceVector>(&point.payload)) {
        if (e->size() != config.num_classes) {
            throw ValidationError("evidence has " + std::to_string(e->size()) + " classes, map expects " + std::to_string(config.num_classes));
        }
    } else {
        const auto& hard = std::get<HardLabel>(point.payload);
        if (hard.label >= config.num_classes) throw ValidationError("hard label " + std::to_string(hard.label) + " out of range");
        if (!(hard.confidence >= 0.0 && hard.confidence <= 1.0)) throw ValidationError("hard label confidence must lie in [0,1]");
    }
}

}  // namespace detail

/// Measurement weight in [weight_floor, 1].
inline double point_weight(const SemanticPoint& point, const MapConfig& config) {
    detail::validate_point(point, config);
    if (config.weighting == Weighting::uniform) return 1.0;
    double u = 0.0;
    if (const auto* e = std::get_if<EvidenceVector>(&point.payload)) {
        u = vacuity(dirichlet_from_evidence(*e));
    } else {
        u = 1.0 - std::get<HardLabel>(point.payload).confidence;
    }
    return std::max(1.0 - u, config.weight_floor);
}

/// Measurement label vector ybar. Hard-labeled points are one-hot in either mode.
inline std::vector<double> point_label_vector(const SemanticPoint& point, const MapConfig& config) {
    detail::validate_point(point, config);
    if (const auto* e = std::get_if<EvidenceVector>(&point.payload)) {
        ClassProbs probs = expected_probs(dirichlet_from_evidence(*e));
        if (config.label_mode == LabelMode::soft_probs) return {probs.values().begin(), probs.values().end()};
        return one_hot(config.num_classes, probs.argmax());
    }
    return one_hot(config.num_classes, std::get<HardLabel>(point.payload).label);
}

struct VoxelQuery {
    std::size_t label = 0;
    ClassProbs probs;
    double vacuity = 1.0;  // min(1, K/S)
    std::vector<double> variance;
    bool observed = false;
};

class VoxelMap {
public:
    explicit VoxelMap(MapConfig config) : config_(std::move(config)) { config_.validate(); }

    const MapConfig& config() const noexcept { return config_; }
    std::size_t num_classes() const noexcept { return config_.num_classes; }
    std::uint64_t scan_count() const noexcept { return scan_count_; }
    std::size_t size() const noexcept { return index_.size(); }
    bool empty() const noexcept { return index_.empty(); }

    /// Stored concentrations of a voxel, or nullopt when it is still at the prior.
    std::optional<std::span<const double>> find(const VoxelKey& key) const {
        const auto it = index_.find(key);
        if (it == index_.end()) return std::nullopt;
        return cell(it->second);
    }

    DirichletParams alpha_at(const VoxelKey& key) const {
        if (auto stored = find(key)) return DirichletParams({stored->begin(), stored->end()});
        return DirichletParams(std::vector<double>(config_.num_classes, config_.prior_alpha));
    }

    /// Visits every stored voxel in unspecified order.
    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (const auto& [key, slot] : index_) fn(key, cell(slot));
    }

    /// Stored voxel keys in ascending (i, j, k) order.
    std::vector<VoxelKey> sorted_keys() const {
        std::vector<VoxelKey> keys;
        keys.reserve(index_.size());
        for (const auto& entry : index_) keys.push_back(entry.first);
        std::sort(keys.begin(), keys.end());
        return keys;
    }

    /// Integrates one scan of world-frame points.
    ///
    /// Points are first put into a canonical order (position, then weight,
    /// then label vector), so any permutation of the same scan produces
    /// bit-identical concentrations. Validation happens before any mutation;
    /// a rejected scan leaves the map untouched.
    void update_scan(std::span<const SemanticPoint> points) {
        struct Measurement {
            Vec3 position;
            double weight;
            std::vector<double> ybar;
        };
        std::vector<Measurement> measurements;
        measurements.reserve(points.size());
        for (const auto& point : points) {
            const double w = point_weight(point, config_);
            std::vector<double> ybar = point_label_vector(point, config_);
            key_of(point.position, config_.resolution);  // range check
            if (w == 0.0) continue;
            measurements.push_back({point.position, w, std::move(ybar)});
        }
        std::sort(measurements.begin(), measurements.end(), [](const Measurement& a, const Measurement& b) {
            const auto pa = std::tie(a.position.x(), a.position.y(), a.position.z(), a.weight);
            const auto pb = std::tie(b.position.x(), b.position.y(), b.position.z(), b.weight);
            if (pa != pb) return pa < pb;
            return a.ybar < b.ybar;
        });

        const std::size_t k = config_.num_classes;
        const double res = config_.resolution;
        const double radius = support_radius(config_.kernel);
        std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> delta_index;
        std::vector<double> deltas;

        for (const auto& m : measurements) {
            const Vec3& p = m.position;
            const auto lo = [&](double c) { return static_cast<std::int64_t>(std::floor((c - radius) / res - 0.5)); };
            const auto hi = [&](double c) { return static_cast<std::int64_t>(std::ceil((c + radius) / res - 0.5)); };
            for (std::int64_t i = lo(p.x()); i <= hi(p.x()); ++i) {
                for (std::int64_t j = lo(p.y()); j <= hi(p.y()); ++j) {
                    for (std::int64_t l = lo(p.z()); l <= hi(p.z()); ++l) {
                        if (!fits_int32(i) || !fits_int32(j) || !fits_int32(l)) continue;
                        const VoxelKey key{static_cast<std::int32_t>(i), static_cast<std::int32_t>(j), static_cast<std::int32_t>(l)};
                        const double kval = sparse_kernel((p - voxel_center(key, res)).norm(), config_.kernel);
                        if (kval == 0.0) continue;
                        const double scale = kval * m.weight;
                        auto [it, inserted] = delta_index.try_emplace(key, deltas.size());
                        if (inserted) deltas.resize(deltas.size() + k, 0.0);
                        double* d = deltas.data() + it->second;
                        for (std::size_t c = 0; c < k; ++c) d[c] += scale * m.ybar[c];
                    }
                }
            }
        }

        index_.reserve(index_.size() + delta_index.size());
        storage_.reserve(storage_.size() + delta_index.size() * k);
        for (const auto& [key, offset] : delta_index) {
            double* a = slot_for(key);
            for (std::size_t c = 0; c < k; ++c) a[c] += deltas[offset + c];
        }
        ++scan_count_;
    }

    VoxelQuery query_voxel(const VoxelKey& key) const {
        const DirichletParams alpha = alpha_at(key);
        const double s = alpha.strength();
        ClassProbs probs = expected_probs(alpha);
        std::vector<double> variance(alpha.size());
        for (std::size_t c = 0; c < alpha.size(); ++c) variance[c] = alpha[c] * (s - alpha[c]) / (s * s * (s + 1.0));
        const double u = std::min(1.0, static_cast<double>(alpha.size()) / s);
        const std::size_t label = probs.argmax();
        return {label, std::move(probs), u, std::move(variance), index_.contains(key)};
    }

    VoxelQuery query_point(const Vec3& position) const { return query_voxel(key_of(position, config_.resolution)); }

    /// Overwrites one voxel's concentrations. Used when loading a stored map.
    void assign_cell(const VoxelKey& key, std::span<const double> alpha) {
        if (alpha.size() != config_.num_classes) throw ValidationError("cell has wrong class count");
        for (double a : alpha) {
            if (!std::isfinite(a) || a < config_.prior_alpha) throw ValidationError("cell concentration below the prior or non-finite");
        }
        double* dst = slot_for(key);
        std::copy(alpha.begin(), alpha.end(), dst);
    }

    void set_scan_count(std::uint64_t n) noexcept { scan_count_ = n; }

private:
    static bool fits_int32(std::int64_t v) {
        return v >= std::numeric_limits<std::int32_t>::min() && v <= std::numeric_limits<std::int32_t>::max();
    }

    std::span<const double> cell(std::size_t slot) const { return {storage_.data() + slot, config_.num_classes}; }

    double* slot_for(const VoxelKey& key) {
        auto [it, inserted] = index_.try_emplace(key, storage_.size());
        if (inserted) storage_.resize(storage_.size() + config_.num_classes, config_.prior_alpha);
        return storage_.data() + it->second;
    }

    MapConfig config_;
    std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> index_;
    std::vector<double> storage_;
    std::uint64_t scan_count_ = 0;
};

}  // namespace evsem
