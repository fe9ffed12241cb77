#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "evsem/errors.hpp"
#include "evsem/text.hpp"
#include "evsem/voxel_map.hpp"

namespace evsem {

/// Rigid sensor-to-world transform stored as a 4x4 homogeneous matrix.
class Pose {
public:
    static constexpr double kTolerance = 1e-9;

    Pose() : m_(Eigen::Matrix4d::Identity()) {}

    explicit Pose(const Eigen::Matrix4d& m) : m_(m) {
        if (!m_.allFinite()) throw ValidationError("pose contains non-finite values");
        const Eigen::Matrix3d r = m_.topLeftCorner<3, 3>();
        if (((r.transpose() * r) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > kTolerance) {
            throw ValidationError("pose rotation is not orthonormal");
        }
        if (std::abs(r.determinant() - 1.0) > kTolerance) throw ValidationError("pose rotation determinant is not +1");
        if (m_(3, 0) != 0.0 || m_(3, 1) != 0.0 || m_(3, 2) != 0.0 || m_(3, 3) != 1.0) {
            throw ValidationError("pose last row must be (0,0,0,1)");
        }
    }

    /// Builds a pose from the top three rows of the matrix, row-major.
    static Pose from_rows(std::span<const double, 12> v) {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(r * 4 + c)];
        }
        return Pose(m);
    }

    std::array<double, 12> rows() const {
        std::array<double, 12> v{};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) v[static_cast<std::size_t>(r * 4 + c)] = m_(r, c);
        }
        return v;
    }

    const Eigen::Matrix4d& matrix() const noexcept { return m_; }
    Eigen::Matrix3d rotation() const { return m_.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return m_.topRightCorner<3, 1>(); }

    Vec3 apply(const Vec3& p) const { return rotation() * p + translation(); }

    /// Exact inverse of a rigid transform: (R^T, -R^T t).
    Pose inverse() const {
        Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
        const Eigen::Matrix3d rt = rotation().transpose();
        inv.topLeftCorner<3, 3>() = rt;
        inv.topRightCorner<3, 1>() = -rt * translation();
        return Pose(inv);
    }

    friend Pose operator*(const Pose& a, const Pose& b) {
        Eigen::Matrix4d m = a.m_ * b.m_;
        m.row(3) << 0.0, 0.0, 0.0, 1.0;
        return Pose(m);
    }

private:
    Eigen::Matrix4d m_;
};

inline std::vector<SemanticPoint> transform_points(const Pose& pose, std::span<const SemanticPoint> points) {
    std::vector<SemanticPoint> out(points.begin(), points.end());
    for (auto& p : out) p.position = pose.apply(p.position);
    return out;
}

/// Pose file: one pose per line, the top three rows of the 4x4 matrix as
/// 12 row-major numbers.
inline std::vector<Pose> read_poses(std::istream& in, const std::string& source = "<poses>") {
    std::vector<Pose> poses;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        const auto tok = text::split_ws(line);
        if (tok.size() != 12) throw ParseError(source, lineno, "expected 12 numbers, got " + std::to_string(tok.size()));
        std::array<double, 12> v{};
        for (std::size_t i = 0; i < 12; ++i) {
            const auto d = text::parse_double(tok[i]);
            if (!d || !std::isfinite(*d)) throw ParseError(source, lineno, "malformed number '" + std::string(tok[i]) + "'");
            v[i] = *d;
        }
        try {
            poses.push_back(Pose::from_rows(v));
        } catch (const ValidationError& e) {
            throw ParseError(source, lineno, e.what());
        }
    }
    return poses;
}

inline std::vector<Pose> read_poses(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open pose file " + path);
    return read_poses(in, path);
}

inline void write_poses(std::ostream& out, std::span<const Pose> poses) {
    for (const auto& pose : poses) {
        const auto v = pose.rows();
        for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << text::format_exact(v[i]);
        out << '\n';
    }
}

}  // namespace evsem
