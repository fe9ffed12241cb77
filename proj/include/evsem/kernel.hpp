#pragma once

#include <cmath>
#include <numbers>

#include "evsem/errors.hpp"

namespace evsem {

struct KernelParams {
    double length_scale = 0.3;  // meters; support radius
    double signal_scale = 1.0;

    void validate() const {
        if (!(length_scale > 0.0) || !std::isfinite(length_scale)) throw ValidationError("kernel length_scale must be positive and finite");
        if (!(signal_scale > 0.0) || !std::isfinite(signal_scale)) throw ValidationError("kernel signal_scale must be positive and finite");
    }

    friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

/// Compact-support sparse kernel. Exactly zero for d >= length_scale.
inline double sparse_kernel(double d, const KernelParams& params) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw ValidationError("sparse_kernel: distance must be finite and >= 0");
    if (d >= params.length_scale) return 0.0;
    const double r = d / params.length_scale;
    const double phase = 2.0 * std::numbers::pi * r;
    const double value = (2.0 + std::cos(phase)) * (1.0 - r) / 3.0 + std::sin(phase) / (2.0 * std::numbers::pi);
    // The bracket is mathematically >= 0 on [0,1); rounding near r -> 1 can dip below.
    return value > 0.0 ? params.signal_scale * value : 0.0;
}

inline double support_radius(const KernelParams& params) { return params.length_scale; }

}  // namespace evsem
