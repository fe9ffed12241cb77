#pragma once

#include <cmath>

#include "evsem/errors.hpp"

namespace evsem::special {

// Recurrence shifts the argument up to kAsymptoticMin, where the asymptotic
// series is accurate to well below 1e-13.
inline constexpr double kAsymptoticMin = 10.0;

inline double log_gamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("log_gamma: argument must be positive and finite");
    return std::lgamma(x);
}

inline double digamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("digamma: argument must be positive and finite");
    double acc = 0.0;
    while (x < kAsymptoticMin) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // ln x - 1/2x - sum B_2n / (2n x^2n)
    const double series =
        inv2 * (1.0 / 12 -
                inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12))))));
    return acc + std::log(x) - 0.5 * inv - series;
}

inline double trigamma(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("trigamma: argument must be positive and finite");
    double acc = 0.0;
    while (x < kAsymptoticMin) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double series =
        inv * (1.0 + inv * (0.5 + inv * (1.0 / 6 - inv2 * (1.0 / 30 - inv2 * (1.0 / 42 - inv2 * (1.0 / 30 - inv2 * (5.0 / 66 - inv2 * (691.0 / 2730 - inv2 * (7.0 / 6)))))))));
    return acc + series;
}

}  // namespace evsem::special
