#pragma once

// Evidential classification head math: evidence activation, Dirichlet
// posterior, expected probabilities, vacuity, and the expected-MSE evidential
// loss with its KL regularizer. Gradients are hand-derived.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "evsem/errors.hpp"
#include "evsem/special_functions.hpp"

namespace evsem {

enum class Activation { softplus, relu, exp_clamped };

inline constexpr double kDefaultExpCeiling = 1e6;

namespace detail {

inline void require_min_classes(std::size_t k, const char* what) {
    if (k < 2) throw ValidationError(std::string(what) + ": need at least 2 classes, got " + std::to_string(k));
}

inline void require_finite(std::span<const double> v, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) throw ValidationError(std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
}

}  // namespace detail

/// Non-negative per-class evidence.
class EvidenceVector {
public:
    explicit EvidenceVector(std::vector<double> e) : e_(std::move(e)) {
        detail::require_min_classes(e_.size(), "EvidenceVector");
        detail::require_finite(e_, "EvidenceVector");
        for (std::size_t i = 0; i < e_.size(); ++i) {
            if (e_[i] < 0.0) throw ValidationError("EvidenceVector: negative evidence at index " + std::to_string(i));
        }
    }

    std::size_t size() const noexcept { return e_.size(); }
    double operator[](std::size_t i) const { return e_[i]; }
    std::span<const double> values() const noexcept { return e_; }
    double total() const noexcept { return std::accumulate(e_.begin(), e_.end(), 0.0); }

    friend bool operator==(const EvidenceVector&, const EvidenceVector&) = default;

private:
    std::vector<double> e_;
};

/// Dirichlet concentration parameters, all strictly positive.
class DirichletParams {
public:
    explicit DirichletParams(std::vector<double> alpha) : alpha_(std::move(alpha)) {
        detail::require_min_classes(alpha_.size(), "DirichletParams");
        detail::require_finite(alpha_, "DirichletParams");
        for (std::size_t i = 0; i < alpha_.size(); ++i) {
            if (!(alpha_[i] > 0.0)) throw ValidationError("DirichletParams: non-positive alpha at index " + std::to_string(i));
        }
    }

    std::size_t size() const noexcept { return alpha_.size(); }
    double operator[](std::size_t i) const { return alpha_[i]; }
    std::span<const double> values() const noexcept { return alpha_; }
    double strength() const noexcept { return std::accumulate(alpha_.begin(), alpha_.end(), 0.0); }

    friend bool operator==(const DirichletParams&, const DirichletParams&) = default;

private:
    std::vector<double> alpha_;
};

/// A categorical distribution over K classes.
class ClassProbs {
public:
    explicit ClassProbs(std::vector<double> p) : p_(std::move(p)) {
        detail::require_min_classes(p_.size(), "ClassProbs");
        detail::require_finite(p_, "ClassProbs");
        double sum = 0.0;
        for (double v : p_) {
            if (v < 0.0 || v > 1.0) throw ValidationError("ClassProbs: probability outside [0,1]");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("ClassProbs: probabilities do not sum to 1");
    }

    std::size_t size() const noexcept { return p_.size(); }
    double operator[](std::size_t i) const { return p_[i]; }
    std::span<const double> values() const noexcept { return p_; }

    /// Index of the largest probability; ties go to the lowest index.
    std::size_t argmax() const noexcept {
        return static_cast<std::size_t>(std::max_element(p_.begin(), p_.end()) - p_.begin());
    }

private:
    std::vector<double> p_;
};

inline double softplus(double z) noexcept { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline double sigmoid(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double ez = std::exp(z);
    return ez / (1.0 + ez);
}

inline double activate(double z, Activation act, double exp_ceiling = kDefaultExpCeiling) noexcept {
    switch (act) {
        case Activation::softplus: return softplus(z);
        case Activation::relu: return std::max(z, 0.0);
        case Activation::exp_clamped: return std::min(std::exp(z), exp_ceiling);
    }
    return 0.0;
}

/// d activate / dz. At the relu kink and at the exp ceiling the one-sided
/// derivative from the left is 0 / exp(z) respectively; we report 0 at both.
inline double activate_derivative(double z, Activation act, double exp_ceiling = kDefaultExpCeiling) noexcept {
    switch (act) {
        case Activation::softplus: return sigmoid(z);
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::exp_clamped: {
            const double ez = std::exp(z);
            return ez < exp_ceiling ? ez : 0.0;
        }
    }
    return 0.0;
}

inline EvidenceVector evidence_from_logits(std::span<const double> logits, Activation act = Activation::softplus,
                                           double exp_ceiling = kDefaultExpCeiling) {
    detail::require_min_classes(logits.size(), "evidence_from_logits");
    detail::require_finite(logits, "evidence_from_logits");
    if (!(exp_ceiling > 0.0) || !std::isfinite(exp_ceiling)) throw ValidationError("evidence_from_logits: exp ceiling must be positive and finite");
    std::vector<double> e(logits.size());
    std::transform(logits.begin(), logits.end(), e.begin(), [&](double z) { return activate(z, act, exp_ceiling); });
    return EvidenceVector(std::move(e));
}

inline DirichletParams dirichlet_from_evidence(const EvidenceVector& e) {
    std::vector<double> alpha(e.values().begin(), e.values().end());
    for (double& a : alpha) a += 1.0;
    return DirichletParams(std::move(alpha));
}

inline ClassProbs expected_probs(const DirichletParams& alpha) {
    const double s = alpha.strength();
    std::vector<double> p(alpha.size());
    for (std::size_t c = 0; c < p.size(); ++c) p[c] = alpha[c] / s;
    return ClassProbs(std::move(p));
}

/// Vacuity u = K / S of an evidence-derived Dirichlet (every alpha >= 1).
inline double vacuity(const DirichletParams& alpha) {
    for (std::size_t c = 0; c < alpha.size(); ++c) {
        if (alpha[c] < 1.0) throw DomainError("vacuity: alpha component " + std::to_string(c) + " < 1 is not an evidential posterior");
    }
    return static_cast<double>(alpha.size()) / alpha.strength();
}

inline std::vector<double> one_hot(std::size_t num_classes, std::size_t cls) {
    if (cls >= num_classes) throw ValidationError("one_hot: class " + std::to_string(cls) + " out of range");
    std::vector<double> y(num_classes, 0.0);
    y[cls] = 1.0;
    return y;
}

namespace detail {

inline void require_one_hot(std::span<const double> y, std::size_t k) {
    if (y.size() != k) throw ValidationError("one-hot target has length " + std::to_string(y.size()) + ", expected " + std::to_string(k));
    std::size_t ones = 0;
    for (double v : y) {
        if (v == 1.0) ++ones;
        else if (v != 0.0) throw ValidationError("target is not one-hot");
    }
    if (ones != 1) throw ValidationError("target is not one-hot");
}

}  // namespace detail

/// Expected squared error E||y - p||^2 for p ~ Dir(alpha), in closed form.
inline double edl_mse_loss(const DirichletParams& alpha, std::span<const double> y) {
    detail::require_one_hot(y, alpha.size());
    const double s = alpha.strength();
    double loss = 0.0;
    for (std::size_t c = 0; c < alpha.size(); ++c) {
        const double p = alpha[c] / s;
        const double err = y[c] - p;
        loss += err * err + p * (1.0 - p) / (s + 1.0);
    }
    return loss;
}

/// KL(Dir(alpha) || Dir(1,...,1)).
inline double kl_to_uniform(const DirichletParams& alpha) {
    const double k = static_cast<double>(alpha.size());
    const double s = alpha.strength();
    const double psi_s = special::digamma(s);
    double kl = special::log_gamma(s) - special::log_gamma(k);
    for (std::size_t c = 0; c < alpha.size(); ++c) {
        const double a = alpha[c];
        kl -= special::log_gamma(a);
        if (a != 1.0) kl += (a - 1.0) * (special::digamma(a) - psi_s);
    }
    // lgamma cancellation can leave tiny negative residue near the uniform point.
    return std::max(kl, 0.0);
}

/// alpha_tilde = y + (1 - y) * alpha: removes the evidence of the true class.
inline DirichletParams masked_alpha(const DirichletParams& alpha, std::span<const double> y) {
    detail::require_one_hot(y, alpha.size());
    std::vector<double> out(alpha.size());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = y[c] + (1.0 - y[c]) * alpha[c];
    return DirichletParams(std::move(out));
}

inline double total_edl_loss(const DirichletParams& alpha, std::span<const double> y, double lambda_t) {
    if (!(lambda_t >= 0.0) || !std::isfinite(lambda_t)) throw ValidationError("total_edl_loss: lambda_t must be finite and >= 0");
    const double mse = edl_mse_loss(alpha, y);
    if (lambda_t == 0.0) return mse;
    return mse + lambda_t * kl_to_uniform(masked_alpha(alpha, y));
}

/// Gradient of total_edl_loss with respect to alpha.
inline std::vector<double> total_edl_loss_grad_alpha(const DirichletParams& alpha, std::span<const double> y, double lambda_t) {
    if (!(lambda_t >= 0.0) || !std::isfinite(lambda_t)) throw ValidationError("total_edl_loss: lambda_t must be finite and >= 0");
    detail::require_one_hot(y, alpha.size());
    const std::size_t k = alpha.size();
    const double s = alpha.strength();

    // MSE term written as sum (y-p)^2 + (1 - sum p^2)/(S+1).
    std::vector<double> dl_dp(k);
    double sum_p2 = 0.0;
    double dot = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        const double p = alpha[c] / s;
        sum_p2 += p * p;
        dl_dp[c] = -2.0 * (y[c] - p) - 2.0 * p / (s + 1.0);
        dot += dl_dp[c] * p;
    }
    const double ds_term = -(1.0 - sum_p2) / ((s + 1.0) * (s + 1.0));
    std::vector<double> grad(k);
    for (std::size_t j = 0; j < k; ++j) grad[j] = (dl_dp[j] - dot) / s + ds_term;

    if (lambda_t > 0.0) {
        const DirichletParams tilde = masked_alpha(alpha, y);
        const double st = tilde.strength();
        const double shared = (st - static_cast<double>(k)) * special::trigamma(st);
        for (std::size_t j = 0; j < k; ++j) {
            if (y[j] == 1.0) continue;  // masked component does not depend on alpha_j
            const double a = tilde[j];
            grad[j] += lambda_t * ((a - 1.0) * special::trigamma(a) - shared);
        }
    }
    return grad;
}

/// total_edl_loss evaluated on raw logits through the chosen activation.
inline double total_edl_loss_from_logits(std::span<const double> logits, std::span<const double> y, double lambda_t,
                                         Activation act = Activation::softplus, double exp_ceiling = kDefaultExpCeiling) {
    return total_edl_loss(dirichlet_from_evidence(evidence_from_logits(logits, act, exp_ceiling)), y, lambda_t);
}

/// Analytic gradient of total_edl_loss_from_logits with respect to the logits.
inline std::vector<double> total_edl_loss_grad_logits(std::span<const double> logits, std::span<const double> y, double lambda_t,
                                                      Activation act = Activation::softplus,
                                                      double exp_ceiling = kDefaultExpCeiling) {
    const DirichletParams alpha = dirichlet_from_evidence(evidence_from_logits(logits, act, exp_ceiling));
    std::vector<double> grad = total_edl_loss_grad_alpha(alpha, y, lambda_t);
    for (std::size_t c = 0; c < grad.size(); ++c) grad[c] *= activate_derivative(logits[c], act, exp_ceiling);
    return grad;
}

}  // namespace evsem
