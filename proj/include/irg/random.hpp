#pragma once

// Raw variate generators. All of them consume a caller-owned engine and are
// otherwise pure, so a fixed seed reproduces every draw bit for bit on any
// platform (no std distribution objects are involved).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "irg/errors.hpp"

namespace irg {

using Rng = std::mt19937_64;

template <class G>
concept Urbg = std::uniform_random_bit_generator<G> && std::same_as<typename G::result_type, std::uint64_t>;

/// Uniform on the open interval (0, 1) with 53 random bits.
template <Urbg G>
double uniform01(G& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard Normal by the Marsaglia polar method (second variate discarded).
template <Urbg G>
double standard_normal(G& rng) {
    for (;;) {
        const double u = 2.0 * uniform01(rng) - 1.0;
        const double v = 2.0 * uniform01(rng) - 1.0;
        const double s = u * u + v * v;
        if (s < 1.0 && s > 0.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
}

/// Gamma(alpha, 1) by the Marsaglia-Tsang squeeze method; alpha < 1 uses
/// the boost Gamma(alpha + 1) * U^{1/alpha}.
template <Urbg G>
double gamma_marsaglia_tsang(double alpha, G& rng) {
    if (!(alpha > 0.0)) throw DomainError("gamma_marsaglia_tsang: alpha must be > 0");
    if (alpha < 1.0) {
        const double g = gamma_marsaglia_tsang(alpha + 1.0, rng);
        return g * std::exp(std::log(uniform01(rng)) / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = standard_normal(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform01(rng);
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

/// log of a Gamma(alpha, 1) draw. Consumes the engine exactly as
/// gamma_marsaglia_tsang does, but the boost for alpha < 1 is applied in log
/// space so that the result never underflows.
template <Urbg G>
double log_gamma_marsaglia_tsang(double alpha, G& rng) {
    if (!(alpha > 0.0)) throw DomainError("log_gamma_marsaglia_tsang: alpha must be > 0");
    if (alpha >= 1.0) return std::log(gamma_marsaglia_tsang(alpha, rng));
    const double g = gamma_marsaglia_tsang(alpha + 1.0, rng);
    return std::log(g) + std::log(uniform01(rng)) / alpha;
}

/// Wraps an angle into [-pi, pi).
inline double wrap_angle(double x) {
    constexpr double pi = std::numbers::pi;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double r = std::fmod(x + pi, two_pi);
    if (r < 0.0) r += two_pi;
    r -= pi;
    return r >= pi ? -pi : r;
}

inline constexpr long kVonMisesMaxProposals = 1'000'000;

/// vonMises(0, kappa) by Best and Fisher's wrapped-Cauchy rejection sampler.
/// Returns an angle in [-pi, pi).
template <Urbg G>
double von_mises_best_fisher(double kappa, G& rng) {
    constexpr double pi = std::numbers::pi;
    if (!(kappa > 0.0)) throw DomainError("von_mises_best_fisher: kappa must be > 0");
    if (kappa < 1e-8) return wrap_angle(pi * (2.0 * uniform01(rng) - 1.0));
    if (kappa > 1e6) return wrap_angle(standard_normal(rng) / std::sqrt(kappa));
    double s;
    if (kappa < 1e-5) {
        s = 1.0 / kappa + kappa;
    } else {
        const double r = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
        const double rho = (r - std::sqrt(2.0 * r)) / (2.0 * kappa);
        s = (1.0 + rho * rho) / (2.0 * rho);
    }
    for (long i = 0; i < kVonMisesMaxProposals; ++i) {
        const double z = std::cos(pi * uniform01(rng));
        const double w = (1.0 + s * z) / (s + z);
        const double y = kappa * (s - w);
        const double v = uniform01(rng);
        if (y * (2.0 - y) - v >= 0.0 || std::log(y / v) + 1.0 - y >= 0.0) {
            const double angle = std::acos(std::clamp(w, -1.0, 1.0));
            return wrap_angle(uniform01(rng) < 0.5 ? -angle : angle);
        }
    }
    throw SamplerError("von_mises_best_fisher: proposal cap exceeded");
}

}  // namespace irg
