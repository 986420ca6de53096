#pragma once

// Slow reference values for the CDF derivatives that have no closed form.
//
// Everything here is deliberately independent of special.hpp: the regularized
// gamma function, digamma and the Bessel functions come from Boost.Math, and
// the derivative series are summed directly rather than through a Dual.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "irg/errors.hpp"
#include "irg/random.hpp"
#include "irg/special.hpp"

namespace irg::oracle {

enum class Status {
    ok,
    cancellation,  // alternating series lost more than the allowed number of digits
    term_cap,      // hard cap on the number of terms reached before convergence
    overflow,      // argument beyond the range of unscaled Bessel evaluations
};

inline std::string to_string(Status s) {
    switch (s) {
        case Status::ok: return "ok";
        case Status::cancellation: return "cancellation";
        case Status::term_cap: return "term_cap";
        case Status::overflow: return "overflow";
    }
    return "unknown";
}

enum class Method { hypergeometric_series, quadrature, bessel_series };

struct OracleResult {
    double value = 0.0;
    int terms_used = 0;
    double tail_estimate = 0.0;
    Status status = Status::ok;
    Method method = Method::hypergeometric_series;

    bool ok() const noexcept { return status == Status::ok; }
};

/// Largest tolerated ratio between the biggest summand and the result.
inline constexpr double kMaxCancellation = 1e6;

namespace detail {

// Neumaier's variant of compensated summation.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace detail

/// d/dalpha of the Gamma(alpha, 1) CDF at z through the hypergeometric form
///
///   P(z, a) (log z - psi(a)) - 2F2(a, a; a+1, a+1; -z) z^a / (a Gamma(a+1)),
///   2F2(...) = sum_k a^2 / (a+k)^2 (-z)^k / k!.
///
/// The result is flagged (not thrown) when the alternating series cancels
/// catastrophically or does not settle within 10 z + 200 terms.
inline OracleResult gamma_cdf_dalpha(double z, double alpha) {
    if (std::isnan(z) || std::isnan(alpha) || z < 0.0 || !(alpha > 0.0)) {
        throw DomainError("oracle::gamma_cdf_dalpha: need z >= 0 and alpha > 0");
    }
    OracleResult result;
    result.method = Method::hypergeometric_series;
    if (z == 0.0) return result;

    const int cap = static_cast<int>(10.0 * z) + 200;
    detail::CompensatedSum series;
    double power = 1.0;  // (-z)^k / k!
    double largest = 1.0;
    double last = 1.0;
    int k = 0;
    bool converged = false;
    series.add(1.0);
    for (k = 1; k <= cap; ++k) {
        power *= -z / k;
        const double ratio = alpha / (alpha + k);
        last = power * ratio * ratio;
        series.add(last);
        largest = std::max(largest, std::abs(last));
        if (std::abs(last) < 1e-17 * std::abs(series.value())) {
            converged = true;
            break;
        }
    }
    result.terms_used = std::min(k, cap) + 1;

    const double p = boost::math::gamma_p(alpha, z);
    const double log_prefactor = alpha * std::log(z) - std::log(alpha) - boost::math::lgamma(alpha + 1.0);
    const double prefactor = std::exp(log_prefactor);
    const double first = p * (std::log(z) - boost::math::digamma(alpha));
    const double second = series.value() * prefactor;
    result.value = first - second;
    result.tail_estimate = std::abs(last) * prefactor;

    const double biggest = std::max(std::abs(first), largest * prefactor);
    if (!converged) {
        result.status = Status::term_cap;
    } else if (biggest > kMaxCancellation * std::abs(result.value) || !std::isfinite(result.value)) {
        result.status = Status::cancellation;
    }
    return result;
}

namespace detail {

// Integrates f over [a, b] in pieces no wider than `width`; a piece starting
// at 0 goes to tanh-sinh, which tolerates the integrable endpoint singularity.
template <class F>
double integrate_pieces(F f, double a, double b, double width) {
    thread_local boost::math::quadrature::tanh_sinh<double> tanh_sinh;
    CompensatedSum total;
    const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / width)));
    const double h = (b - a) / pieces;
    for (int i = 0; i < pieces; ++i) {
        const double lo = a + i * h;
        const double hi = (i + 1 == pieces) ? b : a + (i + 1) * h;
        if (lo == 0.0) {
            total.add(tanh_sinh.integrate(f, lo, hi, 1e-14));
        } else {
            total.add(boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 12, 1e-14));
        }
    }
    return total.value();
}

}  // namespace detail

/// Same quantity as gamma_cdf_dalpha, by differentiating under the integral:
///
///   d/da P(z, a) = int_0^z t^{a-1} e^{-t} (log t - psi(a)) / Gamma(a) dt
///               = -int_z^inf (same integrand) dt.
///
/// The upper form is used for z > alpha, where the lower one would cancel.
/// For alpha < 1 the lower integral is taken in u = t^alpha, which removes the
/// t^{a-1} singularity.
inline OracleResult gamma_cdf_dalpha_quadrature(double z, double alpha) {
    if (std::isnan(z) || std::isnan(alpha) || z < 0.0 || !(alpha > 0.0)) {
        throw DomainError("oracle::gamma_cdf_dalpha_quadrature: need z >= 0 and alpha > 0");
    }
    OracleResult result;
    result.method = Method::quadrature;
    if (z == 0.0) return result;

    const double psi = boost::math::digamma(alpha);
    const double lgam = boost::math::lgamma(alpha);
    auto integrand = [&](double t) {
        if (t <= 0.0) return 0.0;
        const double lt = std::log(t);
        return std::exp((alpha - 1.0) * lt - t - lgam) * (lt - psi);
    };
    const double spread = std::sqrt(alpha);
    const double width = std::max(1.0, spread);
    if (z > alpha) {
        const double upper = z + 60.0 * spread + 60.0;
        result.value = -detail::integrate_pieces(integrand, z, upper, width);
    } else if (alpha < 1.0) {
        const double inv_alpha = 1.0 / alpha;
        const double lgam1 = boost::math::lgamma(alpha + 1.0);
        auto substituted = [&](double u) {
            if (u <= 0.0) return 0.0;
            const double lu = std::log(u);
            return std::exp(-std::exp(lu * inv_alpha) - lgam1) * (lu * inv_alpha - psi);
        };
        result.value = detail::integrate_pieces(substituted, 0.0, std::pow(z, alpha), 1.0);
    } else {
        const double lower = std::max(0.0, alpha - 60.0 * spread - 60.0);
        result.value = detail::integrate_pieces(integrand, lower, z, width);
    }
    if (!std::isfinite(result.value)) result.status = Status::overflow;
    return result;
}

/// Reference d/dalpha of the Gamma(alpha, 1) CDF: the hypergeometric series
/// where it is trustworthy, the quadrature route where the series cancels.
inline OracleResult gamma_cdf_dalpha_reference(double z, double alpha) {
    OracleResult series = gamma_cdf_dalpha(z, alpha);
    if (series.ok()) return series;
    OracleResult quad = gamma_cdf_dalpha_quadrature(z, alpha);
    return quad;
}

inline constexpr int kVonMisesOracleTerms = 100;

/// d/dkappa of the vonMises(0, kappa) CDF from the term-wise derivative of its
/// Fourier series, truncated at 100 terms:
///
///   (1/pi) sum_j [((j/k) I_j + I_{j+1}) / I_0 - I_j I_1 / I_0^2] sin(j z) / j.
inline OracleResult von_mises_cdf_dkappa(double z, double kappa) {
    constexpr double pi = std::numbers::pi;
    if (std::isnan(z) || std::isnan(kappa) || z < -pi || z > pi || !(kappa > 0.0)) {
        throw DomainError("oracle::von_mises_cdf_dkappa: need z in [-pi, pi] and kappa > 0");
    }
    OracleResult result;
    result.method = Method::bessel_series;
    result.terms_used = kVonMisesOracleTerms;
    // I_0 overflows a double just above 713.
    if (kappa > 700.0) {
        result.status = Status::overflow;
        return result;
    }
    std::array<double, kVonMisesOracleTerms + 2> bessel{};
    for (int j = 0; j <= kVonMisesOracleTerms + 1; ++j) {
        bessel[static_cast<std::size_t>(j)] = boost::math::cyl_bessel_i(j, kappa);
    }
    const double i0 = bessel[0];
    const double i1 = bessel[1];
    detail::CompensatedSum sum;
    double term = 0.0;
    for (int j = 1; j <= kVonMisesOracleTerms; ++j) {
        const double ij = bessel[static_cast<std::size_t>(j)];
        const double ij1 = bessel[static_cast<std::size_t>(j + 1)];
        const double coeff = ((j / kappa) * ij + ij1) / i0 - ij * i1 / (i0 * i0);
        term = coeff * std::sin(j * z) / j;
        sum.add(term);
    }
    result.value = sum.value() / pi;
    result.tail_estimate = std::abs(term) / pi;
    if (!std::isfinite(result.value)) result.status = Status::overflow;
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation grid
// ---------------------------------------------------------------------------

inline constexpr std::array<double, 6> kGammaGridAlphas{1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
inline constexpr std::array<double, 4> kVonMisesGridKappas{1e-2, 1e-1, 1.0, 1e1};
inline constexpr std::size_t kGridDrawsPerParameter = 1000;

struct GridSet {
    Family family;
    double parameter;
    std::vector<double> samples;
};

/// The accuracy grid: 1000 draws from the distribution itself for each shape
/// (gamma) or concentration (von Mises) value. Gamma sets come first.
template <Urbg G>
std::vector<GridSet> oracle_grid(G& rng, std::size_t draws = kGridDrawsPerParameter) {
    std::vector<GridSet> grid;
    for (double alpha : kGammaGridAlphas) {
        GridSet set{Family::gamma, alpha, {}};
        set.samples.reserve(draws);
        for (std::size_t i = 0; i < draws; ++i) set.samples.push_back(gamma_marsaglia_tsang(alpha, rng));
        grid.push_back(std::move(set));
    }
    for (double kappa : kVonMisesGridKappas) {
        GridSet set{Family::von_mises, kappa, {}};
        set.samples.reserve(draws);
        for (std::size_t i = 0; i < draws; ++i) set.samples.push_back(von_mises_best_fisher(kappa, rng));
        grid.push_back(std::move(set));
    }
    return grid;
}

}  // namespace irg::oracle
