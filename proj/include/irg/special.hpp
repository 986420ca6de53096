#pragma once

// CDFs, log-densities and helper special functions.
//
// The CDF kernels are written once over `Real` (a plain scalar or a Dual), so
// the same loop produces a value and, when an argument is active, its
// derivative. Iterative kernels stop on the derivative, not only on the value:
// a Dual iteration ends once both the value and the tangent increments are
// negligible.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>

#include "irg/dual.hpp"
#include "irg/errors.hpp"

namespace irg {

template <std::floating_point S>
struct IterationBudget {
    int max_iters;
    S tan_tolerance;

    static constexpr IterationBudget defaults() {
        if constexpr (std::is_same_v<S, float>) {
            return {200, S(1e-6)};
        } else {
            return {500, S(1e-15)};
        }
    }
};

template <class T>
using budget_for = IterationBudget<scalar_of_t<T>>;

enum class Family { gamma, beta, dirichlet, normal, student_t, von_mises };

inline std::string to_string(Family f) {
    switch (f) {
        case Family::gamma: return "gamma";
        case Family::beta: return "beta";
        case Family::dirichlet: return "dirichlet";
        case Family::normal: return "normal";
        case Family::student_t: return "student_t";
        case Family::von_mises: return "von_mises";
    }
    return "unknown";
}

namespace detail {

template <Real T>
bool increment_negligible(const T& delta, const T& total, scalar_of_t<T> tan_tolerance) {
    using S = scalar_of_t<T>;
    constexpr S value_tol = std::numeric_limits<S>::epsilon() / S(2);
    if (!(std::abs(value_of(delta)) <= value_tol * std::abs(value_of(total)))) return false;
    if constexpr (is_dual_v<T>) {
        return std::abs(delta.tan) <= tan_tolerance * std::abs(total.tan);
    } else {
        (void)tan_tolerance;
        return true;
    }
}

template <std::floating_point S>
void check_finite(S x, const char* what) {
    if (std::isnan(x)) throw DomainError(std::string(what) + ": NaN argument");
}

// Power series  1 + sum_k z^k / ((alpha+1)...(alpha+k)).
// Multiplying by z^alpha e^{-z} / Gamma(alpha+1) gives the lower regularized
// incomplete gamma function.
template <Real T>
T lower_gamma_series(const T& z, const T& alpha, const budget_for<T>& budget) {
    T sum(1);
    T term(1);
    T denom = alpha;
    for (int i = 0; i < budget.max_iters; ++i) {
        denom += T(1);
        term *= z / denom;
        sum += term;
        if (increment_negligible(term, sum, budget.tan_tolerance)) return sum;
    }
    throw ConvergenceError("reg_inc_gamma: series did not converge", value_of(sum), budget.max_iters);
}

// Continued fraction for the upper function, evaluated in direct order with
// the Wallis recurrences. Multiplying by z^alpha e^{-z} / Gamma(alpha) gives
// the upper regularized incomplete gamma function.
template <Real T>
T upper_gamma_cf(const T& z, const T& alpha, const budget_for<T>& budget) {
    using S = scalar_of_t<T>;
    constexpr S big = S(1) / std::numeric_limits<S>::epsilon();
    constexpr S biginv = std::numeric_limits<S>::epsilon();

    T y = S(1) - alpha;
    T w = z + y + S(1);
    S c = 0;
    T pkm2(1);
    T qkm2 = z;
    T pkm1 = z + S(1);
    T qkm1 = w * z;
    T ans = pkm1 / qkm1;
    for (int i = 0; i < budget.max_iters; ++i) {
        c += S(1);
        y += S(1);
        w += S(2);
        const T yc = y * c;
        const T pk = pkm1 * w - pkm2 * yc;
        const T qk = qkm1 * w - qkm2 * yc;
        bool converged = false;
        if (value_of(qk) != S(0)) {
            const T r = pk / qk;
            converged = increment_negligible(T(r - ans), r, budget.tan_tolerance);
            ans = r;
        }
        pkm2 = pkm1;
        pkm1 = pk;
        qkm2 = qkm1;
        qkm1 = qk;
        if (std::abs(value_of(pk)) > big) {
            pkm2 = pkm2 * biginv;
            pkm1 = pkm1 * biginv;
            qkm2 = qkm2 * biginv;
            qkm1 = qkm1 * biginv;
        }
        if (converged) return ans;
    }
    throw ConvergenceError("reg_inc_gamma: continued fraction did not converge", value_of(ans),
                           budget.max_iters);
}

template <std::floating_point S>
bool use_gamma_continued_fraction(S z, S alpha) {
    return z >= S(1) && z > alpha;
}

template <std::floating_point S>
void check_gamma_args(S z, S alpha, const char* what) {
    check_finite(z, what);
    check_finite(alpha, what);
    if (z < S(0)) throw DomainError(std::string(what) + ": z must be >= 0");
    if (!(alpha > S(0))) throw DomainError(std::string(what) + ": alpha must be > 0");
}

// Above this shape the prefactor is assembled around z = alpha so that the
// large terms alpha log z and log Gamma(alpha) never meet in floating point.
template <std::floating_point S>
inline constexpr S kGammaPrefactorShift = S(10);

// log Gamma(a) - [(a - 1/2) log a - a + log(2 pi) / 2], valid for a >= 10.
template <Real T>
T stirling_correction(const T& a) {
    using S = scalar_of_t<T>;
    const T inv = S(1) / a;
    const T inv2 = inv * inv;
    return inv * (S(1) / S(12) -
                  inv2 * (S(1) / S(360) -
                          inv2 * (S(1) / S(1260) -
                                  inv2 * (S(1) / S(1680) -
                                          inv2 * (S(1) / S(1188) -
                                                  inv2 * (S(691) / S(360360) - inv2 * (S(1) / S(156))))))));
}

// log(z^alpha e^{-z} / Gamma(alpha)). For alpha >= 10 this is rewritten as
// alpha (log(z / alpha) - x) + log(alpha / 2 pi) / 2 - correction(alpha) with
// x = (z - alpha) / alpha, whose rounding error scales with |z - alpha|
// rather than with alpha log z. log(z / alpha) is taken as log1p(x) only
// while x > -1/2; nearer -1 the rounding of x would be amplified.
template <Real T>
T log_gamma_prefactor(const T& z, const T& alpha) {
    using S = scalar_of_t<T>;
    using std::log;
    using std::log1p;
    if (value_of(alpha) < kGammaPrefactorShift<S>) return alpha * log(z) - z - log_gamma(alpha);
    constexpr S two_pi = S(2) * std::numbers::pi_v<S>;
    const T x = (z - alpha) / alpha;
    const T log_ratio = value_of(x) > S(-0.5) ? T(log1p(x)) : T(log(z / alpha));
    return alpha * (log_ratio - x) + S(0.5) * log(alpha / two_pi) - stirling_correction(alpha);
}

// log(z^alpha e^{-z} / Gamma(alpha + 1)). Below the shift, log Gamma(alpha + 1)
// stays near zero for small alpha where log Gamma(alpha) would not.
template <Real T>
T log_series_prefactor(const T& z, const T& alpha) {
    using S = scalar_of_t<T>;
    using std::log;
    if (value_of(alpha) < kGammaPrefactorShift<S>) return alpha * log(z) - z - log_gamma(alpha + S(1));
    return log_gamma_prefactor(z, alpha) - log(alpha);
}

}  // namespace detail

/// Regularized lower incomplete gamma function, i.e. the CDF of Gamma(alpha, 1) at z.
///
/// Uses the continued fraction when z >= 1 and z > alpha, the power series
/// otherwise. Either argument may be a Dual; the tangent of the result is the
/// corresponding partial derivative.
template <Real T>
T reg_inc_gamma(const T& z, const T& alpha, const budget_for<T>& budget = budget_for<T>::defaults()) {
    using S = scalar_of_t<T>;
    using std::exp;
    using std::log;
    const S zv = value_of(z);
    const S av = value_of(alpha);
    detail::check_gamma_args(zv, av, "reg_inc_gamma");
    if (zv == S(0)) return T(0);
    if (std::isinf(zv)) return T(1);
    if (detail::use_gamma_continued_fraction(zv, av)) {
        return S(1) - detail::upper_gamma_cf(z, alpha, budget) * exp(detail::log_gamma_prefactor(z, alpha));
    }
    return detail::lower_gamma_series(z, alpha, budget) * exp(detail::log_series_prefactor(z, alpha));
}

/// dz/dalpha for z ~ Gamma(alpha, 1), i.e. -(d/dalpha P(z, alpha)) / pdf(z | alpha).
///
/// The division by the density happens inside the iteration: with
/// P = S(z) * z^a e^{-z} / Gamma(a+1) (series) and pdf = z^{a-1} e^{-z} / Gamma(a),
/// the ratio reduces to -(S' + S * (log z - psi(a+1))) * z / a, and with
/// 1 - P = C(z) * z^a e^{-z} / Gamma(a) (continued fraction) it reduces to
/// (C' + C * (log z - psi(a))) * z. The exponential and Gamma factors never
/// get evaluated.
template <std::floating_point S>
S reg_inc_gamma_dalpha_stable(S z, S alpha, const IterationBudget<S>& budget = IterationBudget<S>::defaults()) {
    detail::check_gamma_args(z, alpha, "reg_inc_gamma_dalpha_stable");
    // The limit z -> 0 of both branches is 0.
    if (z == S(0)) return S(0);
    if (std::isinf(z)) throw DomainError("reg_inc_gamma_dalpha_stable: z must be finite");
    const Dual<S> zc = lift_const(z);
    const Dual<S> a = lift_var(alpha);
    if (detail::use_gamma_continued_fraction(z, alpha)) {
        const Dual<S> cf = detail::upper_gamma_cf(zc, a, budget);
        const S dlog_prefactor = std::log(z) - digamma(alpha);
        return (cf.tan + cf.val * dlog_prefactor) * z;
    }
    const Dual<S> series = detail::lower_gamma_series(zc, a, budget);
    const S dlog_prefactor = std::log(z) - digamma(alpha + S(1));
    return -(series.tan + series.val * dlog_prefactor) * z / alpha;
}

/// d(log z)/dalpha for z ~ Gamma(alpha, 1), taking log z rather than z so
/// that draws below the smallest subnormal keep a finite, exact derivative.
/// Equals reg_inc_gamma_dalpha_stable(z, alpha) / z whenever z is representable.
template <std::floating_point S>
S reg_inc_gamma_dlogz_dalpha(S log_z, S alpha, const IterationBudget<S>& budget = IterationBudget<S>::defaults()) {
    detail::check_finite(log_z, "reg_inc_gamma_dlogz_dalpha");
    if (std::isinf(log_z)) throw DomainError("reg_inc_gamma_dlogz_dalpha: log z must be finite");
    const S z = std::exp(log_z);
    detail::check_gamma_args(z, alpha, "reg_inc_gamma_dlogz_dalpha");
    if (std::isinf(z)) throw DomainError("reg_inc_gamma_dlogz_dalpha: z must be finite");
    const Dual<S> zc = lift_const(z);
    const Dual<S> a = lift_var(alpha);
    if (detail::use_gamma_continued_fraction(z, alpha)) {
        const Dual<S> cf = detail::upper_gamma_cf(zc, a, budget);
        return cf.tan + cf.val * (log_z - digamma(alpha));
    }
    // At z = 0 the series is exactly 1 with zero tangent.
    const Dual<S> series = detail::lower_gamma_series(zc, a, budget);
    return -(series.tan + series.val * (log_z - digamma(alpha + S(1)))) / alpha;
}

/// log P(z, alpha) from log z. Stays finite when z itself underflows.
template <std::floating_point S>
S log_reg_inc_gamma(S log_z, S alpha, const IterationBudget<S>& budget = IterationBudget<S>::defaults()) {
    detail::check_finite(log_z, "log_reg_inc_gamma");
    const S z = std::exp(log_z);
    detail::check_gamma_args(z, alpha, "log_reg_inc_gamma");
    if (std::isinf(log_z)) return log_z < S(0) ? -std::numeric_limits<S>::infinity() : S(0);
    if (detail::use_gamma_continued_fraction(z, alpha)) return std::log(reg_inc_gamma(z, alpha, budget));
    const S log_prefactor = alpha < detail::kGammaPrefactorShift<S> || z == S(0)
                                ? alpha * log_z - z - log_gamma(alpha + S(1))
                                : detail::log_series_prefactor(z, alpha);
    return std::log(detail::lower_gamma_series(z, alpha, budget)) + log_prefactor;
}

// ---------------------------------------------------------------------------
// Modified Bessel functions of the first kind
// ---------------------------------------------------------------------------

namespace detail {

// Below this argument the ascending series is used for I0 and I1; above it the
// asymptotic expansion, whose smallest term is then below double epsilon.
template <std::floating_point S>
inline constexpr S kBesselAsymptoticThreshold = S(20);

template <std::floating_point S>
S bessel_ie_series(int order, S x) {
    // e^{-x} sum_k (x/2)^{2k+n} / (k! (k+n)!)
    const S q = x * x / S(4);
    S term = std::pow(x / S(2), S(order)) / std::tgamma(S(order + 1));
    S sum = term;
    for (int k = 1; k < 1000; ++k) {
        term *= q / (S(k) * S(k + order));
        sum += term;
        if (term <= std::numeric_limits<S>::epsilon() / S(4) * sum) break;
    }
    return sum * std::exp(-x);
}

template <std::floating_point S>
S bessel_ie_asymptotic(int order, S x) {
    // e^{-x} I_n(x) ~ (2 pi x)^{-1/2} sum_k (-1)^k prod_{j<=k} (4n^2 - (2j-1)^2) / (k! (8x)^k)
    const S mu = S(4) * S(order) * S(order);
    S term = 1;
    S sum = 1;
    for (int k = 1; k < 200; ++k) {
        const S odd = S(2 * k - 1);
        const S next = -term * (mu - odd * odd) / (S(k) * S(8) * x);
        if (std::abs(next) >= std::abs(term)) break;
        term = next;
        sum += term;
        if (std::abs(term) <= std::numeric_limits<S>::epsilon() / S(4) * std::abs(sum)) break;
    }
    return sum / std::sqrt(S(2) * std::numbers::pi_v<S> * x);
}

template <std::floating_point S>
void check_bessel_arg(S x, const char* what) {
    check_finite(x, what);
    if (x < S(0)) throw DomainError(std::string(what) + ": argument must be >= 0");
}

}  // namespace detail

/// Exponentially scaled I0: e^{-x} I0(x).
template <std::floating_point S>
S bessel_i0e(S x) {
    detail::check_bessel_arg(x, "bessel_i0e");
    return x < detail::kBesselAsymptoticThreshold<S> ? detail::bessel_ie_series(0, x)
                                                     : detail::bessel_ie_asymptotic(0, x);
}

/// Exponentially scaled I1: e^{-x} I1(x).
template <std::floating_point S>
S bessel_i1e(S x) {
    detail::check_bessel_arg(x, "bessel_i1e");
    return x < detail::kBesselAsymptoticThreshold<S> ? detail::bessel_ie_series(1, x)
                                                     : detail::bessel_ie_asymptotic(1, x);
}

template <std::floating_point S>
Dual<S> bessel_i0e(const Dual<S>& x) {
    const S i0 = bessel_i0e(x.val);
    if (x.tan == S(0)) return {i0, S(0)};
    return {i0, (bessel_i1e(x.val) - i0) * x.tan};
}

template <std::floating_point S>
Dual<S> bessel_i1e(const Dual<S>& x) {
    const S i1 = bessel_i1e(x.val);
    if (x.tan == S(0)) return {i1, S(0)};
    if (x.val == S(0)) return {i1, S(0.5) * x.tan};
    // I1' = I0 - I1 / x
    return {i1, (bessel_i0e(x.val) - i1 / x.val - i1) * x.tan};
}

/// I_n(x) / I_{n-1}(x) for n >= 1 and x > 0, from the continued fraction
/// 1 / (2n/x + 1 / (2(n+1)/x + ...)) evaluated with the modified Lentz method.
template <std::floating_point S>
S bessel_i_order_ratio(int n, S x) {
    if (n < 1) throw DomainError("bessel_i_order_ratio: order must be >= 1");
    detail::check_bessel_arg(x, "bessel_i_order_ratio");
    if (x == S(0)) return S(0);
    constexpr S tiny = std::numeric_limits<S>::min() * S(16);
    constexpr S eps = std::numeric_limits<S>::epsilon();
    S f = S(2 * n) / x;
    S c = f;
    S d = 0;
    constexpr int kMaxIter = 1'000'000;
    for (int k = 1; k < kMaxIter; ++k) {
        const S b = S(2 * (n + k)) / x;
        d = b + d;
        if (d == S(0)) d = tiny;
        c = b + S(1) / c;
        if (c == S(0)) c = tiny;
        d = S(1) / d;
        const S delta = c * d;
        f *= delta;
        if (std::abs(delta - S(1)) <= eps) return S(1) / f;
    }
    throw ConvergenceError("bessel_i_order_ratio: continued fraction did not converge", S(1) / f, kMaxIter);
}

/// Exponentially scaled modified Bessel function e^{-x} I_n(x), n >= 0.
template <std::floating_point S>
S bessel_ie(int order, S x) {
    if (order < 0) throw DomainError("bessel_ie: order must be >= 0");
    if (order == 0) return bessel_i0e(x);
    if (order == 1) return bessel_i1e(x);
    detail::check_bessel_arg(x, "bessel_ie");
    if (x == S(0)) return S(0);
    // Ratios r_m = I_m / I_{m-1}: top one from the continued fraction, the
    // rest by downward recursion r_m = 1 / (2m/x + r_{m+1}).
    S r = bessel_i_order_ratio(order, x);
    S product = r;
    for (int m = order - 1; m >= 1; --m) {
        r = S(1) / (S(2 * m) / x + r);
        product *= r;
    }
    return bessel_i0e(x) * product;
}

/// Modified Bessel function of the first kind I_n(x). Overflows to +inf for large x.
template <std::floating_point S>
S bessel_i(int order, S x) {
    return std::exp(x) * bessel_ie(order, x);
}

/// I1(x) / I0(x).
template <std::floating_point S>
S bessel_i_ratio(S x) {
    detail::check_bessel_arg(x, "bessel_i_ratio");
    if (x == S(0)) return S(0);
    return bessel_i1e(x) / bessel_i0e(x);
}

// ---------------------------------------------------------------------------
// von Mises CDF
// ---------------------------------------------------------------------------

namespace detail {

template <std::floating_point S>
inline constexpr S kVonMisesNormalThreshold = S(50);

// Hill's rule leaves a truncated tail near 2.5e-13 at kappa around 30, which
// is enough for single precision. Eight further terms bring double down to the
// rounding floor of the series, about 1e-14 absolute.
template <std::floating_point S>
inline constexpr int kVonMisesExtraTerms = std::is_same_v<S, float> ? 0 : 8;

/// Number of series terms for concentration kappa (Hill's rule, recalibrated).
template <std::floating_point S>
int von_mises_series_terms(S kappa) {
    return static_cast<int>(std::ceil(S(28) + S(0.5) * kappa - S(100) / (kappa + S(5)))) + kVonMisesExtraTerms<S>;
}

template <Real T>
T von_mises_cdf_series(const T& z, const T& kappa) {
    using S = scalar_of_t<T>;
    using std::cos;
    using std::sin;
    const int p = von_mises_series_terms(value_of(kappa));
    const T s = sin(z);
    const T c = cos(z);
    T sn = sin(S(p) * z);
    T cn = cos(S(p) * z);
    T ratio(0);
    T acc(0);
    for (int n = p - 1; n >= 1; --n) {
        const T sn_next = sn * c - cn * s;
        cn = cn * c + sn * s;
        sn = sn_next;
        ratio = S(1) / (S(2 * n) / kappa + ratio);
        acc = ratio * (sn / S(n) + acc);
    }
    constexpr S pi = std::numbers::pi_v<S>;
    return S(0.5) + z / (S(2) * pi) + acc / pi;
}

template <Real T>
T von_mises_cdf_normal(const T& z, const T& kappa) {
    using S = scalar_of_t<T>;
    using std::sin;
    constexpr S pi = std::numbers::pi_v<S>;
    const S scale = std::sqrt(S(2) / pi);
    const T b = scale / bessel_i0e(kappa) * sin(z / S(2));
    // Hill's correction to the plain Normal approximation.
    const T b2 = b * b;
    const T b3 = b2 * b;
    const T b4 = b2 * b2;
    const T c = S(24) * kappa;
    const T bracket = (c - S(2) * b2 - S(16)) / S(3) - (b4 + S(1.75) * b2 + S(83.5)) / (c - S(56) - b2 + S(3));
    const T xi = b - b3 / (bracket * bracket);
    return normal_cdf(xi);
}

}  // namespace detail

/// CDF of vonMises(0, kappa) on [-pi, pi], F(z) = int_{-pi}^{z} density.
///
/// kappa < 50 sums the Fourier series with Hill's truncation point and a
/// backward recursion for the Bessel ratios; larger kappa uses Hill's corrected
/// Normal approximation. Results are clamped to [0, 1].
template <Real T>
T von_mises_cdf(const T& z, const T& kappa) {
    using S = scalar_of_t<T>;
    constexpr S pi = std::numbers::pi_v<S>;
    const S zv = value_of(z);
    const S kv = value_of(kappa);
    detail::check_finite(zv, "von_mises_cdf");
    detail::check_finite(kv, "von_mises_cdf");
    if (zv < -pi || zv > pi) throw DomainError("von_mises_cdf: z must lie in [-pi, pi]");
    if (!(kv > S(0))) throw DomainError("von_mises_cdf: kappa must be > 0");
    if (zv == -pi) return T(0);
    if (zv == pi) return T(1);
    const T cdf = kv < detail::kVonMisesNormalThreshold<S> ? detail::von_mises_cdf_series(z, kappa)
                                                            : detail::von_mises_cdf_normal(z, kappa);
    // The series carries an absolute error near 1e-13 that can push the far
    // tails outside [0, 1]; pin them as Hill's routine does.
    if (value_of(cdf) < S(0)) return T(0);
    if (value_of(cdf) > S(1)) return T(1);
    return cdf;
}

// ---------------------------------------------------------------------------
// Log-densities
// ---------------------------------------------------------------------------

template <Real T>
T gamma_log_pdf(const T& z, const T& alpha, const T& beta) {
    using std::log;
    if (!(value_of(z) > 0)) throw DomainError("gamma_log_pdf: z must be > 0");
    if (!(value_of(alpha) > 0) || !(value_of(beta) > 0)) throw DomainError("gamma_log_pdf: invalid parameters");
    // beta^alpha z^(alpha-1) e^(-beta z) / Gamma(alpha) = prefactor(beta z, alpha) / z
    return detail::log_gamma_prefactor(beta * z, alpha) - log(z);
}

template <Real T>
T beta_log_pdf(const T& z, const T& a, const T& b) {
    using std::log;
    if (!(value_of(z) > 0) || !(value_of(z) < 1)) throw DomainError("beta_log_pdf: z must lie in (0, 1)");
    if (!(value_of(a) > 0) || !(value_of(b) > 0)) throw DomainError("beta_log_pdf: invalid parameters");
    return (a - 1) * log(z) + (b - 1) * log(T(1) - z) + log_gamma(a + b) - log_gamma(a) - log_gamma(b);
}

template <Real T>
T normal_log_pdf(const T& z, const T& mu, const T& sigma) {
    using std::log;
    using S = scalar_of_t<T>;
    if (!(value_of(sigma) > 0)) throw DomainError("normal_log_pdf: sigma must be > 0");
    const T s = (z - mu) / sigma;
    constexpr S half_log_2pi = S(0.91893853320467274178032973640561764);
    return S(-0.5) * s * s - log(sigma) - half_log_2pi;
}

/// Standard Student-t with nu degrees of freedom.
template <Real T>
T student_t_log_pdf(const T& z, const T& nu) {
    using std::log;
    using S = scalar_of_t<T>;
    if (!(value_of(nu) > 0)) throw DomainError("student_t_log_pdf: nu must be > 0");
    const T half_nu_plus = (nu + S(1)) / S(2);
    return log_gamma(half_nu_plus) - log_gamma(nu / S(2)) - S(0.5) * log(nu * std::numbers::pi_v<S>) -
           half_nu_plus * log(S(1) + z * z / nu);
}

template <Real T>
T von_mises_log_pdf(const T& z, const T& mu, const T& kappa) {
    using std::cos;
    using std::log;
    using S = scalar_of_t<T>;
    constexpr S pi = std::numbers::pi_v<S>;
    if (value_of(z) < -pi || value_of(z) > pi) throw DomainError("von_mises_log_pdf: z must lie in [-pi, pi]");
    if (value_of(kappa) < 0) throw DomainError("von_mises_log_pdf: kappa must be >= 0");
    // log(exp(k cos(z - mu)) / (2 pi I0(k))) with I0 scaled by exp(-k)
    return kappa * (cos(z - mu) - S(1)) - log(S(2) * pi * bessel_i0e(kappa));
}

template <Real T>
T dirichlet_log_pdf(std::span<const T> z, std::span<const T> alpha) {
    using std::log;
    using S = scalar_of_t<T>;
    if (z.size() != alpha.size() || z.size() < 2) throw DomainError("dirichlet_log_pdf: dimension mismatch");
    S total = 0;
    for (const T& zi : z) {
        if (!(value_of(zi) > 0)) throw DomainError("dirichlet_log_pdf: z must lie in the open simplex");
        total += value_of(zi);
    }
    if (std::abs(total - S(1)) > S(1e-8) * S(z.size())) {
        throw DomainError("dirichlet_log_pdf: z must sum to one");
    }
    T result(0);
    T alpha_sum(0);
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (!(value_of(alpha[i]) > 0)) throw DomainError("dirichlet_log_pdf: invalid parameters");
        result += (alpha[i] - S(1)) * log(z[i]) - log_gamma(alpha[i]);
        alpha_sum += alpha[i];
    }
    return result + log_gamma(alpha_sum);
}

/// Runtime-dispatched log-density. Parameter layouts:
/// gamma (alpha, beta), beta (a, b), dirichlet (alpha_1..alpha_D), normal (mu, sigma),
/// student_t (nu), von_mises (mu, kappa). `z` has one entry except for dirichlet.
inline double log_pdf(Family family, std::span<const double> z, std::span<const double> params) {
    auto need = [&](std::size_t nz, std::size_t np) {
        if (z.size() != nz || params.size() != np) {
            throw DomainError("log_pdf: wrong number of values for " + to_string(family));
        }
    };
    switch (family) {
        case Family::gamma: need(1, 2); return gamma_log_pdf(z[0], params[0], params[1]);
        case Family::beta: need(1, 2); return beta_log_pdf(z[0], params[0], params[1]);
        case Family::normal: need(1, 2); return normal_log_pdf(z[0], params[0], params[1]);
        case Family::student_t: need(1, 1); return student_t_log_pdf(z[0], params[0]);
        case Family::von_mises: need(1, 2); return von_mises_log_pdf(z[0], params[0], params[1]);
        case Family::dirichlet: need(params.size(), params.size()); return dirichlet_log_pdf(z, params);
    }
    throw DomainError("log_pdf: unknown family");
}

}  // namespace irg
