#pragma once

// Forward-mode differentiation with a single tangent direction.
//
// A Dual carries a value and the derivative of that value with respect to one
// active parameter. Every elementary operation propagates the tangent with the
// chain rule, so running an ordinary numerical routine on Duals yields its
// derivative alongside its value. Jacobians with several columns are built by
// repeated passes, one active parameter at a time.

#include <cmath>
#include <concepts>
#include <limits>
#include <numbers>
#include <string>
#include <type_traits>

#include "irg/errors.hpp"

namespace irg {

// ---------------------------------------------------------------------------
// Scalar special functions needed by the differentiation rules.
// ---------------------------------------------------------------------------

/// log|Gamma(x)|. Uses the reentrant libm entry point where available.
template <std::floating_point T>
T log_gamma(T x) {
#if defined(__GLIBC__) || defined(__APPLE__)
    int sign = 0;
    if constexpr (std::is_same_v<T, float>) {
        return ::lgammaf_r(x, &sign);
    } else if constexpr (std::is_same_v<T, double>) {
        return ::lgamma_r(x, &sign);
    } else {
        return ::lgammal_r(x, &sign);
    }
#else
    return std::lgamma(x);
#endif
}

namespace detail {

template <std::floating_point T>
bool is_nonpositive_integer(T x) {
    return x <= T(0) && x == std::floor(x);
}

// Arguments are shifted up to this threshold before the asymptotic series is
// applied. At 10 the first omitted term is below double epsilon.
template <std::floating_point T>
inline constexpr T kAsymptoticShift = T(10);

}  // namespace detail

/// Digamma function psi(x) = d/dx log Gamma(x).
template <std::floating_point T>
T digamma(T x) {
    if (std::isnan(x) || detail::is_nonpositive_integer(x)) {
        throw DomainError("digamma: argument is NaN or a nonpositive integer");
    }
    if (x < T(0)) {
        // Reflection: psi(1 - x) - psi(x) = pi cot(pi x).
        const T pi = std::numbers::pi_v<T>;
        return digamma(T(1) - x) - pi / std::tan(pi * x);
    }
    T result = 0;
    while (x < detail::kAsymptoticShift<T>) {
        result -= T(1) / x;
        x += T(1);
    }
    const T inv = T(1) / x;
    const T inv2 = inv * inv;
    const T tail =
        inv2 * (T(1) / T(12) -
                inv2 * (T(1) / T(120) -
                        inv2 * (T(1) / T(252) -
                                inv2 * (T(1) / T(240) -
                                        inv2 * (T(1) / T(132) - inv2 * (T(691) / T(32760)))))));
    return result + std::log(x) - T(0.5) * inv - tail;
}

/// Trigamma function psi'(x).
template <std::floating_point T>
T trigamma(T x) {
    if (std::isnan(x) || detail::is_nonpositive_integer(x)) {
        throw DomainError("trigamma: argument is NaN or a nonpositive integer");
    }
    if (x < T(0)) {
        // Reflection: psi'(1 - x) + psi'(x) = pi^2 / sin^2(pi x).
        const T pi = std::numbers::pi_v<T>;
        const T s = std::sin(pi * x);
        return -trigamma(T(1) - x) + pi * pi / (s * s);
    }
    T result = 0;
    while (x < detail::kAsymptoticShift<T>) {
        result += T(1) / (x * x);
        x += T(1);
    }
    const T inv = T(1) / x;
    const T inv2 = inv * inv;
    const T tail =
        inv * inv2 *
        (T(1) / T(6) -
         inv2 * (T(1) / T(30) -
                 inv2 * (T(1) / T(42) -
                         inv2 * (T(1) / T(30) -
                                 inv2 * (T(5) / T(66) -
                                         inv2 * (T(691) / T(2730) - inv2 * (T(7) / T(6))))))));
    return result + inv + T(0.5) * inv2 + tail;
}

/// Standard Normal density.
template <std::floating_point T>
T normal_pdf(T x) {
    constexpr T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
    return std::exp(T(-0.5) * x * x) * inv_sqrt_2pi;
}

/// Standard Normal CDF.
template <std::floating_point T>
T normal_cdf(T x) {
    return T(0.5) * std::erfc(-x / std::numbers::sqrt2_v<T>);
}

// ---------------------------------------------------------------------------
// Dual numbers
// ---------------------------------------------------------------------------

template <std::floating_point T>
struct Dual {
    using value_type = T;

    T val{};
    T tan{};

    constexpr Dual() = default;
    // Implicit on purpose: scalars in mixed expressions are constants.
    constexpr Dual(T v) : val(v), tan(0) {}  // NOLINT(google-explicit-constructor)
    constexpr Dual(T v, T t) : val(v), tan(t) {}

    constexpr Dual operator-() const { return {-val, -tan}; }
    constexpr Dual operator+() const { return *this; }

    constexpr Dual& operator+=(const Dual& o) {
        val += o.val;
        tan += o.tan;
        return *this;
    }
    constexpr Dual& operator-=(const Dual& o) {
        val -= o.val;
        tan -= o.tan;
        return *this;
    }
    constexpr Dual& operator*=(const Dual& o) { return *this = *this * o; }
    Dual& operator/=(const Dual& o) { return *this = *this / o; }

    friend constexpr Dual operator+(const Dual& a, const Dual& b) { return {a.val + b.val, a.tan + b.tan}; }
    friend constexpr Dual operator+(const Dual& a, T b) { return {a.val + b, a.tan}; }
    friend constexpr Dual operator+(T a, const Dual& b) { return {a + b.val, b.tan}; }

    friend constexpr Dual operator-(const Dual& a, const Dual& b) { return {a.val - b.val, a.tan - b.tan}; }
    friend constexpr Dual operator-(const Dual& a, T b) { return {a.val - b, a.tan}; }
    friend constexpr Dual operator-(T a, const Dual& b) { return {a - b.val, -b.tan}; }

    friend constexpr Dual operator*(const Dual& a, const Dual& b) {
        return {a.val * b.val, a.tan * b.val + a.val * b.tan};
    }
    friend constexpr Dual operator*(const Dual& a, T b) { return {a.val * b, a.tan * b}; }
    friend constexpr Dual operator*(T a, const Dual& b) { return {a * b.val, a * b.tan}; }

    friend Dual operator/(const Dual& a, const Dual& b) {
        if (b.val == T(0)) throw DomainError("Dual: division by zero");
        const T r = a.val / b.val;
        return {r, (a.tan - r * b.tan) / b.val};
    }
    friend Dual operator/(const Dual& a, T b) {
        if (b == T(0)) throw DomainError("Dual: division by zero");
        return {a.val / b, a.tan / b};
    }
    friend Dual operator/(T a, const Dual& b) {
        if (b.val == T(0)) throw DomainError("Dual: division by zero");
        const T r = a / b.val;
        return {r, -r * b.tan / b.val};
    }

    friend constexpr bool operator==(const Dual&, const Dual&) = default;
};

template <std::floating_point T>
constexpr Dual<T> lift_const(T x) {
    return {x, T(0)};
}

template <std::floating_point T>
constexpr Dual<T> lift_var(T x) {
    return {x, T(1)};
}

// ---------------------------------------------------------------------------
// Traits for code that is generic over plain scalars and Duals.
// ---------------------------------------------------------------------------

template <class T>
struct scalar_of {
    using type = T;
};
template <class T>
struct scalar_of<Dual<T>> {
    using type = T;
};
template <class T>
using scalar_of_t = typename scalar_of<T>::type;

template <class T>
inline constexpr bool is_dual_v = false;
template <class T>
inline constexpr bool is_dual_v<Dual<T>> = true;

/// A plain floating-point scalar or a Dual over one.
template <class T>
concept Real = std::floating_point<T> || is_dual_v<T>;

template <std::floating_point T>
constexpr T value_of(T x) {
    return x;
}
template <std::floating_point T>
constexpr T value_of(const Dual<T>& x) {
    return x.val;
}

template <std::floating_point T>
constexpr T tangent_of(T) {
    return T(0);
}
template <std::floating_point T>
constexpr T tangent_of(const Dual<T>& x) {
    return x.tan;
}

// ---------------------------------------------------------------------------
// Elementary functions
// ---------------------------------------------------------------------------

template <std::floating_point T>
Dual<T> exp(const Dual<T>& x) {
    const T e = std::exp(x.val);
    return {e, e * x.tan};
}

template <std::floating_point T>
Dual<T> log(const Dual<T>& x) {
    if (!(x.val > T(0))) throw DomainError("Dual: log of nonpositive argument");
    return {std::log(x.val), x.tan / x.val};
}

template <std::floating_point T>
Dual<T> log1p(const Dual<T>& x) {
    if (!(x.val > T(-1))) throw DomainError("Dual: log1p of argument <= -1");
    return {std::log1p(x.val), x.tan / (T(1) + x.val)};
}

template <std::floating_point T>
Dual<T> sqrt(const Dual<T>& x) {
    if (x.val < T(0)) throw DomainError("Dual: sqrt of negative argument");
    const T s = std::sqrt(x.val);
    if (s == T(0)) {
        if (x.tan != T(0)) throw DomainError("Dual: sqrt derivative undefined at zero");
        return {s, T(0)};
    }
    return {s, x.tan / (T(2) * s)};
}

template <std::floating_point T>
Dual<T> sin(const Dual<T>& x) {
    return {std::sin(x.val), std::cos(x.val) * x.tan};
}

template <std::floating_point T>
Dual<T> cos(const Dual<T>& x) {
    return {std::cos(x.val), -std::sin(x.val) * x.tan};
}

template <std::floating_point T>
Dual<T> abs(const Dual<T>& x) {
    return x.val < T(0) ? -x : x;
}

template <std::floating_point T>
Dual<T> pow(const Dual<T>& a, T b) {
    if (b == T(0)) return {T(1), T(0)};
    const T p = std::pow(a.val, b);
    if (a.tan == T(0)) return {p, T(0)};
    return {p, b * std::pow(a.val, b - T(1)) * a.tan};
}

template <std::floating_point T>
Dual<T> pow(const Dual<T>& a, const Dual<T>& b) {
    if (b.tan == T(0)) return pow(a, b.val);
    if (!(a.val > T(0))) throw DomainError("Dual: pow with active exponent needs a positive base");
    const T p = std::pow(a.val, b.val);
    T tan = p * std::log(a.val) * b.tan;
    if (a.tan != T(0)) tan += b.val * std::pow(a.val, b.val - T(1)) * a.tan;
    return {p, tan};
}

template <std::floating_point T>
Dual<T> pow(T a, const Dual<T>& b) {
    return pow(Dual<T>(a), b);
}

template <std::floating_point T>
Dual<T> log_gamma(const Dual<T>& x) {
    if (detail::is_nonpositive_integer(x.val)) throw DomainError("Dual: lgamma pole");
    const T v = log_gamma(x.val);
    if (x.tan == T(0)) return {v, T(0)};
    return {v, digamma(x.val) * x.tan};
}

template <std::floating_point T>
Dual<T> digamma(const Dual<T>& x) {
    const T v = digamma(x.val);
    if (x.tan == T(0)) return {v, T(0)};
    return {v, trigamma(x.val) * x.tan};
}

template <std::floating_point T>
Dual<T> erf(const Dual<T>& x) {
    constexpr T two_over_sqrtpi = T(2) * std::numbers::inv_sqrtpi_v<T>;
    return {std::erf(x.val), two_over_sqrtpi * std::exp(-x.val * x.val) * x.tan};
}

template <std::floating_point T>
Dual<T> erfc(const Dual<T>& x) {
    constexpr T two_over_sqrtpi = T(2) * std::numbers::inv_sqrtpi_v<T>;
    return {std::erfc(x.val), -two_over_sqrtpi * std::exp(-x.val * x.val) * x.tan};
}

template <std::floating_point T>
Dual<T> normal_cdf(const Dual<T>& x) {
    return {normal_cdf(x.val), normal_pdf(x.val) * x.tan};
}

template <std::floating_point T>
Dual<T> normal_pdf(const Dual<T>& x) {
    const T p = normal_pdf(x.val);
    return {p, -x.val * p * x.tan};
}

// ---------------------------------------------------------------------------
// Runtime-dispatched elementary operation.
// ---------------------------------------------------------------------------

enum class ElementaryOp { add, sub, mul, div, neg, exp, log, pow, sqrt, sin, cos, lgamma, digamma };

/// Applies `op` to `a` (and `b` for binary ops). Unary ops ignore `b`.
template <std::floating_point T>
Dual<T> elementary(ElementaryOp op, const Dual<T>& a, const Dual<T>& b = Dual<T>{}) {
    switch (op) {
        case ElementaryOp::add: return a + b;
        case ElementaryOp::sub: return a - b;
        case ElementaryOp::mul: return a * b;
        case ElementaryOp::div: return a / b;
        case ElementaryOp::neg: return -a;
        case ElementaryOp::exp: return exp(a);
        case ElementaryOp::log: return log(a);
        case ElementaryOp::pow: return pow(a, b);
        case ElementaryOp::sqrt: return sqrt(a);
        case ElementaryOp::sin: return sin(a);
        case ElementaryOp::cos: return cos(a);
        case ElementaryOp::lgamma: return log_gamma(a);
        case ElementaryOp::digamma: return digamma(a);
    }
    throw DomainError("elementary: unknown op");
}

}  // namespace irg
