#pragma once

// Samplers paired with implicit reparameterization Jacobians dz/dphi.
//
// Drawing a sample and differentiating it are separate steps: every family has
// a `*_jacobian(z, params)` function that works for any z in the support, and
// a `sample_*` function that draws z and then calls it. The sampler never
// influences the gradient.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "irg/dual.hpp"
#include "irg/errors.hpp"
#include "irg/random.hpp"
#include "irg/special.hpp"

namespace irg {

/// Dense row-major matrix; rows are sample dimensions, columns are parameters.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

struct GradSample {
    std::vector<double> z;
    Matrix jac;
};

enum class CdfDerivative { autodiff, finite_difference };

/// How dF/dphi is obtained. `fd_step` is the relative step of the central
/// difference [F(phi (1 + d)) - F(phi (1 - d))] / (2 phi d).
struct GradientOptions {
    CdfDerivative method = CdfDerivative::autodiff;
    double fd_step = 1e-5;
};

enum class GammaSampler { marsaglia_tsang, inverse_cdf };

// ---------------------------------------------------------------------------
// Parameter records
// ---------------------------------------------------------------------------

struct GammaParams {
    double alpha = 1.0;  // shape
    double beta = 1.0;   // rate

    static constexpr double kClipLow = 1e-3;
    static constexpr double kClipHigh = 1e3;

    static GammaParams raw(double alpha, double beta) {
        if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
            throw DomainError("GammaParams: shape and rate must be finite and > 0");
        }
        return {alpha, beta};
    }

    static GammaParams clipped(double alpha, double beta) {
        if (std::isnan(alpha) || std::isnan(beta)) throw DomainError("GammaParams: NaN parameter");
        return {std::clamp(alpha, kClipLow, kClipHigh), std::clamp(beta, kClipLow, kClipHigh)};
    }
};

struct VonMisesParams {
    double mu = 0.0;  // in [-pi, pi)
    double kappa = 1.0;

    static VonMisesParams make(double mu, double kappa) {
        if (!std::isfinite(mu) || !(kappa > 0.0) || !std::isfinite(kappa)) {
            throw DomainError("VonMisesParams: need finite mu and finite kappa > 0");
        }
        return {wrap_angle(mu), kappa};
    }

    /// Location from an unconstrained pair, mu = atan2(x, y).
    static VonMisesParams from_xy(double x, double y, double kappa) { return make(std::atan2(x, y), kappa); }
};

struct TruncationWindow {
    double a;
    double b;

    static TruncationWindow make(double a, double b) {
        if (std::isnan(a) || std::isnan(b) || !(a < b)) throw DomainError("TruncationWindow: need a < b");
        return {a, b};
    }
};

// ---------------------------------------------------------------------------
// Univariate base families used by truncation and mixtures. Each exposes its
// CDF and log-density generically over Dual so partials come from autodiff.
// ---------------------------------------------------------------------------

struct NormalFamily {
    static constexpr std::size_t arity = 2;  // (mu, sigma)
    using Params = std::array<double, arity>;

    static void validate(const Params& p) {
        if (!std::isfinite(p[0]) || !(p[1] > 0.0) || !std::isfinite(p[1])) {
            throw DomainError("NormalFamily: need finite mu and sigma > 0");
        }
    }
    static double lower(const Params&) { return -std::numeric_limits<double>::infinity(); }
    static double upper(const Params&) { return std::numeric_limits<double>::infinity(); }

    template <Real T>
    static T cdf(const T& z, const std::array<T, arity>& p) {
        return normal_cdf((z - p[0]) / p[1]);
    }
    template <Real T>
    static T log_pdf(const T& z, const std::array<T, arity>& p) {
        return normal_log_pdf(z, p[0], p[1]);
    }
    template <Urbg G>
    static double sample(const Params& p, G& rng) {
        return p[0] + p[1] * standard_normal(rng);
    }
};

struct GammaFamily {
    static constexpr std::size_t arity = 2;  // (alpha, beta)
    using Params = std::array<double, arity>;

    static void validate(const Params& p) { GammaParams::raw(p[0], p[1]); }
    static double lower(const Params&) { return 0.0; }
    static double upper(const Params&) { return std::numeric_limits<double>::infinity(); }

    template <Real T>
    static T cdf(const T& z, const std::array<T, arity>& p) {
        if (!(value_of(z) > 0)) return T(0);
        return reg_inc_gamma(p[1] * z, p[0]);
    }
    template <Real T>
    static T log_pdf(const T& z, const std::array<T, arity>& p) {
        return gamma_log_pdf(z, p[0], p[1]);
    }
    template <Urbg G>
    static double sample(const Params& p, G& rng) {
        return gamma_marsaglia_tsang(p[0], rng) / p[1];
    }
};

template <class F>
concept UnivariateFamily = requires(const typename F::Params& p, double z, Rng& rng) {
    { F::arity } -> std::convertible_to<std::size_t>;
    F::validate(p);
    { F::lower(p) } -> std::convertible_to<double>;
    { F::upper(p) } -> std::convertible_to<double>;
    { F::cdf(z, p) } -> std::convertible_to<double>;
    { F::log_pdf(z, p) } -> std::convertible_to<double>;
    { F::sample(p, rng) } -> std::convertible_to<double>;
};

namespace detail {

template <std::size_t N>
std::array<Dual<double>, N> seed_parameter(const std::array<double, N>& p, std::size_t active) {
    std::array<Dual<double>, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = (i == active) ? lift_var(p[i]) : lift_const(p[i]);
    return out;
}

// Step for a central difference in parameter `x`: relative, except that a
// location sitting at 0 gets an absolute step.
inline double fd_step_for(double x, double delta) { return delta * (x != 0.0 ? std::abs(x) : 1.0); }

inline double checked_density(double log_density, const char* what) {
    const double p = std::exp(log_density);
    if (!(p > 0.0) || !std::isfinite(p)) throw OverflowError(std::string(what) + ": density at the draw is not representable");
    return p;
}

}  // namespace detail

/// dF(z | params)/dparams[j] for every j.
template <UnivariateFamily F>
std::array<double, F::arity> cdf_partials(double z, const typename F::Params& params, const GradientOptions& opts = {}) {
    std::array<double, F::arity> out{};
    for (std::size_t j = 0; j < F::arity; ++j) {
        if (opts.method == CdfDerivative::autodiff) {
            out[j] = F::cdf(lift_const(z), detail::seed_parameter(params, j)).tan;
        } else {
            const double h = detail::fd_step_for(params[j], opts.fd_step);
            auto up = params;
            auto down = params;
            up[j] += h;
            down[j] -= h;
            out[j] = (F::cdf(z, up) - F::cdf(z, down)) / (2.0 * h);
        }
    }
    return out;
}

template <UnivariateFamily F>
double density(double z, const typename F::Params& params) {
    return std::exp(F::log_pdf(z, params));
}

/// dz/dphi = -(dS/dphi) / (dS/dz) for a scalar standardization S(z, phi)
/// callable with Dual arguments. Both partials come from autodiff, so any
/// strictly monotone post-transform of S leaves the result unchanged.
template <std::size_t N, class Standardize>
std::array<double, N> implicit_jacobian(Standardize standardize, double z, const std::array<double, N>& phi) {
    std::array<Dual<double>, N> fixed{};
    for (std::size_t i = 0; i < N; ++i) fixed[i] = lift_const(phi[i]);
    const double ds_dz = standardize(lift_var(z), fixed).tan;
    if (!(std::abs(ds_dz) > 0.0) || !std::isfinite(ds_dz)) {
        throw OverflowError("implicit_jacobian: standardization has no usable z-derivative at the draw");
    }
    std::array<double, N> out{};
    for (std::size_t j = 0; j < N; ++j) {
        out[j] = -standardize(lift_const(z), detail::seed_parameter(phi, j)).tan / ds_dz;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gamma
// ---------------------------------------------------------------------------

/// log of the Gamma(alpha, 1) quantile, by bisection on log z against the
/// log CDF. Finite even when the quantile itself underflows.
inline double gamma_log_inverse_cdf(double u, double alpha) {
    if (!(u > 0.0) || !(u < 1.0)) throw DomainError("gamma_inverse_cdf: u must lie in (0, 1)");
    if (!(alpha > 0.0)) throw DomainError("gamma_inverse_cdf: alpha must be > 0");
    const double log_u = std::log(u);
    auto log_cdf_at = [&](double t) { return log_reg_inc_gamma(t, alpha); };
    double lo = -1.0;
    while (log_cdf_at(lo) > log_u) lo *= 2.0;
    double hi = 1.0;
    while (log_cdf_at(hi) < log_u) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (log_cdf_at(mid) < log_u ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Gamma(alpha, 1) quantile. Returns 0 when the quantile underflows.
inline double gamma_inverse_cdf(double u, double alpha) { return std::exp(gamma_log_inverse_cdf(u, alpha)); }

/// [dz/dalpha, dz/dbeta] for z ~ Gamma(alpha, beta), through the rate-free
/// draw z * beta ~ Gamma(alpha, 1).
inline std::array<double, 2> gamma_jacobian(double z, const GammaParams& p, const GradientOptions& opts = {}) {
    const double unit = z * p.beta;
    double dunit_dalpha = 0.0;
    if (opts.method == CdfDerivative::autodiff) {
        dunit_dalpha = reg_inc_gamma_dalpha_stable(unit, p.alpha);
    } else if (unit > 0.0) {
        const double h = p.alpha * opts.fd_step;
        const double dcdf = (reg_inc_gamma(unit, p.alpha + h) - reg_inc_gamma(unit, p.alpha - h)) / (2.0 * h);
        dunit_dalpha = -dcdf / detail::checked_density(gamma_log_pdf(unit, p.alpha, 1.0), "gamma_jacobian");
    }
    return {dunit_dalpha / p.beta, -z / p.beta};
}

template <Urbg G>
double draw_standard_gamma(double alpha, G& rng, GammaSampler sampler) {
    if (sampler == GammaSampler::inverse_cdf) return gamma_inverse_cdf(uniform01(rng), alpha);
    return gamma_marsaglia_tsang(alpha, rng);
}

template <Urbg G>
double draw_log_standard_gamma(double alpha, G& rng, GammaSampler sampler) {
    if (sampler == GammaSampler::inverse_cdf) return gamma_log_inverse_cdf(uniform01(rng), alpha);
    return log_gamma_marsaglia_tsang(alpha, rng);
}

namespace detail {

// d(log g)/dalpha for g ~ Gamma(alpha, 1) given t = log g. The finite-difference
// route differences log P, so it also survives an underflowed g.
inline double gamma_dlog_dalpha(double t, double alpha, const GradientOptions& opts) {
    if (opts.method == CdfDerivative::autodiff) return reg_inc_gamma_dlogz_dalpha(t, alpha);
    const double h = alpha * opts.fd_step;
    const double dlog_cdf = (log_reg_inc_gamma(t, alpha + h) - log_reg_inc_gamma(t, alpha - h)) / (2.0 * h);
    // P / (g pdf(g)) = exp(log P - (alpha t - e^t - log Gamma(alpha))).
    const double log_g_pdf = alpha * t - std::exp(t) - std::lgamma(alpha);
    const double ratio = std::exp(log_reg_inc_gamma(t, alpha) - log_g_pdf);
    if (!std::isfinite(ratio)) throw OverflowError("gamma_dlog_dalpha: density underflow at the sampled point");
    return -dlog_cdf * ratio;
}

}  // namespace detail

template <Urbg G>
GradSample sample_gamma(const GammaParams& p, G& rng, const GradientOptions& opts = {},
                        GammaSampler sampler = GammaSampler::marsaglia_tsang) {
    const double z = draw_standard_gamma(p.alpha, rng, sampler) / p.beta;
    GradSample s{{z}, Matrix(1, 2)};
    const auto jac = gamma_jacobian(z, p, opts);
    s.jac(0, 0) = jac[0];
    s.jac(0, 1) = jac[1];
    return s;
}

// ---------------------------------------------------------------------------
// Beta and Dirichlet as normalized Gammas
// ---------------------------------------------------------------------------

/// z = g1 / (g1 + g2), normalized in log space so that underflowing Gamma
/// draws still give a finite z and Jacobian. dz/da = z (1 - z) dlog(g1)/da.
template <Urbg G>
GradSample sample_beta(double a, double b, G& rng, const GradientOptions& opts = {},
                       GammaSampler sampler = GammaSampler::marsaglia_tsang) {
    const GammaParams pa = GammaParams::raw(a, 1.0);
    const GammaParams pb = GammaParams::raw(b, 1.0);
    const double t1 = draw_log_standard_gamma(pa.alpha, rng, sampler);
    const double t2 = draw_log_standard_gamma(pb.alpha, rng, sampler);
    const double m = std::max(t1, t2);
    const double w1 = std::exp(t1 - m);
    const double w2 = std::exp(t2 - m);
    const double z1 = w1 / (w1 + w2);
    const double z2 = w2 / (w1 + w2);
    GradSample s{{z1}, Matrix(1, 2)};
    s.jac(0, 0) = z1 * z2 * detail::gamma_dlog_dalpha(t1, pa.alpha, opts);
    s.jac(0, 1) = -z1 * z2 * detail::gamma_dlog_dalpha(t2, pb.alpha, opts);
    return s;
}

/// dz_i/dalpha_j = (delta_ij - z_i) z_j dlog(g_j)/dalpha_j, normalized in log space.
template <Urbg G>
GradSample sample_dirichlet(std::span<const double> alphas, G& rng, const GradientOptions& opts = {},
                            GammaSampler sampler = GammaSampler::marsaglia_tsang) {
    const std::size_t dims = alphas.size();
    if (dims < 2) throw DomainError("sample_dirichlet: need at least two concentrations");
    std::vector<double> t(dims);
    std::vector<double> shape(dims);
    for (std::size_t j = 0; j < dims; ++j) {
        shape[j] = GammaParams::raw(alphas[j], 1.0).alpha;
        t[j] = draw_log_standard_gamma(shape[j], rng, sampler);
    }
    const double m = *std::max_element(t.begin(), t.end());
    double total = 0.0;
    GradSample s{std::vector<double>(dims), Matrix(dims, dims)};
    for (std::size_t j = 0; j < dims; ++j) {
        s.z[j] = std::exp(t[j] - m);
        total += s.z[j];
    }
    for (double& z : s.z) z /= total;
    std::vector<double> dlog(dims);
    for (std::size_t j = 0; j < dims; ++j) dlog[j] = detail::gamma_dlog_dalpha(t[j], shape[j], opts);
    for (std::size_t i = 0; i < dims; ++i) {
        for (std::size_t j = 0; j < dims; ++j) {
            s.jac(i, j) = ((i == j ? 1.0 : 0.0) - s.z[i]) * s.z[j] * dlog[j];
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Student-t as a Normal scale mixture
// ---------------------------------------------------------------------------

/// z = eps / sqrt(lambda) with lambda ~ Gamma(nu/2, nu/2) and eps ~ N(0, 1).
/// Both the shape and the rate of lambda move with nu; eps is held fixed.
template <Urbg G>
GradSample sample_student_t(double nu, G& rng, const GradientOptions& opts = {}) {
    if (!(nu > 0.0) || !std::isfinite(nu)) throw DomainError("sample_student_t: nu must be finite and > 0");
    const double half = 0.5 * nu;
    const double t = log_gamma_marsaglia_tsang(half, rng);
    const double eps = standard_normal(rng);
    // log lambda = log g(nu/2) - log(nu/2)  =>  dlog(lambda)/dnu = dlog(g)/dshape / 2 - 1/nu
    const double log_lambda = t - std::log(half);
    const double z = eps * std::exp(-0.5 * log_lambda);
    if (!std::isfinite(z)) throw OverflowError("sample_student_t: draw exceeds the double range");
    const double dlog_lambda = 0.5 * detail::gamma_dlog_dalpha(t, half, opts) - 1.0 / nu;
    GradSample s{{z}, Matrix(1, 1)};
    s.jac(0, 0) = -0.5 * z * dlog_lambda;
    return s;
}

// ---------------------------------------------------------------------------
// von Mises
// ---------------------------------------------------------------------------

/// [dz/dmu, dz/dkappa] at a draw z from vonMises(mu, kappa).
inline std::array<double, 2> von_mises_jacobian(double z, const VonMisesParams& p, const GradientOptions& opts = {}) {
    const double z0 = wrap_angle(z - p.mu);
    double dcdf = 0.0;
    if (opts.method == CdfDerivative::autodiff) {
        dcdf = von_mises_cdf(lift_const(z0), lift_var(p.kappa)).tan;
    } else {
        const double h = p.kappa * opts.fd_step;
        dcdf = (von_mises_cdf(z0, p.kappa + h) - von_mises_cdf(z0, p.kappa - h)) / (2.0 * h);
    }
    const double pdf = detail::checked_density(von_mises_log_pdf(z0, 0.0, p.kappa), "von_mises_jacobian");
    return {1.0, -dcdf / pdf};
}

template <Urbg G>
GradSample sample_von_mises(const VonMisesParams& p, G& rng, const GradientOptions& opts = {}) {
    const double z = wrap_angle(von_mises_best_fisher(p.kappa, rng) + p.mu);
    GradSample s{{z}, Matrix(1, 2)};
    const auto jac = von_mises_jacobian(z, p, opts);
    s.jac(0, 0) = jac[0];
    s.jac(0, 1) = jac[1];
    return s;
}

// ---------------------------------------------------------------------------
// Truncation
// ---------------------------------------------------------------------------

namespace detail {

template <UnivariateFamily F>
struct ClippedWindow {
    double lo;
    double hi;
    double cdf_lo;
    double cdf_hi;
};

template <UnivariateFamily F>
ClippedWindow<F> clip_window(const typename F::Params& params, const TruncationWindow& w) {
    F::validate(params);
    const double lo = std::max(w.a, F::lower(params));
    const double hi = std::min(w.b, F::upper(params));
    const double cdf_lo = std::isinf(lo) ? 0.0 : F::cdf(lo, params);
    const double cdf_hi = std::isinf(hi) ? 1.0 : F::cdf(hi, params);
    if (!(hi > lo) || !(cdf_hi - cdf_lo > 1e-12)) {
        throw DegenerateWindowError("truncation window carries no probability mass");
    }
    return {lo, hi, cdf_lo, cdf_hi};
}

template <UnivariateFamily F>
std::array<double, F::arity> endpoint_partials(double x, const typename F::Params& params, const GradientOptions& opts) {
    if (std::isinf(x) || x <= F::lower(params)) return {};
    return cdf_partials<F>(x, params, opts);
}

}  // namespace detail

/// Quantile of the base family restricted to the window, by bisection.
template <UnivariateFamily F>
double truncated_inverse_cdf(double u, const typename F::Params& params, const TruncationWindow& window) {
    const auto w = detail::clip_window<F>(params, window);
    const double target = w.cdf_lo + u * (w.cdf_hi - w.cdf_lo);
    double lo = w.lo;
    double hi = w.hi;
    for (double step = 1.0; std::isinf(lo); step *= 2.0) {
        if (F::cdf(-step, params) <= target) lo = -step;
    }
    for (double step = 1.0; std::isinf(hi); step *= 2.0) {
        if (F::cdf(step, params) >= target) hi = step;
    }
    for (int i = 0; i < 2000; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (F::cdf(mid, params) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Differentiating u = (F(z) - F(a)) / (F(b) - F(a)) at fixed u gives
///   dz/dphi = -[dF(z) - (1 - u) dF(a) - u dF(b)] / f(z),
/// with f the base density: the window mass cancels.
template <UnivariateFamily F>
std::array<double, F::arity> truncated_jacobian(double z, const typename F::Params& params, const TruncationWindow& window,
                                                const GradientOptions& opts = {}) {
    const auto w = detail::clip_window<F>(params, window);
    const double u = (F::cdf(z, params) - w.cdf_lo) / (w.cdf_hi - w.cdf_lo);
    const auto dz = cdf_partials<F>(z, params, opts);
    const auto da = detail::endpoint_partials<F>(w.lo, params, opts);
    const auto db = detail::endpoint_partials<F>(w.hi, params, opts);
    const double pdf = detail::checked_density(F::log_pdf(z, params), "truncated_jacobian");
    std::array<double, F::arity> out{};
    for (std::size_t j = 0; j < F::arity; ++j) out[j] = -(dz[j] - (1.0 - u) * da[j] - u * db[j]) / pdf;
    return out;
}

template <UnivariateFamily F, Urbg G>
GradSample sample_truncated(const typename F::Params& params, const TruncationWindow& window, G& rng,
                            const GradientOptions& opts = {}) {
    const double z = truncated_inverse_cdf<F>(uniform01(rng), params, window);
    GradSample s{{z}, Matrix(1, F::arity)};
    const auto jac = truncated_jacobian<F>(z, params, window, opts);
    for (std::size_t j = 0; j < F::arity; ++j) s.jac(0, j) = jac[j];
    return s;
}

// ---------------------------------------------------------------------------
// Mixtures of factorized components
// ---------------------------------------------------------------------------

/// K weights and, per component, one base-family parameter record per
/// dimension. Flattened parameter order: the K weight logits, then
/// component-major, dimension-major, parameter-minor. Weight columns are
/// derivatives with respect to eta_k where w = softmax(eta), which keeps every
/// perturbation on the simplex.
template <UnivariateFamily F>
struct MixtureParams {
    std::vector<double> weights;
    std::vector<std::vector<typename F::Params>> components;

    static MixtureParams make(std::vector<double> weights, std::vector<std::vector<typename F::Params>> components) {
        if (weights.empty() || weights.size() != components.size()) {
            throw DomainError("MixtureParams: need one weight per component and K >= 1");
        }
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw DomainError("MixtureParams: weights must be nonnegative");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12) throw DomainError("MixtureParams: weights must sum to one");
        const std::size_t dims = components.front().size();
        if (dims == 0) throw DomainError("MixtureParams: need D >= 1");
        for (const auto& c : components) {
            if (c.size() != dims) throw DomainError("MixtureParams: components disagree on dimension");
            for (const auto& p : c) F::validate(p);
        }
        return {std::move(weights), std::move(components)};
    }

    std::size_t num_components() const { return weights.size(); }
    std::size_t dims() const { return components.front().size(); }
    std::size_t num_params() const { return num_components() * (1 + dims() * F::arity); }
    std::size_t param_index(std::size_t k, std::size_t d, std::size_t j) const {
        return num_components() + (k * dims() + d) * F::arity + j;
    }
};

/// Partials of the distributional transform S_d(z_1..z_d) = sum_i w_i^d F_i^d(z_d),
/// with posterior weights w_i^d proportional to w_i prod_{e<d} q_i^e(z_e).
/// dS_dz is lower triangular.
struct TransformPartials {
    Matrix dS_dz;
    Matrix dS_dphi;
};

template <UnivariateFamily F>
TransformPartials mixture_transform_partials(std::span<const double> z, const MixtureParams<F>& m) {
    const std::size_t K = m.num_components();
    const std::size_t D = m.dims();
    if (z.size() != D) throw DomainError("mixture_transform_partials: dimension mismatch");
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();

    // Per (component, dimension): log-density, its z-derivative and its parameter gradient.
    std::vector<double> log_q(K * D);
    std::vector<double> score_z(K * D);
    std::vector<std::array<double, F::arity>> score_phi(K * D);
    std::vector<double> cdf(K * D);
    std::vector<std::array<double, F::arity>> dcdf(K * D);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t d = 0; d < D; ++d) {
            const auto& p = m.components[k][d];
            const std::size_t idx = k * D + d;
            const bool inside = z[d] > F::lower(p) && z[d] < F::upper(p);
            std::array<Dual<double>, F::arity> pc{};
            for (std::size_t j = 0; j < F::arity; ++j) pc[j] = lift_const(p[j]);
            if (inside) {
                const auto lz = F::log_pdf(lift_var(z[d]), pc);
                log_q[idx] = lz.val;
                score_z[idx] = lz.tan;
                for (std::size_t j = 0; j < F::arity; ++j) {
                    score_phi[idx][j] = F::log_pdf(lift_const(z[d]), detail::seed_parameter(p, j)).tan;
                }
            } else {
                log_q[idx] = neg_inf;
            }
            cdf[idx] = F::cdf(z[d], p);
            dcdf[idx] = cdf_partials<F>(z[d], p);
        }
    }

    TransformPartials out{Matrix(D, D), Matrix(D, m.num_params())};
    std::vector<double> log_unnorm(K);
    std::vector<double> post(K);
    for (std::size_t d = 0; d < D; ++d) {
        double peak = neg_inf;
        for (std::size_t k = 0; k < K; ++k) {
            double acc = 0.0;
            for (std::size_t e = 0; e < d; ++e) acc += log_q[k * D + e];
            log_unnorm[k] = (m.weights[k] > 0.0 ? std::log(m.weights[k]) : neg_inf) + acc;
            peak = std::max(peak, log_unnorm[k]);
        }
        if (peak == neg_inf) throw DegenerateResponsibilityError("mixture: posterior weights have a zero normalizer");
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) sum += std::exp(log_unnorm[k] - peak);
        const double log_norm = peak + std::log(sum);
        double s_d = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            post[k] = std::exp(log_unnorm[k] - log_norm);
            s_d += post[k] * cdf[k * D + d];
        }

        double diag = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            if (log_q[k * D + d] > neg_inf) diag += post[k] * std::exp(log_q[k * D + d]);
        }
        out.dS_dz(d, d) = diag;
        for (std::size_t e = 0; e < d; ++e) {
            double mean_score = 0.0;
            for (std::size_t k = 0; k < K; ++k) mean_score += post[k] * score_z[k * D + e];
            double acc = 0.0;
            for (std::size_t k = 0; k < K; ++k) acc += post[k] * (score_z[k * D + e] - mean_score) * cdf[k * D + d];
            out.dS_dz(d, e) = acc;
        }

        for (std::size_t k = 0; k < K; ++k) {
            const double centered = cdf[k * D + d] - s_d;
            // dS_d/deta_k = w_k^d (F_k^d - S_d); the softmax Jacobian cancels the 1/w_k.
            out.dS_dphi(d, k) = post[k] * centered;
            for (std::size_t j = 0; j < F::arity; ++j) {
                out.dS_dphi(d, m.param_index(k, d, j)) = post[k] * dcdf[k * D + d][j];
                for (std::size_t e = 0; e < d; ++e) {
                    out.dS_dphi(d, m.param_index(k, e, j)) = post[k] * score_phi[k * D + e][j] * centered;
                }
            }
        }
    }
    return out;
}

/// Solves (dS/dz) (dz/dphi) = -dS/dphi by forward substitution.
inline Matrix solve_lower_triangular(const Matrix& lower, const Matrix& rhs) {
    Matrix x(rhs.rows, rhs.cols);
    for (std::size_t c = 0; c < rhs.cols; ++c) {
        for (std::size_t d = 0; d < rhs.rows; ++d) {
            double acc = -rhs(d, c);
            for (std::size_t e = 0; e < d; ++e) acc -= lower(d, e) * x(e, c);
            x(d, c) = acc / lower(d, d);
        }
    }
    return x;
}

template <UnivariateFamily F>
Matrix mixture_jacobian(std::span<const double> z, const MixtureParams<F>& m) {
    const auto parts = mixture_transform_partials(z, m);
    for (std::size_t d = 0; d < parts.dS_dz.rows; ++d) {
        if (!(parts.dS_dz(d, d) > 0.0) || !std::isfinite(parts.dS_dz(d, d))) {
            throw OverflowError("mixture_jacobian: conditional density at the draw is not representable");
        }
    }
    return solve_lower_triangular(parts.dS_dz, parts.dS_dphi);
}

template <UnivariateFamily F, Urbg G>
GradSample sample_mixture(const MixtureParams<F>& m, G& rng) {
    const double u = uniform01(rng);
    std::size_t k = 0;
    for (double cum = m.weights[0]; k + 1 < m.num_components() && u >= cum; cum += m.weights[++k]) {
    }
    GradSample s;
    s.z.resize(m.dims());
    for (std::size_t d = 0; d < m.dims(); ++d) s.z[d] = F::sample(m.components[k][d], rng);
    s.jac = mixture_jacobian(s.z, m);
    return s;
}

// ---------------------------------------------------------------------------
// Normal: explicit and implicit paths side by side
// ---------------------------------------------------------------------------

struct NormalJacobians {
    double z;
    std::array<double, 2> explicit_jac;  // (dz/dmu, dz/dsigma)
    std::array<double, 2> implicit_jac;
};

/// Both Jacobians at a given z. The explicit one is (1, (z - mu) / sigma); the
/// implicit one divides the autodiff CDF partials by the density.
inline NormalJacobians normal_jacobians(double z, double mu, double sigma) {
    NormalFamily::validate({mu, sigma});
    const NormalFamily::Params p{mu, sigma};
    const auto dcdf = cdf_partials<NormalFamily>(z, p);
    const double pdf = normal_pdf((z - mu) / sigma) / sigma;
    if (!(pdf > 0.0)) throw OverflowError("normal_jacobians: density at the draw underflowed");
    return {z, {1.0, (z - mu) / sigma}, {-dcdf[0] / pdf, -dcdf[1] / pdf}};
}

template <Urbg G>
NormalJacobians explicit_normal(double mu, double sigma, G& rng) {
    NormalFamily::validate({mu, sigma});
    return normal_jacobians(mu + sigma * standard_normal(rng), mu, sigma);
}

}  // namespace irg
