#pragma once

// Benchmark and check runners behind the command-line tool. Each runner
// returns plain results plus a Report so that tests can drive them directly.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "irg/distributions.hpp"
#include "irg/dual.hpp"
#include "irg/errors.hpp"
#include "irg/estimators.hpp"
#include "irg/oracle.hpp"
#include "irg/random.hpp"
#include "irg/report.hpp"
#include "irg/special.hpp"
#include "irg/timing.hpp"

namespace irg::bench {

inline constexpr std::uint64_t kDefaultSeed = 42;

enum class Precision { single, double_ };

inline std::string to_string(Precision p) { return p == Precision::single ? "single" : "double"; }
inline std::string to_string(CdfDerivative m) { return m == CdfDerivative::autodiff ? "autodiff" : "finite-diff"; }

/// Relative central-difference steps tuned per family and precision.
inline double default_fd_step(Family family, Precision precision) {
    if (family == Family::gamma) return precision == Precision::single ? 1e-3 : 1e-5;
    if (family == Family::von_mises) return precision == Precision::single ? 1e-1 : 1e-4;
    throw DomainError("default_fd_step: no tuned step for " + irg::to_string(family));
}

// ---------------------------------------------------------------------------
// CDF-derivative accuracy against the oracles
// ---------------------------------------------------------------------------

struct AccuracyConfig {
    Family family = Family::gamma;
    Precision precision = Precision::double_;
    CdfDerivative method = CdfDerivative::autodiff;
    std::optional<double> fd_step;
    std::size_t draws = oracle::kGridDrawsPerParameter;
    std::uint64_t seed = kDefaultSeed;
    bool timing = true;

    double step() const { return fd_step.value_or(default_fd_step(family, precision)); }
};

struct ExcludedPoint {
    double parameter;
    double z;
    std::string reason;
};

struct ParameterError {
    double parameter;
    double mean_abs_error;
    std::size_t n_points;
};

struct AccuracyResult {
    double mean_abs_error = 0.0;
    double seconds_per_element = 0.0;
    std::size_t n_points = 0;  // points entering the average
    std::size_t n_excluded = 0;
    std::vector<ParameterError> per_parameter;
    std::vector<ExcludedPoint> excluded;

    double failure_rate() const {
        const double total = static_cast<double>(n_points + n_excluded);
        return total > 0 ? static_cast<double>(n_excluded) / total : 0.0;
    }
};

/// Fraction of excluded grid points above which the run counts as a
/// convergence failure.
inline constexpr double kMaxFailureRate = 0.05;

namespace detail {

// Derivative of the CDF with respect to its shape/concentration, evaluated
// entirely in precision S.
template <std::floating_point S>
S cdf_derivative(Family family, S z, S param, CdfDerivative method, S step) {
    auto cdf = [&](const auto& zz, const auto& pp) {
        if (family == Family::gamma) return reg_inc_gamma(zz, pp);
        return von_mises_cdf(zz, pp);
    };
    if (method == CdfDerivative::autodiff) return cdf(lift_const(z), lift_var(param)).tan;
    const S up = param * (S(1) + step);
    const S down = param * (S(1) - step);
    return (cdf(z, up) - cdf(z, down)) / (S(2) * param * step);
}

struct GridPoint {
    double parameter;
    double z;          // draw, already rounded to the working precision
    double reference;  // oracle derivative at the rounded point
};

template <std::floating_point S>
AccuracyResult run_accuracy(const AccuracyConfig& cfg, const std::vector<oracle::GridSet>& grid) {
    constexpr double pi = std::numbers::pi;
    AccuracyResult result;
    std::vector<GridPoint> points;
    const S step = static_cast<S>(cfg.step());
    for (const auto& set : grid) {
        if (set.family != cfg.family) continue;
        const S p = static_cast<S>(set.parameter);
        double sum = 0.0;
        std::size_t count = 0;
        for (double raw : set.samples) {
            const S z = static_cast<S>(raw);
            // Rounding to single precision can push an angle just past pi, where the CDF is flat.
            const double zo =
                cfg.family == Family::von_mises ? std::clamp(static_cast<double>(z), -pi, pi) : static_cast<double>(z);
            const oracle::OracleResult ref = cfg.family == Family::gamma
                                                 ? oracle::gamma_cdf_dalpha_reference(zo, static_cast<double>(p))
                                                 : oracle::von_mises_cdf_dkappa(zo, static_cast<double>(p));
            if (!ref.ok()) {
                result.excluded.push_back({set.parameter, static_cast<double>(z), "oracle " + oracle::to_string(ref.status)});
                continue;
            }
            double value = 0.0;
            try {
                value = static_cast<double>(cdf_derivative<S>(cfg.family, z, p, cfg.method, step));
            } catch (const ConvergenceError&) {
                result.excluded.push_back({set.parameter, static_cast<double>(z), "method did not converge"});
                continue;
            }
            sum += std::abs(value - ref.value);
            ++count;
            points.push_back({set.parameter, static_cast<double>(z), ref.value});
        }
        result.per_parameter.push_back({set.parameter, count ? sum / static_cast<double>(count) : 0.0, count});
    }
    double total = 0.0;
    for (const auto& pe : result.per_parameter) total += pe.mean_abs_error * static_cast<double>(pe.n_points);
    result.n_points = points.size();
    result.n_excluded = result.excluded.size();
    result.mean_abs_error = result.n_points ? total / static_cast<double>(result.n_points) : 0.0;

    if (cfg.timing && !points.empty()) {
        volatile S sink = 0;
        const std::size_t n = points.size();
        // One batch is one full pass over the grid.
        TimingProtocol protocol;
        protocol.warmup = std::min<std::size_t>(protocol.warmup, n);
        result.seconds_per_element = timed_batches(
            n * protocol.batches,
            [&](std::size_t i) {
                const auto& pt = points[i % n];
                sink = sink + cdf_derivative<S>(cfg.family, static_cast<S>(pt.z), static_cast<S>(pt.parameter),
                                                cfg.method, step);
            },
            protocol);
    }
    return result;
}

}  // namespace detail

inline AccuracyResult run_accuracy(const AccuracyConfig& cfg) {
    if (cfg.family != Family::gamma && cfg.family != Family::von_mises) {
        throw DomainError("accuracy: only gamma and von-mises have oracle derivatives");
    }
    Rng rng(cfg.seed);
    const auto grid = oracle::oracle_grid(rng, cfg.draws);
    return cfg.precision == Precision::single ? detail::run_accuracy<float>(cfg, grid)
                                              : detail::run_accuracy<double>(cfg, grid);
}

inline Report accuracy_report(const AccuracyConfig& cfg, const AccuracyResult& r) {
    Report rep;
    rep.seed = cfg.seed;
    rep.config = {{"command", "bench accuracy"},
                  {"family", irg::to_string(cfg.family)},
                  {"precision", to_string(cfg.precision)},
                  {"method", to_string(cfg.method)},
                  {"delta", cfg.method == CdfDerivative::finite_difference ? irg::detail::format_double(cfg.step()) : ""},
                  {"draws", std::to_string(cfg.draws)}};
    rep.columns = {{"row"},        {"family"},         {"precision"},  {"method"},     {"delta"},
                   {"parameter"},  {"z"},              {"mean_abs_error"}, {"seconds_per_element", true},
                   {"n_points"},   {"n_excluded"},     {"status"}};
    const std::string fam = irg::to_string(cfg.family);
    const std::string prec = to_string(cfg.precision);
    const std::string meth = to_string(cfg.method);
    const Cell delta = cfg.method == CdfDerivative::finite_difference ? Cell{cfg.step()} : Cell{std::string{}};
    const std::string status = r.failure_rate() > kMaxFailureRate ? "convergence-failure" : "ok";
    rep.add_row({std::string("summary"), fam, prec, meth, delta, std::string("all"), std::string{}, r.mean_abs_error,
                 r.seconds_per_element, static_cast<std::int64_t>(r.n_points), static_cast<std::int64_t>(r.n_excluded),
                 status});
    for (const auto& pe : r.per_parameter) {
        rep.add_row({std::string("parameter"), fam, prec, meth, delta, pe.parameter, std::string{}, pe.mean_abs_error,
                     std::string{}, static_cast<std::int64_t>(pe.n_points), std::string{}, std::string{}});
    }
    for (const auto& ex : r.excluded) {
        rep.add_row({std::string("excluded"), fam, prec, meth, delta, ex.parameter, ex.z, std::string{}, std::string{},
                     std::string{}, std::string{}, ex.reason});
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Cost of the Gamma derivative relative to the CDF
// ---------------------------------------------------------------------------

struct GammaTiming {
    double cdf = 0.0;            // plain CDF evaluation
    double fused = 0.0;          // fused dz/dalpha, the reparameterization path
    double dual = 0.0;           // Dual tangent of the CDF
    double finite_difference = 0.0;
};

/// Median seconds per evaluation over `evaluations` calls per batch, cycling
/// through the Gamma accuracy grid.
template <std::floating_point S>
GammaTiming time_gamma_derivatives(std::uint64_t seed, std::size_t evaluations) {
    Rng rng(seed);
    const auto grid = oracle::oracle_grid(rng, oracle::kGridDrawsPerParameter);
    std::vector<std::pair<S, S>> pts;
    for (const auto& set : grid) {
        if (set.family != Family::gamma) continue;
        for (double z : set.samples) {
            const S zs = static_cast<S>(z);
            if (zs > S(0)) pts.emplace_back(zs, static_cast<S>(set.parameter));
        }
    }
    const S step = static_cast<S>(default_fd_step(Family::gamma, std::is_same_v<S, float> ? Precision::single
                                                                                           : Precision::double_));
    volatile S sink = 0;
    const std::size_t n = pts.size();
    TimingProtocol protocol;
    auto time = [&](auto&& fn) {
        return timed_batches(evaluations * protocol.batches, [&](std::size_t i) {
            const auto& [z, a] = pts[i % n];
            sink = sink + fn(z, a);
        }, protocol);
    };
    GammaTiming t;
    t.cdf = time([](S z, S a) { return reg_inc_gamma(z, a); });
    t.fused = time([](S z, S a) { return reg_inc_gamma_dalpha_stable(z, a); });
    t.dual = time([](S z, S a) { return reg_inc_gamma(lift_const(z), lift_var(a)).tan; });
    t.finite_difference = time([&](S z, S a) {
        const S q = reg_inc_gamma(z, a * (S(1) + step)) - reg_inc_gamma(z, a * (S(1) - step));
        // Division by the density makes this the same quantity as the fused path.
        return -(q / (S(2) * a * step)) / std::exp(gamma_log_pdf(z, a, S(1)));
    });
    return t;
}

// ---------------------------------------------------------------------------
// Cross-entropy variance
// ---------------------------------------------------------------------------

struct VarianceConfig {
    ToyKind problem = ToyKind::von_mises;
    std::vector<EstimatorKind> estimators{EstimatorKind::implicit, EstimatorKind::score_function};
    std::vector<double> phi_grid;  // empty: the problem's default grid
    std::size_t n = 1000;
    std::uint64_t seed = kDefaultSeed;
    unsigned threads = 1;
    std::vector<double> dirichlet_alpha;  // empty: the built-in toy alpha
};

struct VarianceRow {
    EstimatorKind estimator;
    double analytic_grad;
    VariancePoint point;
};

inline CrossEntropyProblem make_problem(const VarianceConfig& cfg) {
    if (cfg.problem == ToyKind::von_mises) return CrossEntropyProblem::von_mises();
    return CrossEntropyProblem::dirichlet(cfg.dirichlet_alpha.empty() ? dirichlet_toy_alpha() : cfg.dirichlet_alpha);
}

inline std::vector<VarianceRow> run_variance(const VarianceConfig& cfg) {
    const CrossEntropyProblem problem = make_problem(cfg);
    const std::vector<double> grid = cfg.phi_grid.empty() ? problem.phi_grid() : cfg.phi_grid;
    std::vector<VarianceRow> rows;
    for (std::size_t e = 0; e < cfg.estimators.size(); ++e) {
        const EstimatorKind kind = cfg.estimators[e];
        const double fd_step =
            default_fd_step(cfg.problem == ToyKind::dirichlet ? Family::gamma : Family::von_mises, Precision::double_);
        // Every estimator sees the same substreams so rows are comparable.
        const auto pts = variance_of(kind, problem, grid, cfg.n, cfg.seed, cfg.threads, fd_step);
        for (const auto& p : pts) rows.push_back({kind, problem.analytic_grad(p.phi), p});
    }
    return rows;
}

inline Report variance_report(const VarianceConfig& cfg, const std::vector<VarianceRow>& rows) {
    Report rep;
    rep.seed = cfg.seed;
    rep.config = {{"command", "bench variance"}, {"problem", to_string(cfg.problem)}, {"n", std::to_string(cfg.n)}};
    rep.columns = {{"problem"},   {"estimator"}, {"phi"}, {"analytic_grad"}, {"mean_grad"},
                   {"variance"},  {"n"},         {"optimal_phi"}, {"seconds_per_sample", true}};
    const double optimal = make_problem(cfg).optimal_phi();
    for (const auto& r : rows) {
        rep.add_row({to_string(cfg.problem), to_string(r.estimator), r.point.phi, r.analytic_grad, r.point.mean_grad,
                     r.point.variance, static_cast<std::int64_t>(r.point.n), optimal, r.point.seconds_per_sample});
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Monte Carlo sanity checks
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMinSanitySamples = 10000;
inline constexpr double kSanityStdErrs = 3.0;
inline constexpr double kNormalMaxUlps = 4.0;
inline constexpr double kColumnSumTolerance = 1e-10;

struct CheckRow {
    std::string family;
    std::string check;
    double estimate;
    double target;
    double standard_error;  // 0 for deterministic checks
    double tolerance;
    bool passed;
};

/// Distance between two doubles in units in the last place.
inline double ulp_distance(double a, double b) {
    if (a == b) return 0.0;
    const double scale = std::max(std::abs(a), std::abs(b));
    const double ulp = std::nextafter(scale, std::numeric_limits<double>::infinity()) - scale;
    return std::abs(a - b) / ulp;
}

inline const std::vector<std::string>& sanity_families() {
    static const std::vector<std::string> all{"gamma", "von-mises", "normal", "beta", "dirichlet",
                                              "student-t", "truncated", "mixture"};
    return all;
}

namespace detail {

// Mean and standard error of a scalar statistic over n draws.
template <class Draw>
std::pair<double, double> mean_and_se(std::size_t n, Draw draw) {
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        const double x = draw();
        const double delta = x - mean;
        mean += delta / static_cast<double>(i);
        m2 += delta * (x - mean);
    }
    return {mean, std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n))};
}

inline CheckRow mc_row(std::string family, std::string check, std::pair<double, double> est, double target) {
    const double tol = kSanityStdErrs * est.second;
    return {std::move(family), std::move(check), est.first, target, est.second, tol,
            std::abs(est.first - target) <= tol};
}

inline std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

// Mean of a truncated Normal in closed form.
inline double truncated_normal_mean(double mu, double sigma, double a, double b) {
    const double lo = (a - mu) / sigma;
    const double hi = (b - mu) / sigma;
    return mu + sigma * (normal_pdf(lo) - normal_pdf(hi)) / (normal_cdf(hi) - normal_cdf(lo));
}

}  // namespace detail

/// Runs the Monte Carlo identities for the requested families. Each family
/// draws from its own substream of `seed`.
inline std::vector<CheckRow> run_sanity_checks(const std::vector<std::string>& families, std::size_t n,
                                               std::uint64_t seed) {
    if (n < kMinSanitySamples) throw DomainError("check sanity: need n >= 10000");
    std::vector<CheckRow> rows;
    const auto& known = sanity_families();
    for (const auto& fam : families) {
        const auto it = std::find(known.begin(), known.end(), fam);
        if (it == known.end()) throw DomainError("check sanity: unknown family '" + fam + "'");
        Rng rng = substream(seed, static_cast<std::size_t>(it - known.begin()));
        if (fam == "gamma") {
            for (double a : {0.3, 1.0, 10.0}) {
                const auto p = GammaParams::raw(a, 1.0);
                rows.push_back(detail::mc_row(fam, "d/dalpha E[z], alpha=" + detail::fmt(a),
                                              detail::mean_and_se(n, [&] { return sample_gamma(p, rng).jac(0, 0); }),
                                              1.0));
            }
        } else if (fam == "von-mises") {
            for (double k : {0.5, 2.0}) {
                const auto p = VonMisesParams::make(0.0, k);
                const double ratio = bessel_i_ratio(k);
                rows.push_back(detail::mc_row(fam, "d/dkappa E[cos z], kappa=" + detail::fmt(k),
                                              detail::mean_and_se(n,
                                                                  [&] {
                                                                      const auto s = sample_von_mises(p, rng);
                                                                      return -std::sin(s.z[0]) * s.jac(0, 1);
                                                                  }),
                                              1.0 - ratio / k - ratio * ratio));
            }
        } else if (fam == "normal") {
            double worst = 0.0;
            for (int i = 0; i < 1000; ++i) {
                const double mu = 10.0 * (2.0 * uniform01(rng) - 1.0);
                const double sigma = std::exp(4.0 * (2.0 * uniform01(rng) - 1.0));
                const auto j = explicit_normal(mu, sigma, rng);
                for (int c = 0; c < 2; ++c) worst = std::max(worst, ulp_distance(j.explicit_jac[c], j.implicit_jac[c]));
            }
            rows.push_back({fam, "max ulps explicit vs implicit, 1000 draws", worst, 0.0, 0.0, kNormalMaxUlps,
                            worst <= kNormalMaxUlps});
        } else if (fam == "beta") {
            const double a = 2.0;
            const double b = 3.0;
            std::vector<std::array<double, 2>> jac(n);
            for (auto& j : jac) {
                const auto s = sample_beta(a, b, rng);
                j = {s.jac(0, 0), s.jac(0, 1)};
            }
            std::size_t i = 0;
            rows.push_back(detail::mc_row(fam, "d/da E[z], a=2 b=3", detail::mean_and_se(n, [&] { return jac[i++][0]; }),
                                          b / ((a + b) * (a + b))));
            i = 0;
            rows.push_back(detail::mc_row(fam, "d/db E[z], a=2 b=3", detail::mean_and_se(n, [&] { return jac[i++][1]; }),
                                          -a / ((a + b) * (a + b))));
        } else if (fam == "dirichlet") {
            const std::vector<double> alphas{0.5, 2.0, 3.5};
            const double total = 6.0;
            std::vector<std::vector<double>> diag(n);
            double worst_sum = 0.0;
            for (auto& d : diag) {
                const auto s = sample_dirichlet(alphas, rng);
                for (std::size_t j = 0; j < alphas.size(); ++j) {
                    d.push_back(s.jac(j, j));
                    double col = 0.0;
                    for (std::size_t r = 0; r < alphas.size(); ++r) col += s.jac(r, j);
                    worst_sum = std::max(worst_sum, std::abs(col));
                }
            }
            for (std::size_t j = 0; j < alphas.size(); ++j) {
                std::size_t i = 0;
                rows.push_back(detail::mc_row(fam, "d/dalpha_" + std::to_string(j + 1) + " E[z_" + std::to_string(j + 1) + "]",
                                              detail::mean_and_se(n, [&] { return diag[i++][j]; }),
                                              (total - alphas[j]) / (total * total)));
            }
            rows.push_back({fam, "max |column sum| of jac", worst_sum, 0.0, 0.0, kColumnSumTolerance,
                            worst_sum <= kColumnSumTolerance});
        } else if (fam == "student-t") {
            const double nu = 5.0;
            std::vector<std::array<double, 2>> draws(n);
            for (auto& d : draws) {
                const auto s = sample_student_t(nu, rng);
                d = {s.z[0], s.jac(0, 0)};
            }
            std::size_t i = 0;
            rows.push_back(detail::mc_row(fam, "d/dnu E[z], nu=5", detail::mean_and_se(n, [&] { return draws[i++][1]; }), 0.0));
            i = 0;
            // E[z^2] = nu / (nu - 2)
            rows.push_back(detail::mc_row(fam, "d/dnu E[z^2], nu=5", detail::mean_and_se(n, [&] {
                                              const auto& d = draws[i++];
                                              return 2.0 * d[0] * d[1];
                                          }),
                                          -2.0 / ((nu - 2.0) * (nu - 2.0))));
        } else if (fam == "truncated") {
            const double mu = 0.5;
            const double sigma = 1.5;
            const auto window = TruncationWindow::make(-1.0, 2.0);
            std::vector<std::array<double, 2>> jac(n);
            for (auto& j : jac) {
                const auto s = sample_truncated<NormalFamily>({mu, sigma}, window, rng);
                j = {s.jac(0, 0), s.jac(0, 1)};
            }
            const double h = 1e-5;
            const double dmu = (detail::truncated_normal_mean(mu + h, sigma, -1.0, 2.0) -
                                detail::truncated_normal_mean(mu - h, sigma, -1.0, 2.0)) / (2.0 * h);
            const double dsigma = (detail::truncated_normal_mean(mu, sigma + h, -1.0, 2.0) -
                                   detail::truncated_normal_mean(mu, sigma - h, -1.0, 2.0)) / (2.0 * h);
            std::size_t i = 0;
            rows.push_back(detail::mc_row(fam, "d/dmu E[z], normal on [-1, 2]",
                                          detail::mean_and_se(n, [&] { return jac[i++][0]; }), dmu));
            i = 0;
            rows.push_back(detail::mc_row(fam, "d/dsigma E[z], normal on [-1, 2]",
                                          detail::mean_and_se(n, [&] { return jac[i++][1]; }), dsigma));
        } else if (fam == "mixture") {
            // Two components over two factorized Normal dimensions; E[z_d] = sum_k w_k mu_kd.
            const auto m = MixtureParams<NormalFamily>::make({0.3, 0.7}, {{{-1.0, 0.5}, {2.0, 1.0}}, {{2.0, 1.0}, {-0.5, 0.8}}});
            std::vector<std::vector<double>> jac(n);
            for (auto& j : jac) j = sample_mixture(m, rng).jac.data;
            const std::size_t cols = m.num_params();
            const double mean0 = 0.3 * -1.0 + 0.7 * 2.0;
            const double mean1 = 0.3 * 2.0 + 0.7 * -0.5;
            struct Target {
                std::string name;
                std::size_t row;
                std::size_t col;
                double value;
            };
            const std::vector<Target> targets{
                {"d/deta_1 E[z_1]", 0, 0, 0.3 * (-1.0 - mean0)},
                {"d/deta_1 E[z_2]", 1, 0, 0.3 * (2.0 - mean1)},
                {"d/dmu_11 E[z_1]", 0, m.param_index(0, 0, 0), 0.3},
                {"d/dmu_12 E[z_2]", 1, m.param_index(0, 1, 0), 0.3},
                {"d/dmu_11 E[z_2]", 1, m.param_index(0, 0, 0), 0.0},
                {"d/dsigma_21 E[z_1]", 0, m.param_index(1, 0, 1), 0.0},
            };
            for (const auto& t : targets) {
                std::size_t i = 0;
                rows.push_back(detail::mc_row(fam, t.name,
                                              detail::mean_and_se(n, [&] { return jac[i++][t.row * cols + t.col]; }), t.value));
            }
        }
    }
    return rows;
}

inline Report sanity_report(std::uint64_t seed, std::size_t n, const std::vector<CheckRow>& rows) {
    Report rep;
    rep.seed = seed;
    rep.config = {{"command", "check sanity"}, {"n", std::to_string(n)}};
    rep.columns = {{"family"}, {"check"}, {"estimate"}, {"target"}, {"standard_error"}, {"tolerance"}, {"passed"}};
    for (const auto& r : rows) {
        rep.add_row({r.family, r.check, r.estimate, r.target, r.standard_error, r.tolerance, r.passed});
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Single-point CDF gradient check
// ---------------------------------------------------------------------------

struct GradcheckRow {
    std::string parameter;
    double autodiff;
    double finite_difference;
    std::optional<double> oracle;
};

/// dF/dphi at one point for each parameter of the family, by autodiff,
/// central differences (relative step `delta`) and, where one exists, the oracle.
/// Parameter layouts: gamma (alpha[, beta]), von-mises (kappa), normal (mu, sigma),
/// truncated-normal (mu, sigma, a, b).
inline std::vector<GradcheckRow> run_gradcheck(const std::string& family, const std::vector<double>& params, double z,
                                               double delta) {
    auto need = [&](std::size_t lo, std::size_t hi) {
        if (params.size() < lo || params.size() > hi) {
            throw DomainError("gradcheck: " + family + " takes " + std::to_string(lo) +
                              (lo == hi ? "" : "-" + std::to_string(hi)) + " parameters");
        }
    };
    auto fd = [&](auto cdf, std::array<double, 2> p, std::size_t j) {
        const double h = delta * (p[j] != 0.0 ? std::abs(p[j]) : 1.0);
        auto up = p;
        auto down = p;
        up[j] += h;
        down[j] -= h;
        return (cdf(up) - cdf(down)) / (2.0 * h);
    };
    std::vector<GradcheckRow> rows;
    if (family == "gamma") {
        need(1, 2);
        const GammaFamily::Params p{params[0], params.size() > 1 ? params[1] : 1.0};
        GammaFamily::validate(p);
        const auto ad = cdf_partials<GammaFamily>(z, p);
        auto cdf = [&](std::array<double, 2> q) { return GammaFamily::cdf(z, q); };
        const auto ref = oracle::gamma_cdf_dalpha_reference(p[1] * z, p[0]);
        rows.push_back({"alpha", ad[0], fd(cdf, p, 0), ref.ok() ? std::optional<double>(ref.value) : std::nullopt});
        // d/dbeta P(beta z, alpha) = z * pdf(beta z | alpha, 1)
        rows.push_back({"beta", ad[1], fd(cdf, p, 1), z * std::exp(gamma_log_pdf(p[1] * z, p[0], 1.0))});
    } else if (family == "von-mises") {
        need(1, 1);
        const double k = params[0];
        if (!(k > 0.0)) throw DomainError("gradcheck: kappa must be > 0");
        const double ad = von_mises_cdf(lift_const(z), lift_var(k)).tan;
        const double h = delta * k;
        const double f = (von_mises_cdf(z, k + h) - von_mises_cdf(z, k - h)) / (2.0 * h);
        const auto ref = oracle::von_mises_cdf_dkappa(z, k);
        rows.push_back({"kappa", ad, f, ref.ok() ? std::optional<double>(ref.value) : std::nullopt});
    } else if (family == "normal") {
        need(2, 2);
        const NormalFamily::Params p{params[0], params[1]};
        NormalFamily::validate(p);
        const auto ad = cdf_partials<NormalFamily>(z, p);
        auto cdf = [&](std::array<double, 2> q) { return NormalFamily::cdf(z, q); };
        const double s = (z - p[0]) / p[1];
        rows.push_back({"mu", ad[0], fd(cdf, p, 0), -normal_pdf(s) / p[1]});
        rows.push_back({"sigma", ad[1], fd(cdf, p, 1), -normal_pdf(s) * s / p[1]});
    } else if (family == "truncated-normal") {
        need(4, 4);
        const NormalFamily::Params p{params[0], params[1]};
        const auto window = TruncationWindow::make(params[2], params[3]);
        NormalFamily::validate(p);
        (void)irg::detail::clip_window<NormalFamily>(p, window);
        auto cdf = [&](std::array<double, 2> q) {
            const double fa = NormalFamily::cdf(window.a, q);
            return (NormalFamily::cdf(z, q) - fa) / (NormalFamily::cdf(window.b, q) - fa);
        };
        // dz/dphi times the truncated density is -dFhat/dphi.
        const auto jac = truncated_jacobian<NormalFamily>(z, p, window);
        const double mass = NormalFamily::cdf(window.b, p) - NormalFamily::cdf(window.a, p);
        const double pdf = density<NormalFamily>(z, p) / mass;
        const double sa = (window.a - p[0]) / p[1];
        const double sb = (window.b - p[0]) / p[1];
        const double s = (z - p[0]) / p[1];
        const double u = cdf(p);
        const std::array<double, 2> dz{-normal_pdf(s) / p[1], -normal_pdf(s) * s / p[1]};
        const std::array<double, 2> da{-normal_pdf(sa) / p[1], -normal_pdf(sa) * sa / p[1]};
        const std::array<double, 2> db{-normal_pdf(sb) / p[1], -normal_pdf(sb) * sb / p[1]};
        const char* names[2] = {"mu", "sigma"};
        for (std::size_t j = 0; j < 2; ++j) {
            const double closed = (dz[j] - (1.0 - u) * da[j] - u * db[j]) / mass;
            rows.push_back({names[j], -jac[j] * pdf, fd(cdf, p, j), closed});
        }
    } else {
        throw DomainError("gradcheck: unknown family '" + family + "'");
    }
    return rows;
}

/// Point used when gradcheck is given no z: the mean for gamma and normal,
/// the window midpoint for truncated-normal, 1 for von-mises.
inline double default_gradcheck_point(const std::string& family, const std::vector<double>& params) {
    if (family == "gamma" && !params.empty()) return params[0] / (params.size() > 1 ? params[1] : 1.0);
    if (family == "normal" && !params.empty()) return params[0];
    if (family == "truncated-normal" && params.size() == 4) return 0.5 * (params[2] + params[3]);
    return 1.0;
}

inline Report gradcheck_report(const std::string& family, const std::vector<double>& params, double z, double delta,
                               std::uint64_t seed, const std::vector<GradcheckRow>& rows) {
    Report rep;
    rep.seed = seed;
    std::string plist;
    for (double p : params) plist += (plist.empty() ? "" : " ") + detail::fmt(p);
    rep.config = {{"command", "gradcheck"}, {"family", family}, {"params", plist}, {"z", detail::fmt(z)},
                  {"delta", detail::fmt(delta)}};
    rep.columns = {{"family"}, {"parameter"}, {"z"}, {"autodiff"}, {"finite_difference"}, {"oracle"},
                   {"autodiff_minus_fd"}, {"autodiff_minus_oracle"}};
    for (const auto& r : rows) {
        rep.add_row({family, r.parameter, z, r.autodiff, r.finite_difference,
                     r.oracle ? Cell{*r.oracle} : Cell{std::string{}}, r.autodiff - r.finite_difference,
                     r.oracle ? Cell{r.autodiff - *r.oracle} : Cell{std::string{}}});
    }
    return rep;
}

}  // namespace irg::bench
