#pragma once

// Monte Carlo estimators of grad_phi E_q[f(z)] and the cross-entropy toy
// problems used to compare their variance.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "irg/distributions.hpp"
#include "irg/dual.hpp"
#include "irg/errors.hpp"
#include "irg/random.hpp"
#include "irg/special.hpp"
#include "irg/timing.hpp"

namespace irg {

struct Objective {
    std::function<double(std::span<const double>)> eval;
    std::function<std::vector<double>(std::span<const double>)> grad_z;
};

/// Largest relative deviation between grad_z and central differences of eval
/// over the probe points, each coordinate scaled by max(1, |derivative|).
inline double objective_self_check(const Objective& f, std::span<const std::vector<double>> probes) {
    double worst = 0.0;
    for (const auto& probe : probes) {
        const auto grad = f.grad_z(probe);
        if (grad.size() != probe.size()) throw DomainError("objective_self_check: grad_z has the wrong size");
        auto x = probe;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double h = 1e-6 * std::max(1.0, std::abs(probe[i]));
            x[i] = probe[i] + h;
            const double up = f.eval(x);
            x[i] = probe[i] - h;
            const double down = f.eval(x);
            x[i] = probe[i];
            const double fd = (up - down) / (2.0 * h);
            worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1.0, std::abs(grad[i])));
        }
    }
    return worst;
}

/// Sampling distribution q_phi as seen by the estimators.
struct Model {
    std::size_t num_params = 0;
    std::function<GradSample(Rng&, const GradientOptions&)> draw;
    std::function<std::vector<double>(std::span<const double>)> score;  // grad_phi log q(z)
};

namespace detail {

template <std::size_t N, class LogDensity>
std::vector<double> score_by_autodiff(LogDensity log_density, const std::array<double, N>& phi) {
    std::vector<double> out(N);
    for (std::size_t j = 0; j < N; ++j) out[j] = log_density(seed_parameter(phi, j)).tan;
    return out;
}

}  // namespace detail

inline Model gamma_model(const GammaParams& p, GammaSampler sampler = GammaSampler::marsaglia_tsang) {
    return {2, [=](Rng& rng, const GradientOptions& o) { return sample_gamma(p, rng, o, sampler); },
            [=](std::span<const double> z) {
                return detail::score_by_autodiff<2>(
                    [&](const auto& q) { return gamma_log_pdf(lift_const(z[0]), q[0], q[1]); }, {p.alpha, p.beta});
            }};
}

inline Model von_mises_model(const VonMisesParams& p) {
    return {2, [=](Rng& rng, const GradientOptions& o) { return sample_von_mises(p, rng, o); },
            [=](std::span<const double> z) {
                return detail::score_by_autodiff<2>(
                    [&](const auto& q) { return von_mises_log_pdf(lift_const(z[0]), q[0], q[1]); }, {p.mu, p.kappa});
            }};
}

inline Model beta_model(double a, double b) {
    return {2, [=](Rng& rng, const GradientOptions& o) { return sample_beta(a, b, rng, o); },
            [=](std::span<const double> z) {
                return detail::score_by_autodiff<2>(
                    [&](const auto& q) { return beta_log_pdf(lift_const(z[0]), q[0], q[1]); }, {a, b});
            }};
}

inline Model student_t_model(double nu) {
    return {1, [=](Rng& rng, const GradientOptions& o) { return sample_student_t(nu, rng, o); },
            [=](std::span<const double> z) {
                return detail::score_by_autodiff<1>(
                    [&](const auto& q) { return student_t_log_pdf(lift_const(z[0]), q[0]); }, {nu});
            }};
}

inline Model dirichlet_model(std::vector<double> alphas) {
    const std::size_t dims = alphas.size();
    return {dims, [=](Rng& rng, const GradientOptions& o) { return sample_dirichlet(alphas, rng, o); },
            [=](std::span<const double> z) {
                double total = 0.0;
                for (double a : alphas) total += a;
                std::vector<double> out(dims);
                for (std::size_t j = 0; j < dims; ++j) out[j] = std::log(z[j]) - digamma(alphas[j]) + digamma(total);
                return out;
            }};
}

inline Model normal_model(double mu, double sigma) {
    return {2,
            [=](Rng& rng, const GradientOptions&) {
                const auto j = explicit_normal(mu, sigma, rng);
                GradSample s{{j.z}, Matrix(1, 2)};
                s.jac(0, 0) = j.implicit_jac[0];
                s.jac(0, 1) = j.implicit_jac[1];
                return s;
            },
            [=](std::span<const double> z) {
                const double s = (z[0] - mu) / sigma;
                return std::vector<double>{s / sigma, (s * s - 1.0) / sigma};
            }};
}

struct EstimatorReport {
    std::vector<double> mean_grad;
    std::vector<double> variance;  // per coordinate, single-sample
    std::size_t n_samples = 0;
    double seconds_per_sample = 0.0;

    double standard_error(std::size_t j) const { return std::sqrt(variance[j] / static_cast<double>(n_samples)); }
};

namespace detail {

// Welford accumulation of per-sample gradient vectors.
class MomentAccumulator {
public:
    explicit MomentAccumulator(std::size_t dims) : mean_(dims, 0.0), m2_(dims, 0.0) {}

    void add(std::span<const double> g) {
        ++count_;
        for (std::size_t j = 0; j < mean_.size(); ++j) {
            const double delta = g[j] - mean_[j];
            mean_[j] += delta / static_cast<double>(count_);
            m2_[j] += delta * (g[j] - mean_[j]);
        }
    }

    EstimatorReport report(double seconds_per_sample) const {
        EstimatorReport r{mean_, m2_, count_, seconds_per_sample};
        for (double& v : r.variance) v = count_ > 1 ? v / static_cast<double>(count_ - 1) : 0.0;
        return r;
    }

private:
    std::vector<double> mean_;
    std::vector<double> m2_;
    std::size_t count_ = 0;
};

template <class PerSample>
EstimatorReport run_estimator(std::size_t dims, std::size_t n, Rng& rng, PerSample per_sample) {
    if (n < 2) throw DomainError("estimator: need n >= 2");
    MomentAccumulator acc(dims);
    Rng warm_rng = rng;
    warm_rng.discard(1);
    const double seconds = timed_batches(
        n, [&](std::size_t) { acc.add(per_sample(rng)); }, [&](std::size_t) { (void)per_sample(warm_rng); });
    return acc.report(seconds);
}

inline std::vector<double> chain(const std::vector<double>& grad_z, const Matrix& jac) {
    if (grad_z.size() != jac.rows) throw DomainError("estimator: grad_z does not match the sample dimension");
    std::vector<double> g(jac.cols, 0.0);
    for (std::size_t d = 0; d < jac.rows; ++d) {
        for (std::size_t j = 0; j < jac.cols; ++j) g[j] += grad_z[d] * jac(d, j);
    }
    return g;
}

}  // namespace detail

/// Mean of grad_z f(z) . dz/dphi over n draws.
inline EstimatorReport implicit_pathwise(const Objective& f, const Model& model, std::size_t n, Rng& rng) {
    return detail::run_estimator(model.num_params, n, rng, [&](Rng& r) {
        const GradSample s = model.draw(r, GradientOptions{});
        return detail::chain(f.grad_z(s.z), s.jac);
    });
}

/// Same as implicit_pathwise with the CDF derivative taken by central differences.
inline EstimatorReport finite_difference_pathwise(const Objective& f, const Model& model, std::size_t n, double delta,
                                                  Rng& rng) {
    if (!(delta > 0.0) || !(delta < 1.0)) throw DomainError("finite_difference_pathwise: delta must lie in (0, 1)");
    const GradientOptions opts{CdfDerivative::finite_difference, delta};
    return detail::run_estimator(model.num_params, n, rng, [&](Rng& r) {
        const GradSample s = model.draw(r, opts);
        return detail::chain(f.grad_z(s.z), s.jac);
    });
}

/// Mean of f(z) grad_phi log q(z), with no control variate.
inline EstimatorReport score_function(const Objective& f, const Model& model, std::size_t n, Rng& rng) {
    return detail::run_estimator(model.num_params, n, rng, [&](Rng& r) {
        const GradSample s = model.draw(r, GradientOptions{});
        const double value = f.eval(s.z);
        auto g = model.score(s.z);
        for (double& x : g) x *= value;
        return g;
    });
}

// ---------------------------------------------------------------------------
// Cross-entropy toy problems: d/dphi E_q[-log p(z)] for a single active phi.
// ---------------------------------------------------------------------------

enum class ToyKind { dirichlet, von_mises };

inline std::string to_string(ToyKind k) { return k == ToyKind::dirichlet ? "dirichlet" : "von-mises"; }

enum class EstimatorKind { implicit, score_function, finite_difference };

inline std::string to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::implicit: return "implicit";
        case EstimatorKind::score_function: return "score-function";
        case EstimatorKind::finite_difference: return "finite-difference";
    }
    return "unknown";
}

inline constexpr std::uint64_t kDirichletToySeed = 20180529;
inline constexpr std::size_t kDirichletToyDims = 100;
inline constexpr std::size_t kDirichletToyObservations = 100;

/// Posterior concentrations of a flat Dirichlet prior after observing 100 draws
/// from a Categorical whose probabilities are themselves drawn from the flat
/// Dirichlet: alpha_d = 1 + count_d.
inline std::vector<double> dirichlet_toy_alpha(std::uint64_t seed = kDirichletToySeed) {
    Rng rng(seed);
    std::vector<double> probs(kDirichletToyDims);
    double total = 0.0;
    for (double& p : probs) total += (p = gamma_marsaglia_tsang(1.0, rng));
    for (double& p : probs) p /= total;
    std::vector<double> alpha(kDirichletToyDims, 1.0);
    for (std::size_t i = 0; i < kDirichletToyObservations; ++i) {
        const double u = uniform01(rng);
        double cum = 0.0;
        std::size_t k = 0;
        for (; k + 1 < kDirichletToyDims; ++k) {
            cum += probs[k];
            if (u < cum) break;
        }
        alpha[k] += 1.0;
    }
    return alpha;
}

/// p = Dirichlet(alpha), q = Dirichlet(phi, alpha_2..alpha_D); or
/// p = prod_d vonMises(0, 2) over 10 dimensions, q replaces the first
/// concentration by phi.
struct CrossEntropyProblem {
    ToyKind kind = ToyKind::von_mises;
    std::vector<double> alpha;  // dirichlet only
    double prior_kappa = 2.0;   // von Mises only
    std::size_t dims = 10;      // von Mises only

    static CrossEntropyProblem dirichlet(std::vector<double> alpha) {
        if (alpha.size() < 2) throw DomainError("CrossEntropyProblem: need at least two concentrations");
        for (double a : alpha) {
            if (!(a > 0.0)) throw DomainError("CrossEntropyProblem: concentrations must be > 0");
        }
        return {ToyKind::dirichlet, std::move(alpha), 2.0, 0};
    }
    static CrossEntropyProblem von_mises() { return {ToyKind::von_mises, {}, 2.0, 10}; }

    /// Value of phi at which q equals p.
    double optimal_phi() const { return kind == ToyKind::dirichlet ? alpha.front() : prior_kappa; }

    /// Seven points spanning the plotted range around the optimum.
    std::vector<double> phi_grid() const {
        if (kind == ToyKind::dirichlet) {
            std::vector<double> g;
            for (double m : {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0}) g.push_back(m * alpha.front());
            return g;
        }
        return {0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0};
    }

    /// Closed-form c = d/dphi E_q[-log p(z)].
    double analytic_grad(double phi) const {
        if (!(phi > 0.0)) throw DomainError("analytic_grad: phi must be > 0");
        if (kind == ToyKind::dirichlet) {
            // E_q[log z_d] = psi(q_d) - psi(sum q)
            double total = phi;
            double weight = 0.0;
            for (std::size_t d = 1; d < alpha.size(); ++d) total += alpha[d];
            for (double a : alpha) weight += a - 1.0;
            return -(alpha.front() - 1.0) * trigamma(phi) + weight * trigamma(total);
        }
        // d/dk E cos z = d/dk I1/I0 = 1 - A/k - A^2 with A = I1/I0
        const double a = bessel_i_ratio(phi);
        return -prior_kappa * (1.0 - a / phi - a * a);
    }

    /// One single-sample estimate of the gradient at phi.
    double sample_grad(EstimatorKind estimator, double phi, Rng& rng, double fd_step = 1e-5) const {
        const GradientOptions opts = estimator == EstimatorKind::finite_difference
                                         ? GradientOptions{CdfDerivative::finite_difference, fd_step}
                                         : GradientOptions{};
        return kind == ToyKind::dirichlet ? dirichlet_sample(estimator, phi, rng, opts)
                                          : von_mises_sample(estimator, phi, rng, opts);
    }

private:
    double dirichlet_sample(EstimatorKind estimator, double phi, Rng& rng, const GradientOptions& opts) const {
        const std::size_t dims_d = alpha.size();
        std::vector<double> g(dims_d);
        double total_g = 0.0;
        double total_q = phi;
        for (std::size_t d = 0; d < dims_d; ++d) {
            g[d] = gamma_marsaglia_tsang(d == 0 ? phi : alpha[d], rng);
            total_g += g[d];
            if (d > 0) total_q += alpha[d];
        }
        if (!(total_g > 0.0)) throw OverflowError("dirichlet toy: every Gamma draw underflowed");
        if (estimator == EstimatorKind::score_function) {
            double alpha_total = 0.0;
            for (double a : alpha) alpha_total += a;
            double neg_log_p = -log_gamma(alpha_total);
            for (std::size_t d = 0; d < dims_d; ++d) {
                neg_log_p += log_gamma(alpha[d]) - (alpha[d] - 1.0) * std::log(g[d] / total_g);
            }
            const double score = std::log(g[0] / total_g) - digamma(phi) + digamma(total_q);
            return neg_log_p * score;
        }
        // dz_d/dphi = (delta_d0 - z_d) dg_0/dphi / sum(g); -log p has z-gradient -(alpha_d - 1)/z_d.
        const double dg0 = gamma_jacobian(g[0], GammaParams{phi, 1.0}, opts)[0];
        double acc = 0.0;
        for (std::size_t d = 0; d < dims_d; ++d) {
            if (alpha[d] == 1.0) continue;
            const double z = g[d] / total_g;
            acc += -(alpha[d] - 1.0) / z * ((d == 0 ? 1.0 : 0.0) - z);
        }
        return acc * dg0 / total_g;
    }

    double von_mises_sample(EstimatorKind estimator, double phi, Rng& rng, const GradientOptions& opts) const {
        const double z1 = von_mises_best_fisher(phi, rng);
        if (estimator == EstimatorKind::score_function) {
            constexpr double two_pi = 2.0 * std::numbers::pi;
            const double log_norm = std::log(two_pi * bessel_i0e(prior_kappa)) + prior_kappa;
            double neg_log_p = -prior_kappa * std::cos(z1) + log_norm;
            for (std::size_t d = 1; d < dims; ++d) {
                neg_log_p += -prior_kappa * std::cos(von_mises_best_fisher(prior_kappa, rng)) + log_norm;
            }
            const double score = std::cos(z1) - bessel_i_ratio(phi);
            return neg_log_p * score;
        }
        const double dz1 = von_mises_jacobian(z1, VonMisesParams{0.0, phi}, opts)[1];
        return prior_kappa * std::sin(z1) * dz1;
    }
};

struct VariancePoint {
    double phi;
    double mean_grad;
    double variance;  // E[(g - c)^2] around the analytic gradient
    double seconds_per_sample;
    std::size_t n;
};

/// Substream for grid point `index`: independent of thread count and order.
inline Rng substream(std::uint64_t seed, std::size_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index)};
    return Rng(seq);
}

inline VariancePoint variance_at(EstimatorKind estimator, const CrossEntropyProblem& problem, double phi, std::size_t n,
                                 Rng& rng, double fd_step = 1e-5) {
    if (n < 2) throw DomainError("variance_at: need n >= 2");
    const double c = problem.analytic_grad(phi);
    double sum = 0.0;
    double sum_sq = 0.0;
    Rng warm_rng = rng;
    warm_rng.discard(1);
    const double seconds = timed_batches(
        n,
        [&](std::size_t) {
            const double g = problem.sample_grad(estimator, phi, rng, fd_step);
            sum += g;
            sum_sq += (g - c) * (g - c);
        },
        [&](std::size_t) { (void)problem.sample_grad(estimator, phi, warm_rng, fd_step); });
    const double count = static_cast<double>(n);
    return {phi, sum / count, sum_sq / count, seconds, n};
}

/// Variance across a phi grid. Point i always uses substream(seed, i), so the
/// result does not depend on `threads`.
inline std::vector<VariancePoint> variance_of(EstimatorKind estimator, const CrossEntropyProblem& problem,
                                              std::span<const double> phi_grid, std::size_t n, std::uint64_t seed,
                                              unsigned threads = 1, double fd_step = 1e-5) {
    std::vector<VariancePoint> out(phi_grid.size());
    auto work = [&](std::size_t i) {
        Rng rng = substream(seed, i);
        out[i] = variance_at(estimator, problem, phi_grid[i], n, rng, fd_step);
    };
    if (threads <= 1) {
        for (std::size_t i = 0; i < phi_grid.size(); ++i) work(i);
        return out;
    }
    std::vector<std::exception_ptr> failures(threads);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < phi_grid.size(); i += threads) work(i);
            } catch (...) {
                failures[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }
    return out;
}

}  // namespace irg
