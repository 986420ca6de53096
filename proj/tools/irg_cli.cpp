// Command-line front end: accuracy and variance benchmarks, Monte Carlo
// sanity checks and a single-point gradient check.
//
// Exit codes: 0 success, 1 check failure, 2 usage error, 3 convergence failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "irg/bench.hpp"

namespace {

using irg::bench::Precision;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConvergence = 3;

struct CommonOptions {
    std::uint64_t seed = irg::bench::kDefaultSeed;
    std::string output = "-";
    irg::ReportFormat format = irg::ReportFormat::csv;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--seed", opts.seed, "RNG seed")->capture_default_str();
    cmd->add_option("--output", opts.output, "Report path, '-' for stdout")->capture_default_str();
    const std::map<std::string, irg::ReportFormat> formats{{"csv", irg::ReportFormat::csv},
                                                           {"json", irg::ReportFormat::json}};
    cmd->add_option("--format", opts.format, "Report format")
        ->transform(CLI::CheckedTransformer(formats, CLI::ignore_case))
        ->default_str("csv");
}

void emit(const irg::Report& report, const CommonOptions& opts) {
    if (opts.output == "-") {
        irg::write_report(report, opts.format, std::cout);
        return;
    }
    std::ofstream out(opts.output, std::ios::binary);
    if (!out) throw CLI::ValidationError("--output", "cannot open '" + opts.output + "' for writing");
    irg::write_report(report, opts.format, out);
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const auto& item : items) {
        std::stringstream ss(item);
        for (std::string part; std::getline(ss, part, ',');) {
            if (!part.empty()) out.push_back(part);
        }
    }
    return out;
}

std::vector<double> read_alpha_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("--alpha-file", "cannot open '" + path + "'");
    std::vector<double> alpha;
    for (double x; in >> x;) alpha.push_back(x);
    if (!in.eof()) throw CLI::ValidationError("--alpha-file", "expected one number per line");
    return alpha;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Implicit reparameterization gradients: benchmarks and checks"};
    app.require_subcommand(1);

    // bench accuracy | bench variance
    auto* bench = app.add_subcommand("bench", "Benchmarks");
    bench->require_subcommand(1);

    CommonOptions acc_common;
    irg::bench::AccuracyConfig acc;
    double acc_delta = 0.0;
    auto* accuracy = bench->add_subcommand("accuracy", "CDF-derivative error against the oracle on the evaluation grid");
    add_common(accuracy, acc_common);
    const std::map<std::string, irg::Family> acc_families{{"gamma", irg::Family::gamma},
                                                          {"von-mises", irg::Family::von_mises}};
    const std::map<std::string, Precision> precisions{{"single", Precision::single}, {"double", Precision::double_}};
    const std::map<std::string, irg::CdfDerivative> methods{{"autodiff", irg::CdfDerivative::autodiff},
                                                            {"finite-diff", irg::CdfDerivative::finite_difference}};
    accuracy->add_option("--distribution,--family", acc.family, "gamma | von-mises")
        ->transform(CLI::CheckedTransformer(acc_families))
        ->default_str("gamma");
    accuracy->add_option("--precision", acc.precision, "single | double")
        ->transform(CLI::CheckedTransformer(precisions))
        ->default_str("double");
    accuracy->add_option("--method", acc.method, "autodiff | finite-diff")
        ->transform(CLI::CheckedTransformer(methods))
        ->default_str("autodiff");
    accuracy->add_option("--delta", acc_delta, "Relative finite-difference step (default: tuned per family)")
        ->check(CLI::Range(0.0, 1.0));
    accuracy->add_option("--draws", acc.draws, "Draws per parameter value")->capture_default_str()->check(
        CLI::PositiveNumber);
    bool acc_no_timing = false;
    accuracy->add_flag("--no-timing", acc_no_timing, "Skip the timing pass");

    CommonOptions var_common;
    irg::bench::VarianceConfig var;
    std::vector<std::string> var_estimators{"implicit", "score-function"};
    std::string alpha_file;
    auto* variance = bench->add_subcommand("variance", "Cross-entropy gradient variance on a toy problem");
    add_common(variance, var_common);
    const std::map<std::string, irg::ToyKind> problems{{"dirichlet", irg::ToyKind::dirichlet},
                                                       {"von-mises", irg::ToyKind::von_mises}};
    variance->add_option("--problem", var.problem, "dirichlet | von-mises")
        ->transform(CLI::CheckedTransformer(problems))
        ->required();
    variance->add_option("--estimators", var_estimators, "Comma-separated: implicit, score-function, finite-difference")
        ->delimiter(',');
    variance->add_option("--phi", var.phi_grid, "Comma-separated phi values (default: built-in 7-point grid)")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    variance->add_option("--n", var.n, "Samples per phi")->capture_default_str()->check(CLI::Range(2, 1 << 30));
    variance->add_option("--threads", var.threads, "Worker threads (phi points are sharded)")
        ->capture_default_str()
        ->check(CLI::Range(1, 256));
    variance->add_option("--alpha-file", alpha_file, "Dirichlet concentrations, one per line")
        ->check(CLI::ExistingFile);

    // check sanity
    auto* check = app.add_subcommand("check", "Checks");
    check->require_subcommand(1);
    CommonOptions san_common;
    std::size_t san_n = 100000;
    std::vector<std::string> san_families;
    auto* sanity = check->add_subcommand("sanity", "Monte Carlo gradient identities, pass/fail per family");
    add_common(sanity, san_common);
    sanity->add_option("--n", san_n, "Samples per identity (>= 10000)")->capture_default_str();
    sanity->add_option("--families", san_families, "Comma-separated subset (default: all)")->delimiter(',');

    // gradcheck
    CommonOptions gc_common;
    std::string gc_family = "gamma";
    std::vector<double> gc_params;
    std::optional<double> gc_z;
    std::optional<double> gc_delta;
    std::string gc_method = "autodiff";
    auto* gradcheck = app.add_subcommand("gradcheck", "dF/dphi at one point by autodiff, finite difference and oracle");
    add_common(gradcheck, gc_common);
    gradcheck->add_option("--family", gc_family, "gamma | von-mises | normal | truncated-normal")
        ->check(CLI::IsMember({"gamma", "von-mises", "normal", "truncated-normal"}))
        ->capture_default_str();
    gradcheck->add_option("--params", gc_params, "Comma-separated parameters")->delimiter(',')->required();
    gradcheck->add_option("--z", gc_z, "Evaluation point (default: a central point of the distribution)");
    gradcheck->add_option("--delta", gc_delta, "Relative finite-difference step")->check(CLI::Range(0.0, 1.0));
    gradcheck->add_option("--method", gc_method, "Primary method recorded in the report; every method is evaluated")
        ->check(CLI::IsMember({"autodiff", "finite-diff"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*accuracy) {
            if (acc_delta > 0.0) acc.fd_step = acc_delta;
            acc.seed = acc_common.seed;
            acc.timing = !acc_no_timing;
            const auto result = irg::bench::run_accuracy(acc);
            emit(irg::bench::accuracy_report(acc, result), acc_common);
            if (result.failure_rate() > irg::bench::kMaxFailureRate) {
                std::cerr << "bench accuracy: " << result.n_excluded << " of " << (result.n_points + result.n_excluded)
                          << " grid points failed\n";
                return kExitConvergence;
            }
            return kExitOk;
        }
        if (*variance) {
            var.seed = var_common.seed;
            var.estimators.clear();
            for (const auto& name : split_list(var_estimators)) {
                if (name == "implicit") {
                    var.estimators.push_back(irg::EstimatorKind::implicit);
                } else if (name == "score-function") {
                    var.estimators.push_back(irg::EstimatorKind::score_function);
                } else if (name == "finite-difference") {
                    var.estimators.push_back(irg::EstimatorKind::finite_difference);
                } else {
                    throw CLI::ValidationError("--estimators", "unknown estimator '" + name + "'");
                }
            }
            if (!alpha_file.empty()) var.dirichlet_alpha = read_alpha_file(alpha_file);
            emit(irg::bench::variance_report(var, irg::bench::run_variance(var)), var_common);
            return kExitOk;
        }
        if (*sanity) {
            const auto families = san_families.empty() ? irg::bench::sanity_families() : split_list(san_families);
            if (san_n < irg::bench::kMinSanitySamples) {
                throw CLI::ValidationError("--n", "must be at least 10000");
            }
            const auto rows = irg::bench::run_sanity_checks(families, san_n, san_common.seed);
            std::cerr << "seed " << san_common.seed << "\n";
            bool all = true;
            for (const auto& r : rows) {
                std::cerr << (r.passed ? "PASS " : "FAIL ") << r.family << ": " << r.check << " estimate "
                          << r.estimate << " target " << r.target << "\n";
                all = all && r.passed;
            }
            emit(irg::bench::sanity_report(san_common.seed, san_n, rows), san_common);
            return all ? kExitOk : kExitCheckFailed;
        }
        if (*gradcheck) {
            const double delta = gc_delta.value_or(1e-5);
            const double z = gc_z ? *gc_z : irg::bench::default_gradcheck_point(gc_family, gc_params);
            const auto rows = irg::bench::run_gradcheck(gc_family, gc_params, z, delta);
            auto report = irg::bench::gradcheck_report(gc_family, gc_params, z, delta, gc_common.seed, rows);
            report.config["method"] = gc_method;
            emit(report, gc_common);
            return kExitOk;
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const irg::ConvergenceError& e) {
        std::cerr << "error: " << e.what() << " (last iterate " << e.last_iterate() << " after " << e.iterations()
                  << " iterations)\n";
        return kExitConvergence;
    } catch (const irg::DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (*gradcheck) {
            std::cerr << "  family " << gc_family << ", params";
            for (double p : gc_params) std::cerr << " " << p;
            if (gc_z) std::cerr << ", z " << *gc_z;
            std::cerr << "\n";
        }
        return kExitUsage;
    } catch (const irg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckFailed;
    }
    return kExitUsage;
}
