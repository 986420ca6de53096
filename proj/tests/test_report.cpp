#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>

#include "irg/bench.hpp"
#include "irg/report.hpp"

namespace {

namespace bench = irg::bench;
using irg::Report;

Report small_report() {
    Report r;
    r.seed = 9;
    r.config = {{"command", "unit"}};
    r.columns = {{"name"}, {"value"}, {"count"}, {"ok"}, {"seconds", true}};
    r.add_row({std::string("plain"), 0.1, std::int64_t{3}, true, 1.5e-7});
    r.add_row({std::string("needs, \"quotes\""), -2.0, std::int64_t{-1}, false, 2.0e-7});
    return r;
}

// The report with its nondeterministic columns removed, as CSV text.
std::string deterministic_csv(Report r) {
    for (std::size_t c = r.columns.size(); c-- > 0;) {
        if (!r.columns[c].nondeterministic) continue;
        r.columns.erase(r.columns.begin() + static_cast<std::ptrdiff_t>(c));
        for (auto& row : r.rows) row.erase(row.begin() + static_cast<std::ptrdiff_t>(c));
    }
    std::ostringstream os;
    irg::write_csv(r, os);
    return os.str();
}

TEST(Csv, SchemaLineQuotingAndRoundTripPrecision) {
    std::ostringstream os;
    irg::write_csv(small_report(), os);
    const std::string text = os.str();
    EXPECT_EQ(text.rfind("# schema=1\r\nname,value,count,ok,seconds\r\n", 0), 0u);
    EXPECT_NE(text.find("\"needs, \"\"quotes\"\"\""), std::string::npos);
    EXPECT_NE(text.find("0.10000000000000001"), std::string::npos);
    EXPECT_NE(text.find(",true,"), std::string::npos);
    // Every line ends in CRLF.
    std::size_t lines = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\n') {
            EXPECT_EQ(text[i - 1], '\r');
            ++lines;
        }
    }
    EXPECT_EQ(lines, 4u);
    // %.17g round-trips every double.
    for (double x : {0.1, 1.0 / 3.0, 6.02214076e23, -4.9e-324}) {
        EXPECT_EQ(std::strtod(irg::detail::format_double(x).c_str(), nullptr), x);
    }
}

TEST(Json, MetadataAndRows) {
    const auto j = irg::to_json(small_report());
    EXPECT_EQ(j["metadata"]["schema"], 1);
    EXPECT_EQ(j["metadata"]["seed"], 9);
    EXPECT_EQ(j["metadata"]["config"]["command"], "unit");
    EXPECT_TRUE(j["metadata"].contains("git_describe"));
    EXPECT_EQ(j["metadata"]["columns"][4]["nondeterministic"], true);
    EXPECT_EQ(j["metadata"]["columns"][0]["nondeterministic"], false);
    ASSERT_EQ(j["rows"].size(), 2u);
    EXPECT_EQ(j["rows"][1]["name"], "needs, \"quotes\"");
    EXPECT_EQ(j["rows"][0]["value"].get<double>(), 0.1);
    EXPECT_EQ(j["rows"][1]["count"], -1);
    EXPECT_EQ(j["rows"][1]["ok"], false);
}

// ---------------------------------------------------------------------------
// Reports are reproducible once wall-clock columns are dropped.
// ---------------------------------------------------------------------------

TEST(Reproducibility, AccuracyReport) {
    bench::AccuracyConfig cfg;
    cfg.draws = 40;
    cfg.family = irg::Family::von_mises;
    cfg.method = irg::CdfDerivative::finite_difference;
    const auto a = bench::accuracy_report(cfg, bench::run_accuracy(cfg));
    const auto b = bench::accuracy_report(cfg, bench::run_accuracy(cfg));
    EXPECT_EQ(deterministic_csv(a), deterministic_csv(b));
    cfg.seed += 1;
    EXPECT_NE(deterministic_csv(a), deterministic_csv(bench::accuracy_report(cfg, bench::run_accuracy(cfg))));
}

TEST(Reproducibility, VarianceReportAcrossThreadCounts) {
    bench::VarianceConfig cfg;
    cfg.n = 200;
    cfg.problem = irg::ToyKind::dirichlet;
    const auto a = bench::variance_report(cfg, bench::run_variance(cfg));
    cfg.threads = 3;
    const auto b = bench::variance_report(cfg, bench::run_variance(cfg));
    EXPECT_EQ(deterministic_csv(a), deterministic_csv(b));
}

TEST(Reproducibility, SanityReport) {
    const std::vector<std::string> families{"gamma", "normal", "dirichlet"};
    const auto a = bench::sanity_report(42, 10000, bench::run_sanity_checks(families, 10000, 42));
    const auto b = bench::sanity_report(42, 10000, bench::run_sanity_checks(families, 10000, 42));
    EXPECT_EQ(deterministic_csv(a), deterministic_csv(b));
}

TEST(Sanity, TooFewSamplesIsADomainError) {
    EXPECT_THROW(bench::run_sanity_checks(bench::sanity_families(), 9999, 42), irg::DomainError);
    EXPECT_THROW(bench::run_sanity_checks({"no-such-family"}, 10000, 42), irg::DomainError);
}

TEST(Sanity, EveryRowPassesAtTheDefaultSize) {
    for (const auto& row : bench::run_sanity_checks(bench::sanity_families(), 100000, 42)) {
        EXPECT_TRUE(row.passed) << row.family << ": " << row.check << " estimate " << row.estimate << " target "
                                << row.target;
    }
}

// ---------------------------------------------------------------------------
// Single-point gradient check
// ---------------------------------------------------------------------------

TEST(Gradcheck, AllRoutesAgree) {
    struct Case {
        std::string family;
        std::vector<double> params;
    };
    const std::vector<Case> cases{{"gamma", {2.0, 1.5}},
                                  {"gamma", {0.3}},
                                  {"von-mises", {2.0}},
                                  {"normal", {0.5, 2.0}},
                                  {"truncated-normal", {0.0, 1.0, -1.0, 2.0}}};
    for (const auto& c : cases) {
        const double z = bench::default_gradcheck_point(c.family, c.params);
        const auto rows = bench::run_gradcheck(c.family, c.params, z, 1e-6);
        ASSERT_FALSE(rows.empty()) << c.family;
        for (const auto& r : rows) {
            const double scale = std::max(1e-3, std::abs(r.autodiff));
            EXPECT_NEAR(r.autodiff, r.finite_difference, 1e-6 * scale) << c.family << " " << r.parameter;
            ASSERT_TRUE(r.oracle.has_value()) << c.family << " " << r.parameter;
            EXPECT_NEAR(r.autodiff, *r.oracle, 1e-10 * scale) << c.family << " " << r.parameter;
        }
        const auto rep = bench::gradcheck_report(c.family, c.params, z, 1e-6, 42, rows);
        EXPECT_EQ(rep.rows.size(), rows.size());
    }
    EXPECT_THROW(bench::run_gradcheck("gamma", {}, 1.0, 1e-6), irg::DomainError);
    EXPECT_THROW(bench::run_gradcheck("weibull", {1.0}, 1.0, 1e-6), irg::DomainError);
    EXPECT_THROW(bench::run_gradcheck("truncated-normal", {0.0, 1.0, 50.0, 51.0}, 50.5, 1e-6),
                 irg::DegenerateWindowError);
}

}  // namespace
