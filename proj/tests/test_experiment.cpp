#include <gtest/gtest.h>

#include "ctl/experiment.hpp"

using namespace ctl;

TEST(Config, ParsesAndDerivesQ)
{
    const auto c = parse_config(nlohmann::json::parse(R"({"n": 3, "p": 2.0, "k": [2, 3], "kappa": "auto",
        "lambda_schedule": [1, 10], "solver": {"grad_tol": 1e-8, "mass_rule": "cell"}})"));
    EXPECT_DOUBLE_EQ(c.q(), 4.0);
    EXPECT_EQ(c.k, (std::vector<int>{2, 3}));
    EXPECT_EQ(c.solver.grad_tol, 1e-8);
    EXPECT_EQ(c.solver.params.mass_rule, MassRule::cell);
    EXPECT_EQ(c.solver_config(5).seed, 5u);
    EXPECT_EQ(c.solver_config(5).params.p, 2.0);
}

TEST(Config, RejectsInvalidInput)
{
    EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"n": 3, "p": 2.0, "q": 4})")), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"n": 3, "p": 3.5})")), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"k": [1]})")), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"lambda_schedule": [10, 1]})")), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"bogus": 1})")), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"p": "two"})")), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"kappa": "big"})")), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json::parse("[1, 2]")), ConfigError);
}

TEST(Config, MalformedFileIsAConfigError)
{
    const auto path = std::filesystem::temp_directory_path() / "ctl_bad_config.json";
    write_text(path, "{\"n\": 3,");
    EXPECT_THROW(load_config(path), ConfigError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_config(path), ConfigError);
}

TEST(Config, ValidationReport)
{
    auto c = parse_config(nlohmann::json::parse(R"({"n": 3, "p": 2.0})"));
    auto j = validation_report(c);
    EXPECT_EQ(j["q"], 4.0);
    EXPECT_TRUE(j["warnings"].empty());
    c = parse_config(nlohmann::json::parse(R"({"n": 3, "p": 2.5})"));
    j = validation_report(c);
    ASSERT_EQ(j["warnings"].size(), 1u);
    EXPECT_NE(j["warnings"][0].get<std::string>().find("outside the regime"), std::string::npos);
}

TEST(Report, FixedFormattingRoundTrips)
{
    for (double x : {0.1, 1.0 / 3.0, 6.02214076e23, -1e-300}) EXPECT_EQ(std::stod(fmt(x)), x);
    EXPECT_EQ(fmt(0.1), "0.10000000000000001");
}

TEST(Report, TraceCsvLayout)
{
    const std::vector<TraceRow> rows{{10, 0, 1, 2.5, 1, 0.1, 1e-3, 1}, {10, 0, 2, 2.4, 1, 0.1, 1e-4, 0.5}};
    const auto csv = trace_csv(rows);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_EQ(csv.rfind("lambda,epsilon,iter,quotient", 0), 0u);
    EXPECT_EQ(trace_csv(rows), csv);
}

TEST(Report, SvgIsWellFormed)
{
    const auto svg = line_chart("t", "x", "y", {{"a", {1, 10, 100}, {1, 2, 3}}}, true);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_NE(svg.find("<polyline"), std::string::npos);
    const auto bars = bar_chart("m", {"a", "b"}, {0.5, 0.5}, 0.5);
    EXPECT_NE(bars.find("<rect x="), std::string::npos);
}

TEST(TraceConstantTable, TwoRowsForPTwo)
{
    auto c = parse_config(nlohmann::json::parse(R"({"n": 3, "p": 2.0, "oracle": {"resolution": 16}})"));
    const auto path = std::filesystem::temp_directory_path() / "ctl_tc_table.json";
    std::filesystem::remove(path);
    const auto t = trace_constant_table(c, path);
    ASSERT_TRUE(t.closed_form);
    EXPECT_NEAR(t.oracle.K_estimate / *t.closed_form, 1.0, 0.02);
    const auto csv = trace_constant_csv(t);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    std::filesystem::remove(path);
}
