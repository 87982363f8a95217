// Command-line driver: solve, sweep, trace-constant, report, validate.

#include <CLI11.hpp>
#include <iostream>

#include "ctl/experiment.hpp"

namespace {

int fail(int code, const std::string& type, const std::string& msg)
{
    nlohmann::json j = {{"error", {{"type", type}, {"message", msg}, {"exit_code", code}}}};
    std::cout << j.dump() << std::endl;
    return code;
}

struct Options {
    std::string config;
    std::string out;
    int workers = 1;
    std::optional<std::uint64_t> seed;
    std::optional<int> k;
};

ctl::ExperimentConfig load(const Options& o)
{
    auto c = ctl::load_config(o.config);
    if (o.seed) c.seeds = {*o.seed};
    if (!o.out.empty()) c.output_dir = o.out;
    return c;
}

double K_for(const ctl::ExperimentConfig& c)
{
    const auto t = ctl::trace_constant_table(c, std::filesystem::path(c.output_dir) / "trace_constant_cache.json");
    return t.oracle.K_estimate;
}

std::vector<ctl::BranchJob> jobs_for(const ctl::ExperimentConfig& c, std::optional<int> only_k)
{
    std::vector<ctl::BranchJob> jobs;
    for (int k : c.k)
        if (!only_k || k == *only_k)
            for (auto s : c.seeds) jobs.push_back({k, s});
    if (jobs.empty()) throw ctl::ConfigError("no branch matches the requested k");
    return jobs;
}

int run_sweep(const Options& o, std::optional<int> only_k, bool from_checkpoints)
{
    const auto c = load(o);
    c.require_mesh_dimension();
    const double K = K_for(c);
    const std::filesystem::path out = c.output_dir;
    const auto branches = ctl::run_branches(c, jobs_for(c, only_k), K, out, o.workers, from_checkpoints);
    ctl::write_artifacts(out, c, branches, K);
    const auto rep = ctl::nonequivalence_report(branches);
    nlohmann::json j = {{"lambda", rep.lambda}, {"nonequivalent_count", rep.nonequivalent_count},
                        {"K_estimate", K}, {"output_dir", out.string()}};
    for (const auto& r : rep.rows)
        j["branches"].push_back({{"k", r.k}, {"peak_count", r.peak_count}, {"concentrated", r.concentrated},
                                 {"quotient", r.energy}});
    std::cout << j.dump(2) << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Symmetric concentrating solutions of the critical trace problem"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "experiment JSON")->required();
        sub->add_option("--out", o.out, "output directory (overrides config)");
        sub->add_option("--workers", o.workers, "parallel branches")->check(CLI::PositiveNumber);
        sub->add_option("--seed", o.seed, "seed (replaces the config seed list)");
    };
    auto* solve = app.add_subcommand("solve", "one branch (first k unless --k)");
    common(solve);
    solve->add_option("--k", o.k, "rotation order");
    auto* sweep = app.add_subcommand("sweep", "all k x lambda with nonequivalence report");
    common(sweep);
    auto* tc = app.add_subcommand("trace-constant", "oracle and closed-form trace constant");
    common(tc);
    auto* report = app.add_subcommand("report", "re-render artifacts from checkpoints");
    common(report);
    auto* validate = app.add_subcommand("validate", "schema and invariant checks only");
    common(validate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(2, "usage", e.what());
    }

    try {
        if (*validate) {
            const auto c = load(o);
            std::cout << ctl::validation_report(c).dump(2) << std::endl;
            return 0;
        }
        if (*tc) {
            const auto c = load(o);
            const auto t = ctl::trace_constant_table(c, std::filesystem::path(c.output_dir) / "trace_constant_cache.json");
            const auto csv = ctl::trace_constant_csv(t);
            ctl::write_text(std::filesystem::path(c.output_dir) / "trace_constant.csv", csv);
            std::cout << csv;
            return 0;
        }
        if (*solve) {
            const auto c = load(o);
            return run_sweep(o, o.k ? o.k : std::optional<int>(c.k.front()), false);
        }
        if (*sweep) return run_sweep(o, std::nullopt, false);
        if (*report) return run_sweep(o, std::nullopt, true);
    } catch (const ctl::ConfigError& e) {
        return fail(2, "config", e.what());
    } catch (const std::exception& e) {
        return fail(1, "runtime", e.what());
    }
    return 0;
}
