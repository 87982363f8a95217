#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "analysis.hpp"
#include "mesh.hpp"
#include "optimizer.hpp"
#include "report.hpp"
#include "trace_constant.hpp"

namespace ctl {

struct ExperimentConfig {
    int n = 3;
    double p = 2.0;
    std::vector<int> k{2, 3, 4};
    int refinement = 2;
    std::size_t node_budget = 200'000;
    double beta = 0.1;
    double kappa = 0.0;  ///< 0 = auto
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir = "out";
    SolverConfig solver;
    OracleOptions oracle;

    [[nodiscard]] double q() const { return (n - 1) * p / (n - p); }

    [[nodiscard]] Params params() const
    {
        Params prm = solver.params;
        prm.n = n;
        prm.p = p;
        prm.beta = beta;
        prm.kappa = kappa;
        prm.lambda = solver.lambda_schedule.empty() ? 1.0 : solver.lambda_schedule.front();
        return prm;
    }

    [[nodiscard]] SolverConfig solver_config(std::uint64_t seed) const
    {
        SolverConfig s = solver;
        s.params = params();
        s.seed = seed;
        return s;
    }

    void validate() const
    {
        params().validate();
        if (k.empty()) throw ConfigError("k list is empty");
        for (int v : k)
            if (v < 2) throw ConfigError("k must be at least 2 (got " + std::to_string(v) + ")");
        if (refinement < 0) throw ConfigError("refinement must be non-negative");
        if (seeds.empty()) throw ConfigError("seeds list is empty");
        if (!(oracle.truncation_radius > 0) || oracle.resolution < 2)
            throw ConfigError("oracle truncation_radius/resolution invalid");
        solver_config(seeds.front()).validate();
    }

    /// Mesh-based runs need n in {2, 3}; the trace constant works for any n >= 2.
    void require_mesh_dimension() const
    {
        if (n != 2 && n != 3) throw ConfigError("mesh runs need n = 2 or 3 (got " + std::to_string(n) + ")");
    }
};

namespace detail {
template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("field '") + key + "': " + e.what());
    }
}
}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j)
{
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::vector<std::string> known{"n",     "p",     "k",      "refinement", "node_budget", "beta",
                                                "kappa", "seeds", "output_dir", "lambda_schedule",
                                                "epsilon_schedule", "solver", "oracle", "q"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown field '" + key + "'");
    if (j.contains("q")) throw ConfigError("q is derived from n and p and must not be supplied");
    ExperimentConfig c;
    using detail::read_opt;
    read_opt(j, "n", c.n);
    read_opt(j, "p", c.p);
    if (j.contains("k") && j["k"].is_number_integer()) c.k = {j["k"].get<int>()};
    else read_opt(j, "k", c.k);
    read_opt(j, "refinement", c.refinement);
    read_opt(j, "node_budget", c.node_budget);
    read_opt(j, "beta", c.beta);
    if (j.contains("kappa")) {
        if (j["kappa"].is_string()) {
            if (j["kappa"] != "auto") throw ConfigError("kappa must be a number or \"auto\"");
            c.kappa = 0.0;
        } else {
            read_opt(j, "kappa", c.kappa);
            if (!(c.kappa > 0)) throw ConfigError("kappa must be positive");
        }
    }
    read_opt(j, "seeds", c.seeds);
    read_opt(j, "output_dir", c.output_dir);
    read_opt(j, "lambda_schedule", c.solver.lambda_schedule);
    read_opt(j, "epsilon_schedule", c.solver.epsilon_schedule);
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        if (!s.is_object()) throw ConfigError("solver must be an object");
        read_opt(s, "initial_step", c.solver.initial_step);
        read_opt(s, "shrink", c.solver.shrink);
        read_opt(s, "armijo_c", c.solver.armijo_c);
        read_opt(s, "min_step", c.solver.min_step);
        read_opt(s, "max_iters", c.solver.max_iters);
        read_opt(s, "grad_tol", c.solver.grad_tol);
        read_opt(s, "memory", c.solver.memory);
        read_opt(s, "bubble_width", c.solver.bubble_width);
        read_opt(s, "perturbation", c.solver.perturbation);
        if (s.contains("mass_rule")) {
            const auto r = s["mass_rule"].get<std::string>();
            if (r == "vertex") c.solver.params.mass_rule = MassRule::vertex;
            else if (r == "cell") c.solver.params.mass_rule = MassRule::cell;
            else throw ConfigError("mass_rule must be \"vertex\" or \"cell\"");
        }
    }
    if (j.contains("oracle")) {
        const auto& o = j["oracle"];
        read_opt(o, "truncation_radius", c.oracle.truncation_radius);
        read_opt(o, "resolution", c.oracle.resolution);
        read_opt(o, "inner_radius", c.oracle.inner_radius);
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

/// Echo of a validated config, including derived values and regime warnings.
inline nlohmann::json validation_report(const ExperimentConfig& c)
{
    nlohmann::json j = {{"valid", true}, {"n", c.n}, {"p", c.p}, {"q", c.q()}, {"k", c.k}, {"refinement", c.refinement}};
    auto& w = j["warnings"] = nlohmann::json::array();
    if (auto msg = c.params().regime_warning()) w.push_back(*msg);
    return j;
}

// ---------------------------------------------------------------------------

/// Trace constant: the oracle value (cached) and, for p = 2, the closed form.
struct TraceConstantTable {
    OracleResult oracle;
    std::optional<double> closed_form;
};

inline TraceConstantTable trace_constant_table(const ExperimentConfig& c, const std::filesystem::path& cache_path)
{
    TraceConstantCache cache(cache_path);
    TraceConstantTable t;
    t.oracle = cache.get_or_compute(c.n, c.p, c.oracle);
    if (c.p == 2.0 && c.n >= 3) t.closed_form = closed_form_p2(c.n);
    return t;
}

inline std::string trace_constant_csv(const TraceConstantTable& t)
{
    std::ostringstream os;
    os << "method,n,p,q,K,truncation_sensitivity\n";
    const double q = (t.oracle.n - 1) * t.oracle.p / (t.oracle.n - t.oracle.p);
    os << "oracle," << t.oracle.n << ',' << fmt(t.oracle.p) << ',' << fmt(q) << ',' << fmt(t.oracle.K_estimate) << ','
       << fmt(t.oracle.truncation_sensitivity) << '\n';
    if (t.closed_form)
        os << "closed_form," << t.oracle.n << ',' << fmt(t.oracle.p) << ',' << fmt(q) << ',' << fmt(*t.closed_form)
           << ",0\n";
    return os.str();
}

/// Peaks and classification for every stage of a branch.
inline void analyse_branch(Branch& b, const Functional& F, const ExperimentConfig& c, double K_estimate)
{
    const auto thr = threshold(c.n, c.p, b.orbital_set.m_A, K_estimate);
    for (std::size_t s = 0; s < b.stages.size(); ++s) {
        auto& st = b.stages[s];
        if (!st.error.empty()) continue;
        Params prm = c.params();
        prm.lambda = st.lambda;
        const NodalField u = expand_orbits(b.stage_fields[s], F.mesh());
        st.peaks = detect_peaks(u, F, prm, b.orbital_set);
        st.classification = classify(st, *st.peaks, b.group_spec, b.orbital_set, thr, c.beta);
    }
}

struct BranchJob {
    int k = 0;
    std::uint64_t seed = 0;
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& out, const BranchJob& job)
{
    return out / "checkpoints" / ("branch_k" + std::to_string(job.k) + "_s" + std::to_string(job.seed) + ".json");
}

/// Runs one branch (or restores it from its checkpoint) and analyses it.
inline Branch run_branch(const ExperimentConfig& c, const BranchJob& job, double K_estimate,
                         const std::filesystem::path& out, bool require_checkpoint = false)
{
    c.require_mesh_dimension();
    MeshOptions mo;
    mo.node_budget = c.node_budget;
    const SymmetricMesh mesh = build_mesh(c.n, job.k, c.refinement, mo);
    const Functional F(mesh);
    const OrbitalSet A = minimal_orbital_set(mesh.group_spec, c.kappa);
    const auto cp = out.empty() ? std::filesystem::path{} : checkpoint_path(out, job);
    if (require_checkpoint && (cp.empty() || !std::filesystem::exists(cp)))
        throw Error("missing checkpoint " + cp.string());
    Branch b = lambda_sweep(c.solver_config(job.seed), A, F, cp);
    analyse_branch(b, F, c, K_estimate);
    return b;
}

/// Bounded worker pool over branch jobs; results keep job order.
inline std::vector<Branch> run_branches(const ExperimentConfig& c, const std::vector<BranchJob>& jobs, double K_estimate,
                                        const std::filesystem::path& out, int workers, bool require_checkpoint = false)
{
    std::vector<Branch> result(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next++) < jobs.size();) {
            try {
                result[i] = run_branch(c, jobs[i], K_estimate, out, require_checkpoint);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int nw = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
    if (nw == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < nw; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return result;
}

/// Writes CSV traces, the branch table, summary JSON and SVG plots.
inline void write_artifacts(const std::filesystem::path& out, const ExperimentConfig& c,
                            const std::vector<Branch>& branches, double K_estimate)
{
    std::filesystem::create_directories(out);
    for (const auto& b : branches)
        write_text(out / ("trace_k" + std::to_string(b.group_spec.k) + "_s" + std::to_string(b.seed) + ".csv"),
                   trace_csv(b.trace));
    write_text(out / "branches.csv", branches_csv(branches));
    const auto rep = nonequivalence_report(branches);
    auto summary = summary_json(branches, rep);
    summary["K_estimate"] = K_estimate;
    summary["n"] = c.n;
    summary["p"] = c.p;
    summary["q"] = c.q();
    write_text(out / "summary.json", summary.dump(2) + "\n");

    // energy vs lambda with threshold lines
    std::vector<Series> series;
    for (const auto& b : branches) {
        Series s{"k=" + std::to_string(b.group_spec.k) + " s" + std::to_string(b.seed), {}, {}};
        for (const auto& st : b.stages)
            if (st.error.empty()) s.x.push_back(st.lambda), s.y.push_back(st.energy.quotient);
        series.push_back(std::move(s));
    }
    const double lmin = c.solver.lambda_schedule.front(), lmax = c.solver.lambda_schedule.back();
    for (int k : c.k) {
        const double t = threshold(c.n, c.p, k, K_estimate).threshold;
        series.push_back({"threshold m=" + std::to_string(k), {lmin, lmax}, {t, t}, true, false});
    }
    write_text(out / "energy_vs_lambda.svg", line_chart("quotient vs lambda", "lambda", "quotient", series, true));

    for (const auto& b : branches) {
        const std::string tag = "k" + std::to_string(b.group_spec.k) + "_s" + std::to_string(b.seed);
        if (b.stages.empty() || !b.last().peaks) continue;
        MeshOptions mo;
        mo.node_budget = c.node_budget;
        const SymmetricMesh mesh = build_mesh(c.n, b.group_spec.k, c.refinement, mo);
        const Functional F(mesh);
        Params prm = c.params();
        prm.lambda = b.last().lambda;
        const int bins = 180;
        const auto h = azimuthal_density(b.u, F, prm, bins);
        Series s{"lambda=" + detail::tick_label(prm.lambda), {}, {}, false, false};
        for (int i = 0; i < bins; ++i) s.x.push_back((i + 0.5) * 360.0 / bins), s.y.push_back(h[static_cast<std::size_t>(i)]);
        write_text(out / ("density_" + tag + ".svg"),
                   line_chart("boundary q-mass density, k=" + std::to_string(b.group_spec.k),
                              c.n == 2 ? "angle (deg)" : "azimuth (deg)", "mass per radian", {s}));
        std::vector<std::string> labels;
        std::vector<double> masses;
        for (std::size_t i = 0; i < b.last().peaks->peaks.size(); ++i) {
            labels.push_back("peak " + std::to_string(i + 1));
            masses.push_back(b.last().peaks->peaks[i].mass);
        }
        write_text(out / ("peaks_" + tag + ".svg"),
                   bar_chart("peak masses, k=" + std::to_string(b.group_spec.k), labels, masses,
                             1.0 / b.orbital_set.m_A));
    }
}

}  // namespace ctl
