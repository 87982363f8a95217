#pragma once

#include <Eigen/SparseCholesky>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "branch.hpp"
#include "functional.hpp"
#include "invariance.hpp"
#include "mesh.hpp"
#include "symmetry.hpp"

namespace ctl {

struct SolverConfig {
    Params params;
    std::vector<double> lambda_schedule{10.0, 30.0, 100.0, 300.0, 1000.0};
    std::vector<double> epsilon_schedule{1e-2, 1e-4, 1e-6};  ///< only the last entry is used for p = 2
    double initial_step = 1.0;
    double shrink = 0.5;
    double armijo_c = 1e-4;
    double min_step = 1e-12;
    int max_iters = 3000;
    double grad_tol = 1e-9;
    double bubble_width = 0.0;  ///< 0 selects kappa / 3
    double perturbation = 1e-3; ///< relative amplitude of the seeded invariant perturbation of the initial field
    int memory = 8;             ///< quasi-Newton pairs; 0 = preconditioned gradient descent
    std::uint64_t seed = 0;

    void validate() const
    {
        params.validate();
        if (lambda_schedule.empty()) throw ConfigError("lambda_schedule is empty");
        if (epsilon_schedule.empty()) throw ConfigError("epsilon_schedule is empty");
        for (std::size_t i = 0; i < lambda_schedule.size(); ++i) {
            if (!(lambda_schedule[i] > 0)) throw ConfigError("lambda_schedule entries must be positive");
            if (i > 0 && !(lambda_schedule[i] > lambda_schedule[i - 1]))
                throw ConfigError("lambda_schedule must be increasing");
        }
        for (std::size_t i = 0; i < epsilon_schedule.size(); ++i) {
            if (!(epsilon_schedule[i] >= 0)) throw ConfigError("epsilon_schedule entries must be non-negative");
            if (i > 0 && !(epsilon_schedule[i] < epsilon_schedule[i - 1]))
                throw ConfigError("epsilon_schedule must be decreasing");
        }
        if (!(initial_step > 0) || !(shrink > 0 && shrink < 1) || !(armijo_c > 0 && armijo_c < 1) || !(min_step > 0))
            throw ConfigError("invalid backtracking parameters");
        if (memory < 0) throw ConfigError("memory must be non-negative");
        if (max_iters < 1) throw ConfigError("max_iters must be positive");
        if (!(grad_tol > 0)) throw ConfigError("grad_tol must be positive");
        if (!(bubble_width >= 0)) throw ConfigError("bubble_width must be non-negative");
        if (!(perturbation >= 0)) throw ConfigError("perturbation must be non-negative");
    }

    /// Epsilon stages actually run: p = 2 needs no regularization.
    [[nodiscard]] std::vector<double> active_epsilons() const
    {
        if (params.p == 2.0) return {epsilon_schedule.back()};
        return epsilon_schedule;
    }
};

/// Stable 64-bit FNV-1a, used to key checkpoints to their configuration.
inline std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Normalizes u to unit L_q(S) norm in place; returns the old norm.
inline double normalize_trace(NodalField& u, const Functional& F, const Params& prm)
{
    const auto e = F.energy(u, prm);
    const double nrm = std::pow(e.trace_integral, 1.0 / e.q);
    u /= nrm;
    return nrm;
}

/// Sum of exp(-|x - x_j| / w) over the orbit points, symmetrized and trace-normalized.
inline NodalField bubble_init(const OrbitalSet& A, double w, const Functional& F, const Params& prm)
{
    const auto& mesh = F.mesh();
    if (!(w > 0)) throw ConfigError("bubble width must be positive");
    double sep = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < A.points.size(); ++i)
        for (std::size_t j = i + 1; j < A.points.size(); ++j) sep = std::min(sep, norm(A.points[i] - A.points[j]));
    if (w >= 0.5 * sep)
        throw ConfigError("bubble width " + std::to_string(w) + " overlaps neighbouring bubbles (half separation " +
                          std::to_string(0.5 * sep) + ")");
    NodalField u(static_cast<Eigen::Index>(mesh.num_vertices()));
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
        double s = 0.0;
        for (const auto& a : A.points) s += std::exp(-norm(mesh.vertices[i] - a) / w);
        u[static_cast<Eigen::Index>(i)] = s;
    }
    u = symmetrize(u, mesh);
    normalize_trace(u, F, prm);
    return u;
}

/// Deterministic invariant perturbation: one uniform factor in [1-a, 1+a] per orbit.
inline NodalField perturb(const NodalField& u, const SymmetricMesh& mesh, double amplitude, std::uint64_t seed)
{
    if (amplitude == 0.0) return u;
    std::mt19937_64 rng(seed);
    Eigen::VectorXd f(static_cast<Eigen::Index>(mesh.orbits.size()));
    for (Eigen::Index o = 0; o < f.size(); ++o) {
        const double x = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        f[o] = 1.0 + amplitude * (2.0 * x - 1.0);
    }
    return u.cwiseProduct(expand_orbits(f, mesh));
}

struct StageResult {
    NodalField u;
    EnergyBreakdown energy;
    int iterations = 0;
    double grad_norm = 0.0;
    bool converged = false;
    bool line_search_failed = false;
};

/// Projected descent on the 0-homogeneous quotient at fixed (lambda, epsilon),
/// in orbit coordinates (one value per vertex orbit, so every iterate is exactly
/// invariant). Directions come from limited-memory BFGS whose initial inverse
/// Hessian is the orbit-reduced metric (K + lambda M)^{-1}; with memory 0 this is
/// plain preconditioned gradient descent. Each trial is replaced by its absolute
/// value and accepted under Armijo backtracking, then trace-normalized.
class InvariantDescent {
public:
    InvariantDescent(const Functional& F, double lambda, MassRule rule)
        : F_(&F), A_(F.orbit_metric(lambda, rule))
    {
        solver_.compute(A_);
        if (solver_.info() != Eigen::Success) throw Error("orbit metric factorization failed");
    }

    StageResult run(const NodalField& u0, const Params& prm, const SolverConfig& cfg,
                    std::vector<TraceRow>* trace) const
    {
        const auto& mesh = F_->mesh();
        StageResult res;
        Eigen::VectorXd x = orbit_sums(symmetrize(u0.cwiseAbs(), mesh), mesh);
        for (std::size_t o = 0; o < mesh.orbits.size(); ++o)
            x[static_cast<Eigen::Index>(o)] /= static_cast<double>(mesh.orbits[o].size());
        NodalField g;
        auto e = checked(F_->energy_and_gradient(expand_orbits(x, mesh), prm, g));
        double nrm = std::pow(e.trace_integral, 1.0 / e.q);
        x /= nrm;
        e = rescaled(e, nrm);
        Eigen::VectorXd gr = orbit_sums(g, mesh) * nrm;

        std::vector<Eigen::VectorXd> S, Y;
        std::vector<double> rho;
        for (int it = 0;; ++it) {
            res.grad_norm = gr.cwiseAbs().maxCoeff();
            if (res.grad_norm <= cfg.grad_tol) {
                res.converged = true;
                break;
            }
            if (it >= cfg.max_iters) break;
            Eigen::VectorXd d = direction(gr, S, Y, rho);
            double slope = gr.dot(d);
            if (!(slope > 0)) {
                S.clear(), Y.clear(), rho.clear();
                d = solver_.solve(gr);
                slope = gr.dot(d);
            }
            bool accepted = false;
            Eigen::VectorXd trial;
            NodalField gt;
            EnergyBreakdown et;
            double t = cfg.initial_step;
            while (t >= cfg.min_step) {
                trial = (x - t * d).cwiseAbs();
                et = checked(F_->energy_and_gradient(expand_orbits(trial, mesh), prm, gt));
                if (et.quotient <= e.quotient - cfg.armijo_c * t * slope) {
                    accepted = true;
                    break;
                }
                // below the rounding floor of the quotient the sufficient-decrease test is
                // meaningless; accept a non-increasing step that shrinks the gradient
                if (cfg.armijo_c * t * slope < 64.0 * std::numeric_limits<double>::epsilon() * e.quotient &&
                    et.quotient <= e.quotient &&
                    orbit_sums(gt, mesh).cwiseAbs().maxCoeff() * std::pow(et.trace_integral, 1.0 / et.q) <
                        res.grad_norm) {
                    accepted = true;
                    break;
                }
                t *= cfg.shrink;
            }
            if (!accepted) {
                if (!S.empty()) {  // retry once along the preconditioned gradient
                    S.clear(), Y.clear(), rho.clear();
                    --it;
                    continue;
                }
                res.line_search_failed = true;
                break;
            }
            const Eigen::VectorXd grt = orbit_sums(gt, mesh);
            Eigen::VectorXd sv = trial - x, yv = grt - gr;
            const double sy = sv.dot(yv);
            if (sy > 1e-14 * std::sqrt(sv.squaredNorm() * yv.squaredNorm())) {
                S.push_back(std::move(sv));
                Y.push_back(std::move(yv));
                rho.push_back(1.0 / sy);
                if (static_cast<int>(S.size()) > cfg.memory) S.erase(S.begin()), Y.erase(Y.begin()), rho.erase(rho.begin());
            }
            // 0-homogeneity: the gradient at x / s is s times the gradient at x
            nrm = std::pow(et.trace_integral, 1.0 / et.q);
            x = trial / nrm;
            gr = grt * nrm;
            for (auto& v : S) v /= nrm;
            for (auto& v : Y) v *= nrm;
            e = rescaled(et, nrm);
            res.iterations = it + 1;
            if (trace)
                trace->push_back({prm.lambda, prm.epsilon, it + 1, e.quotient, e.grad_term, e.mass_term,
                                  gr.cwiseAbs().maxCoeff(), t});
            if ((it + 1) % 100 == 0)
                log(LogLevel::debug, "lambda " + std::to_string(prm.lambda) + " it " + std::to_string(it + 1) +
                                         " Q " + std::to_string(e.quotient) + " |g| " +
                                         std::to_string(gr.cwiseAbs().maxCoeff()) + " t " + std::to_string(t));
        }
        res.u = expand_orbits(x, mesh);
        res.energy = e;
        return res;
    }

private:
    Eigen::VectorXd direction(const Eigen::VectorXd& g, const std::vector<Eigen::VectorXd>& S,
                              const std::vector<Eigen::VectorXd>& Y, const std::vector<double>& rho) const
    {
        Eigen::VectorXd r = g;
        std::vector<double> alpha(S.size());
        for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
            alpha[i] = rho[i] * S[i].dot(r);
            r -= alpha[i] * Y[i];
        }
        double gamma = 1.0;
        if (!S.empty()) gamma = S.back().dot(Y.back()) / Y.back().dot(solver_.solve(Y.back()));
        r = gamma * solver_.solve(r);
        for (std::size_t i = 0; i < S.size(); ++i) r += (alpha[i] - rho[i] * Y[i].dot(r)) * S[i];
        return r;
    }

    static EnergyBreakdown checked(const EnergyBreakdown& e)
    {
        if (!std::isfinite(e.quotient)) throw Error("non-finite energy during descent");
        return e;
    }
    // energies of u / s for a p-homogeneous numerator and q-homogeneous trace
    static EnergyBreakdown rescaled(EnergyBreakdown e, double s)
    {
        const double sp = std::pow(s, e.p);
        e.grad_term /= sp;
        e.mass_term /= sp;
        e.trace_integral /= std::pow(s, e.q);
        e.trace_term = std::pow(e.trace_integral, e.p / e.q);
        return e;
    }

    const Functional* F_;
    Eigen::SparseMatrix<double> A_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

/// Runs the epsilon continuation at one lambda.
inline StageResult minimize(const NodalField& u0, const SolverConfig& cfg, double lambda, const Functional& F,
                            std::vector<TraceRow>* trace = nullptr)
{
    cfg.validate();
    require_compatible(u0, F.mesh());
    if (invariance_residual(u0, F.mesh()) > 1e-12) throw Error("initial field is not group invariant");
    Params prm = cfg.params;
    prm.lambda = lambda;
    const InvariantDescent descent(F, lambda, prm.mass_rule);
    StageResult res;
    res.u = u0;
    int total = 0;
    for (double eps : cfg.active_epsilons()) {
        prm.epsilon = eps;
        res = descent.run(res.u, prm, cfg, trace);
        total += res.iterations;
    }
    res.iterations = total;
    return res;
}

// ---------------------------------------------------------------------------
// checkpoints

inline std::string config_fingerprint(const SolverConfig& cfg, const SymmetricMesh& mesh)
{
    nlohmann::json j = {{"n", cfg.params.n},
                        {"p", cfg.params.p},
                        {"beta", cfg.params.beta},
                        {"kappa", cfg.params.kappa},
                        {"mass_rule", static_cast<int>(cfg.params.mass_rule)},
                        {"lambda", cfg.lambda_schedule},
                        {"epsilon", cfg.epsilon_schedule},
                        {"step", {cfg.initial_step, cfg.shrink, cfg.armijo_c, cfg.min_step}},
                        {"max_iters", cfg.max_iters},
                        {"memory", cfg.memory},
                        {"grad_tol", cfg.grad_tol},
                        {"w", cfg.bubble_width},
                        {"perturbation", cfg.perturbation},
                        {"seed", cfg.seed},
                        {"k", mesh.group_spec.k},
                        {"mesh", {mesh.dim, mesh.levels, mesh.num_vertices()}}};
    std::ostringstream os;
    os << std::hex << fnv1a(j.dump());
    return os.str();
}

inline nlohmann::json energy_to_json(const EnergyBreakdown& e)
{
    return {{"grad_term", e.grad_term}, {"mass_term", e.mass_term}, {"trace_integral", e.trace_integral},
            {"trace_term", e.trace_term}, {"quotient", e.quotient},   {"lambda", e.lambda},
            {"p", e.p},                   {"q", e.q},                 {"epsilon", e.epsilon}};
}

inline EnergyBreakdown energy_from_json(const nlohmann::json& j)
{
    EnergyBreakdown e;
    e.grad_term = j.at("grad_term");
    e.mass_term = j.at("mass_term");
    e.trace_integral = j.at("trace_integral");
    e.trace_term = j.at("trace_term");
    e.quotient = j.at("quotient");
    e.lambda = j.at("lambda");
    e.p = j.at("p");
    e.q = j.at("q");
    e.epsilon = j.at("epsilon");
    return e;
}

struct Checkpoint {
    std::string config_hash;
    std::uint64_t seed = 0;
    int stages_done = 0;
    Eigen::VectorXd coefficients;  ///< orbit values of the last completed stage
    std::vector<Eigen::VectorXd> stage_fields;
    std::vector<StageSummary> stages;
    std::vector<TraceRow> trace;
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c)
{
    nlohmann::json j;
    j["config_hash"] = c.config_hash;
    j["seed"] = c.seed;
    j["stages_done"] = c.stages_done;
    j["coefficients"] = std::vector<double>(c.coefficients.data(), c.coefficients.data() + c.coefficients.size());
    for (const auto& s : c.stages)
        j["stages"].push_back({{"lambda", s.lambda},
                               {"energy", energy_to_json(s.energy)},
                               {"iterations", s.iterations},
                               {"grad_norm", s.grad_norm},
                               {"neighborhood_mass", s.neighborhood_mass},
                               {"converged", s.converged},
                               {"line_search_failed", s.line_search_failed},
                               {"escaped", s.escaped},
                               {"reinitialized", s.reinitialized},
                               {"error", s.error}});
    for (const auto& f : c.stage_fields) j["stage_fields"].push_back(std::vector<double>(f.data(), f.data() + f.size()));
    auto& tr = j["trace"] = nlohmann::json::array();
    for (const auto& r : c.trace)
        tr.push_back({r.lambda, r.epsilon, r.iter, r.quotient, r.grad_term, r.mass_term, r.grad_norm, r.step});
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        out << j.dump() << '\n';
        if (!out) throw Error("cannot write checkpoint " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline std::optional<Checkpoint> load_checkpoint(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) return std::nullopt;
    std::ifstream in(path);
    nlohmann::json j;
    try {
        in >> j;
        Checkpoint c;
        c.config_hash = j.at("config_hash");
        c.seed = j.at("seed");
        c.stages_done = j.at("stages_done");
        const auto coef = j.at("coefficients").get<std::vector<double>>();
        c.coefficients = Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
        if (j.contains("stages"))
            for (const auto& s : j["stages"]) {
                StageSummary st;
                st.lambda = s.at("lambda");
                st.energy = energy_from_json(s.at("energy"));
                st.iterations = s.at("iterations");
                st.grad_norm = s.at("grad_norm");
                st.neighborhood_mass = s.at("neighborhood_mass");
                st.converged = s.at("converged");
                st.line_search_failed = s.at("line_search_failed");
                st.escaped = s.at("escaped");
                st.reinitialized = s.at("reinitialized");
                st.error = s.at("error");
                c.stages.push_back(std::move(st));
            }
        if (j.contains("stage_fields"))
            for (const auto& f : j["stage_fields"]) {
                const auto v = f.get<std::vector<double>>();
                c.stage_fields.emplace_back(
                    Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
            }
        for (const auto& r : j.at("trace"))
            c.trace.push_back({r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7]});
        return c;
    } catch (const nlohmann::json::exception& e) {
        log(LogLevel::info, "ignoring unreadable checkpoint " + path.string() + ": " + e.what());
        return std::nullopt;
    }
}

/// Orbit values of an invariant field.
inline Eigen::VectorXd orbit_values(const NodalField& u, const SymmetricMesh& mesh)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(mesh.orbits.size()));
    for (std::size_t o = 0; o < mesh.orbits.size(); ++o) v[static_cast<Eigen::Index>(o)] = u[mesh.orbits[o][0]];
    return v;
}

/// Solves at each lambda of the schedule, warm-starting from the previous
/// stage. With a checkpoint path, completed stages are restored and each new
/// stage is saved as it finishes.
inline Branch lambda_sweep(const SolverConfig& cfg, const OrbitalSet& A, const Functional& F,
                           const std::filesystem::path& checkpoint = {})
{
    cfg.validate();
    const auto& mesh = F.mesh();
    Params prm = cfg.params;
    const double w = cfg.bubble_width > 0 ? cfg.bubble_width : A.kappa / 3.0;

    Branch br;
    br.group_spec = mesh.group_spec;
    br.orbital_set = A;
    br.seed = cfg.seed;
    const std::string hash = config_fingerprint(cfg, mesh);

    auto fresh = [&] {
        prm.lambda = cfg.lambda_schedule.front();
        prm.epsilon = cfg.active_epsilons().front();
        NodalField u = perturb(bubble_init(A, w, F, prm), mesh, cfg.perturbation, cfg.seed);
        normalize_trace(u, F, prm);
        return u;
    };

    std::size_t start = 0;
    NodalField u;
    if (!checkpoint.empty()) {
        if (auto c = load_checkpoint(checkpoint); c && c->config_hash == hash &&
                                                  c->coefficients.size() == static_cast<Eigen::Index>(mesh.orbits.size())) {
            start = static_cast<std::size_t>(c->stages_done);
            u = expand_orbits(c->coefficients, mesh);
            br.stages = std::move(c->stages);
            br.stage_fields = std::move(c->stage_fields);
            br.trace = std::move(c->trace);
            log(LogLevel::info, "resuming from " + checkpoint.string() + " after " + std::to_string(start) + " stages");
        }
    }
    if (start == 0) u = fresh();

    bool reinit = false;
    for (std::size_t s = start; s < cfg.lambda_schedule.size(); ++s) {
        const double lambda = cfg.lambda_schedule[s];
        StageSummary st;
        st.lambda = lambda;
        st.reinitialized = reinit;
        reinit = false;
        try {
            auto r = minimize(u, cfg, lambda, F, &br.trace);
            u = std::move(r.u);
            prm.lambda = lambda;
            prm.epsilon = cfg.active_epsilons().back();
            st.energy = r.energy;
            st.iterations = r.iterations;
            st.grad_norm = r.grad_norm;
            st.converged = r.converged;
            st.line_search_failed = r.line_search_failed;
            st.neighborhood_mass = F.neighborhood_mass(u, A, prm);
            st.escaped = st.neighborhood_mass < 1.0 - prm.beta;
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            st.error = e.what();
            log(LogLevel::error, "stage lambda=" + std::to_string(lambda) + " failed: " + e.what());
            u = fresh();
            reinit = true;
        }
        log(LogLevel::info, "k=" + std::to_string(mesh.group_spec.k) + " lambda=" + std::to_string(lambda) +
                                " Q=" + std::to_string(st.energy.quotient) + " iters=" + std::to_string(st.iterations) +
                                " |g|=" + std::to_string(st.grad_norm));
        br.stages.push_back(st);
        br.stage_fields.push_back(orbit_values(u, mesh));
        if (!checkpoint.empty())
            save_checkpoint(checkpoint, {hash, cfg.seed, static_cast<int>(s + 1), orbit_values(u, mesh),
                                         br.stage_fields, br.stages, br.trace});
    }
    br.u = std::move(u);
    return br;
}

/// Field solving the boundary problem with unit boundary coefficient: for a
/// trace-normalized critical point u with multiplier mu = I[u], w = s u with
/// s^{q-p} = mu.
struct PdeSolution {
    NodalField w;
    double mu = 0.0;
    double exponent = 0.0;  ///< s = mu^exponent
};

inline double pde_scaling_exponent(double p, double q)
{
    if (p == q) throw Error("p equals q");
    return 1.0 / (q - p);
}

inline PdeSolution to_pde_solution(const NodalField& u, const Functional& F, const Params& prm)
{
    const auto e = F.energy(u, prm);
    PdeSolution s;
    s.mu = e.quotient;
    s.exponent = pde_scaling_exponent(e.p, e.q);
    // u may carry any trace norm; rescale to unit norm first
    const double nrm = std::pow(e.trace_integral, 1.0 / e.q);
    s.w = (std::pow(s.mu, s.exponent) / nrm) * u;
    return s;
}

}  // namespace ctl
