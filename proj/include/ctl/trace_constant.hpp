#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "quadrature.hpp"

namespace ctl {

/// Closed-form sharp half-space trace constant for p = 2:
///     K(n,2) = (n-2)/2 * |S^{n-1}|^{1/(n-1)},
/// attained by |x + e_n|^{2-n}.
inline double closed_form_p2(int n)
{
    if (n < 3) throw ConfigError("closed-form trace constant needs n >= 3");
    return 0.5 * (n - 2) * std::pow(unit_sphere_measure(n), 1.0 / (n - 1));
}

struct OracleOptions {
    double truncation_radius = 20.0;
    int resolution = 32;          ///< angular cells on the quarter circle; radial cells match in log scale
    double inner_radius = 1e-3;   ///< radius of the innermost ring; a fan closes the core
    double epsilon = 1e-8;        ///< gradient regularization for p != 2
    int max_iters = 5000;
    double rel_tol = 1e-7;        ///< stop when 20 accepted steps lower the quotient by less than this, relatively
};

/// Axisymmetric P1 discretization of the truncated half-ball {|x| <= R, x_n >= 0}
/// in coordinates (r, z) = (|x'|, x_n) with measure |S^{n-2}| r^{n-2} dr dz.
/// Functions vanish on the arc |x| = R; the trace lives on z = 0.
class HalfBallModel {
public:
    HalfBallModel(int n, double p, const OracleOptions& opt) : n_(n), p_(p), opt_(opt)
    {
        if (n < 2 || !(p > 1.0 && p < n)) throw ConfigError("half-space oracle needs 1 < p < n");
        if (!(opt.truncation_radius > opt.inner_radius)) throw ConfigError("truncation radius too small");
        q_ = (n - 1) * p / (n - p);
        na_ = opt.resolution;
        const double dphi = 0.5 * std::numbers::pi / na_;
        const double span = std::log(opt.truncation_radius / opt.inner_radius);
        nr_ = std::max(1, static_cast<int>(std::ceil(span / dphi)));
        dlog_ = span / nr_;
        // node 0 = origin, then rings 0..nr_ with na_+1 nodes each
        nodes_.push_back({0.0, 0.0});
        for (int j = 0; j <= nr_; ++j) {
            const double rho = opt.inner_radius * std::exp(j * dlog_);
            for (int i = 0; i <= na_; ++i) {
                const double phi = i * dphi;
                nodes_.push_back({rho * std::cos(phi), rho * std::sin(phi)});
            }
        }
        for (int i = 0; i < na_; ++i) add_tri(0, node(0, i), node(0, i + 1));
        for (int j = 0; j < nr_; ++j)
            for (int i = 0; i < na_; ++i) {
                add_tri(node(j, i), node(j + 1, i), node(j + 1, i + 1));
                add_tri(node(j, i), node(j + 1, i + 1), node(j, i + 1));
            }
        // trace segments along z = 0 (i = 0): origin -> ring 0 -> ... -> ring nr
        segs_.push_back({0, node(0, 0)});
        for (int j = 0; j < nr_; ++j) segs_.push_back({node(j, 0), node(j + 1, 0)});
        free_.assign(nodes_.size(), 1);
        for (int i = 0; i <= na_; ++i) free_[node(nr_, i)] = 0;
        precompute();
    }

    [[nodiscard]] std::size_t num_nodes() const { return nodes_.size(); }
    [[nodiscard]] double q() const { return q_; }
    [[nodiscard]] int rings() const { return nr_; }
    [[nodiscard]] const std::vector<std::array<double, 2>>& nodes() const { return nodes_; }
    [[nodiscard]] bool is_free(std::size_t i) const { return free_[i] != 0; }

    struct Eval {
        double grad = 0.0, trace = 0.0, quotient = 0.0;
    };

    /// Quotient int |grad v|^p / (int_{z=0} |v|^q)^{p/q}; optionally its gradient.
    Eval evaluate(const Eigen::VectorXd& v, Eigen::VectorXd* grad) const
    {
        const double p = p_, q = q_, eps2 = opt_.epsilon * opt_.epsilon, eps_p = std::pow(opt_.epsilon, p);
        const double omega = n_ >= 3 ? unit_sphere_measure(n_ - 1) : 2.0;
        std::vector<double> gt(tris_.size()), nt(segs_.size());
        Eigen::VectorXd dG, dN;
        if (grad) {
            dG = Eigen::VectorXd::Zero(v.size());
            dN = Eigen::VectorXd::Zero(v.size());
        }
        for (std::size_t t = 0; t < tris_.size(); ++t) {
            const auto& tri = tris_[t];
            double gx = 0, gz = 0;
            for (int a = 0; a < 3; ++a) {
                gx += v[tri[a]] * tgrad_[t][a][0];
                gz += v[tri[a]] * tgrad_[t][a][1];
            }
            const double s2 = gx * gx + gz * gz;
            const double w = omega * tweight_[t];
            gt[t] = w * (p == 2.0 ? s2 : std::pow(eps2 + s2, 0.5 * p) - eps_p);
            if (grad) {
                const double f = p == 2.0 ? 1.0 : std::pow(eps2 + s2, 0.5 * (p - 2.0));
                for (int a = 0; a < 3; ++a)
                    dG[tri[a]] += p * w * f * (gx * tgrad_[t][a][0] + gz * tgrad_[t][a][1]);
            }
        }
        for (std::size_t s = 0; s < segs_.size(); ++s) {
            const auto& seg = segs_[s];
            const double r0 = nodes_[seg[0]][0], r1 = nodes_[seg[1]][0];
            double acc = 0.0;
            for (std::size_t k = 0; k < seg_rule_.size(); ++k) {
                const double l0 = seg_rule_.points[k][0], l1 = seg_rule_.points[k][1];
                const double r = l0 * r0 + l1 * r1;
                const double val = l0 * v[seg[0]] + l1 * v[seg[1]];
                const double w = omega * seg_rule_.weights[k] * (r1 - r0) * std::pow(r, n_ - 2);
                const double a = std::abs(val);
                acc += w * std::pow(a, q);
                if (grad) {
                    const double d = q * w * std::pow(a, q - 1.0) * (val < 0 ? -1.0 : 1.0);
                    dN[seg[0]] += d * l0;
                    dN[seg[1]] += d * l1;
                }
            }
            nt[s] = acc;
        }
        Eval e;
        e.grad = pairwise_sum(gt);
        e.trace = pairwise_sum(nt);
        if (!(e.trace > 0)) throw Error("zero trace in half-space oracle");
        const double tp = std::pow(e.trace, p / q);
        e.quotient = e.grad / tp;
        if (grad) {
            *grad = dG / tp - (p / q) * e.grad / (tp * e.trace) * dN;
            for (Eigen::Index i = 0; i < grad->size(); ++i)
                if (!free_[i]) (*grad)[i] = 0.0;
        }
        return e;
    }

    /// Weighted stiffness on free nodes (reduced index space), used as descent metric.
    [[nodiscard]] Eigen::SparseMatrix<double> metric(std::vector<int>& reduced_index) const
    {
        reduced_index.assign(nodes_.size(), -1);
        int nf = 0;
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (free_[i]) reduced_index[i] = nf++;
        std::vector<Eigen::Triplet<double>> trips;
        for (std::size_t t = 0; t < tris_.size(); ++t)
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    const int ia = reduced_index[tris_[t][a]], ib = reduced_index[tris_[t][b]];
                    if (ia < 0 || ib < 0) continue;
                    const double k = tgrad_[t][a][0] * tgrad_[t][b][0] + tgrad_[t][a][1] * tgrad_[t][b][1];
                    trips.emplace_back(ia, ib, tweight_[t] * k + (a == b ? 1e-14 : 0.0));
                }
        Eigen::SparseMatrix<double> A(nf, nf);
        A.setFromTriplets(trips.begin(), trips.end());
        return A;
    }

    /// Standard trace extremal shape ((1+z)^2 + r^2)^{-(n-p)/(2(p-1))} scaled by s, cut off linearly at the arc.
    [[nodiscard]] Eigen::VectorXd initial_guess(double s = 1.0) const
    {
        Eigen::VectorXd v(static_cast<Eigen::Index>(nodes_.size()));
        const double e = -(n_ - p_) / (2.0 * (p_ - 1.0));
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const double r = nodes_[i][0] / s, z = nodes_[i][1] / s;
            const double rho = std::hypot(nodes_[i][0], nodes_[i][1]);
            v[i] = free_[i] ? std::pow((1 + z) * (1 + z) + r * r, e) * (1.0 - rho / opt_.truncation_radius) : 0.0;
        }
        return v;
    }

    /// Value of the P1 field at (r, z); zero outside the truncated domain.
    [[nodiscard]] double value_at(const Eigen::VectorXd& v, double r, double z) const
    {
        const double rho = std::hypot(r, z);
        if (rho >= opt_.truncation_radius || r < 0 || z < 0) return 0.0;
        const double dphi = 0.5 * std::numbers::pi / na_;
        const double phi = std::atan2(z, r);
        const int i = std::clamp(static_cast<int>(phi / dphi), 0, na_ - 1);
        std::array<Index, 3> cand[2];
        int ncand = 0;
        if (rho <= opt_.inner_radius) {
            cand[ncand++] = {0, node(0, i), node(0, i + 1)};
        } else {
            const int j = std::clamp(static_cast<int>(std::log(rho / opt_.inner_radius) / dlog_), 0, nr_ - 1);
            cand[ncand++] = {node(j, i), node(j + 1, i), node(j + 1, i + 1)};
            cand[ncand++] = {node(j, i), node(j + 1, i + 1), node(j, i + 1)};
        }
        double best = 0.0, best_min = -1e300;
        for (int c = 0; c < ncand; ++c) {
            const auto& t = cand[c];
            const auto &a = nodes_[t[0]], &b = nodes_[t[1]], &d = nodes_[t[2]];
            const double det = (b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]);
            const double l1 = ((r - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (z - a[1])) / det;
            const double l2 = ((b[0] - a[0]) * (z - a[1]) - (r - a[0]) * (b[1] - a[1])) / det;
            const double l0 = 1 - l1 - l2;
            const double mn = std::min({l0, l1, l2});
            if (mn > best_min) {
                best_min = mn;
                best = l0 * v[t[0]] + l1 * v[t[1]] + l2 * v[t[2]];
            }
        }
        return best;
    }

private:
    [[nodiscard]] Index node(int ring, int i) const { return static_cast<Index>(1 + ring * (na_ + 1) + i); }

    void add_tri(Index a, Index b, Index c)
    {
        const auto &pa = nodes_[a], &pb = nodes_[b], &pc = nodes_[c];
        const double det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        if (det < 0) std::swap(b, c);
        tris_.push_back({a, b, c});
    }

    void precompute()
    {
        const QuadratureRule rule = triangle_degree4_rule();
        tgrad_.resize(tris_.size());
        tweight_.resize(tris_.size());
        for (std::size_t t = 0; t < tris_.size(); ++t) {
            const auto &a = nodes_[tris_[t][0]], &b = nodes_[tris_[t][1]], &c = nodes_[tris_[t][2]];
            const double det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            if (!(det > 0)) throw Error("degenerate triangle in half-space model");
            // barycentric gradients
            tgrad_[t][1] = {(c[1] - a[1]) / det, -(c[0] - a[0]) / det};
            tgrad_[t][2] = {-(b[1] - a[1]) / det, (b[0] - a[0]) / det};
            tgrad_[t][0] = {-tgrad_[t][1][0] - tgrad_[t][2][0], -tgrad_[t][1][1] - tgrad_[t][2][1]};
            double w = 0.0;
            for (std::size_t k = 0; k < rule.size(); ++k) {
                const double r = rule.points[k][0] * a[0] + rule.points[k][1] * b[0] + rule.points[k][2] * c[0];
                w += rule.weights[k] * std::pow(r, n_ - 2);
            }
            tweight_[t] = w * det;  // weights sum to 1/2 = area / det
        }
    }

    int n_;
    double p_, q_;
    OracleOptions opt_;
    int na_ = 0, nr_ = 0;
    double dlog_ = 0.0;
    std::vector<std::array<double, 2>> nodes_;
    std::vector<std::array<Index, 3>> tris_;
    std::vector<std::array<Index, 2>> segs_;
    std::vector<char> free_;
    std::vector<std::array<std::array<double, 2>, 3>> tgrad_;
    std::vector<double> tweight_;
    QuadratureRule seg_rule_ = gauss4_segment_rule();
};

struct OracleRun {
    double quotient = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> history;  ///< quotient after each accepted step
    Eigen::VectorXd field;
};

/// Limited-memory BFGS preconditioned by the weighted stiffness, with monotone
/// Armijo backtracking; falls back to the preconditioned gradient when the
/// quasi-Newton direction is not a descent direction.
inline OracleRun minimize_half_ball(const HalfBallModel& model, const OracleOptions& opt)
{
    std::vector<int> ridx;
    const Eigen::SparseMatrix<double> A = model.metric(ridx);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
    if (solver.info() != Eigen::Success) throw Error("half-space metric factorization failed");
    const auto nf = A.rows();
    auto reduce = [&](const Eigen::VectorXd& full) {
        Eigen::VectorXd r(nf);
        for (std::size_t i = 0; i < ridx.size(); ++i)
            if (ridx[i] >= 0) r[ridx[i]] = full[static_cast<Eigen::Index>(i)];
        return r;
    };
    auto expand = [&](const Eigen::VectorXd& r) {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ridx.size()));
        for (std::size_t i = 0; i < ridx.size(); ++i)
            if (ridx[i] >= 0) full[static_cast<Eigen::Index>(i)] = r[ridx[i]];
        return full;
    };

    OracleRun run;
    Eigen::VectorXd full_g;
    Eigen::VectorXd x = reduce(model.initial_guess());
    auto e = model.evaluate(expand(x), &full_g);
    Eigen::VectorXd g = reduce(full_g);
    run.history.push_back(e.quotient);

    constexpr int memory = 12;
    constexpr int window = 20;
    std::vector<Eigen::VectorXd> S, Y;
    std::vector<double> rho;
    for (int it = 0; it < opt.max_iters; ++it) {
        // two-loop recursion with H0 = gamma * A^{-1}
        Eigen::VectorXd r = g;
        std::vector<double> alpha(S.size());
        for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
            alpha[i] = rho[i] * S[i].dot(r);
            r -= alpha[i] * Y[i];
        }
        double gamma = 1.0;
        if (!S.empty()) {
            const Eigen::VectorXd ay = solver.solve(Y.back());
            gamma = S.back().dot(Y.back()) / Y.back().dot(ay);
        }
        r = gamma * solver.solve(r);
        for (std::size_t i = 0; i < S.size(); ++i) {
            const double beta = rho[i] * Y[i].dot(r);
            r += (alpha[i] - beta) * S[i];
        }
        Eigen::VectorXd d = r;
        double slope = g.dot(d);
        if (!(slope > 0)) {
            S.clear(), Y.clear(), rho.clear();
            d = solver.solve(g);
            slope = g.dot(d);
        }
        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd trial, gt;
        HalfBallModel::Eval et;
        while (t > 1e-16) {
            trial = x - t * d;
            et = model.evaluate(expand(trial), &full_g);
            if (et.quotient <= e.quotient - 1e-4 * t * slope) {
                accepted = true;
                gt = reduce(full_g);
                break;
            }
            t *= 0.5;
        }
        run.iterations = it + 1;
        if (!accepted) {
            run.converged = true;  // no decrease resolvable in floating point
            break;
        }
        Eigen::VectorXd s = trial - x, y = gt - g;
        const double sy = s.dot(y);
        if (sy > 1e-300) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
            if (static_cast<int>(S.size()) > memory) {
                S.erase(S.begin()), Y.erase(Y.begin()), rho.erase(rho.begin());
            }
        }
        // the quotient is 0-homogeneous; keep the iterate at unit scale
        const double scale = trial.cwiseAbs().maxCoeff();
        x = trial / scale;
        g = gt * scale;
        for (auto& v : S) v /= scale;
        for (auto& v : Y) v *= scale;
        e = et;
        run.history.push_back(e.quotient);
        if ((it + 1) % 100 == 0)
            log(LogLevel::debug, "oracle it " + std::to_string(it + 1) + " Q " + std::to_string(e.quotient));
        const auto h = run.history.size();
        if (h > window && (run.history[h - 1 - window] - e.quotient) < opt.rel_tol * e.quotient) {
            run.converged = true;
            break;
        }
    }
    run.quotient = e.quotient;
    run.field = expand(x);
    if (!run.converged)
        throw Error("half-space oracle did not converge in " + std::to_string(opt.max_iters) +
                    " iterations; last quotient " + std::to_string(e.quotient));
    return run;
}

struct OracleResult {
    int n = 0;
    double p = 0.0;
    double K_estimate = 0.0;       ///< at the requested truncation radius
    double K_doubled = 0.0;        ///< at twice the truncation radius
    double truncation_sensitivity = 0.0;  ///< |K(R) - K(2R)| / K(2R)
    int iterations = 0;
    double truncation_radius = 0.0;
    int resolution = 0;
};

/// Minimizes the half-space trace quotient over axisymmetric P1 fields on the
/// truncated half-ball at R_t and 2 R_t.
inline OracleResult halfspace_oracle(int n, double p, const OracleOptions& opt = {})
{
    OracleResult res;
    res.n = n;
    res.p = p;
    res.truncation_radius = opt.truncation_radius;
    res.resolution = opt.resolution;
    const HalfBallModel m1(n, p, opt);
    const auto r1 = minimize_half_ball(m1, opt);
    OracleOptions opt2 = opt;
    opt2.truncation_radius = 2.0 * opt.truncation_radius;
    const HalfBallModel m2(n, p, opt2);
    const auto r2 = minimize_half_ball(m2, opt2);
    res.K_estimate = r1.quotient;
    res.K_doubled = r2.quotient;
    res.truncation_sensitivity = std::abs(r1.quotient - r2.quotient) / r2.quotient;
    res.iterations = r1.iterations + r2.iterations;
    return res;
}

/// Energy threshold K(n,p) * m^{1-p/q} for m-point concentration.
struct ThresholdSpec {
    int n = 0;
    double p = 0.0, q = 0.0;
    double K_estimate = 0.0;
    int m = 1;
    double threshold = 0.0;
    std::string method;  ///< "oracle" or "closed_form"
};

inline ThresholdSpec threshold(int n, double p, int m, double K_estimate, std::string method = "oracle")
{
    if (m < 1) throw ConfigError("orbit size must be at least 1");
    ThresholdSpec t;
    t.n = n;
    t.p = p;
    t.q = (n - 1) * p / (n - p);
    t.K_estimate = K_estimate;
    t.m = m;
    t.threshold = K_estimate * std::pow(static_cast<double>(m), 1.0 - p / t.q);
    t.method = std::move(method);
    return t;
}

/// JSON-backed cache of oracle results keyed by (n, p, R_t, resolution).
class TraceConstantCache {
public:
    explicit TraceConstantCache(std::filesystem::path path) : path_(std::move(path))
    {
        if (std::filesystem::exists(path_)) {
            std::ifstream in(path_);
            try {
                in >> table_;
            } catch (const nlohmann::json::exception&) {
                table_ = nlohmann::json::object();
            }
        }
        if (!table_.is_object()) table_ = nlohmann::json::object();
    }

    static std::string key(int n, double p, const OracleOptions& opt)
    {
        std::ostringstream os;
        os.precision(17);
        os << "n=" << n << ";p=" << p << ";Rt=" << opt.truncation_radius << ";res=" << opt.resolution;
        return os.str();
    }

    OracleResult get_or_compute(int n, double p, const OracleOptions& opt = {})
    {
        const std::string k = key(n, p, opt);
        if (table_.contains(k)) {
            const auto& j = table_[k];
            OracleResult r;
            r.n = n;
            r.p = p;
            r.K_estimate = j.at("K_estimate");
            r.K_doubled = j.at("K_doubled");
            r.truncation_sensitivity = j.at("truncation_sensitivity");
            r.iterations = j.at("iterations");
            r.truncation_radius = opt.truncation_radius;
            r.resolution = opt.resolution;
            return r;
        }
        const OracleResult r = halfspace_oracle(n, p, opt);
        table_[k] = {{"K_estimate", r.K_estimate},
                     {"K_doubled", r.K_doubled},
                     {"truncation_sensitivity", r.truncation_sensitivity},
                     {"iterations", r.iterations}};
        if (!path_.empty()) {
            if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
            std::ofstream out(path_);
            out << table_.dump(2) << '\n';
        }
        return r;
    }

private:
    std::filesystem::path path_;
    nlohmann::json table_;
};

}  // namespace ctl
