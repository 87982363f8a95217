#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "mesh.hpp"
#include "quadrature.hpp"
#include "symmetry.hpp"

namespace ctl {

/// Coefficients of a piecewise-linear function, one per mesh vertex.
using NodalField = Eigen::VectorXd;

/// Problem parameters. q is always derived from (n, p).
/// Quadrature for the zeroth-order term lambda int |u|^p: cell rule, or the
/// vertex rule (mass lumping), which keeps discrete minimizers sign-definite
/// when lambda h^2 is of order one.
enum class MassRule { vertex, cell };

struct Params {
    int n = 3;
    double p = 2.0;
    double lambda = 1.0;
    double epsilon = 0.0;  ///< gradient regularization
    double beta = 0.1;
    double kappa = 0.0;    ///< 0 selects the orbital-set default
    MassRule mass_rule = MassRule::vertex;

    /// Critical trace exponent (n-1)p/(n-p).
    [[nodiscard]] double q() const { return (n - 1) * p / (n - p); }

    void validate() const
    {
        if (n < 2) throw ConfigError("dimension n must be at least 2");
        if (!(p > 1.0 && p < n)) throw ConfigError("p must satisfy 1 < p < n");
        if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
        if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
        if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta must lie in (0, 1)");
        if (!(kappa >= 0.0)) throw ConfigError("kappa must be non-negative");
    }

    /// Set when p > (n+1)/2, where a k-peak competitor below K(n,p) k^{1-p/q} is not guaranteed.
    [[nodiscard]] std::optional<std::string> regime_warning() const
    {
        if (p > 0.5 * (n + 1))
            return "p = " + std::to_string(p) + " exceeds (n+1)/2 = " + std::to_string(0.5 * (n + 1)) +
                   ": outside the regime p <= (n+1)/2 where multi-peak minimizers are guaranteed below threshold";
        return std::nullopt;
    }
};

/// The three integrals of the energy quotient and the quotient itself.
struct EnergyBreakdown {
    double grad_term = 0.0;       ///< int_B |grad u|^p (regularized)
    double mass_term = 0.0;       ///< int_B |u|^p
    double trace_integral = 0.0;  ///< int_S |u|^q
    double trace_term = 0.0;      ///< (int_S |u|^q)^{p/q}
    double quotient = 0.0;
    double lambda = 0.0, p = 0.0, q = 0.0, epsilon = 0.0;
};

namespace detail {
/// |x|^e, with multiplication for the common integer exponents.
inline double abspow(double x, double e)
{
    const double a = std::abs(x);
    if (e == 2.0) return a * a;
    if (e == 4.0) return (a * a) * (a * a);
    if (e == 3.0) return a * a * a;
    if (e == 1.0) return a;
    return std::pow(a, e);
}
/// sign(x) |x|^e
inline double signed_pow(double x, double e)
{
    if (e == 1.0) return x;
    if (e == 3.0) return x * x * x;
    const double v = abspow(x, e);
    return x < 0 ? -v : v;
}
}  // namespace detail

/// Assembles the quotient
///     I[u] = (int_B |grad u|^p + lambda int_B |u|^p) / (int_S |u|^q)^{p/q}
/// and its Gateaux derivative on P1 fields of a SymmetricMesh.
class Functional {
public:
    explicit Functional(const SymmetricMesh& mesh)
        : mesh_(&mesh), cell_rule_(cell_rule(mesh.dim)), bq_(boundary_quadrature(mesh))
    {
        const int d = mesh.dim, nv = d + 1;
        const std::size_t nc = mesh.num_cells();
        volume_.resize(nc);
        grads_.resize(nc * nv * d);
        for (std::size_t c = 0; c < nc; ++c) {
            const auto cv = mesh.cell(c);
            Eigen::Matrix3d J = Eigen::Matrix3d::Identity();
            for (int j = 1; j <= d; ++j)
                for (int i = 0; i < d; ++i) J(i, j - 1) = mesh.vertices[cv[j]][i] - mesh.vertices[cv[0]][i];
            const Eigen::Matrix3d Jinv = J.inverse();
            volume_[c] = std::abs(J.determinant()) / (d == 2 ? 2.0 : 6.0);
            if (!(volume_[c] > 0)) throw Error("degenerate cell " + std::to_string(c));
            double* g = &grads_[c * nv * d];
            for (int i = 0; i < d; ++i) g[i] = 0.0;
            for (int j = 1; j <= d; ++j)
                for (int i = 0; i < d; ++i) {
                    g[j * d + i] = Jinv(j - 1, i);
                    g[i] -= Jinv(j - 1, i);
                }
        }
        const std::size_t nf = mesh.num_facets(), nq = bq_.rule.size();
        qpoints_.resize(nf * nq);
        for (std::size_t f = 0; f < nf; ++f) {
            const auto fv = mesh.facet(f);
            for (std::size_t q = 0; q < nq; ++q) {
                Point x{0, 0, 0};
                for (int a = 0; a < d; ++a) x = x + bq_.rule.points[q][a] * mesh.vertices[fv[a]];
                qpoints_[f * nq + q] = x;
            }
        }
    }

    [[nodiscard]] const SymmetricMesh& mesh() const { return *mesh_; }
    [[nodiscard]] const BoundaryQuadrature& boundary() const { return bq_; }
    [[nodiscard]] const std::vector<Point>& boundary_points() const { return qpoints_; }
    [[nodiscard]] double cell_measure(std::size_t c) const { return volume_[c]; }

    [[nodiscard]] EnergyBreakdown energy(const NodalField& u, const Params& prm) const
    {
        return evaluate(u, prm, nullptr, nullptr, -1);
    }

    /// Terms integrated over the cells and facets of replica 0 only, times the group order.
    [[nodiscard]] EnergyBreakdown energy_from_replica(const NodalField& u, const Params& prm) const
    {
        return evaluate(u, prm, nullptr, nullptr, 0);
    }

    /// Vector of DI[u](phi_i) over the nodal basis.
    [[nodiscard]] NodalField gradient(const NodalField& u, const Params& prm) const
    {
        NodalField g;
        evaluate(u, prm, &g, nullptr, -1);
        return g;
    }

    [[nodiscard]] EnergyBreakdown energy_and_gradient(const NodalField& u, const Params& prm, NodalField& grad) const
    {
        return evaluate(u, prm, &grad, nullptr, -1);
    }

    /// The two halves of the weak form, per nodal test function:
    ///   a_i = int |grad u|^{p-2} grad u . grad phi_i + lambda int |u|^{p-2} u phi_i
    ///   b_i = int_S |u|^{q-2} u phi_i
    struct WeakForm {
        NodalField a, b;
    };
    [[nodiscard]] WeakForm weak_form(const NodalField& u, const Params& prm) const
    {
        WeakForm w;
        evaluate(u, prm, nullptr, &w, -1);
        return w;
    }

    /// Facet masses of |u|^q / int_S |u|^q.
    [[nodiscard]] std::vector<double> trace_distribution(const NodalField& u, const Params& prm) const
    {
        check_size(u);
        const double q = prm.q();
        const std::size_t nf = mesh_->num_facets(), nq = bq_.rule.size();
        std::vector<double> masses(nf);
        for (std::size_t f = 0; f < nf; ++f) {
            double s = 0.0;
            const auto fv = mesh_->facet(f);
            for (std::size_t k = 0; k < nq; ++k) s += bq_.weight(f, k) * detail::abspow(eval_facet(u, fv, k), q);
            masses[f] = s;
        }
        const double total = pairwise_sum(masses);
        if (!(total > 0)) throw Error("zero trace");
        for (double& m : masses) m /= total;
        return masses;
    }

    /// Normalized q-mass per boundary quadrature point (facet-major order).
    [[nodiscard]] std::vector<double> trace_point_masses(const NodalField& u, const Params& prm) const
    {
        check_size(u);
        const double q = prm.q();
        const std::size_t nf = mesh_->num_facets(), nq = bq_.rule.size();
        std::vector<double> m(nf * nq);
        for (std::size_t f = 0; f < nf; ++f) {
            const auto fv = mesh_->facet(f);
            for (std::size_t k = 0; k < nq; ++k)
                m[f * nq + k] = bq_.weight(f, k) * detail::abspow(eval_facet(u, fv, k), q);
        }
        const double total = pairwise_sum(m);
        if (!(total > 0)) throw Error("zero trace");
        for (double& x : m) x /= total;
        return m;
    }

    /// Fraction of the normalized trace q-mass inside the kappa-neighborhood of A;
    /// quadrature points decide membership.
    [[nodiscard]] double neighborhood_mass(const NodalField& u, const OrbitalSet& A, const Params& prm) const
    {
        const auto m = trace_point_masses(u, prm);
        std::vector<double> inside(m.size(), 0.0);
        for (std::size_t i = 0; i < m.size(); ++i)
            if (A.in_neighborhood(qpoints_[i])) inside[i] = m[i];
        return std::clamp(pairwise_sum(inside), 0.0, 1.0);
    }

    /// P1 stiffness + lambda * mass, summed over vertex orbits (rows and columns
    /// indexed by orbit). Used as the metric for descent on invariant fields.
    [[nodiscard]] Eigen::SparseMatrix<double> orbit_metric(double lambda, MassRule rule = MassRule::vertex) const
    {
        const auto& mesh = *mesh_;
        const int d = mesh.dim, nv = d + 1;
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(mesh.num_cells() * nv * nv);
        const double mass_scale = 1.0 / ((d + 1) * (d + 2));
        for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
            const auto cv = mesh.cell(c);
            const double* g = &grads_[c * nv * d];
            for (int a = 0; a < nv; ++a)
                for (int b = 0; b < nv; ++b) {
                    double k = 0.0;
                    for (int i = 0; i < d; ++i) k += g[a * d + i] * g[b * d + i];
                    const double m = rule == MassRule::vertex ? (a == b ? volume_[c] / nv : 0.0)
                                                              : volume_[c] * mass_scale * (a == b ? 2.0 : 1.0);
                    trips.emplace_back(static_cast<int>(mesh.orbit_of[cv[a]]), static_cast<int>(mesh.orbit_of[cv[b]]),
                                       volume_[c] * k + lambda * m);
                }
        }
        const auto no = static_cast<int>(mesh.orbits.size());
        Eigen::SparseMatrix<double> A(no, no);
        A.setFromTriplets(trips.begin(), trips.end());
        return A;
    }

private:
    void check_size(const NodalField& u) const
    {
        if (static_cast<std::size_t>(u.size()) != mesh_->num_vertices())
            throw Error("field length " + std::to_string(u.size()) + " does not match mesh vertex count " +
                        std::to_string(mesh_->num_vertices()));
    }

    [[nodiscard]] double eval_facet(const NodalField& u, std::span<const Index> fv, std::size_t k) const
    {
        double v = 0.0;
        for (std::size_t a = 0; a < fv.size(); ++a) v += bq_.rule.points[k][a] * u[fv[a]];
        return v;
    }

    EnergyBreakdown evaluate(const NodalField& u, const Params& prm, NodalField* grad, WeakForm* weak,
                             int replica) const
    {
        check_size(u);
        const auto& mesh = *mesh_;
        const int d = mesh.dim, nv = d + 1;
        const double p = prm.p, q = prm.q(), lam = prm.lambda, eps = prm.epsilon;
        const double eps2 = eps * eps, eps_p = std::pow(eps, p);
        const std::size_t nc = mesh.num_cells(), nf = mesh.num_facets();
        const std::size_t nqc = cell_rule_.size(), nqf = bq_.rule.size();
        const double cell_ref = reference_measure(d);
        const bool want = grad || weak;

        std::vector<double> gterm(nc, 0.0), mterm(nc, 0.0), nterm(nf, 0.0);
        NodalField dG, dM, dN;
        if (want) {
            dG = NodalField::Zero(u.size());
            dM = NodalField::Zero(u.size());
            dN = NodalField::Zero(u.size());
        }
        for (std::size_t c = 0; c < nc; ++c) {
            if (replica >= 0 && mesh.cell_replica[c] != replica) continue;
            const auto cv = mesh.cell(c);
            const double* g = &grads_[c * nv * d];
            double gu[3] = {0, 0, 0};
            for (int a = 0; a < nv; ++a)
                for (int i = 0; i < d; ++i) gu[i] += u[cv[a]] * g[a * d + i];
            const double s2 = gu[0] * gu[0] + gu[1] * gu[1] + gu[2] * gu[2];
            const double vol = volume_[c];
            gterm[c] = vol * (p == 2.0 ? s2 : std::pow(eps2 + s2, 0.5 * p) - eps_p);
            if (prm.mass_rule == MassRule::vertex) {
                const double w = vol / nv;
                double msum = 0.0;
                for (int a = 0; a < nv; ++a) {
                    msum += detail::abspow(u[cv[a]], p);
                    if (want) dM[cv[a]] += w * detail::signed_pow(u[cv[a]], p - 1.0);
                }
                mterm[c] = w * msum;
            } else {
                double msum = 0.0;
                for (std::size_t k = 0; k < nqc; ++k) {
                    double uq = 0.0;
                    for (int a = 0; a < nv; ++a) uq += cell_rule_.points[k][a] * u[cv[a]];
                    msum += cell_rule_.weights[k] * detail::abspow(uq, p);
                    if (want) {
                        const double w = vol / cell_ref * cell_rule_.weights[k] * detail::signed_pow(uq, p - 1.0);
                        for (int a = 0; a < nv; ++a) dM[cv[a]] += w * cell_rule_.points[k][a];
                    }
                }
                mterm[c] = vol / cell_ref * msum;
            }
            if (want) {
                const double factor = p == 2.0 ? 1.0 : std::pow(eps2 + s2, 0.5 * (p - 2.0));
                for (int a = 0; a < nv; ++a) {
                    double dotg = 0.0;
                    for (int i = 0; i < d; ++i) dotg += gu[i] * g[a * d + i];
                    dG[cv[a]] += vol * factor * dotg;
                }
            }
        }
        for (std::size_t f = 0; f < nf; ++f) {
            if (replica >= 0 && mesh.facet_replica[f] != replica) continue;
            const auto fv = mesh.facet(f);
            double s = 0.0;
            for (std::size_t k = 0; k < nqf; ++k) {
                const double uq = eval_facet(u, fv, k);
                const double w = bq_.weight(f, k);
                s += w * detail::abspow(uq, q);
                if (want) {
                    const double dv = w * detail::signed_pow(uq, q - 1.0);
                    for (int a = 0; a < d; ++a) dN[fv[a]] += dv * bq_.rule.points[k][a];
                }
            }
            nterm[f] = s;
        }

        const double mult = replica >= 0 ? static_cast<double>(mesh.group_order()) : 1.0;
        EnergyBreakdown e;
        e.grad_term = mult * pairwise_sum(gterm);
        e.mass_term = mult * pairwise_sum(mterm);
        e.trace_integral = mult * pairwise_sum(nterm);
        e.lambda = lam;
        e.p = p;
        e.q = q;
        e.epsilon = eps;
        if (!(e.trace_integral > 0)) throw Error("zero trace");
        e.trace_term = std::pow(e.trace_integral, p / q);
        e.quotient = (e.grad_term + lam * e.mass_term) / e.trace_term;
        if (!std::isfinite(e.quotient)) throw Error("non-finite energy");

        if (weak) {
            weak->a = dG + lam * dM;
            weak->b = dN;
        }
        if (grad) {
            // DI[u](h) = p (dG + lam dM)(h) / N^{p/q} - p (G + lam M) dN(h) / N^{p/q + 1}
            const double Np = e.trace_term;
            *grad = (p / Np) * (dG + lam * dM) - (p * (e.grad_term + lam * e.mass_term) / (Np * e.trace_integral)) * dN;
        }
        return e;
    }

    const SymmetricMesh* mesh_;
    QuadratureRule cell_rule_;
    BoundaryQuadrature bq_;
    std::vector<double> volume_;
    std::vector<double> grads_;
    std::vector<Point> qpoints_;
};

}  // namespace ctl
