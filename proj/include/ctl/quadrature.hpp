#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "common.hpp"

namespace ctl {

/// Quadrature on a reference simplex of dimension `dim` (segment, triangle or
/// tetrahedron). Points are barycentric; weights sum to the reference measure 1/dim!.
struct QuadratureRule {
    int dim = 0;
    int degree = 0;
    std::vector<std::array<double, 4>> points;
    std::vector<double> weights;

    [[nodiscard]] std::size_t size() const { return weights.size(); }
};

inline double reference_measure(int dim)
{
    return 1.0 / std::tgamma(dim + 1.0);
}

/// Three-point Gauss-Legendre on the unit segment (degree 5).
inline QuadratureRule gauss_segment_rule()
{
    const double h = 0.5 * std::sqrt(3.0 / 5.0);
    QuadratureRule r{1, 5, {}, {}};
    for (double t : {0.5 - h, 0.5, 0.5 + h}) r.points.push_back({1.0 - t, t, 0.0, 0.0});
    r.weights = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    return r;
}

/// Four-point Gauss-Legendre on the unit segment (degree 7).
inline QuadratureRule gauss4_segment_rule()
{
    const double a = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
    const double b = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
    const double wa = (18.0 + std::sqrt(30.0)) / 36.0;
    const double wb = (18.0 - std::sqrt(30.0)) / 36.0;
    QuadratureRule r{1, 7, {}, {}};
    for (auto [x, w] : {std::pair{-b, wb}, {-a, wa}, {a, wa}, {b, wb}}) {
        const double t = 0.5 * (x + 1.0);
        r.points.push_back({1.0 - t, t, 0.0, 0.0});
        r.weights.push_back(0.5 * w);
    }
    return r;
}

/// Six-point symmetric rule on the triangle, degree 4, positive weights.
inline QuadratureRule triangle_degree4_rule()
{
    constexpr double a1 = 0.44594849091596488632, w1 = 0.22338158967801146570;
    constexpr double a2 = 0.09157621350977074346, w2 = 0.10995174365532186764;
    QuadratureRule r{2, 4, {}, {}};
    for (auto [a, w] : {std::pair{a1, w1}, {a2, w2}}) {
        const double c = 1.0 - 2.0 * a;
        r.points.push_back({c, a, a, 0.0});
        r.points.push_back({a, c, a, 0.0});
        r.points.push_back({a, a, c, 0.0});
        for (int i = 0; i < 3; ++i) r.weights.push_back(0.5 * w);
    }
    return r;
}

/// Four-point symmetric rule on the tetrahedron, degree 2, equal weights.
inline QuadratureRule tet_degree2_rule()
{
    const double b = (5.0 - std::sqrt(5.0)) / 20.0;
    const double a = 1.0 - 3.0 * b;
    QuadratureRule r{3, 2, {}, {}};
    for (int i = 0; i < 4; ++i) {
        std::array<double, 4> p{b, b, b, b};
        p[i] = a;
        r.points.push_back(p);
        r.weights.push_back(1.0 / 24.0);
    }
    return r;
}

/// Rule used for trace integrals on boundary facets of a mesh of dimension `mesh_dim`.
inline QuadratureRule boundary_rule(int mesh_dim)
{
    return mesh_dim == 2 ? gauss_segment_rule() : triangle_degree4_rule();
}

/// Rule used for volume integrals on cells of a mesh of dimension `mesh_dim`.
inline QuadratureRule cell_rule(int mesh_dim)
{
    return mesh_dim == 2 ? triangle_degree4_rule() : tet_degree2_rule();
}

/// Exact integral over the reference simplex of prod_i lambda_i^{alpha_i}.
inline double reference_monomial_integral(int dim, std::span<const int> alpha)
{
    double num = 1.0;
    int total = 0;
    for (int i = 0; i <= dim; ++i) {
        num *= std::tgamma(alpha[i] + 1.0);
        total += alpha[i];
    }
    return num / std::tgamma(total + dim + 1.0);
}

/// Largest degree d such that the rule integrates every barycentric monomial of
/// total degree <= d to within `tol` (relative); checked up to `max_degree`.
inline int validated_degree(const QuadratureRule& rule, int max_degree = 8, double tol = 1e-12)
{
    const int nb = rule.dim + 1;
    int exact_upto = -1;
    for (int deg = 0; deg <= max_degree; ++deg) {
        bool ok = true;
        std::array<int, 4> alpha{0, 0, 0, 0};
        // enumerate compositions of deg into nb parts
        auto recurse = [&](auto&& self, int slot, int remaining) -> void {
            if (!ok) return;
            if (slot == nb - 1) {
                alpha[slot] = remaining;
                const double exact = reference_monomial_integral(rule.dim, alpha);
                double approx = 0.0;
                for (std::size_t q = 0; q < rule.size(); ++q) {
                    double v = rule.weights[q];
                    for (int i = 0; i < nb; ++i) v *= std::pow(rule.points[q][i], alpha[i]);
                    approx += v;
                }
                if (std::abs(approx - exact) > tol * exact) ok = false;
                return;
            }
            for (int a = 0; a <= remaining; ++a) {
                alpha[slot] = a;
                self(self, slot + 1, remaining - a);
            }
        };
        recurse(recurse, 0, deg);
        if (!ok) break;
        exact_upto = deg;
    }
    return exact_upto;
}

}  // namespace ctl
