#pragma once

#include <Eigen/Dense>

#include "common.hpp"
#include "functional.hpp"
#include "mesh.hpp"

namespace ctl {

inline void require_compatible(const NodalField& u, const SymmetricMesh& mesh)
{
    if (static_cast<std::size_t>(u.size()) != mesh.num_vertices())
        throw Error("field/mesh mismatch: " + std::to_string(u.size()) + " values for " +
                    std::to_string(mesh.num_vertices()) + " vertices");
    if (mesh.group_node_maps.size() != mesh.group.size() || mesh.orbits.empty())
        throw Error("mesh carries no group action");
}

/// Group average (1/|G|) sum_g u(perm_g(i)). Computed as an orbit mean so every
/// orbit receives one bitwise-identical value; the mean is taken as an offset
/// from the first entry, which makes the map exactly idempotent.
inline NodalField symmetrize(const NodalField& u, const SymmetricMesh& mesh)
{
    require_compatible(u, mesh);
    NodalField out(u.size());
    for (const auto& orb : mesh.orbits) {
        const double base = u[orb.front()];
        double s = 0.0;
        for (Index i : orb) s += u[i] - base;
        const double mean = base + s / static_cast<double>(orb.size());
        for (Index i : orb) out[i] = mean;
    }
    return out;
}

/// max_g |u o perm_g - u|_inf / |u|_inf; zero for the zero field.
inline double invariance_residual(const NodalField& u, const SymmetricMesh& mesh)
{
    require_compatible(u, mesh);
    const double scale = u.cwiseAbs().maxCoeff();
    if (scale == 0.0) return 0.0;
    double r = 0.0;
    for (const auto& perm : mesh.group_node_maps)
        for (Eigen::Index i = 0; i < u.size(); ++i) r = std::max(r, std::abs(u[perm[i]] - u[i]));
    return r / scale;
}

/// Restriction of a dual vector to the invariant nodal basis psi_o = sum_{i in o} phi_i.
inline Eigen::VectorXd orbit_sums(const NodalField& g, const SymmetricMesh& mesh)
{
    Eigen::VectorXd r(static_cast<Eigen::Index>(mesh.orbits.size()));
    for (std::size_t o = 0; o < mesh.orbits.size(); ++o) {
        double s = 0.0;
        for (Index i : mesh.orbits[o]) s += g[i];
        r[static_cast<Eigen::Index>(o)] = s;
    }
    return r;
}

/// Invariant field taking value v[o] on every vertex of orbit o.
inline NodalField expand_orbits(const Eigen::VectorXd& v, const SymmetricMesh& mesh)
{
    NodalField u(static_cast<Eigen::Index>(mesh.num_vertices()));
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) u[i] = v[mesh.orbit_of[i]];
    return u;
}

}  // namespace ctl
