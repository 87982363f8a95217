#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "quadrature.hpp"
#include "symmetry.hpp"

namespace ctl {

struct MeshOptions {
    int base_levels = -1;               ///< levels applied to the single-simplex sub-wedge before `refinement`; -1 = default per dim
    std::size_t node_budget = 200'000;

    [[nodiscard]] int resolved_base_levels(int dim) const { return base_levels >= 0 ? base_levels : (dim == 2 ? 2 : 3); }
};

/// Plain simplicial complex: cells (dim+1 vertices) and boundary facets on the sphere (dim vertices).
struct SimplexSet {
    int dim = 2;
    std::vector<Point> vertices;
    std::vector<Index> cells;
    std::vector<Index> facets;
};

/// Simplicial mesh of the unit disk (dim 2) or ball (dim 3) on which the finite
/// group acts by vertex permutation. Immutable once built.
struct SymmetricMesh {
    int dim = 2;
    GroupSpec group_spec;
    std::vector<GroupElement> group;
    std::vector<Point> vertices;
    std::vector<Index> cell_data;   ///< stride dim+1, positively oriented
    std::vector<Index> facet_data;  ///< stride dim, outward oriented
    std::vector<std::vector<Index>> group_node_maps;  ///< vertices[map[g][i]] == g * vertices[i]
    std::vector<int> wedge_id;      ///< replica (fundamental-domain copy) owning each vertex
    std::vector<int> cell_replica;  ///< group element that produced each cell from the fundamental domain
    std::vector<int> facet_replica;
    std::vector<Index> orbit_of;    ///< orbit index per vertex
    std::vector<std::vector<Index>> orbits;
    std::vector<char> on_boundary;
    int levels = 0;  ///< total uniform refinements of the sub-wedge simplex
    std::shared_ptr<const SimplexSet> sub_wedge;  ///< unreplicated sub-wedge (kept for refinement)

    [[nodiscard]] std::size_t num_vertices() const { return vertices.size(); }
    [[nodiscard]] std::size_t num_cells() const { return cell_data.size() / (dim + 1); }
    [[nodiscard]] std::size_t num_facets() const { return facet_data.size() / dim; }
    [[nodiscard]] std::span<const Index> cell(std::size_t c) const
    {
        return {cell_data.data() + c * (dim + 1), static_cast<std::size_t>(dim + 1)};
    }
    [[nodiscard]] std::span<const Index> facet(std::size_t f) const
    {
        return {facet_data.data() + f * dim, static_cast<std::size_t>(dim)};
    }
    [[nodiscard]] std::size_t group_order() const { return group.size(); }
};

// ---------------------------------------------------------------------------
// geometry of individual simplices

inline double signed_volume(int dim, std::span<const Point> p)
{
    if (dim == 2) {
        const Point a = p[1] - p[0], b = p[2] - p[0];
        return 0.5 * (a[0] * b[1] - a[1] * b[0]);
    }
    return dot(cross(p[1] - p[0], p[2] - p[0]), p[3] - p[0]) / 6.0;
}

inline double cell_volume(const SymmetricMesh& mesh, std::size_t c)
{
    std::array<Point, 4> p{};
    const auto cv = mesh.cell(c);
    for (int i = 0; i <= mesh.dim; ++i) p[i] = mesh.vertices[cv[i]];
    return signed_volume(mesh.dim, std::span<const Point>(p.data(), mesh.dim + 1));
}

inline double facet_measure(const SymmetricMesh& mesh, std::size_t f)
{
    const auto fv = mesh.facet(f);
    if (mesh.dim == 2) return norm(mesh.vertices[fv[1]] - mesh.vertices[fv[0]]);
    return 0.5 * norm(cross(mesh.vertices[fv[1]] - mesh.vertices[fv[0]], mesh.vertices[fv[2]] - mesh.vertices[fv[0]]));
}

// ---------------------------------------------------------------------------
// point lookup by coordinates

class PointLocator {
public:
    explicit PointLocator(double tol = 1e-9) : tol_(tol), cell_(1e-6) {}

    [[nodiscard]] long find(const Point& x) const
    {
        const auto [ix, iy, iz] = key3(x);
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    const auto it = buckets_.find(pack(ix + dx, iy + dy, iz + dz));
                    if (it == buckets_.end()) continue;
                    for (Index j : it->second)
                        if (norm(points_[j] - x) <= tol_) return static_cast<long>(j);
                }
        return -1;
    }

    /// Index of an existing point within tolerance, else inserts x.
    Index insert(const Point& x)
    {
        const long found = find(x);
        if (found >= 0) return static_cast<Index>(found);
        const auto id = static_cast<Index>(points_.size());
        points_.push_back(x);
        const auto [ix, iy, iz] = key3(x);
        buckets_[pack(ix, iy, iz)].push_back(id);
        return id;
    }

    [[nodiscard]] const std::vector<Point>& points() const { return points_; }

private:
    [[nodiscard]] std::array<long, 3> key3(const Point& x) const
    {
        return {static_cast<long>(std::floor(x[0] / cell_)), static_cast<long>(std::floor(x[1] / cell_)),
                static_cast<long>(std::floor(x[2] / cell_))};
    }
    static std::uint64_t pack(long ix, long iy, long iz)
    {
        constexpr long off = 1L << 20;
        return (static_cast<std::uint64_t>(ix + off) << 42) | (static_cast<std::uint64_t>(iy + off) << 21) |
               static_cast<std::uint64_t>(iz + off);
    }

    double tol_;
    double cell_;
    std::vector<Point> points_;
    std::unordered_map<std::uint64_t, std::vector<Index>> buckets_;
};

namespace detail {

/// One uniform refinement. Triangles split into four; tetrahedra by Bey's rule,
/// which keeps the vertex order of the children meaningful for the next level.
/// Facet midpoints are projected to the unit sphere.
inline SimplexSet refine_uniform(const SimplexSet& in)
{
    SimplexSet out;
    out.dim = in.dim;
    out.vertices = in.vertices;
    std::unordered_map<std::uint64_t, Index> edge_mid;
    auto mid = [&](Index a, Index b) -> Index {
        const std::uint64_t key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
        const auto it = edge_mid.find(key);
        if (it != edge_mid.end()) return it->second;
        const auto id = static_cast<Index>(out.vertices.size());
        out.vertices.push_back(midpoint(in.vertices[a], in.vertices[b]));
        edge_mid.emplace(key, id);
        return id;
    };

    const int nv = in.dim + 1;
    const std::size_t ncells = in.cells.size() / nv;
    out.cells.reserve(in.cells.size() * (in.dim == 2 ? 4 : 8));
    for (std::size_t c = 0; c < ncells; ++c) {
        const Index* x = &in.cells[c * nv];
        if (in.dim == 2) {
            const Index m01 = mid(x[0], x[1]), m02 = mid(x[0], x[2]), m12 = mid(x[1], x[2]);
            const Index ch[4][3] = {{x[0], m01, m02}, {m01, x[1], m12}, {m02, m12, x[2]}, {m01, m12, m02}};
            for (const auto& t : ch) out.cells.insert(out.cells.end(), t, t + 3);
        } else {
            const Index m01 = mid(x[0], x[1]), m02 = mid(x[0], x[2]), m03 = mid(x[0], x[3]);
            const Index m12 = mid(x[1], x[2]), m13 = mid(x[1], x[3]), m23 = mid(x[2], x[3]);
            const Index ch[8][4] = {{x[0], m01, m02, m03}, {m01, x[1], m12, m13}, {m02, m12, x[2], m23},
                                    {m03, m13, m23, x[3]}, {m01, m02, m03, m13}, {m01, m02, m12, m13},
                                    {m02, m03, m13, m23},  {m02, m12, m13, m23}};
            for (const auto& t : ch) out.cells.insert(out.cells.end(), t, t + 4);
        }
    }

    std::vector<Index> sphere_new;
    const std::size_t nfacets = in.facets.size() / in.dim;
    for (std::size_t f = 0; f < nfacets; ++f) {
        const Index* x = &in.facets[f * in.dim];
        if (in.dim == 2) {
            const Index m = mid(x[0], x[1]);
            sphere_new.push_back(m);
            const Index ch[2][2] = {{x[0], m}, {m, x[1]}};
            for (const auto& s : ch) out.facets.insert(out.facets.end(), s, s + 2);
        } else {
            const Index m01 = mid(x[0], x[1]), m02 = mid(x[0], x[2]), m12 = mid(x[1], x[2]);
            sphere_new.insert(sphere_new.end(), {m01, m02, m12});
            const Index ch[4][3] = {{x[0], m01, m02}, {m01, x[1], m12}, {m02, m12, x[2]}, {m01, m12, m02}};
            for (const auto& t : ch) out.facets.insert(out.facets.end(), t, t + 3);
        }
    }
    for (Index v : sphere_new) out.vertices[v] = normalized(out.vertices[v]);
    return out;
}

inline SimplexSet base_sub_wedge(int dim, int k)
{
    const double a = std::numbers::pi / k;
    SimplexSet s;
    s.dim = dim;
    if (dim == 2) {
        s.vertices = {{0, 0, 0}, {1, 0, 0}, {std::cos(a), std::sin(a), 0}};
        s.cells = {0, 1, 2};
        s.facets = {1, 2};
    } else {
        s.vertices = {{0, 0, 0}, {1, 0, 0}, {std::cos(a), std::sin(a), 0}, {0, 0, 1}};
        s.cells = {0, 1, 2, 3};
        s.facets = {1, 2, 3};
    }
    return s;
}

/// Sub-wedge plus its mirror image in the plane at angle pi/k: one fundamental
/// domain of the rotation group (angle 2*pi/k, and x3 >= 0 for dim 3).
inline SimplexSet mirror_close(const SimplexSet& s, int k)
{
    const double a2 = 2.0 * std::numbers::pi / k;
    const double c = std::cos(a2), sn = std::sin(a2);
    PointLocator loc;
    std::vector<Index> map0(s.vertices.size()), map1(s.vertices.size());
    for (std::size_t i = 0; i < s.vertices.size(); ++i) map0[i] = loc.insert(s.vertices[i]);
    for (std::size_t i = 0; i < s.vertices.size(); ++i) {
        const Point& x = s.vertices[i];
        map1[i] = loc.insert({c * x[0] + sn * x[1], sn * x[0] - c * x[1], x[2]});
    }
    SimplexSet f;
    f.dim = s.dim;
    f.vertices = loc.points();
    for (const auto* m : {&map0, &map1}) {
        for (Index v : s.cells) f.cells.push_back((*m)[v]);
        for (Index v : s.facets) f.facets.push_back((*m)[v]);
    }
    return f;
}

inline int sector_of(const Point& x, int dim, int k)
{
    const double alpha = 2.0 * std::numbers::pi / k;
    int j = 0;
    if (std::hypot(x[0], x[1]) > 1e-12) {
        double th = std::atan2(x[1], x[0]);
        if (th < 0) th += 2.0 * std::numbers::pi;
        j = static_cast<int>(std::floor(th / alpha + 1e-9)) % k;
    }
    if (dim == 3 && x[2] < -1e-12) j += k;
    return j;
}

inline void fix_orientation(SymmetricMesh& mesh)
{
    const int nv = mesh.dim + 1;
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        const double v = cell_volume(mesh, c);
        if (v < 0) std::swap(mesh.cell_data[c * nv + nv - 2], mesh.cell_data[c * nv + nv - 1]);
    }
    for (std::size_t f = 0; f < mesh.num_facets(); ++f) {
        const auto fv = mesh.facet(f);
        Point centroid{0, 0, 0}, normal;
        for (Index v : fv) centroid = centroid + mesh.vertices[v];
        if (mesh.dim == 2) {
            const Point t = mesh.vertices[fv[1]] - mesh.vertices[fv[0]];
            normal = {t[1], -t[0], 0.0};
        } else {
            normal = cross(mesh.vertices[fv[1]] - mesh.vertices[fv[0]], mesh.vertices[fv[2]] - mesh.vertices[fv[0]]);
        }
        if (dot(normal, centroid) < 0)
            std::swap(mesh.facet_data[f * mesh.dim + mesh.dim - 2], mesh.facet_data[f * mesh.dim + mesh.dim - 1]);
    }
}

/// Fills node maps, wedge ids and orbits from coordinates.
inline void finalize_symmetry(SymmetricMesh& mesh)
{
    PointLocator loc;
    for (const auto& x : mesh.vertices) loc.insert(x);
    require(loc.points().size() == mesh.vertices.size(), "mesh has coincident vertices");
    mesh.group_node_maps.assign(mesh.group.size(), std::vector<Index>(mesh.vertices.size()));
    for (std::size_t g = 0; g < mesh.group.size(); ++g)
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
            const long j = loc.find(mesh.group[g].apply(mesh.vertices[i]));
            if (j < 0) throw Error("mesh is not invariant under group element " + std::to_string(g));
            mesh.group_node_maps[g][i] = static_cast<Index>(j);
        }
    mesh.wedge_id.resize(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        mesh.wedge_id[i] = sector_of(mesh.vertices[i], mesh.dim, mesh.group_spec.k);

    constexpr Index unset = static_cast<Index>(-1);
    mesh.orbit_of.assign(mesh.vertices.size(), unset);
    mesh.orbits.clear();
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        if (mesh.orbit_of[i] != unset) continue;
        const auto id = static_cast<Index>(mesh.orbits.size());
        std::vector<Index> members;
        for (const auto& perm : mesh.group_node_maps) {
            const Index j = perm[i];
            if (mesh.orbit_of[j] == unset) {
                mesh.orbit_of[j] = id;
                members.push_back(j);
            }
        }
        std::sort(members.begin(), members.end());
        mesh.orbits.push_back(std::move(members));
    }
    mesh.on_boundary.assign(mesh.vertices.size(), 0);
    for (Index v : mesh.facet_data) mesh.on_boundary[v] = 1;
}

/// Replicates a fundamental domain under every group element.
inline SymmetricMesh replicate(const SimplexSet& fundamental, const GroupSpec& spec)
{
    SymmetricMesh mesh;
    mesh.dim = fundamental.dim;
    mesh.group_spec = spec;
    mesh.group = enumerate_group(spec);
    PointLocator loc;
    std::vector<Index> map(fundamental.vertices.size());
    for (std::size_t g = 0; g < mesh.group.size(); ++g) {
        for (std::size_t i = 0; i < fundamental.vertices.size(); ++i)
            map[i] = loc.insert(mesh.group[g].apply(fundamental.vertices[i]));
        for (Index v : fundamental.cells) mesh.cell_data.push_back(map[v]);
        for (Index v : fundamental.facets) mesh.facet_data.push_back(map[v]);
        mesh.cell_replica.insert(mesh.cell_replica.end(), fundamental.cells.size() / (mesh.dim + 1),
                                 static_cast<int>(g));
        mesh.facet_replica.insert(mesh.facet_replica.end(), fundamental.facets.size() / mesh.dim,
                                  static_cast<int>(g));
    }
    mesh.vertices = loc.points();
    fix_orientation(mesh);
    finalize_symmetry(mesh);
    return mesh;
}

inline std::size_t predicted_vertices(const SimplexSet& s, int extra_levels)
{
    // the sub-wedge simplex refined L times carries a lattice with N = 2^L divisions per edge
    (void)s;
    const double n = std::pow(2.0, extra_levels);
    return static_cast<std::size_t>(s.dim == 2 ? (n + 1) * (n + 2) / 2 : (n + 1) * (n + 2) * (n + 3) / 6);
}

inline SymmetricMesh assemble_from_sub_wedge(std::shared_ptr<const SimplexSet> sub, int k, int levels,
                                             const MeshOptions& opt)
{
    const GroupSpec spec = group_for_mesh(sub->dim, k);
    const std::size_t estimate = 2 * predicted_vertices(*sub, levels) * static_cast<std::size_t>(spec.order());
    if (estimate / 2 > opt.node_budget)
        throw Error("mesh would exceed the node budget (" + std::to_string(opt.node_budget) + " nodes)");
    SymmetricMesh mesh = replicate(mirror_close(*sub, k), spec);
    if (mesh.num_vertices() > opt.node_budget)
        throw Error("mesh has " + std::to_string(mesh.num_vertices()) + " nodes, over the node budget of " +
                    std::to_string(opt.node_budget));
    mesh.levels = levels;
    mesh.sub_wedge = std::move(sub);
    return mesh;
}

}  // namespace detail

/// Mesh of the unit disk (dim 2) or ball (dim 3) invariant under rotation by
/// 2*pi/k about the origin / x3-axis and, for dim 3, under x3 -> -x3.
inline SymmetricMesh build_mesh(int dim, int k, int refinement, const MeshOptions& opt = {})
{
    if (dim != 2 && dim != 3) throw ConfigError("mesh dimension must be 2 or 3");
    if (k < 2) throw ConfigError("k must be at least 2");
    if (refinement < 0) throw ConfigError("refinement must be non-negative");
    const int levels = opt.resolved_base_levels(dim) + refinement;
    {
        const std::size_t est = detail::predicted_vertices(detail::base_sub_wedge(dim, k), levels) *
                                static_cast<std::size_t>(2 * group_for_mesh(dim, k).order());
        if (est / 2 > opt.node_budget)
            throw Error("mesh would exceed the node budget (" + std::to_string(opt.node_budget) + " nodes)");
    }
    SimplexSet s = detail::base_sub_wedge(dim, k);
    for (int i = 0; i < levels; ++i) s = detail::refine_uniform(s);
    return detail::assemble_from_sub_wedge(std::make_shared<const SimplexSet>(std::move(s)), k, levels, opt);
}

/// One uniform refinement with boundary reprojection; node maps are rebuilt.
inline SymmetricMesh refine(const SymmetricMesh& mesh, const MeshOptions& opt = {})
{
    if (mesh.sub_wedge) {
        auto next = std::make_shared<const SimplexSet>(detail::refine_uniform(*mesh.sub_wedge));
        return detail::assemble_from_sub_wedge(std::move(next), mesh.group_spec.k, mesh.levels + 1, opt);
    }
    // imported mesh: refine the cells of replica 0 and replicate again
    const std::size_t est = mesh.num_vertices() * (mesh.dim == 2 ? 4 : 8);
    if (est / 2 > opt.node_budget) throw Error("refinement would exceed the node budget");
    SimplexSet f;
    f.dim = mesh.dim;
    std::unordered_map<Index, Index> local;
    auto take = [&](Index v) {
        auto [it, fresh] = local.emplace(v, static_cast<Index>(f.vertices.size()));
        if (fresh) f.vertices.push_back(mesh.vertices[v]);
        return it->second;
    };
    for (std::size_t c = 0; c < mesh.num_cells(); ++c)
        if (mesh.cell_replica[c] == 0)
            for (Index v : mesh.cell(c)) f.cells.push_back(take(v));
    for (std::size_t e = 0; e < mesh.num_facets(); ++e)
        if (mesh.facet_replica[e] == 0)
            for (Index v : mesh.facet(e)) f.facets.push_back(take(v));
    SymmetricMesh out = detail::replicate(detail::refine_uniform(f), mesh.group_spec);
    if (out.num_vertices() > opt.node_budget) throw Error("refinement exceeds the node budget");
    out.levels = mesh.levels + 1;
    return out;
}

/// Boundary facet quadrature: one reference rule scaled by each facet's measure.
struct BoundaryQuadrature {
    QuadratureRule rule;
    std::vector<double> measure;

    [[nodiscard]] double weight(std::size_t facet, std::size_t q) const
    {
        return rule.weights[q] * measure[facet] / reference_measure(rule.dim);
    }
};

inline BoundaryQuadrature boundary_quadrature(const SymmetricMesh& mesh)
{
    BoundaryQuadrature bq{boundary_rule(mesh.dim), {}};
    bq.measure.resize(mesh.num_facets());
    for (std::size_t f = 0; f < mesh.num_facets(); ++f) {
        bq.measure[f] = facet_measure(mesh, f);
        if (!(bq.measure[f] > 1e-300)) throw Error("degenerate boundary facet " + std::to_string(f));
    }
    return bq;
}

/// Measured deviations from the structural invariants of a SymmetricMesh.
struct MeshCheck {
    double max_boundary_radius_error = 0.0;
    double min_cell_volume = 0.0;
    double max_group_residual = 0.0;
    double boundary_measure = 0.0;
    double volume = 0.0;
    std::size_t replica_count = 0;
    bool maps_are_permutations = true;
};

inline MeshCheck check_mesh(const SymmetricMesh& mesh)
{
    MeshCheck r;
    r.min_cell_volume = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i)
        if (mesh.on_boundary[i])
            r.max_boundary_radius_error = std::max(r.max_boundary_radius_error, std::abs(norm(mesh.vertices[i]) - 1.0));
    std::vector<double> vols(mesh.num_cells());
    for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
        vols[c] = cell_volume(mesh, c);
        r.min_cell_volume = std::min(r.min_cell_volume, vols[c]);
    }
    r.volume = pairwise_sum(vols);
    std::vector<double> areas(mesh.num_facets());
    for (std::size_t f = 0; f < mesh.num_facets(); ++f) areas[f] = facet_measure(mesh, f);
    r.boundary_measure = pairwise_sum(areas);
    for (std::size_t g = 0; g < mesh.group.size(); ++g) {
        std::vector<char> hit(mesh.num_vertices(), 0);
        for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
            const Index j = mesh.group_node_maps[g][i];
            if (hit[j]) r.maps_are_permutations = false;
            hit[j] = 1;
            r.max_group_residual =
                std::max(r.max_group_residual, norm(mesh.vertices[j] - mesh.group[g].apply(mesh.vertices[i])));
        }
    }
    std::vector<char> seen(mesh.group.size() * 2 + 2, 0);
    for (int w : mesh.wedge_id)
        if (!seen[w]) {
            seen[w] = 1;
            ++r.replica_count;
        }
    return r;
}

}  // namespace ctl
