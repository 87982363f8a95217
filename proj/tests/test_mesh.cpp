#include <gtest/gtest.h>

#include <set>

#include "ctl/mesh.hpp"

using namespace ctl;

namespace {
void expect_invariants(const SymmetricMesh& m)
{
    const auto c = check_mesh(m);
    EXPECT_LE(c.max_boundary_radius_error, 1e-12);
    EXPECT_GT(c.min_cell_volume, 0.0);
    EXPECT_LE(c.max_group_residual, 1e-12);
    EXPECT_TRUE(c.maps_are_permutations);
    EXPECT_EQ(static_cast<long>(c.replica_count), m.group_spec.order());
}

double integrate_boundary(const SymmetricMesh& m, const std::function<double(const Point&)>& f)
{
    const auto bq = boundary_quadrature(m);
    std::vector<double> parts(m.num_facets());
    for (std::size_t e = 0; e < m.num_facets(); ++e) {
        const auto fv = m.facet(e);
        double s = 0.0;
        for (std::size_t q = 0; q < bq.rule.size(); ++q) {
            Point x{0, 0, 0};
            for (int a = 0; a < m.dim; ++a) x = x + bq.rule.points[q][a] * m.vertices[fv[a]];
            s += bq.weight(e, q) * f(x);
        }
        parts[e] = s;
    }
    return pairwise_sum(parts);
}
}  // namespace

TEST(Mesh, DiskRotationMapsNodesExactly)
{
    const auto m = build_mesh(2, 4, 0);
    expect_invariants(m);
    // rotation by pi/2 is group element 1
    const auto& g = m.group[1];
    EXPECT_NEAR(g.apply({1, 0, 0})[1], 1.0, 1e-15);
    for (std::size_t i = 0; i < m.num_vertices(); ++i)
        EXPECT_LE(norm(m.vertices[m.group_node_maps[1][i]] - g.apply(m.vertices[i])), 1e-12);
}

TEST(Mesh, BallReflectionMapsVertexSetToItself)
{
    const auto m = build_mesh(3, 3, 1);
    expect_invariants(m);
    for (std::size_t g = 0; g < m.group.size(); ++g) {
        if (!m.group[g].reflection || m.group[g].rotation_index != 0) continue;
        for (std::size_t i = 0; i < m.num_vertices(); ++i) {
            const Point& a = m.vertices[i];
            const Point& b = m.vertices[m.group_node_maps[g][i]];
            EXPECT_EQ(a[0], b[0]);
            EXPECT_EQ(a[1], b[1]);
            EXPECT_EQ(a[2], -b[2]);
        }
    }
}

TEST(Mesh, PerimeterConvergesAtSecondOrder)
{
    double prev = 0.0;
    for (int r = 0; r <= 3; ++r) {
        const auto m = build_mesh(2, 3, r);
        const double err = std::abs(check_mesh(m).boundary_measure - 2.0 * std::numbers::pi);
        if (r > 0) {
            EXPECT_NEAR(prev / err, 4.0, 0.2);
        }
        prev = err;
    }
}

TEST(Mesh, SphereAreaConvergesAtSecondOrder)
{
    std::vector<double> err;
    for (int r = 0; r <= 2; ++r)
        err.push_back(std::abs(check_mesh(build_mesh(3, 2, r)).boundary_measure - 4.0 * std::numbers::pi));
    EXPECT_NEAR(err[0] / err[1], 4.0, 0.3);
    EXPECT_NEAR(err[1] / err[2], 4.0, 0.3);
}

TEST(Mesh, RefineQuadruplesTrianglesAndKeepsInvariants)
{
    const auto m0 = build_mesh(2, 5, 0);
    const auto m1 = refine(m0);
    EXPECT_EQ(m1.num_cells(), 4 * m0.num_cells());
    EXPECT_EQ(m1.num_facets(), 2 * m0.num_facets());
    expect_invariants(m1);
    const auto b0 = build_mesh(3, 3, 0);
    const auto b1 = refine(b0);
    EXPECT_EQ(b1.num_cells(), 8 * b0.num_cells());
    expect_invariants(b1);
}

TEST(Mesh, RefineMatchesDirectBuild)
{
    const auto a = refine(build_mesh(3, 4, 0));
    const auto b = build_mesh(3, 4, 1);
    EXPECT_EQ(a.num_vertices(), b.num_vertices());
    EXPECT_EQ(a.num_cells(), b.num_cells());
}

TEST(Mesh, PartitionIntoReplicas)
{
    const auto m = build_mesh(3, 4, 0);
    std::set<int> cell_replicas(m.cell_replica.begin(), m.cell_replica.end());
    EXPECT_EQ(static_cast<long>(cell_replicas.size()), m.group_spec.order());
    std::vector<std::size_t> count(static_cast<std::size_t>(m.group_spec.order()), 0);
    for (int r : m.cell_replica) ++count[static_cast<std::size_t>(r)];
    for (auto c : count) EXPECT_EQ(c, count[0]);
    EXPECT_EQ(m.wedge_id.size(), m.num_vertices());
}

TEST(Mesh, RejectsBadInput)
{
    EXPECT_THROW(build_mesh(2, 1, 0), ConfigError);
    EXPECT_THROW(build_mesh(4, 3, 0), ConfigError);
    EXPECT_THROW(build_mesh(2, 3, -1), ConfigError);
    MeshOptions small;
    small.node_budget = 1000;
    EXPECT_THROW(build_mesh(3, 3, 2, small), Error);
    EXPECT_THROW(refine(build_mesh(2, 3, 2), small), Error);
}

TEST(BoundaryQuadrature, ConstantIntegratesToBoundaryMeasure)
{
    for (int d : {2, 3}) {
        const auto m = build_mesh(d, 3, 1);
        EXPECT_NEAR(integrate_boundary(m, [](const Point&) { return 1.0; }), check_mesh(m).boundary_measure, 1e-12);
    }
}

TEST(BoundaryQuadrature, OddCoordinateIntegratesToZero)
{
    const auto m = build_mesh(2, 4, 2);
    EXPECT_NEAR(integrate_boundary(m, [](const Point& x) { return x[0]; }), 0.0, 1e-14);
}

TEST(BoundaryQuadrature, SquaredCoordinateOnCircle)
{
    double prev = 0.0;
    for (int r = 1; r <= 3; ++r) {
        const auto m = build_mesh(2, 4, r);
        const double err = std::abs(integrate_boundary(m, [](const Point& x) { return x[0] * x[0]; }) - std::numbers::pi);
        if (r > 1) {
            EXPECT_GT(prev / err, 3.5);
        }
        prev = err;
    }
    EXPECT_LT(prev, 1e-3);
}

TEST(BoundaryQuadrature, SmoothIntegrandConvergesAtOrderTwo)
{
    // int_{S^2} exp(x3) = 2 pi (e - 1/e)
    const double exact = 2.0 * std::numbers::pi * (std::exp(1.0) - std::exp(-1.0));
    std::vector<double> err;
    for (int r = 0; r <= 2; ++r)
        err.push_back(std::abs(integrate_boundary(build_mesh(3, 2, r), [](const Point& x) { return std::exp(x[2]); }) - exact));
    EXPECT_GE(std::log2(err[0] / err[1]), 1.9);
    EXPECT_GE(std::log2(err[1] / err[2]), 1.9);
}

TEST(BoundaryQuadrature, DegenerateFacetIsNamed)
{
    auto m = build_mesh(2, 3, 0);
    m.facet_data[3] = m.facet_data[2];  // collapse facet 1
    try {
        (void)boundary_quadrature(m);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("facet 1"), std::string::npos) << e.what();
    }
}
