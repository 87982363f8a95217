#include <gtest/gtest.h>

#include <random>

#include "ctl/analysis.hpp"
#include "ctl/optimizer.hpp"

using namespace ctl;

namespace {
struct Ball3 {
    SymmetricMesh mesh = build_mesh(3, 3, 1);
    Functional F{mesh};
    OrbitalSet A = minimal_orbital_set(mesh.group_spec);
    Params prm;
};

NodalField bumps(const SymmetricMesh& m, const std::vector<Point>& centres, double w)
{
    NodalField u(static_cast<Eigen::Index>(m.num_vertices()));
    for (std::size_t i = 0; i < m.num_vertices(); ++i) {
        double s = 0.0;
        for (const auto& c : centres) s += std::exp(-norm(m.vertices[i] - c) / w);
        u[static_cast<Eigen::Index>(i)] = s;
    }
    return u;
}
}  // namespace

TEST(DetectPeaks, SymmetricTripleBump)
{
    const Ball3 s;
    const auto u = symmetrize(bumps(s.mesh, s.A.points, 0.08), s.mesh);
    const auto rep = detect_peaks(u, s.F, s.prm, s.A);
    ASSERT_EQ(rep.peaks.size(), 3u);
    EXPECT_TRUE(rep.matched);
    for (const auto& p : rep.peaks) EXPECT_NEAR(p.mass, 1.0 / 3.0, 1e-3);
    EXPECT_LE(rep.total_mass, 1.0 + 1e-12);
    EXPECT_GE(rep.total_mass, 0.99);
}

TEST(DetectPeaks, ConstantFieldHasNoPeaks)
{
    const Ball3 s;
    const NodalField u = NodalField::Ones(static_cast<Eigen::Index>(s.mesh.num_vertices()));
    EXPECT_TRUE(detect_peaks(u, s.F, s.prm, s.A).peaks.empty());
}

TEST(DetectPeaks, SingleBump)
{
    const Ball3 s;
    const auto u = bumps(s.mesh, {{1.0, 0.0, 0.0}}, 0.08);
    const auto rep = detect_peaks(u, s.F, s.prm, s.A);
    ASSERT_EQ(rep.peaks.size(), 1u);
    EXPECT_GE(rep.peaks[0].mass, 0.9);
    EXPECT_FALSE(rep.matched);
}

TEST(DetectPeaks, PeaksAreSeparated)
{
    const Ball3 s;
    const auto u = symmetrize(bumps(s.mesh, s.A.points, 0.15), s.mesh);
    const auto rep = detect_peaks(u, s.F, s.prm, s.A);
    for (std::size_t i = 0; i < rep.peaks.size(); ++i)
        for (std::size_t j = i + 1; j < rep.peaks.size(); ++j)
            EXPECT_GT(geodesic_distance(rep.peaks[i].location, rep.peaks[j].location), 0.5 * s.A.kappa);
}

TEST(DetectPeaks, MassMultisetInvariantUnderGroupAction)
{
    const Ball3 s;
    const auto u = bumps(s.mesh, {{1.0, 0.0, 0.0}, normalized(Point{0.0, 1.0, 0.3})}, 0.1);
    auto masses = [&](const NodalField& v) {
        std::vector<double> m;
        for (const auto& p : detect_peaks(v, s.F, s.prm, s.A).peaks) m.push_back(p.mass);
        std::sort(m.begin(), m.end());
        return m;
    };
    const auto ref = masses(u);
    for (const auto& perm : s.mesh.group_node_maps) {
        NodalField v(u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) v[perm[static_cast<std::size_t>(i)]] = u[i];
        const auto m = masses(v);
        ASSERT_EQ(m.size(), ref.size());
        for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(m[i], ref[i], 1e-12);
    }
}

TEST(Residual, ConstantFieldWithItsQuotient)
{
    const Ball3 s;
    Params prm;
    prm.lambda = 3.0;
    NodalField u = NodalField::Ones(static_cast<Eigen::Index>(s.mesh.num_vertices()));
    normalize_trace(u, s.F, prm);
    const double mu = s.F.energy(u, prm).quotient;
    const auto wf = s.F.weak_form(u, prm);
    // the constant test function is the sum of all orbit sums
    EXPECT_NEAR((wf.a - mu * wf.b).sum(), 0.0, 1e-12);
}

TEST(Residual, RandomFieldHasLargeResidual)
{
    const Ball3 s;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(0.5, 1.5);
    NodalField u(static_cast<Eigen::Index>(s.mesh.num_vertices()));
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = d(rng);
    const auto r = residual_check(u, 1.0, s.F, s.prm);
    EXPECT_GT(r.full_max, 1e-3);
    EXPECT_GE(r.invariant_max, 0.0);
}

TEST(Residual, StationaryPointResidualBoundedByTolerance)
{
    const Ball3 s;
    SolverConfig cfg;
    Params prm = s.prm;
    prm.lambda = 30;
    const auto r = minimize(bubble_init(s.A, s.A.kappa / 3, s.F, prm), cfg, 30, s.F);
    const auto res = residual_check(r.u, r.energy.quotient, s.F, prm);
    // gradient = p (a - mu b) at unit trace norm
    EXPECT_LE(res.invariant_max, 10 * cfg.grad_tol);
    EXPECT_LE(res.full_max, res.invariant_max + 1e-15);
}

TEST(Classify, EscapedBranchIsNotConcentrated)
{
    const Ball3 s;
    const auto u = symmetrize(bumps(s.mesh, s.A.points, 0.08), s.mesh);
    const auto peaks = detect_peaks(u, s.F, s.prm, s.A);
    StageSummary st;
    st.energy = s.F.energy(u, s.prm);
    const auto thr = threshold(3, 2.0, 3, 1.77);
    EXPECT_TRUE(classify(st, peaks, s.mesh.group_spec, s.A, thr, 0.1).concentrated);
    st.escaped = true;
    const auto c = classify(st, peaks, s.mesh.group_spec, s.A, thr, 0.1);
    EXPECT_FALSE(c.concentrated);
    EXPECT_EQ(c.peak_count, 3);
    EXPECT_NEAR(c.threshold_ratio, st.energy.quotient / (1.77 * std::sqrt(3.0)), 1e-14);
    EXPECT_THROW(classify(st, peaks, s.mesh.group_spec, s.A, threshold(3, 2.0, 2, 1.77), 0.1), Error);
}

namespace {
Branch fake_branch(int k, int peaks, bool concentrated, double lambda = 1000)
{
    Branch b;
    b.group_spec = {k, 1, 1};
    StageSummary st;
    st.lambda = lambda;
    Classification c;
    c.k = k;
    c.peak_count = peaks;
    c.concentrated = concentrated;
    st.classification = c;
    b.stages.push_back(st);
    return b;
}
}  // namespace

TEST(Nonequivalence, DistinctPeakCountsAreDistinctSolutions)
{
    const auto rep = nonequivalence_report({fake_branch(2, 2, true), fake_branch(3, 3, true), fake_branch(4, 4, true)});
    EXPECT_EQ(rep.nonequivalent_count, 3);
    EXPECT_EQ(rep.lambda, 1000);
}

TEST(Nonequivalence, DuplicateSeedsShareAClass)
{
    const auto rep = nonequivalence_report({fake_branch(3, 3, true), fake_branch(3, 3, true)});
    EXPECT_EQ(rep.nonequivalent_count, 1);
    EXPECT_EQ(rep.classes.at(3), 2);
}

TEST(Nonequivalence, OnlyConcentratedBranchesCount)
{
    const auto rep = nonequivalence_report({fake_branch(2, 2, true), fake_branch(3, 3, false)});
    EXPECT_EQ(rep.nonequivalent_count, 1);
    EXPECT_EQ(nonequivalence_report({fake_branch(2, 2, true)}).nonequivalent_count, 1);
}
