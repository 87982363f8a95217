#include <gtest/gtest.h>

#include "ctl/quadrature.hpp"

using namespace ctl;

namespace {
double weight_sum(const QuadratureRule& r)
{
    double s = 0.0;
    for (double w : r.weights) s += w;
    return s;
}
}  // namespace

TEST(Quadrature, WeightsPositiveAndSumToReferenceMeasure)
{
    for (const auto& r : {gauss_segment_rule(), gauss4_segment_rule(), triangle_degree4_rule(), tet_degree2_rule()}) {
        for (double w : r.weights) EXPECT_GT(w, 0.0);
        EXPECT_NEAR(weight_sum(r), reference_measure(r.dim), 1e-15);
        for (const auto& p : r.points) {
            double s = 0.0;
            for (int i = 0; i <= r.dim; ++i) s += p[static_cast<std::size_t>(i)];
            EXPECT_NEAR(s, 1.0, 1e-15);
        }
    }
}

TEST(Quadrature, ExactnessDegreeValidatedAgainstMonomials)
{
    EXPECT_GE(validated_degree(gauss_segment_rule()), 5);
    EXPECT_GE(validated_degree(gauss4_segment_rule()), 7);
    EXPECT_GE(validated_degree(triangle_degree4_rule()), 4);
    EXPECT_GE(validated_degree(tet_degree2_rule()), 2);
    for (int d : {2, 3}) {
        EXPECT_GE(validated_degree(boundary_rule(d)), 2);
        EXPECT_GE(validated_degree(cell_rule(d)), 2);
    }
}

TEST(Quadrature, DeclaredDegreeIsNotOverstated)
{
    for (const auto& r : {gauss_segment_rule(), gauss4_segment_rule(), triangle_degree4_rule(), tet_degree2_rule()})
        EXPECT_GE(validated_degree(r), r.degree);
}

TEST(Quadrature, MonomialIntegralClosedForm)
{
    const std::array<int, 4> a{1, 1, 0, 0};
    EXPECT_NEAR(reference_monomial_integral(1, a), 1.0 / 6.0, 1e-15);
    const std::array<int, 4> b{2, 0, 0, 0};
    EXPECT_NEAR(reference_monomial_integral(2, b), 2.0 / 24.0, 1e-15);
}
