#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "common.hpp"

namespace ctl {

/// The group G_{k,l} = H_{k,l} x O(m) acting on R^{2l+m}. Only l = 1 and
/// m in {0, 1} have a finite realization here; O(1) is realized as {+1, -1}
/// acting on the last coordinate.
struct GroupSpec {
    int k = 2;
    int l = 1;
    int m = 0;

    [[nodiscard]] int dim() const { return 2 * l + m; }

    /// k^l * l! * 2^{min(m,1)}
    [[nodiscard]] long order() const
    {
        long ord = 1;
        for (int i = 0; i < l; ++i) ord *= k;
        for (int i = 2; i <= l; ++i) ord *= i;
        return m > 0 ? 2 * ord : ord;
    }

    [[nodiscard]] bool supported() const { return k >= 2 && l == 1 && (m == 0 || m == 1); }

    friend bool operator==(const GroupSpec&, const GroupSpec&) = default;
};

inline GroupSpec group_for_mesh(int dim, int k) { return GroupSpec{k, 1, dim - 2}; }

struct GroupElement {
    Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();
    int rotation_index = 0;  ///< rotation by 2*pi*rotation_index/k about the x3-axis
    bool reflection = false; ///< composed with x3 -> -x3

    [[nodiscard]] Point apply(const Point& x) const
    {
        const Eigen::Vector3d v = matrix * Eigen::Vector3d(x[0], x[1], x[2]);
        return {v[0], v[1], v[2]};
    }
    [[nodiscard]] double determinant() const { return matrix.determinant(); }
};

/// All elements of the finite group; element 0 is the identity, rotations come
/// first, then (for m = 1) the same rotations composed with the reflection.
inline std::vector<GroupElement> enumerate_group(const GroupSpec& spec)
{
    if (!spec.supported())
        throw ConfigError("unsupported group (k=" + std::to_string(spec.k) + ", l=" + std::to_string(spec.l) +
                          ", m=" + std::to_string(spec.m) + "): need k >= 2, l = 1, m <= 1");
    std::vector<GroupElement> out;
    for (int refl = 0; refl <= spec.m; ++refl) {
        for (int j = 0; j < spec.k; ++j) {
            const double a = 2.0 * std::numbers::pi * j / spec.k;
            GroupElement g;
            g.matrix << std::cos(a), -std::sin(a), 0.0, std::sin(a), std::cos(a), 0.0, 0.0, 0.0, refl ? -1.0 : 1.0;
            g.rotation_index = j;
            g.reflection = refl != 0;
            out.push_back(g);
        }
    }
    return out;
}

/// Index of g*h in `group`, or -1 if the product is not (numerically) in the list.
inline int find_product(const std::vector<GroupElement>& group, const GroupElement& g, const GroupElement& h,
                        double tol = 1e-12)
{
    const Eigen::Matrix3d gh = g.matrix * h.matrix;
    for (std::size_t i = 0; i < group.size(); ++i)
        if ((group[i].matrix - gh).cwiseAbs().maxCoeff() <= tol) return static_cast<int>(i);
    return -1;
}

/// Deduplicated images {g x : g in G}.
inline std::vector<Point> orbit(const Point& x, const std::vector<GroupElement>& group, double tol = 1e-9)
{
    std::vector<Point> pts;
    for (const auto& g : group) {
        const Point y = g.apply(x);
        bool seen = false;
        for (const auto& p : pts)
            if (norm(p - y) <= tol) {
                seen = true;
                break;
            }
        if (!seen) pts.push_back(y);
    }
    return pts;
}

/// A G-orbit A on the unit sphere together with its kappa-neighborhood radius
/// and a sampled local-minimality certificate.
struct OrbitalSet {
    std::vector<Point> points;
    int m_A = 0;
    double kappa = 0.0;  ///< geodesic radius of A^kappa
    bool locally_minimal = false;
    int samples_checked = 0;
    int samples_on_stratum = 0;  ///< samples lying in the stratum of minimal orbits (|Gy| = m_A allowed)

    /// Geodesic distance from the radial projection of y to A.
    [[nodiscard]] double distance_to(const Point& y) const
    {
        double d = std::numeric_limits<double>::infinity();
        for (const auto& a : points) d = std::min(d, geodesic_distance(a, y));
        return d;
    }
    [[nodiscard]] bool in_neighborhood(const Point& y) const { return distance_to(y) <= kappa; }
};

inline double min_pairwise_geodesic(const std::vector<Point>& pts)
{
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) d = std::min(d, geodesic_distance(pts[i], pts[j]));
    return d;
}

namespace detail {
inline double halton(unsigned index, unsigned base)
{
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= base;
        r += f * (index % base);
        index /= base;
    }
    return r;
}
}  // namespace detail

/// Samples `n` quasi-random points of A^kappa \ A and checks that orbits there
/// are no smaller than m_A, and strictly larger off the invariant plane x3 = 0
/// (the stratum on which every orbit has exactly m_A points).
inline void certify_local_minimality(OrbitalSet& A, const std::vector<GroupElement>& group, int dim, int n = 1000)
{
    A.samples_checked = 0;
    A.samples_on_stratum = 0;
    bool ok = true;
    for (int s = 1; s <= n; ++s) {
        const Point& a = A.points[static_cast<std::size_t>(s) % A.points.size()];
        Point y;
        if (dim == 2) {
            const double t = (2.0 * detail::halton(s, 2) - 1.0) * A.kappa;
            if (t == 0.0) continue;
            const double th = std::atan2(a[1], a[0]) + t;
            y = {std::cos(th), std::sin(th), 0.0};
        } else {
            // geodesic polar coordinates around a, area-uniform radius
            const double rho = A.kappa * std::sqrt(detail::halton(s, 2));
            const double phi = 2.0 * std::numbers::pi * detail::halton(s, 3);
            if (rho == 0.0) continue;
            const Point e1 = normalized(cross(a, std::abs(a[2]) < 0.9 ? Point{0, 0, 1} : Point{1, 0, 0}));
            const Point e2 = cross(a, e1);
            y = std::cos(rho) * a + std::sin(rho) * (std::cos(phi) * e1 + std::sin(phi) * e2);
        }
        ++A.samples_checked;
        const auto size = static_cast<int>(orbit(y, group).size());
        const bool on_stratum = dim == 2 || std::abs(y[2]) <= 1e-12;
        if (on_stratum) {
            ++A.samples_on_stratum;
            if (size < A.m_A) ok = false;
        } else if (size <= A.m_A) {
            ok = false;
        }
    }
    A.locally_minimal = ok;
}

/// The orbit of (1, 0, 0): k equally spaced points on the equator x3 = 0.
/// kappa <= 0 selects the default, half the minimal geodesic distance between points.
inline OrbitalSet minimal_orbital_set(const GroupSpec& spec, double kappa = 0.0)
{
    const auto group = enumerate_group(spec);
    OrbitalSet A;
    A.points = orbit(Point{1.0, 0.0, 0.0}, group);
    A.m_A = static_cast<int>(A.points.size());
    A.kappa = kappa > 0.0 ? kappa : 0.5 * min_pairwise_geodesic(A.points);
    certify_local_minimality(A, group, spec.dim());
    if (!A.locally_minimal) throw Error("local minimality certificate failed for the equatorial orbit");
    return A;
}

}  // namespace ctl
