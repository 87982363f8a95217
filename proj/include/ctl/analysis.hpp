#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "branch.hpp"
#include "functional.hpp"
#include "invariance.hpp"
#include "symmetry.hpp"
#include "trace_constant.hpp"

namespace ctl {

struct PeakOptions {
    double r_peak = 0.0;      ///< geodesic cap radius; 0 selects kappa / 2
    double mass_floor = 0.0;  ///< 0 selects 1 / (2 m(A))
    std::size_t candidates = 512;
};

/// Greedy cap covering of the normalized boundary q-mass: the cap of radius
/// r_peak with the largest mass among the densest quadrature points is taken,
/// then the next one disjoint from all previous caps, while the mass reaches
/// the floor.
inline PeakReport detect_peaks(const NodalField& u, const Functional& F, const Params& prm, const OrbitalSet& A,
                               PeakOptions opt = {})
{
    if (opt.r_peak <= 0) opt.r_peak = 0.5 * A.kappa;
    if (opt.mass_floor <= 0) opt.mass_floor = 0.5 / A.m_A;
    const auto mass = F.trace_point_masses(u, prm);
    const auto& pts = F.boundary_points();
    const auto& bq = F.boundary();
    const std::size_t nq = bq.rule.size();

    // density |u|^q at each point ranks the candidate cap centres
    std::vector<double> density(mass.size());
    for (std::size_t i = 0; i < mass.size(); ++i) density[i] = mass[i] / bq.weight(i / nq, i % nq);
    std::vector<std::size_t> order(mass.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t nc = std::min(opt.candidates, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nc), order.end(),
                      [&](std::size_t a, std::size_t b) { return density[a] > density[b] || (density[a] == density[b] && a < b); });
    order.resize(nc);

    std::vector<Point> dirs(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) dirs[i] = normalized(pts[i]);
    std::vector<double> cap_mass(nc);
    std::vector<double> buf(pts.size());
    for (std::size_t c = 0; c < nc; ++c) {
        const Point& x = dirs[order[c]];
        for (std::size_t i = 0; i < pts.size(); ++i) buf[i] = geodesic_distance(x, dirs[i]) <= opt.r_peak ? mass[i] : 0.0;
        cap_mass[c] = pairwise_sum(buf);
    }

    PeakReport rep;
    std::vector<char> used(nc, 0);
    for (;;) {
        std::size_t best = nc;
        for (std::size_t c = 0; c < nc; ++c) {
            if (used[c]) continue;
            bool clear = true;
            for (const auto& pk : rep.peaks)
                if (geodesic_distance(pk.location, dirs[order[c]]) < 2.0 * opt.r_peak) clear = false;
            if (!clear) {
                used[c] = 1;
                continue;
            }
            if (best == nc || cap_mass[c] > cap_mass[best]) best = c;
        }
        if (best == nc || cap_mass[best] < opt.mass_floor) break;
        used[best] = 1;
        rep.peaks.push_back({dirs[order[best]], cap_mass[best]});
    }
    for (const auto& pk : rep.peaks) {
        rep.total_mass += pk.mass;
        rep.deviation.push_back(pk.mass - 1.0 / A.m_A);
    }
    // matched: a bijection between peaks and orbit points within r_peak
    rep.matched = rep.peaks.size() == A.points.size();
    if (rep.matched)
        for (const auto& a : A.points) {
            int hits = 0;
            for (const auto& pk : rep.peaks)
                if (geodesic_distance(a, pk.location) <= opt.r_peak) ++hits;
            if (hits != 1) rep.matched = false;
        }
    return rep;
}

struct ResidualReport {
    double full_max = 0.0, full_rms = 0.0;            ///< over all nodal test functions
    double invariant_max = 0.0, invariant_rms = 0.0;  ///< over orbit-sum (invariant) test functions
};

/// Weak residual  int |grad u|^{p-2} grad u . grad h + lambda int |u|^{p-2} u h - c int_S |u|^{q-2} u h
/// tested against nodal hat functions and their orbit sums.
inline ResidualReport residual_check(const NodalField& u, double coefficient, const Functional& F, const Params& prm)
{
    const auto wf = F.weak_form(u, prm);
    const NodalField r = wf.a - coefficient * wf.b;
    const Eigen::VectorXd ri = orbit_sums(r, F.mesh());
    ResidualReport rep;
    rep.full_max = r.cwiseAbs().maxCoeff();
    rep.full_rms = std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
    rep.invariant_max = ri.cwiseAbs().maxCoeff();
    rep.invariant_rms = std::sqrt(ri.squaredNorm() / static_cast<double>(ri.size()));
    return rep;
}

/// Fills the classification of one stage. Concentrated: exactly m(A) peaks
/// matched to A, total cap mass >= 1 - beta, each mass within tol of 1/m(A),
/// neighborhood constraint held.
inline Classification classify(const StageSummary& st, const PeakReport& peaks, const GroupSpec& spec,
                               const OrbitalSet& A, const ThresholdSpec& thr, double beta, double mass_tol = 0.05)
{
    if (thr.m != A.m_A) throw Error("threshold computed for orbit size " + std::to_string(thr.m) + ", expected " +
                                    std::to_string(A.m_A));
    Classification c;
    c.k = spec.k;
    c.l = spec.l;
    c.peak_count = static_cast<int>(peaks.peaks.size());
    c.energy = st.energy.quotient;
    c.threshold = thr.threshold;
    c.threshold_ratio = c.energy / c.threshold;
    c.matched = peaks.matched;
    bool masses_ok = c.peak_count == A.m_A;
    for (double dv : peaks.deviation) masses_ok = masses_ok && std::abs(dv) <= mass_tol;
    c.concentrated = masses_ok && peaks.matched && peaks.total_mass >= 1.0 - beta && !st.escaped &&
                     st.error.empty();
    return c;
}

struct NonequivalenceRow {
    int k = 0;
    std::string key;
    int peak_count = 0;
    bool concentrated = false;
    double energy = 0.0;
};

struct NonequivalenceReport {
    double lambda = 0.0;  ///< largest lambda reached by every branch
    std::vector<NonequivalenceRow> rows;
    std::map<int, int> classes;  ///< peak count -> concentrated branches in that class
    int nonequivalent_count = 0;
};

/// Groups concentrated branches by peak count at the largest common lambda.
/// A rotation preserves the number of peaks, so branches with different peak
/// counts are rotationally non-equivalent.
inline NonequivalenceReport nonequivalence_report(const std::vector<Branch>& branches)
{
    NonequivalenceReport rep;
    if (branches.empty()) return rep;
    rep.lambda = std::numeric_limits<double>::infinity();
    for (const auto& b : branches) rep.lambda = std::min(rep.lambda, b.last().lambda);
    for (const auto& b : branches) {
        const auto it = std::find_if(b.stages.begin(), b.stages.end(),
                                     [&](const StageSummary& s) { return s.lambda == rep.lambda; });
        if (it == b.stages.end() || !it->classification) continue;
        const auto& c = *it->classification;
        rep.rows.push_back({b.group_spec.k, c.key(), c.peak_count, c.concentrated, c.energy});
        if (c.concentrated) rep.classes[c.peak_count] += 1;
    }
    rep.nonequivalent_count = static_cast<int>(rep.classes.size());
    return rep;
}

}  // namespace ctl
