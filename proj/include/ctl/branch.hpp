#pragma once

#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "functional.hpp"
#include "symmetry.hpp"

namespace ctl {

/// One accepted iterate of a descent stage.
struct TraceRow {
    double lambda = 0.0;
    double epsilon = 0.0;
    int iter = 0;
    double quotient = 0.0;
    double grad_term = 0.0;
    double mass_term = 0.0;
    double grad_norm = 0.0;  ///< sup norm of the invariant-basis gradient
    double step = 0.0;
};

struct Peak {
    Point location{};
    double mass = 0.0;
};

struct PeakReport {
    std::vector<Peak> peaks;
    double total_mass = 0.0;
    std::vector<double> deviation;  ///< mass - 1/m(A) per peak
    bool matched = false;           ///< every orbit point owns exactly one peak within r_peak
};

struct Classification {
    int peak_count = 0;
    double energy = 0.0;
    double threshold = 0.0;
    double threshold_ratio = 0.0;
    bool concentrated = false;
    bool matched = false;
    int k = 0, l = 1;
    [[nodiscard]] std::string key() const
    {
        return std::to_string(k) + ":" + std::to_string(l) + ":" + std::to_string(peak_count);
    }
};

/// Result of one lambda stage of a branch.
struct StageSummary {
    double lambda = 0.0;
    EnergyBreakdown energy;
    int iterations = 0;
    double grad_norm = 0.0;
    double neighborhood_mass = 0.0;
    bool converged = false;      ///< grad_norm <= grad_tol
    bool line_search_failed = false;
    bool escaped = false;        ///< neighborhood mass < 1 - beta at termination
    bool reinitialized = false;  ///< started from bubble_init after a failed stage
    std::string error;           ///< non-empty when the stage threw
    std::optional<PeakReport> peaks;
    std::optional<Classification> classification;
};

struct Branch {
    GroupSpec group_spec;
    OrbitalSet orbital_set;
    NodalField u;  ///< final field, normalized to unit L_q(S) norm
    std::vector<Eigen::VectorXd> stage_fields;  ///< orbit values at the end of each stage
    std::vector<TraceRow> trace;
    std::vector<StageSummary> stages;
    std::uint64_t seed = 0;

    [[nodiscard]] const StageSummary& last() const
    {
        require(!stages.empty(), "branch has no stages");
        return stages.back();
    }
};

}  // namespace ctl
