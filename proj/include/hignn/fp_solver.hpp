#pragma once

#include <span>
#include <vector>

#include "hignn/types.hpp"

namespace hignn {

/// Closed-form fractional programming (quadratic transform) for weighted
/// sum-rate beamforming. Block ascent over (SINR, auxiliary y, beamformers).
struct FpOptions {
    int max_iters = 100;
    /// Stop once the WSR gain of an iteration drops below rel_tol * WSR.
    double rel_tol = 1e-5;
    /// Relative power gap at which the multiplier bisection stops.
    double bisection_tol = 1e-8;
    /// When > 0, run exactly this many iterations and ignore rel_tol ("Tr-FP").
    int truncated_iters = 0;
};

struct FpTrace {
    std::vector<double> wsr; ///< wsr[0] is the starting point, wsr[k] after iteration k
    int iterations = 0;
    bool converged = false;
    int bisections = 0; ///< links whose unconstrained update violated the power budget
};

struct FpResult {
    BeamformerSet x;
    FpTrace trace;
};

/// x_i = sqrt(P) h_ii / |h_ii|, zero when the direct channel vanishes.
BeamformerSet init_mrt(const ChannelSet& h, double p_max);

/// One round of the three block updates. `bisections` (optional) is
/// incremented for every link that needed a positive multiplier.
BeamformerSet fp_iterate(const BeamformerSet& x, const ChannelSet& h, std::span<const double> weights,
                         std::span<const double> noise_vars, double p_max, double bisection_tol = 1e-8,
                         int* bisections = nullptr);

FpResult fp_solve(const ChannelSet& h, std::span<const double> weights, std::span<const double> noise_vars,
                  double p_max, const FpOptions& options = {});

FpResult fp_solve(const NetworkInstance& instance, const ChannelSet& h, const FpOptions& options = {});

/// Starts from `x0` instead of MRT.
FpResult fp_solve_from(BeamformerSet x0, const ChannelSet& h, std::span<const double> weights,
                       std::span<const double> noise_vars, double p_max, const FpOptions& options = {});

} // namespace hignn
