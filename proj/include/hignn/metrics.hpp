#pragma once

#include <span>
#include <vector>

#include "hignn/types.hpp"

namespace hignn {

/// Per-link SINR and rate (natural log) plus their weighted sum.
struct RateReport {
    std::vector<double> sinr;
    std::vector<double> rate;
    double wsr = 0.0;
    double bandwidth = 1.0;
};

/// |h_ii^H x_i|^2 / (sum_{j != i} |h_ij^H x_j|^2 + sigma_i^2)
double sinr(int link, const BeamformerSet& x, const ChannelSet& h, double noise_var);

RateReport rate_report(const NetworkInstance& instance, const BeamformerSet& x, const ChannelSet& h,
                       double bandwidth = 1.0);

/// sum_i w_i * W * ln(1 + SINR_i)
double weighted_sum_rate(const BeamformerSet& x, const ChannelSet& h, std::span<const double> weights,
                         std::span<const double> noise_vars, double bandwidth = 1.0);

double weighted_sum_rate(const NetworkInstance& instance, const BeamformerSet& x, const ChannelSet& h,
                         double bandwidth = 1.0);

/// Mean over instances of candidate[k] / baseline[k]. Baselines must be > 0.
double relative_performance(std::span<const double> candidate_wsr, std::span<const double> baseline_wsr);

/// nats -> bits.
inline double to_bits(double nats) { return nats / 0.6931471805599453; }

} // namespace hignn
