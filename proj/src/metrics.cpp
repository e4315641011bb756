#include "hignn/metrics.hpp"

#include <cmath>
#include <string>

#include "hignn/error.hpp"

namespace hignn {

double sinr(int link, const BeamformerSet& x, const ChannelSet& h, double noise_var) {
    const int k = h.num_links();
    if (int(x.size()) != k) throw StructuralError("sinr: beamformer count does not match channels");
    double interference = 0.0;
    for (int j = 0; j < k; ++j) {
        if (j == link) continue;
        interference += std::norm(h(link, j).dot(x[std::size_t(j)]));
    }
    return std::norm(h(link, link).dot(x[std::size_t(link)])) / (interference + noise_var);
}

double weighted_sum_rate(const BeamformerSet& x, const ChannelSet& h, std::span<const double> weights,
                         std::span<const double> noise_vars, double bandwidth) {
    const int k = h.num_links();
    if (int(weights.size()) != k || int(noise_vars.size()) != k)
        throw StructuralError("weighted_sum_rate: per-link arrays must have " + std::to_string(k) + " entries");
    double total = 0.0;
    for (int i = 0; i < k; ++i)
        total += weights[std::size_t(i)] * bandwidth * std::log1p(sinr(i, x, h, noise_vars[std::size_t(i)]));
    return total;
}

double weighted_sum_rate(const NetworkInstance& instance, const BeamformerSet& x, const ChannelSet& h,
                         double bandwidth) {
    return weighted_sum_rate(x, h, instance.weights, instance.noise_vars, bandwidth);
}

RateReport rate_report(const NetworkInstance& instance, const BeamformerSet& x, const ChannelSet& h,
                       double bandwidth) {
    RateReport r;
    r.bandwidth = bandwidth;
    for (int i = 0; i < instance.num_links(); ++i) {
        const double s = sinr(i, x, h, instance.noise_vars[std::size_t(i)]);
        r.sinr.push_back(s);
        r.rate.push_back(bandwidth * std::log1p(s));
        r.wsr += instance.weights[std::size_t(i)] * r.rate.back();
    }
    return r;
}

double relative_performance(std::span<const double> candidate_wsr, std::span<const double> baseline_wsr) {
    if (candidate_wsr.size() != baseline_wsr.size() || candidate_wsr.empty())
        throw StructuralError("relative_performance: need equally sized, non-empty inputs");
    double acc = 0.0;
    for (std::size_t k = 0; k < candidate_wsr.size(); ++k) {
        if (!(baseline_wsr[k] > 0.0)) throw ValidationError("relative_performance: baseline WSR must be > 0");
        acc += candidate_wsr[k] / baseline_wsr[k];
    }
    return acc / double(candidate_wsr.size());
}

} // namespace hignn
