#include "hignn/checks.hpp"

#include <algorithm>
#include <cmath>

#include "hignn/metrics.hpp"
#include "hignn/trainer.hpp"

namespace hignn {

GradientCheck check_gradients(std::uint64_t seed, const ModelArch& arch, double eps, double floor) {
    ScenarioConfig sc;
    sc.counts = {2, 1};
    sc.antennas = arch.antennas;
    sc.area_length = 60.0;
    sc.seed = seed;
    const Sample sample = generate_sample(sc, 0);

    HignnParams params = init_params(arch, seed + 1);
    const HeteroGraph raw = build_graph(sample.instance, sample.channels, arch.features);
    params.norm = compute_norm_stats(std::span<const HeteroGraph>(&raw, 1));
    const HeteroGraph g = normalize(raw, params.norm);
    const Sample* ptr = &sample;
    const TrainingBatch batch = make_batch(std::span<const HeteroGraph>(&g, 1), std::span<const Sample* const>(&ptr, 1));

    const auto grads = loss_gradient(params, batch);
    HignnParams probe = params;
    const auto fd = ad::finite_diff_grad(
        [&](const std::vector<ad::Tensor>& t) {
            probe.tensors = t;
            return loss_value(probe, batch);
        },
        params.tensors, eps);

    GradientCheck out;
    for (std::size_t k = 0; k < grads.size(); ++k) {
        const auto a = grads[k].data();
        const auto b = fd[k].data();
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double err = std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor});
            if (err > out.max_rel_error) {
                out.max_rel_error = err;
                out.worst_param = params.names[k] + "[" + std::to_string(i) + "]";
            }
            ++out.num_scalars;
        }
    }
    return out;
}

namespace {

double max_abs_diff(const BeamformerSet& a, const BeamformerSet& b) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, (a[k] - b[k]).cwiseAbs().maxCoeff());
    return d;
}

double max_abs(const BeamformerSet& a) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, a[k].cwiseAbs().maxCoeff());
    return d;
}

} // namespace

PermutationCheck check_permutations(int trials, std::uint64_t seed, const ModelArch& arch) {
    PermutationCheck out;
    Rng rng(seed);
    ScenarioConfig sc;
    sc.antennas = arch.antennas;
    sc.seed = seed;
    for (int t = 0; t < trials; ++t) {
        const Sample s = generate_sample(sc, std::uint64_t(t));
        HignnParams params = init_params(arch, rng);
        const HeteroGraph raw = build_graph(s.instance, s.channels, arch.features);
        params.norm = compute_norm_stats(std::span<const HeteroGraph>(&raw, 1));

        const PermutationSpec perm = PermutationSpec::random(s.instance.counts, rng);
        const NetworkInstance pi = permute_instance(s.instance, perm);
        const ChannelSet ph = permute_channels(s.channels, s.instance, perm);

        const BeamformerSet x = infer(params, s.instance, s.channels);
        const BeamformerSet px = infer(params, pi, ph);
        const BeamformerSet expected = permute_beamformers(x, s.instance.counts, perm);

        const double scale = std::max(max_abs(x), 1e-300);
        out.max_equivariance_error = std::max(out.max_equivariance_error, max_abs_diff(px, expected) / scale);

        const double u = weighted_sum_rate(s.instance, x, s.channels);
        const double pu = weighted_sum_rate(pi, expected, ph);
        out.max_utility_error = std::max(out.max_utility_error, std::abs(u - pu) / std::max(std::abs(u), 1e-300));
        ++out.trials;
    }
    return out;
}

} // namespace hignn
