#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"

#include "hignn/types.hpp"

namespace hignn {

/// Log-distance path loss with log-normal shadowing:
/// beta = G0 * (d / d0)^-alpha * 10^(S / 10), S ~ N(0, shadowing_db^2).
struct LargeScaleModel {
    double ref_distance_m = 1.0;
    double pathloss_exponent = 2.2;
    /// 10 dB median SNR at 50 m under unit power and noise.
    double ref_gain_db = 10.0 + 10.0 * 2.2 * std::log10(50.0);
    double shadowing_db = 7.0;

    bool operator==(const LargeScaleModel&) const = default;
};

enum class WeightsMode { Ones, Explicit };

struct ScenarioConfig {
    double area_length = 400.0;
    std::vector<int> counts{8, 4};
    std::vector<int> antennas{1, 2};
    double d_min = 2.0;
    double d_max = 50.0;
    double p_max = 1.0;
    double noise_var = 1.0;
    WeightsMode weights = WeightsMode::Ones;
    std::vector<double> explicit_weights;
    LargeScaleModel large_scale;
    std::uint64_t seed = 1;

    int num_links() const;
    void validate() const;

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys raise ConfigError.
    static ScenarioConfig from_json(const nlohmann::json& j);

    bool operator==(const ScenarioConfig&) const = default;
};

struct Sample {
    NetworkInstance instance;
    ChannelSet channels;

    bool operator==(const Sample&) const = default;
};

struct Dataset {
    ScenarioConfig config;
    std::vector<Sample> samples;
};

/// Independent random stream for sample `index` of a dataset seeded with `seed`.
Rng sample_stream(std::uint64_t seed, std::uint64_t index);

NetworkInstance sample_topology(const ScenarioConfig& config, Rng& rng);

/// Linear power gain at the given distance. Throws ValidationError for d <= 0.
double large_scale_gain(double distance_m, const ScenarioConfig& config, Rng& rng);

/// h(rx, tx) = sqrt(beta) g with g ~ CN(0, I); interferer distances are floored at d_min.
ChannelSet sample_channels(const NetworkInstance& instance, const ScenarioConfig& config, Rng& rng);

Sample generate_sample(const ScenarioConfig& config, std::uint64_t index);

/// Serial and threaded generation produce identical datasets.
Dataset generate_dataset(const ScenarioConfig& config, std::size_t num_samples, int threads = 1);
Dataset generate_dataset(const ScenarioConfig& config, std::size_t num_samples, const std::filesystem::path& path,
                         int threads = 1);

// Binary container: "HIGD", u32 version, u64 header length, JSON header
// {"format_version", "num_samples", "config"}, then per sample little-endian
// float64 arrays: tx positions (K x 2), rx positions (K x 2), weights (K),
// channels h(rx, tx) for rx, tx in link order as interleaved (re, im).
inline constexpr std::uint32_t kDatasetVersion = 1;

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

} // namespace hignn
