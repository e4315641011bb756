#pragma once

// Experiment runners. Each returns a table whose metadata carries the seed and
// the hash of the configuration that produced it.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "hignn/channel_sim.hpp"
#include "hignn/fp_solver.hpp"
#include "hignn/trainer.hpp"

namespace hignn {

inline constexpr const char* kVersion = "0.1.0";

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<nlohmann::json>> rows;
    nlohmann::json meta = nlohmann::json::object();

    /// Metadata as leading "# key: value" lines, then a header row.
    std::string to_csv() const;
    /// {"meta": ..., "columns": ..., "rows": [{column: value}]}
    nlohmann::json to_json() const;
    /// Writes <dir>/<stem>.csv and <dir>/<stem>.json.
    void write(const std::filesystem::path& dir, const std::string& stem) const;

    const nlohmann::json& at(std::size_t row, const std::string& column) const;
};

/// {seed, config_hash, version, eigen}.
nlohmann::json run_metadata(std::uint64_t seed, const nlohmann::json& config);

nlohmann::json fp_options_to_json(const FpOptions& options);
FpOptions fp_options_from_json(const nlohmann::json& j);

/// Link counts scaled by 2^step; with grow_area the side length also grows by
/// sqrt(2) per step so that the link density stays fixed.
ScenarioConfig scaled_scenario(const ScenarioConfig& base, int step, bool grow_area);

struct ScalingConfig {
    ScenarioConfig base;
    int steps = 3;
    std::size_t instances = 1000;
    FpOptions fp;
    int threads = 1;

    nlohmann::json to_json() const;
    static ScalingConfig from_json(const nlohmann::json& j);
};

/// Columns: step, links, area_length, hignn_wsr, fp_wsr, mean_ratio, std_ratio, instances.
Table run_area_scaling(const Checkpoint& checkpoint, const ScalingConfig& config, std::ostream* log = nullptr);
Table run_density_scaling(const Checkpoint& checkpoint, const ScalingConfig& config, std::ostream* log = nullptr);

struct TimingConfig {
    ScenarioConfig base;
    int steps = 3;
    std::size_t instances = 100;
    int truncated_iters = 3;
    bool grow_area = true;
    /// Each instance is timed this many times and the fastest run is kept.
    int repeats = 3;
    FpOptions fp;

    nlohmann::json to_json() const;
    static TimingConfig from_json(const nlohmann::json& j);
};

/// Single-threaded wall clock in milliseconds. Columns: step, links, fp_ms,
/// fp_std_ms, trfp_ms, trfp_std_ms, hignn_ms, hignn_std_ms, fp_iterations, speedup.
Table run_timing(const Checkpoint& checkpoint, const TimingConfig& config, std::ostream* log = nullptr);

struct SampleEfficiencyConfig {
    std::vector<ModelArch> archs;
    std::vector<std::size_t> train_sizes{500, 1000, 2000, 5000, 10000, 20000};
    std::size_t val_size = 500;
    std::size_t test_size = 1000;
    ScenarioConfig scenario;
    TrainConfig train;
    int threads = 1;

    nlohmann::json to_json() const;
    static SampleEfficiencyConfig from_json(const nlohmann::json& j);
};

/// Trains every architecture on nested prefixes of one training pool.
/// Columns: arch, layers, hidden, train_size, mean_ratio, std_ratio, best_epoch.
Table run_sample_efficiency(const SampleEfficiencyConfig& config, std::ostream* log = nullptr);

} // namespace hignn
