#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "hignn/channel_sim.hpp"
#include "hignn/error.hpp"
#include "hignn/fp_solver.hpp"
#include "hignn/model.hpp"

namespace hignn {

struct TrainConfig {
    std::string train_path;
    std::string val_path;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int max_epochs = 100;
    /// Evaluations without a new best validation ratio before stopping.
    int patience = 10;
    /// Epochs between validation evaluations.
    int eval_interval = 1;
    /// Use at most this many validation samples (0 = all).
    std::size_t val_limit = 0;
    std::uint64_t seed = 1;
    ModelArch arch;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);

    bool operator==(const TrainConfig&) const = default;
};

/// 1 / std of the stacked real features, per vertex type and per relation.
NormStats compute_norm_stats(std::span<const HeteroGraph> graphs);
NormStats compute_norm_stats(const Dataset& dataset, const GraphOptions& options);

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<ad::Tensor> m;
    std::vector<ad::Tensor> v;
    long step = 0;
};

/// Bias-corrected Adam update, in place.
void adam_step(std::vector<ad::Tensor>& params, const std::vector<ad::Tensor>& grads, AdamState& state,
               const AdamOptions& options);

struct HistoryEntry {
    int epoch = 0;
    long step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_ratio = 0.0;

    bool operator==(const HistoryEntry&) const = default;
};

struct Checkpoint {
    HignnParams params;
    TrainConfig config;
    std::vector<HistoryEntry> history;
    int best_epoch = 0;

    bool operator==(const Checkpoint&) const = default;
};

// "HIGC", u32 version, u64 header length, JSON header {arch, config, history,
// norm, tensors: [{name, rows, cols}]}, u64 scalar count, float64 blob with the
// tensors concatenated in header order (row-major).
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Raised when the training loss becomes non-finite.
class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& what, Checkpoint last_good)
        : Error(what), last_good_(std::move(last_good)) {}
    const Checkpoint& last_good() const noexcept { return last_good_; }

private:
    Checkpoint last_good_;
};

/// Minimizes the negative mean WSR; keeps the best-validation parameters.
Checkpoint fit(const TrainConfig& config, const Dataset& train, const Dataset& val, std::ostream* log = nullptr);
Checkpoint fit(const TrainConfig& config, std::ostream* log = nullptr);

struct EvalRecord {
    double policy_wsr = 0.0;
    double fp_wsr = 0.0;
    double ratio = 0.0;
};

struct EvalReport {
    std::vector<EvalRecord> records;
    double mean_ratio = 0.0;
    double std_ratio = 0.0;
    double mean_policy_wsr = 0.0;
    double mean_fp_wsr = 0.0;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

using Policy = std::function<BeamformerSet(const Sample&)>;

/// WSR of converged FP for every sample, parallel over samples.
std::vector<double> fp_wsr(const Dataset& dataset, const FpOptions& options = {}, int threads = 1);

EvalReport evaluate_policy(const Policy& policy, const Dataset& dataset, std::span<const double> fp_wsr,
                           int threads = 1);
EvalReport evaluate_policy(const Policy& policy, const Dataset& dataset, const FpOptions& options = {},
                           int threads = 1);
EvalReport evaluate(const Checkpoint& checkpoint, const Dataset& dataset, const FpOptions& options = {},
                    int threads = 1);

/// Runs f(i) for i in [0, n) on up to `threads` threads.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f);

} // namespace hignn
