#pragma once

// Heterogeneous interference GNN: per-relation GN blocks stacked as
// encoder -> shared core (layers - 2 times) -> decoder, followed by the
// power activation sqrt(P) x / max(|x|, 1).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "hignn/channel_sim.hpp"
#include "hignn/graph.hpp"
#include "hignn/tensor.hpp"
#include "hignn/types.hpp"

namespace hignn {

enum class DecoderKind {
    Gn,      ///< full per-relation GN block
    Readout, ///< per-type MLP on the vertex state, no message passing
};

struct ModelArch {
    std::vector<int> antennas{1, 2};
    int layers = 3;
    int width = 8;
    std::vector<int> hidden{16};
    GraphOptions features;
    DecoderKind decoder = DecoderKind::Gn;
    /// Feed the initial vertex attributes to the decoder as well.
    bool decoder_concat_initial = true;

    int num_types() const noexcept { return int(antennas.size()); }
    void validate() const;

    nlohmann::json to_json() const;
    static ModelArch from_json(const nlohmann::json& j);

    bool operator==(const ModelArch&) const = default;
};

/// Indices into HignnParams::tensors. The first layer has one weight block
/// per input segment, which is equivalent to one weight on their concatenation.
struct Mlp {
    std::vector<std::size_t> input_weights;
    std::size_t input_bias = 0;
    std::vector<std::size_t> tail_weights;
    std::vector<std::size_t> tail_biases;

    std::size_t output_width(const std::vector<ad::Tensor>& tensors) const;
    bool operator==(const Mlp&) const = default;
};

struct RelationParams {
    Mlp edge;
    Mlp vertex;

    bool operator==(const RelationParams&) const = default;
};

struct GnBlock {
    std::vector<RelationParams> relations; ///< relation (n, m) at n * M + m

    bool empty() const noexcept { return relations.empty(); }
    bool operator==(const GnBlock&) const = default;
};

struct HignnParams {
    ModelArch arch;
    std::vector<std::string> names;
    std::vector<ad::Tensor> tensors;
    GnBlock encoder;
    GnBlock core; ///< empty when layers == 2
    GnBlock decoder;
    std::vector<Mlp> readout; ///< per type, only for DecoderKind::Readout
    NormStats norm;

    std::size_t num_scalars() const;
    bool operator==(const HignnParams&) const = default;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
HignnParams init_params(const ModelArch& arch, Rng& rng);
HignnParams init_params(const ModelArch& arch, std::uint64_t seed);

// ------------------------------------------------------------ tape-level ops

/// Puts every parameter tensor on the tape, differentiable or constant.
std::vector<ad::Var> bind_params(ad::Tape& tape, const HignnParams& params, bool trainable);

ad::Var apply_mlp(const Mlp& mlp, std::span<const ad::Var> params, std::span<const ad::Var> inputs);

/// phi_e(concat(v_src, e0)) for every edge of `rel`; destination features are not an input.
ad::Var edge_messages(const Mlp& edge, std::span<const ad::Var> params, const ad::Var& src_state,
                      const RelationEdges& rel, const ad::Var& edge_features);

/// Elementwise max over each destination's incoming messages; zero rows for isolated vertices.
ad::Var relation_aggregate(const ad::Var& messages, const RelationEdges& rel, std::size_t num_dst);

/// phi_v over [v_prev, v0, aggregated] (or [v0, aggregated] in the first layer).
ad::Var partial_vertex_update(const Mlp& vertex, std::span<const ad::Var> params, std::span<const ad::Var> inputs);

/// Per-row weights 1/c over the relations with at least one incoming edge.
/// Vertices without any neighbour fall back to the self relation (m, m).
std::vector<ad::Tensor> merge_coefficients(const HeteroGraph& graph, int dst_type);

/// Weighted sum of the partial updates; a default Var marks a skipped relation.
ad::Var merge_relations(std::span<const ad::Var> partials, std::span<const ad::Tensor> coefficients);

/// sqrt(P) x / max(|x|_2, 1) row by row.
ad::Var power_activation(const ad::Var& raw, double p_max);

/// Power-limited outputs per type (K_m x 2 N_m, [Re x; Im x]). The graph must
/// already be normalized.
std::vector<ad::Var> forward(ad::Tape& tape, std::span<const ad::Var> params, const HignnParams& hp,
                             const HeteroGraph& graph, double p_max);

/// Converts per-type output rows back to complex beamformers in flat link order.
BeamformerSet to_beamformers(std::span<const ad::Tensor> per_type, std::span<const int> antennas);

BeamformerSet forward(const HignnParams& params, const HeteroGraph& graph, double p_max);

/// Builds, normalizes and evaluates the graph of one instance.
BeamformerSet infer(const HignnParams& params, const NetworkInstance& instance, const ChannelSet& channels);

// ------------------------------------------------------------ loss

/// Channel coefficients of a batch rearranged for vectorized rate evaluation.
struct RateBatch {
    struct Group {
        std::vector<int> tx_row;   ///< row of the transmitter in its type's batched output
        std::vector<int> rx;       ///< flat receiver index across the batch
        ad::Tensor coeff_re;       ///< Re(h^H x) = <coeff_re, [Re x; Im x]>
        ad::Tensor coeff_im;       ///< Im(h^H x) = <coeff_im, [Re x; Im x]>
    };
    std::vector<Group> direct; ///< per type, rows in receiver order
    std::vector<Group> cross;  ///< per transmitter type
    ad::Tensor weights;        ///< R x 1
    ad::Tensor noise;          ///< R x 1
    std::size_t num_samples = 0;
    double p_max = 1.0;
};

struct TrainingBatch {
    HeteroGraph graph; ///< normalized, batched
    RateBatch rates;
};

TrainingBatch make_batch(std::span<const HeteroGraph> normalized_graphs, std::span<const Sample* const> samples);

/// -(1/B) sum_b WSR_b evaluated on the tape from power-limited outputs.
ad::Var negative_mean_wsr(std::span<const ad::Var> outputs, const RateBatch& rates);

ad::Var loss(ad::Tape& tape, std::span<const ad::Var> params, const HignnParams& hp, const TrainingBatch& batch);

double loss_value(const HignnParams& params, const TrainingBatch& batch);

/// Gradient of the loss with respect to every parameter tensor.
std::vector<ad::Tensor> loss_gradient(const HignnParams& params, const TrainingBatch& batch, double* value = nullptr);

} // namespace hignn
