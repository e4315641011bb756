#include "hignn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Core>

#include "hignn/config.hpp"
#include "hignn/error.hpp"

namespace hignn {

using nlohmann::json;

// ------------------------------------------------------------ architecture

void ModelArch::validate() const {
    if (antennas.empty()) throw ConfigError("model: needs at least one link type");
    for (int n : antennas)
        if (n < 1) throw ConfigError("model: antenna counts must be >= 1");
    if (layers < 2) throw ConfigError("model: layers must be >= 2");
    if (width < 1) throw ConfigError("model: width must be >= 1");
    for (int h : hidden)
        if (h < 1) throw ConfigError("model: hidden widths must be >= 1");
}

json ModelArch::to_json() const {
    return json{{"antennas", antennas},
                {"layers", layers},
                {"width", width},
                {"hidden", hidden},
                {"edge_features", features.edge_features == EdgeFeatures::Incoming ? "incoming" : "bidir"},
                {"vertex_extras", features.vertex_extras},
                {"decoder", decoder == DecoderKind::Gn ? "gn" : "readout"},
                {"decoder_concat_initial", decoder_concat_initial}};
}

ModelArch ModelArch::from_json(const json& j) {
    reject_unknown_keys(j,
                        {"antennas", "layers", "width", "hidden", "edge_features", "vertex_extras", "decoder",
                         "decoder_concat_initial"},
                        "model");
    ModelArch a;
    read_key(j, "antennas", a.antennas, "model");
    read_key(j, "layers", a.layers, "model");
    read_key(j, "width", a.width, "model");
    read_key(j, "hidden", a.hidden, "model");
    std::string edge = "incoming";
    read_key(j, "edge_features", edge, "model");
    if (edge == "incoming") a.features.edge_features = EdgeFeatures::Incoming;
    else if (edge == "bidir") a.features.edge_features = EdgeFeatures::Bidirectional;
    else throw ConfigError("model.edge_features: expected \"incoming\" or \"bidir\"");
    read_key(j, "vertex_extras", a.features.vertex_extras, "model");
    std::string dec = "gn";
    read_key(j, "decoder", dec, "model");
    if (dec == "gn") a.decoder = DecoderKind::Gn;
    else if (dec == "readout") a.decoder = DecoderKind::Readout;
    else throw ConfigError("model.decoder: expected \"gn\" or \"readout\"");
    read_key(j, "decoder_concat_initial", a.decoder_concat_initial, "model");
    a.validate();
    return a;
}

std::size_t Mlp::output_width(const std::vector<ad::Tensor>& tensors) const {
    return tail_weights.empty() ? tensors[input_weights.front()].cols() : tensors[tail_weights.back()].cols();
}

std::size_t HignnParams::num_scalars() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

// ------------------------------------------------------------ initialization

namespace {

class ParamBuilder {
public:
    ParamBuilder(HignnParams& params, Rng& rng) : p_(params), rng_(rng) {}

    Mlp mlp(const std::string& prefix, const std::vector<int>& segments, int out, const std::vector<int>& hidden) {
        std::vector<int> widths = hidden;
        widths.push_back(out);
        const int fan_in = std::accumulate(segments.begin(), segments.end(), 0);

        Mlp m;
        for (std::size_t s = 0; s < segments.size(); ++s)
            m.input_weights.push_back(weight(prefix + ".w0_" + std::to_string(s), segments[s], widths[0], fan_in));
        m.input_bias = bias(prefix + ".b0", widths[0]);
        for (std::size_t l = 1; l < widths.size(); ++l) {
            m.tail_weights.push_back(weight(prefix + ".w" + std::to_string(l), widths[l - 1], widths[l], widths[l - 1]));
            m.tail_biases.push_back(bias(prefix + ".b" + std::to_string(l), widths[l]));
        }
        return m;
    }

private:
    std::size_t weight(const std::string& name, int rows, int cols, int fan_in) {
        const double bound = 1.0 / std::sqrt(double(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        ad::Tensor t(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
        for (double& v : t.data()) v = u(rng_);
        return push(name, std::move(t));
    }

    std::size_t bias(const std::string& name, int cols) { return push(name, ad::Tensor(1, std::size_t(cols))); }

    std::size_t push(const std::string& name, ad::Tensor t) {
        p_.names.push_back(name);
        p_.tensors.push_back(std::move(t));
        return p_.tensors.size() - 1;
    }

    HignnParams& p_;
    Rng& rng_;
};

enum class Stage { Encoder, Core, Decoder };

GnBlock make_block(ParamBuilder& b, const ModelArch& a, Stage stage) {
    const int types = a.num_types();
    const std::string tag = stage == Stage::Encoder ? "enc" : stage == Stage::Core ? "core" : "dec";
    GnBlock block;
    for (int n = 0; n < types; ++n) {
        for (int m = 0; m < types; ++m) {
            const std::string prefix = tag + ".r" + std::to_string(n + 1) + "_" + std::to_string(m + 1);
            const int src = stage == Stage::Encoder ? a.features.vertex_width(a.antennas[std::size_t(n)]) : a.width;
            const int edge_w = a.features.edge_width(a.antennas[std::size_t(n)], a.antennas[std::size_t(m)]);
            const int v0 = a.features.vertex_width(a.antennas[std::size_t(m)]);

            std::vector<int> vertex_in;
            if (stage == Stage::Encoder) vertex_in = {v0, a.width};
            else if (stage == Stage::Decoder && !a.decoder_concat_initial) vertex_in = {a.width, a.width};
            else vertex_in = {a.width, v0, a.width};
            const int out = stage == Stage::Decoder ? 2 * a.antennas[std::size_t(m)] : a.width;

            RelationParams rp;
            rp.edge = b.mlp(prefix + ".edge", {src, edge_w}, a.width, a.hidden);
            rp.vertex = b.mlp(prefix + ".vertex", vertex_in, out, a.hidden);
            block.relations.push_back(std::move(rp));
        }
    }
    return block;
}

} // namespace

HignnParams init_params(const ModelArch& arch, Rng& rng) {
    arch.validate();
    HignnParams p;
    p.arch = arch;
    p.norm = NormStats::identity(arch.num_types());
    ParamBuilder b(p, rng);
    p.encoder = make_block(b, arch, Stage::Encoder);
    if (arch.layers >= 3) p.core = make_block(b, arch, Stage::Core);
    if (arch.decoder == DecoderKind::Gn) {
        p.decoder = make_block(b, arch, Stage::Decoder);
    } else {
        for (int m = 0; m < arch.num_types(); ++m) {
            const int v0 = arch.features.vertex_width(arch.antennas[std::size_t(m)]);
            std::vector<int> in = arch.decoder_concat_initial ? std::vector<int>{arch.width, v0} : std::vector<int>{arch.width};
            p.readout.push_back(b.mlp("readout.t" + std::to_string(m + 1), in, 2 * arch.antennas[std::size_t(m)], arch.hidden));
        }
    }
    return p;
}

HignnParams init_params(const ModelArch& arch, std::uint64_t seed) {
    Rng rng(seed);
    return init_params(arch, rng);
}

// ------------------------------------------------------------ tape ops

std::vector<ad::Var> bind_params(ad::Tape& tape, const HignnParams& params, bool trainable) {
    std::vector<ad::Var> vars;
    vars.reserve(params.tensors.size());
    for (const auto& t : params.tensors) vars.push_back(trainable ? tape.parameter(t) : tape.constant(t));
    return vars;
}

namespace {

// Hidden rectifiers and tail layers after the first pre-activation.
ad::Var finish_mlp(const Mlp& mlp, std::span<const ad::Var> params, ad::Var h) {
    for (std::size_t l = 0; l < mlp.tail_weights.size(); ++l) {
        h = ad::relu(h);
        h = ad::matmul(h, params[mlp.tail_weights[l]]) + params[mlp.tail_biases[l]];
    }
    return h;
}

void check_inputs(const Mlp& mlp, std::span<const ad::Var> params, std::span<const ad::Var> inputs) {
    if (inputs.size() != mlp.input_weights.size())
        throw StructuralError("mlp: expected " + std::to_string(mlp.input_weights.size()) + " input segments, got " +
                              std::to_string(inputs.size()));
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        const std::size_t want = params[mlp.input_weights[s]].value().rows();
        if (inputs[s].value().cols() != want)
            throw StructuralError("mlp: input segment " + std::to_string(s) + " has width " +
                                  std::to_string(inputs[s].value().cols()) + ", expected " + std::to_string(want));
    }
}

} // namespace

ad::Var apply_mlp(const Mlp& mlp, std::span<const ad::Var> params, std::span<const ad::Var> inputs) {
    check_inputs(mlp, params, inputs);
    ad::Var h = ad::matmul(inputs[0], params[mlp.input_weights[0]]);
    for (std::size_t s = 1; s < inputs.size(); ++s) h = h + ad::matmul(inputs[s], params[mlp.input_weights[s]]);
    h = h + params[mlp.input_bias];
    return finish_mlp(mlp, params, h);
}

ad::Var edge_messages(const Mlp& edge, std::span<const ad::Var> params, const ad::Var& src_state,
                      const RelationEdges& rel, const ad::Var& edge_features) {
    const ad::Var inputs[] = {src_state, edge_features};
    check_inputs(edge, params, inputs);
    if (edge_features.value().rows() != rel.num_edges())
        throw StructuralError("edge_messages: edge feature rows do not match the relation's edges");
    // The source term is linear in the source state, so it is projected once
    // per vertex and then gathered per edge.
    ad::Var src_proj = ad::matmul(src_state, params[edge.input_weights[0]]);
    ad::Var h = ad::gather_rows(src_proj, rel.src) + ad::matmul(edge_features, params[edge.input_weights[1]]);
    h = h + params[edge.input_bias];
    return finish_mlp(edge, params, h);
}

ad::Var relation_aggregate(const ad::Var& messages, const RelationEdges& rel, std::size_t num_dst) {
    return ad::segment_max(messages, rel.dst, num_dst);
}

ad::Var partial_vertex_update(const Mlp& vertex, std::span<const ad::Var> params, std::span<const ad::Var> inputs) {
    return apply_mlp(vertex, params, inputs);
}

std::vector<ad::Tensor> merge_coefficients(const HeteroGraph& graph, int dst_type) {
    const int types = graph.num_types();
    const auto rows = std::size_t(graph.count(dst_type));
    std::vector<ad::Tensor> coef(std::size_t(types), ad::Tensor(rows, 1));
    std::vector<int> involved(rows, 0);
    for (int n = 0; n < types; ++n) {
        const RelationEdges& rel = graph.relation(n, dst_type);
        for (int d : rel.dst) coef[std::size_t(n)](std::size_t(d), 0) = 1.0;
    }
    for (std::size_t i = 0; i < rows; ++i) {
        for (int n = 0; n < types; ++n) involved[i] += coef[std::size_t(n)](i, 0) > 0.0 ? 1 : 0;
        if (involved[i] == 0) {
            coef[std::size_t(dst_type)](i, 0) = 1.0;
            continue;
        }
        for (int n = 0; n < types; ++n) coef[std::size_t(n)](i, 0) /= double(involved[i]);
    }
    return coef;
}

ad::Var merge_relations(std::span<const ad::Var> partials, std::span<const ad::Tensor> coefficients) {
    if (partials.size() != coefficients.size()) throw StructuralError("merge_relations: one coefficient column per relation");
    ad::Var acc;
    for (std::size_t n = 0; n < partials.size(); ++n) {
        if (!partials[n].valid()) continue;
        ad::Tape* tape = partials[n].tape();
        const ad::Tensor& c = coefficients[n];
        bool all_one = true;
        for (double v : c.data()) all_one = all_one && v == 1.0;
        ad::Var term = all_one ? partials[n] : ad::mul(partials[n], tape->constant(c));
        acc = acc.valid() ? acc + term : term;
    }
    if (!acc.valid()) throw StructuralError("merge_relations: no relation contributes");
    return acc;
}

ad::Var power_activation(const ad::Var& raw, double p_max) {
    if (!(p_max > 0.0)) throw ValidationError("power_activation: p_max must be > 0");
    ad::Var denom = ad::clamp_min(ad::row_norm(raw), 1.0);
    return ad::scale(ad::div(raw, denom), std::sqrt(p_max));
}

std::vector<ad::Var> forward(ad::Tape& tape, std::span<const ad::Var> params, const HignnParams& hp,
                             const HeteroGraph& graph, double p_max) {
    const ModelArch& arch = hp.arch;
    if (graph.antennas != arch.antennas || graph.options != arch.features)
        throw StructuralError("forward: graph link types or feature layout do not match the model");
    if (params.size() != hp.tensors.size()) throw StructuralError("forward: parameter count mismatch");
    const int types = graph.num_types();

    std::vector<ad::Var> v0, edges;
    for (const auto& v : graph.vertices) v0.push_back(tape.constant(v));
    for (const auto& r : graph.relations) edges.push_back(tape.constant(r.features));

    std::vector<std::vector<ad::Tensor>> coef;
    for (int m = 0; m < types; ++m) coef.push_back(merge_coefficients(graph, m));

    std::vector<ad::Var> state = v0;
    for (int layer = 1; layer <= arch.layers; ++layer) {
        const bool last = layer == arch.layers;
        if (last && arch.decoder == DecoderKind::Readout) {
            std::vector<ad::Var> out;
            for (int m = 0; m < types; ++m) {
                std::vector<ad::Var> in{state[std::size_t(m)]};
                if (arch.decoder_concat_initial) in.push_back(v0[std::size_t(m)]);
                out.push_back(apply_mlp(hp.readout[std::size_t(m)], params, in));
            }
            state = std::move(out);
            break;
        }
        const GnBlock& block = layer == 1 ? hp.encoder : last ? hp.decoder : hp.core;
        std::vector<ad::Var> next;
        for (int m = 0; m < types; ++m) {
            const auto rows = std::size_t(graph.count(m));
            std::vector<ad::Var> partials(static_cast<std::size_t>(types));
            for (int n = 0; n < types; ++n) {
                const std::size_t r = std::size_t(n * types + m);
                const RelationEdges& rel = graph.relations[r];
                bool used = false;
                for (double c : coef[std::size_t(m)][std::size_t(n)].data()) used = used || c != 0.0;
                if (!used) continue;
                const RelationParams& rp = block.relations[r];
                ad::Var msg = edge_messages(rp.edge, params, state[std::size_t(n)], rel, edges[r]);
                ad::Var agg = relation_aggregate(msg, rel, rows);
                std::vector<ad::Var> in;
                if (layer == 1) {
                    in = {v0[std::size_t(m)], agg};
                } else if (last && !arch.decoder_concat_initial) {
                    in = {state[std::size_t(m)], agg};
                } else {
                    in = {state[std::size_t(m)], v0[std::size_t(m)], agg};
                }
                partials[std::size_t(n)] = partial_vertex_update(rp.vertex, params, in);
            }
            if (rows == 0) {
                const std::size_t w = last ? std::size_t(2 * graph.antennas[std::size_t(m)]) : std::size_t(arch.width);
                next.push_back(tape.constant(ad::Tensor(0, w)));
            } else {
                next.push_back(merge_relations(partials, coef[std::size_t(m)]));
            }
        }
        state = std::move(next);
    }

    std::vector<ad::Var> out;
    for (const ad::Var& s : state) out.push_back(power_activation(s, p_max));
    return out;
}

BeamformerSet to_beamformers(std::span<const ad::Tensor> per_type, std::span<const int> antennas) {
    BeamformerSet x;
    for (std::size_t m = 0; m < per_type.size(); ++m) {
        const auto n = std::size_t(antennas[m]);
        const ad::Tensor& t = per_type[m];
        if (t.cols() != 2 * n) throw StructuralError("to_beamformers: output width does not match 2N");
        for (std::size_t i = 0; i < t.rows(); ++i) {
            CVector v(static_cast<Eigen::Index>(n));
            for (std::size_t a = 0; a < n; ++a) v[Eigen::Index(a)] = Complex(t(i, a), t(i, n + a));
            x.x.push_back(std::move(v));
        }
    }
    return x;
}

// ------------------------------------------------------------ inference

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<const Mat>;

MatMap view(const ad::Tensor& t) { return MatMap(t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())); }

// Edges per block in the fused edge pass; keeps the hidden activations in cache.
constexpr std::size_t kEdgeChunk = 256;

void finish_rows(const Mlp& mlp, const std::vector<ad::Tensor>& p, Mat& h) {
    for (std::size_t l = 0; l < mlp.tail_weights.size(); ++l) {
        h = h.cwiseMax(0.0);
        Mat next = h * view(p[mlp.tail_weights[l]]);
        next.rowwise() += view(p[mlp.tail_biases[l]]).row(0);
        h = std::move(next);
    }
}

Mat mlp_rows(const Mlp& mlp, const std::vector<ad::Tensor>& p, std::span<const Mat* const> inputs) {
    if (inputs.size() != mlp.input_weights.size()) throw StructuralError("mlp: input segment count mismatch");
    Mat h = *inputs[0] * view(p[mlp.input_weights[0]]);
    for (std::size_t s = 1; s < inputs.size(); ++s) h.noalias() += *inputs[s] * view(p[mlp.input_weights[s]]);
    h.rowwise() += view(p[mlp.input_bias]).row(0);
    finish_rows(mlp, p, h);
    return h;
}

// Edge MLP and max aggregation in one pass over edge blocks.
Mat aggregate_messages(const Mlp& edge, const std::vector<ad::Tensor>& p, const Mat& src_state,
                       const RelationEdges& rel, std::size_t num_dst) {
    const ad::Tensor& ws = p[edge.input_weights[0]];
    if (std::size_t(src_state.cols()) != ws.rows()) throw StructuralError("edge mlp: source width mismatch");
    const Mat src_proj = src_state * view(ws);
    const MatMap features = view(rel.features);
    const auto bias = view(p[edge.input_bias]).row(0);
    const std::size_t width = edge.output_width(p);
    Mat agg = Mat::Constant(Eigen::Index(num_dst), Eigen::Index(width), -std::numeric_limits<double>::infinity());
    std::vector<char> seen(num_dst, 0);
    for (std::size_t e0 = 0; e0 < rel.num_edges(); e0 += kEdgeChunk) {
        const auto n = Eigen::Index(std::min(kEdgeChunk, rel.num_edges() - e0));
        Mat h = features.middleRows(Eigen::Index(e0), n) * view(p[edge.input_weights[1]]);
        for (Eigen::Index k = 0; k < n; ++k) {
            h.row(k) += src_proj.row(rel.src[std::size_t(e0) + std::size_t(k)]);
            h.row(k) += bias;
        }
        finish_rows(edge, p, h);
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto d = std::size_t(rel.dst[std::size_t(e0) + std::size_t(k)]);
            agg.row(Eigen::Index(d)) = agg.row(Eigen::Index(d)).cwiseMax(h.row(k));
            seen[d] = 1;
        }
    }
    for (std::size_t d = 0; d < num_dst; ++d)
        if (!seen[d]) agg.row(Eigen::Index(d)).setZero();
    return agg;
}

} // namespace

// Same computation as the taped forward without recording a graph.
BeamformerSet forward(const HignnParams& hp, const HeteroGraph& graph, double p_max) {
    const ModelArch& arch = hp.arch;
    if (graph.antennas != arch.antennas || graph.options != arch.features)
        throw StructuralError("forward: graph link types or feature layout do not match the model");
    if (!(p_max > 0.0)) throw ValidationError("power_activation: p_max must be > 0");
    const auto& p = hp.tensors;
    const int types = graph.num_types();

    std::vector<Mat> v0;
    for (const auto& v : graph.vertices) v0.push_back(view(v));
    std::vector<std::vector<ad::Tensor>> coef;
    for (int m = 0; m < types; ++m) coef.push_back(merge_coefficients(graph, m));

    std::vector<Mat> state = v0;
    for (int layer = 1; layer <= arch.layers; ++layer) {
        const bool last = layer == arch.layers;
        std::vector<Mat> next(static_cast<std::size_t>(types));
        if (last && arch.decoder == DecoderKind::Readout) {
            for (int m = 0; m < types; ++m) {
                std::vector<const Mat*> in{&state[std::size_t(m)]};
                if (arch.decoder_concat_initial) in.push_back(&v0[std::size_t(m)]);
                next[std::size_t(m)] = mlp_rows(hp.readout[std::size_t(m)], p, in);
            }
            state = std::move(next);
            break;
        }
        const GnBlock& block = layer == 1 ? hp.encoder : last ? hp.decoder : hp.core;
        for (int m = 0; m < types; ++m) {
            const auto rows = std::size_t(graph.count(m));
            const std::size_t out_w = last ? std::size_t(2 * graph.antennas[std::size_t(m)]) : std::size_t(arch.width);
            Mat acc = Mat::Zero(Eigen::Index(rows), Eigen::Index(out_w));
            for (int n = 0; n < types && rows > 0; ++n) {
                const std::size_t r = std::size_t(n * types + m);
                const ad::Tensor& c = coef[std::size_t(m)][std::size_t(n)];
                bool used = false;
                for (double x : c.data()) used = used || x != 0.0;
                if (!used) continue;
                const RelationParams& rp = block.relations[r];
                const Mat agg = aggregate_messages(rp.edge, p, state[std::size_t(n)], graph.relations[r], rows);
                std::vector<const Mat*> in;
                if (layer == 1) in = {&v0[std::size_t(m)], &agg};
                else if (last && !arch.decoder_concat_initial) in = {&state[std::size_t(m)], &agg};
                else in = {&state[std::size_t(m)], &v0[std::size_t(m)], &agg};
                const Mat partial = mlp_rows(rp.vertex, p, in);
                acc.array() += partial.array().colwise() * view(c).col(0).array();
            }
            next[std::size_t(m)] = std::move(acc);
        }
        state = std::move(next);
    }

    BeamformerSet x;
    const double amp = std::sqrt(p_max);
    for (int m = 0; m < types; ++m) {
        const Mat& s = state[std::size_t(m)];
        const auto n = Eigen::Index(graph.antennas[std::size_t(m)]);
        if (s.cols() != 2 * n) throw StructuralError("to_beamformers: output width does not match 2N");
        for (Eigen::Index i = 0; i < s.rows(); ++i) {
            const double scale = amp / std::max(s.row(i).norm(), 1.0);
            CVector v(n);
            for (Eigen::Index a = 0; a < n; ++a) v[a] = Complex(s(i, a) * scale, s(i, n + a) * scale);
            x.x.push_back(std::move(v));
        }
    }
    return x;
}

BeamformerSet infer(const HignnParams& params, const NetworkInstance& instance, const ChannelSet& channels) {
    const HeteroGraph g = normalize(build_graph(instance, channels, params.arch.features), params.norm);
    return forward(params, g, instance.p_max);
}

// ------------------------------------------------------------ loss

TrainingBatch make_batch(std::span<const HeteroGraph> normalized_graphs, std::span<const Sample* const> samples) {
    if (normalized_graphs.size() != samples.size() || samples.empty())
        throw StructuralError("make_batch: need one graph per sample");
    TrainingBatch batch;
    batch.graph = batch_graphs(normalized_graphs);
    RateBatch& rb = batch.rates;
    rb.num_samples = samples.size();
    rb.p_max = samples.front()->instance.p_max;

    const int types = batch.graph.num_types();
    // row_base[m][s]: first row of sample s within the batched type-m rows.
    std::vector<std::vector<int>> row_base(static_cast<std::size_t>(types));
    std::vector<int> type_base(std::size_t(types), 0);
    int total = 0;
    for (int m = 0; m < types; ++m) {
        type_base[std::size_t(m)] = total;
        int acc = 0;
        for (const Sample* s : samples) {
            row_base[std::size_t(m)].push_back(acc);
            acc += s->instance.counts[std::size_t(m)];
        }
        total += acc;
    }

    rb.weights = ad::Tensor(std::size_t(total), 1);
    rb.noise = ad::Tensor(std::size_t(total), 1);
    rb.direct.resize(std::size_t(types));
    rb.cross.resize(std::size_t(types));

    struct Pair {
        int rx_flat, tx_row;
        const CVector* h;
    };
    std::vector<std::vector<Pair>> direct(static_cast<std::size_t>(types)), cross(static_cast<std::size_t>(types));

    for (std::size_t s = 0; s < samples.size(); ++s) {
        const NetworkInstance& inst = samples[s]->instance;
        const ChannelSet& h = samples[s]->channels;
        if (inst.p_max != rb.p_max) throw StructuralError("make_batch: samples disagree on p_max");
        auto flat = [&](int link) {
            const int m = inst.type_of(link);
            return type_base[std::size_t(m)] + row_base[std::size_t(m)][s] + (link - inst.offset(m));
        };
        for (int rx = 0; rx < inst.num_links(); ++rx) {
            const int f = flat(rx);
            rb.weights(std::size_t(f), 0) = inst.weights[std::size_t(rx)];
            rb.noise(std::size_t(f), 0) = inst.noise_vars[std::size_t(rx)];
            for (int tx = 0; tx < inst.num_links(); ++tx) {
                const int n = inst.type_of(tx);
                const int tx_row = row_base[std::size_t(n)][s] + (tx - inst.offset(n));
                (rx == tx ? direct : cross)[std::size_t(n)].push_back(Pair{f, tx_row, &h(rx, tx)});
            }
        }
    }

    auto fill = [&](std::vector<Pair>& pairs, int n, RateBatch::Group& g) {
        const auto ant = std::size_t(batch.graph.antennas[std::size_t(n)]);
        if (&pairs == &direct[std::size_t(n)])
            std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.rx_flat < b.rx_flat; });
        g.coeff_re = ad::Tensor(pairs.size(), 2 * ant);
        g.coeff_im = ad::Tensor(pairs.size(), 2 * ant);
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            g.tx_row.push_back(pairs[p].tx_row);
            g.rx.push_back(pairs[p].rx_flat);
            const CVector& h = *pairs[p].h;
            for (std::size_t a = 0; a < ant; ++a) {
                const double re = h[Eigen::Index(a)].real();
                const double im = h[Eigen::Index(a)].imag();
                g.coeff_re(p, a) = re;
                g.coeff_re(p, ant + a) = im;
                g.coeff_im(p, a) = -im;
                g.coeff_im(p, ant + a) = re;
            }
        }
    };
    for (int n = 0; n < types; ++n) {
        fill(direct[std::size_t(n)], n, rb.direct[std::size_t(n)]);
        fill(cross[std::size_t(n)], n, rb.cross[std::size_t(n)]);
    }
    return batch;
}

namespace {

// |h^H x|^2 for every pair of a group, as a column.
ad::Var pair_power(ad::Tape& tape, const ad::Var& outputs, const RateBatch::Group& g) {
    ad::Var xg = ad::gather_rows(outputs, g.tx_row);
    ad::Var re = ad::sum(ad::mul(xg, tape.constant(g.coeff_re)), 1);
    ad::Var im = ad::sum(ad::mul(xg, tape.constant(g.coeff_im)), 1);
    return ad::square(re) + ad::square(im);
}

} // namespace

ad::Var negative_mean_wsr(std::span<const ad::Var> outputs, const RateBatch& rates) {
    if (outputs.empty() || outputs.size() != rates.direct.size())
        throw StructuralError("negative_mean_wsr: one output tensor per link type required");
    ad::Tape& tape = *outputs.front().tape();
    const std::size_t total = rates.weights.rows();

    std::vector<ad::Var> signal;
    for (std::size_t m = 0; m < outputs.size(); ++m) signal.push_back(pair_power(tape, outputs[m], rates.direct[m]));
    ad::Var sig = ad::concat(signal, 0);

    ad::Var denom = tape.constant(rates.noise);
    for (std::size_t n = 0; n < outputs.size(); ++n) {
        const auto& g = rates.cross[n];
        if (g.rx.empty()) continue;
        denom = denom + ad::scatter_add_rows(pair_power(tape, outputs[n], g), g.rx, total);
    }
    ad::Var rate = ad::log1p(ad::div(sig, denom));
    ad::Var wsr = ad::sum(ad::mul(rate, tape.constant(rates.weights)));
    return ad::scale(wsr, -1.0 / double(rates.num_samples));
}

ad::Var loss(ad::Tape& tape, std::span<const ad::Var> params, const HignnParams& hp, const TrainingBatch& batch) {
    auto out = forward(tape, params, hp, batch.graph, batch.rates.p_max);
    return negative_mean_wsr(out, batch.rates);
}

double loss_value(const HignnParams& params, const TrainingBatch& batch) {
    ad::Tape tape;
    auto vars = bind_params(tape, params, false);
    return loss(tape, vars, params, batch).value().item();
}

std::vector<ad::Tensor> loss_gradient(const HignnParams& params, const TrainingBatch& batch, double* value) {
    ad::Tape tape;
    auto vars = bind_params(tape, params, true);
    ad::Var l = loss(tape, vars, params, batch);
    tape.backward(l);
    if (value) *value = l.value().item();
    std::vector<ad::Tensor> grads;
    grads.reserve(vars.size());
    for (std::size_t k = 0; k < vars.size(); ++k) {
        const ad::Tensor& g = vars[k].grad();
        grads.push_back(g.empty() ? ad::Tensor(params.tensors[k].rows(), params.tensors[k].cols()) : g);
    }
    return grads;
}

} // namespace hignn
