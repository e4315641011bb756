#pragma once

// Heterogeneous interference graphs: one vertex per link, one directed edge
// per (interfering transmitter -> interfered receiver) pair, typed by the
// relation (source link type, destination link type).

#include <span>
#include <vector>

#include "hignn/tensor.hpp"
#include "hignn/types.hpp"

namespace hignn {

enum class EdgeFeatures {
    Incoming,      ///< [Re h(i,j); Im h(i,j)], width 2 N_src
    Bidirectional, ///< incoming followed by [Re h(j,i); Im h(j,i)], width 2 N_src + 2 N_dst
};

struct GraphOptions {
    EdgeFeatures edge_features = EdgeFeatures::Incoming;
    /// Appends [weight, noise variance] to every vertex feature.
    bool vertex_extras = false;

    int vertex_width(int antennas) const { return 2 * antennas + (vertex_extras ? 2 : 0); }
    int edge_width(int src_antennas, int dst_antennas) const {
        return 2 * src_antennas + (edge_features == EdgeFeatures::Bidirectional ? 2 * dst_antennas : 0);
    }

    bool operator==(const GraphOptions&) const = default;
};

/// Edges of one relation (src_type -> dst_type), sorted by (dst, src).
struct RelationEdges {
    int src_type = 0;
    int dst_type = 0;
    std::vector<int> src;
    std::vector<int> dst;
    ad::Tensor features; ///< one row per edge

    std::size_t num_edges() const noexcept { return src.size(); }
    bool operator==(const RelationEdges&) const = default;
};

struct HeteroGraph {
    std::vector<int> antennas;
    GraphOptions options;
    std::vector<ad::Tensor> vertices;     ///< per type, K_m rows
    std::vector<RelationEdges> relations; ///< relation (n, m) stored at n * M + m

    int num_types() const noexcept { return int(antennas.size()); }
    int count(int type_index) const { return int(vertices[std::size_t(type_index)].rows()); }
    const RelationEdges& relation(int src_type, int dst_type) const {
        return relations[std::size_t(src_type * num_types() + dst_type)];
    }
    std::size_t num_edges() const;

    /// Sources j of type `src_type` with an edge into vertex i of `dst_type`.
    std::vector<int> neighbors(int src_type, int dst_type, int i) const;

    bool operator==(const HeteroGraph&) const = default;
};

/// Builds the complete interference heterograph (no self loops).
HeteroGraph build_graph(const NetworkInstance& instance, const ChannelSet& channels, const GraphOptions& options = {});

/// Relabels vertices within each type and reindexes both edge endpoints.
HeteroGraph apply_permutation(const HeteroGraph& graph, const PermutationSpec& perm);

/// Disjoint union; vertices of graph b follow those of graph a within each type.
HeteroGraph batch_graphs(std::span<const HeteroGraph> graphs);

/// Multiplicative feature scales: one per vertex type and one per relation.
struct NormStats {
    std::vector<double> vertex_scale;
    std::vector<double> relation_scale; ///< indexed like HeteroGraph::relations

    static NormStats identity(int num_types);
    bool operator==(const NormStats&) const = default;
};

HeteroGraph normalize(const HeteroGraph& graph, const NormStats& stats);

} // namespace hignn
