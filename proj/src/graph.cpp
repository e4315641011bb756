#include "hignn/graph.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "hignn/error.hpp"

namespace hignn {

namespace {

void write_complex(std::span<double> row, std::size_t at, const CVector& h) {
    const auto n = std::size_t(h.size());
    for (std::size_t a = 0; a < n; ++a) {
        row[at + a] = h[Eigen::Index(a)].real();
        row[at + n + a] = h[Eigen::Index(a)].imag();
    }
}

// Sorts edges by (dst, src), carrying the feature rows along.
void sort_edges(RelationEdges& rel) {
    std::vector<std::size_t> order(rel.num_edges());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return rel.dst[a] != rel.dst[b] ? rel.dst[a] < rel.dst[b] : rel.src[a] < rel.src[b];
    });
    RelationEdges out{rel.src_type, rel.dst_type, {}, {}, ad::Tensor(rel.features.rows(), rel.features.cols())};
    out.src.reserve(order.size());
    out.dst.reserve(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        out.src.push_back(rel.src[order[k]]);
        out.dst.push_back(rel.dst[order[k]]);
        auto from = rel.features.row(order[k]);
        std::copy(from.begin(), from.end(), out.features.row(k).begin());
    }
    rel = std::move(out);
}

} // namespace

std::size_t HeteroGraph::num_edges() const {
    std::size_t n = 0;
    for (const auto& r : relations) n += r.num_edges();
    return n;
}

std::vector<int> HeteroGraph::neighbors(int src_type, int dst_type, int i) const {
    const RelationEdges& rel = relation(src_type, dst_type);
    std::vector<int> out;
    for (std::size_t e = 0; e < rel.num_edges(); ++e)
        if (rel.dst[e] == i) out.push_back(rel.src[e]);
    return out;
}

HeteroGraph build_graph(const NetworkInstance& instance, const ChannelSet& channels, const GraphOptions& options) {
    instance.validate();
    channels.validate(instance);
    const int types = instance.num_types();

    HeteroGraph g;
    g.options = options;
    for (int m = 0; m < types; ++m) g.antennas.push_back(instance.antennas(m));

    for (int m = 0; m < types; ++m) {
        const int n_ant = instance.antennas(m);
        ad::Tensor v(std::size_t(instance.counts[std::size_t(m)]), std::size_t(options.vertex_width(n_ant)));
        for (int i = 0; i < instance.counts[std::size_t(m)]; ++i) {
            const int link = instance.offset(m) + i;
            auto row = v.row(std::size_t(i));
            write_complex(row, 0, channels(link, link));
            if (options.vertex_extras) {
                row[std::size_t(2 * n_ant)] = instance.weights[std::size_t(link)];
                row[std::size_t(2 * n_ant + 1)] = instance.noise_vars[std::size_t(link)];
            }
        }
        g.vertices.push_back(std::move(v));
    }

    for (int n = 0; n < types; ++n) {
        for (int m = 0; m < types; ++m) {
            RelationEdges rel;
            rel.src_type = n;
            rel.dst_type = m;
            const int kn = instance.counts[std::size_t(n)];
            const int km = instance.counts[std::size_t(m)];
            const auto width = std::size_t(options.edge_width(instance.antennas(n), instance.antennas(m)));
            const std::size_t edges = n == m ? std::size_t(km) * std::size_t(km - 1 > 0 ? km - 1 : 0)
                                             : std::size_t(kn) * std::size_t(km);
            rel.features = ad::Tensor(edges, width);
            std::size_t e = 0;
            for (int i = 0; i < km; ++i) {
                for (int j = 0; j < kn; ++j) {
                    if (n == m && i == j) continue;
                    const int rx = instance.offset(m) + i;
                    const int tx = instance.offset(n) + j;
                    auto row = rel.features.row(e);
                    write_complex(row, 0, channels(rx, tx));
                    if (options.edge_features == EdgeFeatures::Bidirectional)
                        write_complex(row, std::size_t(2 * instance.antennas(n)), channels(tx, rx));
                    rel.src.push_back(j);
                    rel.dst.push_back(i);
                    ++e;
                }
            }
            g.relations.push_back(std::move(rel));
        }
    }
    return g;
}

HeteroGraph apply_permutation(const HeteroGraph& graph, const PermutationSpec& perm) {
    std::vector<int> counts;
    for (int m = 0; m < graph.num_types(); ++m) counts.push_back(graph.count(m));
    perm.validate(counts);

    HeteroGraph out = graph;
    for (int m = 0; m < graph.num_types(); ++m) {
        const ad::Tensor& v = graph.vertices[std::size_t(m)];
        ad::Tensor& w = out.vertices[std::size_t(m)];
        for (std::size_t i = 0; i < v.rows(); ++i) {
            auto from = v.row(i);
            std::copy(from.begin(), from.end(), w.row(std::size_t(perm.maps[std::size_t(m)][i])).begin());
        }
    }
    for (RelationEdges& rel : out.relations) {
        const auto& src_map = perm.maps[std::size_t(rel.src_type)];
        const auto& dst_map = perm.maps[std::size_t(rel.dst_type)];
        for (std::size_t e = 0; e < rel.num_edges(); ++e) {
            rel.src[e] = src_map[std::size_t(rel.src[e])];
            rel.dst[e] = dst_map[std::size_t(rel.dst[e])];
        }
        sort_edges(rel);
    }
    return out;
}

HeteroGraph batch_graphs(std::span<const HeteroGraph> graphs) {
    if (graphs.empty()) throw StructuralError("batch_graphs: empty batch");
    const HeteroGraph& first = graphs.front();
    const int types = first.num_types();
    for (const HeteroGraph& g : graphs)
        if (g.antennas != first.antennas || g.options != first.options)
            throw StructuralError("batch_graphs: graphs disagree on link types or feature layout");

    HeteroGraph out;
    out.antennas = first.antennas;
    out.options = first.options;
    for (int m = 0; m < types; ++m) {
        std::size_t rows = 0;
        for (const HeteroGraph& g : graphs) rows += std::size_t(g.count(m));
        ad::Tensor v(rows, first.vertices[std::size_t(m)].cols());
        std::size_t at = 0;
        for (const HeteroGraph& g : graphs) {
            auto src = g.vertices[std::size_t(m)].data();
            std::copy(src.begin(), src.end(), v.data().begin() + std::ptrdiff_t(at * v.cols()));
            at += std::size_t(g.count(m));
        }
        out.vertices.push_back(std::move(v));
    }
    for (std::size_t r = 0; r < first.relations.size(); ++r) {
        const RelationEdges& proto = first.relations[r];
        RelationEdges rel;
        rel.src_type = proto.src_type;
        rel.dst_type = proto.dst_type;
        std::size_t edges = 0;
        for (const HeteroGraph& g : graphs) edges += g.relations[r].num_edges();
        rel.features = ad::Tensor(edges, proto.features.cols());
        rel.src.reserve(edges);
        rel.dst.reserve(edges);
        int src_base = 0, dst_base = 0;
        std::size_t at = 0;
        for (const HeteroGraph& g : graphs) {
            const RelationEdges& gr = g.relations[r];
            for (std::size_t e = 0; e < gr.num_edges(); ++e) {
                rel.src.push_back(gr.src[e] + src_base);
                rel.dst.push_back(gr.dst[e] + dst_base);
            }
            auto src = gr.features.data();
            std::copy(src.begin(), src.end(), rel.features.data().begin() + std::ptrdiff_t(at * rel.features.cols()));
            at += gr.num_edges();
            src_base += g.count(rel.src_type);
            dst_base += g.count(rel.dst_type);
        }
        out.relations.push_back(std::move(rel));
    }
    return out;
}

NormStats NormStats::identity(int num_types) {
    return NormStats{std::vector<double>(std::size_t(num_types), 1.0),
                     std::vector<double>(std::size_t(num_types * num_types), 1.0)};
}

HeteroGraph normalize(const HeteroGraph& graph, const NormStats& stats) {
    if (stats.vertex_scale.size() != graph.vertices.size() || stats.relation_scale.size() != graph.relations.size())
        throw StructuralError("normalize: statistics do not match the graph's types");
    HeteroGraph out = graph;
    for (std::size_t m = 0; m < out.vertices.size(); ++m)
        for (double& v : out.vertices[m].data()) v *= stats.vertex_scale[m];
    for (std::size_t r = 0; r < out.relations.size(); ++r)
        for (double& v : out.relations[r].features.data()) v *= stats.relation_scale[r];
    return out;
}

} // namespace hignn
