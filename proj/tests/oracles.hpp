#pragma once

// Plain-loop reference implementations, written independently of the library
// code paths they are compared against.

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hignn/model.hpp"
#include "hignn/types.hpp"

namespace oracle {

using namespace hignn;

using Vec = std::vector<double>;

// Plain-loop evaluation of a parameter set whose first-layer blocks are
// stacked back into one weight acting on the concatenated input.
struct PlainMlp {
    std::vector<std::vector<Vec>> w; // per layer, row-major [in][out]
    std::vector<Vec> b;

    PlainMlp(const HignnParams& p, const std::string& prefix) {
        std::map<std::string, const ad::Tensor*> by;
        for (std::size_t k = 0; k < p.names.size(); ++k) by[p.names[k]] = &p.tensors[k];
        std::vector<Vec> first;
        for (int s = 0; by.count(prefix + ".w0_" + std::to_string(s)); ++s) {
            const ad::Tensor& t = *by[prefix + ".w0_" + std::to_string(s)];
            for (std::size_t r = 0; r < t.rows(); ++r) first.emplace_back(t.row(r).begin(), t.row(r).end());
        }
        w.push_back(first);
        b.emplace_back(by[prefix + ".b0"]->data().begin(), by[prefix + ".b0"]->data().end());
        for (int l = 1; by.count(prefix + ".w" + std::to_string(l)); ++l) {
            const ad::Tensor& t = *by[prefix + ".w" + std::to_string(l)];
            std::vector<Vec> m;
            for (std::size_t r = 0; r < t.rows(); ++r) m.emplace_back(t.row(r).begin(), t.row(r).end());
            w.push_back(m);
            const ad::Tensor& bb = *by[prefix + ".b" + std::to_string(l)];
            b.emplace_back(bb.data().begin(), bb.data().end());
        }
    }

    Vec operator()(const Vec& x) const {
        Vec h = x;
        for (std::size_t l = 0; l < w.size(); ++l) {
            if (l > 0)
                for (double& v : h) v = std::max(v, 0.0);
            if (h.size() != w[l].size()) throw std::logic_error("PlainMlp: input width mismatch");
            Vec out = b[l];
            for (std::size_t i = 0; i < h.size(); ++i)
                for (std::size_t o = 0; o < out.size(); ++o) out[o] += h[i] * w[l][i][o];
            h = std::move(out);
        }
        return h;
    }
};

inline Vec cat(std::initializer_list<Vec> parts) {
    Vec out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

inline Vec re_im(const CVector& v) {
    Vec out;
    for (Eigen::Index a = 0; a < v.size(); ++a) out.push_back(v[a].real());
    for (Eigen::Index a = 0; a < v.size(); ++a) out.push_back(v[a].imag());
    return out;
}

// Homogeneous graph convolution written directly from the update equations.
inline BeamformerSet homogeneous_oracle(const HignnParams& p, const NetworkInstance& inst, const ChannelSet& h) {
    const int k = inst.num_links();
    const int layers = p.arch.layers;
    std::vector<Vec> v0(static_cast<std::size_t>(k)), v;
    for (int i = 0; i < k; ++i) v0[std::size_t(i)] = re_im(h(i, i));
    v = v0;
    for (int l = 1; l <= layers; ++l) {
        const std::string tag = l == 1 ? "enc" : l == layers ? "dec" : "core";
        const PlainMlp edge(p, tag + ".r1_1.edge"), vertex(p, tag + ".r1_1.vertex");
        std::vector<Vec> next(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            Vec agg(std::size_t(p.arch.width), 0.0);
            bool first = true;
            for (int j = 0; j < k; ++j) {
                if (j == i) continue;
                const Vec m = edge(cat({v[std::size_t(j)], re_im(h(i, j))}));
                for (std::size_t c = 0; c < agg.size(); ++c) agg[c] = first ? m[c] : std::max(agg[c], m[c]);
                first = false;
            }
            next[std::size_t(i)] = l == 1 ? vertex(cat({v0[std::size_t(i)], agg}))
                                          : vertex(cat({v[std::size_t(i)], v0[std::size_t(i)], agg}));
        }
        v = std::move(next);
    }
    BeamformerSet x;
    for (int i = 0; i < k; ++i) {
        const Vec& o = v[std::size_t(i)];
        const std::size_t n = o.size() / 2;
        double norm = 0.0;
        for (double c : o) norm += c * c;
        const double s = std::sqrt(inst.p_max) / std::max(std::sqrt(norm), 1.0);
        CVector out(static_cast<Eigen::Index>(n));
        for (std::size_t a = 0; a < n; ++a) out[Eigen::Index(a)] = Complex(o[a] * s, o[n + a] * s);
        x.x.push_back(out);
    }
    return x;
}

inline double max_rel_diff(const BeamformerSet& a, const BeamformerSet& b) {
    double d = 0.0, s = 1e-300;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d = std::max(d, (a[i] - b[i]).cwiseAbs().maxCoeff());
        s = std::max(s, a[i].cwiseAbs().maxCoeff());
    }
    return d / s;
}

// Exhaustive search over per-link powers {0, 0.05, ..., 1} for SISO links.
inline double grid_optimum(const NetworkInstance& inst, const ChannelSet& h) {
    const int k = inst.num_links();
    std::vector<int> level(std::size_t(k), 0);
    double best = 0.0;
    while (true) {
        double wsr = 0.0;
        for (int i = 0; i < k; ++i) {
            double interference = inst.noise_vars[std::size_t(i)];
            for (int j = 0; j < k; ++j)
                if (j != i) interference += std::norm(h(i, j)[0]) * 0.05 * level[std::size_t(j)];
            wsr += inst.weights[std::size_t(i)] *
                   std::log(1.0 + std::norm(h(i, i)[0]) * 0.05 * level[std::size_t(i)] / interference);
        }
        best = std::max(best, wsr);
        int d = 0;
        while (d < k && ++level[std::size_t(d)] > 20) level[std::size_t(d++)] = 0;
        if (d == k) break;
    }
    return best;
}

} // namespace oracle
