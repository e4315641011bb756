#include "hignn/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hignn/error.hpp"

namespace hignn {

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

int NetworkInstance::num_links() const { return std::accumulate(counts.begin(), counts.end(), 0); }

int NetworkInstance::offset(int type_index) const {
    return std::accumulate(counts.begin(), counts.begin() + type_index, 0);
}

int NetworkInstance::type_of(int link) const {
    int end = 0;
    for (std::size_t m = 0; m < counts.size(); ++m) {
        end += counts[m];
        if (link < end) return int(m);
    }
    throw StructuralError("link index " + std::to_string(link) + " out of range");
}

void NetworkInstance::validate() const {
    if (types.empty() || types.size() != counts.size())
        throw StructuralError("instance: " + std::to_string(types.size()) + " types but " +
                              std::to_string(counts.size()) + " counts");
    for (std::size_t m = 0; m < types.size(); ++m) {
        if (types[m].type_id != int(m) + 1) throw ValidationError("instance: type ids must be contiguous from 1");
        if (types[m].num_tx_antennas < 1) throw ValidationError("instance: antenna count must be >= 1");
        if (counts[m] < 0) throw ValidationError("instance: negative link count");
    }
    const auto k = std::size_t(num_links());
    if (k < 1) throw ValidationError("instance: needs at least one link");
    if (tx_pos.size() != k || rx_pos.size() != k || weights.size() != k || noise_vars.size() != k)
        throw StructuralError("instance: per-link arrays must have " + std::to_string(k) + " entries");
    for (std::size_t i = 0; i < k; ++i) {
        if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) throw ValidationError("instance: weights must be finite and >= 0");
        if (!(noise_vars[i] > 0.0) || !std::isfinite(noise_vars[i])) throw ValidationError("instance: noise variances must be > 0");
    }
    if (!(p_max > 0.0) || !std::isfinite(p_max)) throw ValidationError("instance: p_max must be > 0");
}

ChannelSet::ChannelSet(int num_links)
    : links_(num_links), entries_(std::size_t(num_links) * std::size_t(num_links)) {}

void ChannelSet::validate(const NetworkInstance& instance) const {
    const int k = instance.num_links();
    if (links_ != k)
        throw StructuralError("channels: built for " + std::to_string(links_) + " links, instance has " + std::to_string(k));
    for (int rx = 0; rx < k; ++rx) {
        for (int tx = 0; tx < k; ++tx) {
            const CVector& h = (*this)(rx, tx);
            if (h.size() != instance.link_antennas(tx))
                throw StructuralError("channels: missing or mis-sized entry h(" + std::to_string(rx) + ", " +
                                      std::to_string(tx) + ")");
            if (!h.allFinite())
                throw ValidationError("channels: non-finite entry h(" + std::to_string(rx) + ", " + std::to_string(tx) + ")");
        }
    }
}

bool ChannelSet::operator==(const ChannelSet& other) const {
    if (links_ != other.links_) return false;
    for (std::size_t k = 0; k < entries_.size(); ++k) {
        if (entries_[k].size() != other.entries_[k].size() || entries_[k] != other.entries_[k]) return false;
    }
    return true;
}

double BeamformerSet::max_power() const {
    double p = 0.0;
    for (const CVector& v : x) p = std::max(p, v.squaredNorm());
    return p;
}

bool BeamformerSet::feasible(double p_max, double slack) const { return max_power() <= p_max + slack; }

bool BeamformerSet::operator==(const BeamformerSet& other) const {
    if (x.size() != other.x.size()) return false;
    for (std::size_t k = 0; k < x.size(); ++k)
        if (x[k].size() != other.x[k].size() || x[k] != other.x[k]) return false;
    return true;
}

BeamformerSet zero_beamformers(const NetworkInstance& instance) {
    BeamformerSet out;
    for (int k = 0; k < instance.num_links(); ++k) out.x.push_back(CVector::Zero(instance.link_antennas(k)));
    return out;
}

PermutationSpec PermutationSpec::identity(const std::vector<int>& counts) {
    PermutationSpec p;
    for (int k : counts) {
        std::vector<int> map(static_cast<std::size_t>(k));
        std::iota(map.begin(), map.end(), 0);
        p.maps.push_back(std::move(map));
    }
    return p;
}

PermutationSpec PermutationSpec::random(const std::vector<int>& counts, Rng& rng) {
    PermutationSpec p = identity(counts);
    for (auto& map : p.maps) std::shuffle(map.begin(), map.end(), rng);
    return p;
}

void PermutationSpec::validate(const std::vector<int>& counts) const {
    if (maps.size() != counts.size())
        throw ValidationError("permutation: " + std::to_string(maps.size()) + " maps for " +
                              std::to_string(counts.size()) + " types");
    for (std::size_t m = 0; m < maps.size(); ++m) {
        if (int(maps[m].size()) != counts[m]) throw ValidationError("permutation: size mismatch for type " + std::to_string(m + 1));
        std::vector<char> seen(maps[m].size(), 0);
        for (int v : maps[m]) {
            if (v < 0 || std::size_t(v) >= seen.size() || seen[std::size_t(v)])
                throw ValidationError("permutation: map for type " + std::to_string(m + 1) + " is not a bijection");
            seen[std::size_t(v)] = 1;
        }
    }
}

PermutationSpec PermutationSpec::inverse() const {
    PermutationSpec inv;
    for (const auto& map : maps) {
        std::vector<int> back(map.size());
        for (std::size_t i = 0; i < map.size(); ++i) back[std::size_t(map[i])] = int(i);
        inv.maps.push_back(std::move(back));
    }
    return inv;
}

int PermutationSpec::map_flat(int link, const std::vector<int>& counts) const {
    int base = 0;
    for (std::size_t m = 0; m < counts.size(); ++m) {
        if (link < base + counts[m]) return base + maps[m][std::size_t(link - base)];
        base += counts[m];
    }
    throw StructuralError("permutation: link index out of range");
}

NetworkInstance permute_instance(const NetworkInstance& instance, const PermutationSpec& perm) {
    perm.validate(instance.counts);
    NetworkInstance out = instance;
    for (int k = 0; k < instance.num_links(); ++k) {
        const auto dst = std::size_t(perm.map_flat(k, instance.counts));
        out.tx_pos[dst] = instance.tx_pos[std::size_t(k)];
        out.rx_pos[dst] = instance.rx_pos[std::size_t(k)];
        out.weights[dst] = instance.weights[std::size_t(k)];
        out.noise_vars[dst] = instance.noise_vars[std::size_t(k)];
    }
    return out;
}

ChannelSet permute_channels(const ChannelSet& channels, const NetworkInstance& instance, const PermutationSpec& perm) {
    perm.validate(instance.counts);
    const int k = channels.num_links();
    ChannelSet out(k);
    for (int rx = 0; rx < k; ++rx)
        for (int tx = 0; tx < k; ++tx)
            out(perm.map_flat(rx, instance.counts), perm.map_flat(tx, instance.counts)) = channels(rx, tx);
    return out;
}

BeamformerSet permute_beamformers(const BeamformerSet& x, const std::vector<int>& counts, const PermutationSpec& perm) {
    perm.validate(counts);
    if (int(x.size()) != std::accumulate(counts.begin(), counts.end(), 0))
        throw ValidationError("permute_beamformers: size mismatch");
    BeamformerSet out = x;
    for (int k = 0; k < int(x.size()); ++k) out.x[std::size_t(perm.map_flat(k, counts))] = x.x[std::size_t(k)];
    return out;
}

} // namespace hignn
