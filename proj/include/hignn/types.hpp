#pragma once

#include <Eigen/Core>

#include <complex>
#include <cstdint>
#include <random>
#include <vector>

namespace hignn {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using Rng = std::mt19937_64;

/// One class of links sharing a transmit antenna count.
struct LinkTypeSpec {
    int type_id = 1;
    int num_tx_antennas = 1;

    bool operator==(const LinkTypeSpec&) const = default;
};

struct Point {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Point&) const = default;
};

double distance(const Point& a, const Point& b);

/// One D2D network realization. Links are stored flat and grouped by type:
/// link `offset(m) + i` is the i-th link of the m-th type (zero-based).
struct NetworkInstance {
    std::vector<LinkTypeSpec> types;
    std::vector<int> counts;
    std::vector<Point> tx_pos;
    std::vector<Point> rx_pos;
    std::vector<double> weights;
    std::vector<double> noise_vars;
    double p_max = 1.0;
    double area_length = 0.0;

    int num_types() const { return int(types.size()); }
    int num_links() const;
    int offset(int type_index) const;
    int type_of(int link) const;
    int antennas(int type_index) const { return types[std::size_t(type_index)].num_tx_antennas; }
    int link_antennas(int link) const { return antennas(type_of(link)); }

    /// Throws ValidationError / StructuralError on broken invariants.
    void validate() const;

    bool operator==(const NetworkInstance&) const = default;
};

/// Channel vectors h(rx, tx) for every ordered (receiver, transmitter) pair,
/// including the direct links rx == tx. h(rx, tx) has N_{type(tx)} entries.
class ChannelSet {
public:
    ChannelSet() = default;
    explicit ChannelSet(int num_links);

    int num_links() const noexcept { return links_; }
    const CVector& operator()(int rx, int tx) const { return entries_[std::size_t(rx) * std::size_t(links_) + std::size_t(tx)]; }
    CVector& operator()(int rx, int tx) { return entries_[std::size_t(rx) * std::size_t(links_) + std::size_t(tx)]; }

    /// Completeness and finiteness against the instance's antenna counts.
    void validate(const NetworkInstance& instance) const;

    bool operator==(const ChannelSet& other) const;

private:
    int links_ = 0;
    std::vector<CVector> entries_;
};

/// One beamforming vector per link, in the instance's flat link order.
struct BeamformerSet {
    std::vector<CVector> x;

    std::size_t size() const noexcept { return x.size(); }
    CVector& operator[](std::size_t k) { return x[k]; }
    const CVector& operator[](std::size_t k) const { return x[k]; }

    double max_power() const;
    bool feasible(double p_max, double slack = 1e-6) const;
    bool operator==(const BeamformerSet& other) const;
};

BeamformerSet zero_beamformers(const NetworkInstance& instance);

/// Per-type relabeling: element i of type m moves to position maps[m][i].
struct PermutationSpec {
    std::vector<std::vector<int>> maps;

    static PermutationSpec identity(const std::vector<int>& counts);
    static PermutationSpec random(const std::vector<int>& counts, Rng& rng);

    void validate(const std::vector<int>& counts) const;
    PermutationSpec inverse() const;

    /// Maps a flat link index of an instance with the given per-type counts.
    int map_flat(int link, const std::vector<int>& counts) const;
};

NetworkInstance permute_instance(const NetworkInstance& instance, const PermutationSpec& perm);
ChannelSet permute_channels(const ChannelSet& channels, const NetworkInstance& instance, const PermutationSpec& perm);
BeamformerSet permute_beamformers(const BeamformerSet& x, const std::vector<int>& counts, const PermutationSpec& perm);

} // namespace hignn
