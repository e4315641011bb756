#pragma once

#include <filesystem>
#include <string>

#include "hignn/channel_sim.hpp"
#include "hignn/types.hpp"

namespace testing {

inline hignn::NetworkInstance make_instance(const std::vector<int>& counts, const std::vector<int>& antennas) {
    hignn::NetworkInstance inst;
    for (std::size_t m = 0; m < counts.size(); ++m) inst.types.push_back({int(m) + 1, antennas[m]});
    inst.counts = counts;
    int k = 0;
    for (int c : counts) k += c;
    for (int i = 0; i < k; ++i) {
        inst.tx_pos.push_back({double(i), 0.0});
        inst.rx_pos.push_back({double(i), 1.0});
    }
    inst.weights.assign(std::size_t(k), 1.0);
    inst.noise_vars.assign(std::size_t(k), 1.0);
    inst.p_max = 1.0;
    inst.area_length = 100.0;
    return inst;
}

/// Every channel entry set to `value` in each antenna coordinate.
inline hignn::ChannelSet constant_channels(const hignn::NetworkInstance& inst, hignn::Complex value) {
    hignn::ChannelSet h(inst.num_links());
    for (int r = 0; r < inst.num_links(); ++r)
        for (int t = 0; t < inst.num_links(); ++t)
            h(r, t) = hignn::CVector::Constant(inst.link_antennas(t), value);
    return h;
}

inline std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "hignn_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace testing
