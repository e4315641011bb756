#include "hignn/channel_sim.hpp"

#include <algorithm>
#include <fstream>
#include <numbers>
#include <numeric>
#include <thread>

#include "binary_io.hpp"
#include "hignn/config.hpp"
#include "hignn/error.hpp"

namespace hignn {

using nlohmann::json;

int ScenarioConfig::num_links() const { return std::accumulate(counts.begin(), counts.end(), 0); }

void ScenarioConfig::validate() const {
    if (counts.empty() || counts.size() != antennas.size())
        throw ConfigError("scenario: counts and antennas must be non-empty and of equal length");
    for (std::size_t m = 0; m < counts.size(); ++m) {
        if (counts[m] < 0) throw ConfigError("scenario: negative link count");
        if (antennas[m] < 1) throw ConfigError("scenario: antenna counts must be >= 1");
    }
    if (num_links() < 1) throw ConfigError("scenario: needs at least one link");
    if (!(d_min > 0.0 && d_min < d_max && d_max < area_length))
        throw ConfigError("scenario: requires 0 < d_min < d_max < area_length");
    if (!(p_max > 0.0)) throw ConfigError("scenario: p_max must be > 0");
    if (!(noise_var > 0.0)) throw ConfigError("scenario: noise_var must be > 0");
    if (!(large_scale.pathloss_exponent > 0.0)) throw ConfigError("scenario: pathloss_exponent must be > 0");
    if (!(large_scale.ref_distance_m > 0.0)) throw ConfigError("scenario: ref_distance_m must be > 0");
    if (!(large_scale.shadowing_db >= 0.0)) throw ConfigError("scenario: shadowing_db must be >= 0");
    if (weights == WeightsMode::Explicit) {
        if (int(explicit_weights.size()) != num_links())
            throw ConfigError("scenario: explicit_weights needs one weight per link");
        for (double w : explicit_weights)
            if (!(w >= 0.0)) throw ConfigError("scenario: weights must be >= 0");
    }
}

json ScenarioConfig::to_json() const {
    json j;
    j["area_length"] = area_length;
    j["counts"] = counts;
    j["antennas"] = antennas;
    j["d_min"] = d_min;
    j["d_max"] = d_max;
    j["p_max"] = p_max;
    j["noise_var"] = noise_var;
    j["weights"] = weights == WeightsMode::Ones ? "ones" : "explicit";
    if (weights == WeightsMode::Explicit) j["explicit_weights"] = explicit_weights;
    j["large_scale"] = {{"ref_distance_m", large_scale.ref_distance_m},
                        {"pathloss_exponent", large_scale.pathloss_exponent},
                        {"ref_gain_db", large_scale.ref_gain_db},
                        {"shadowing_db", large_scale.shadowing_db}};
    j["seed"] = seed;
    return j;
}

ScenarioConfig ScenarioConfig::from_json(const json& j) {
    reject_unknown_keys(j,
                        {"area_length", "counts", "antennas", "d_min", "d_max", "p_max", "noise_var", "weights",
                         "explicit_weights", "large_scale", "seed"},
                        "scenario");
    ScenarioConfig c;
    read_key(j, "area_length", c.area_length, "scenario");
    read_key(j, "counts", c.counts, "scenario");
    read_key(j, "antennas", c.antennas, "scenario");
    read_key(j, "d_min", c.d_min, "scenario");
    read_key(j, "d_max", c.d_max, "scenario");
    read_key(j, "p_max", c.p_max, "scenario");
    read_key(j, "noise_var", c.noise_var, "scenario");
    std::string mode = "ones";
    read_key(j, "weights", mode, "scenario");
    if (mode == "ones") c.weights = WeightsMode::Ones;
    else if (mode == "explicit") c.weights = WeightsMode::Explicit;
    else throw ConfigError("scenario.weights: expected \"ones\" or \"explicit\"");
    read_key(j, "explicit_weights", c.explicit_weights, "scenario");
    if (auto it = j.find("large_scale"); it != j.end()) {
        reject_unknown_keys(*it, {"ref_distance_m", "pathloss_exponent", "ref_gain_db", "shadowing_db"},
                            "scenario.large_scale");
        read_key(*it, "ref_distance_m", c.large_scale.ref_distance_m, "scenario.large_scale");
        read_key(*it, "pathloss_exponent", c.large_scale.pathloss_exponent, "scenario.large_scale");
        read_key(*it, "ref_gain_db", c.large_scale.ref_gain_db, "scenario.large_scale");
        read_key(*it, "shadowing_db", c.large_scale.shadowing_db, "scenario.large_scale");
    }
    read_key(j, "seed", c.seed, "scenario");
    c.validate();
    return c;
}

Rng sample_stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(index),
                      std::uint32_t(index >> 32)};
    return Rng(seq);
}

NetworkInstance sample_topology(const ScenarioConfig& config, Rng& rng) {
    config.validate();
    NetworkInstance inst;
    for (std::size_t m = 0; m < config.counts.size(); ++m)
        inst.types.push_back(LinkTypeSpec{int(m) + 1, config.antennas[m]});
    inst.counts = config.counts;
    inst.p_max = config.p_max;
    inst.area_length = config.area_length;

    const double side = config.area_length;
    std::uniform_real_distribution<double> coord(0.0, side);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    const double r2_lo = config.d_min * config.d_min;
    const double r2_span = config.d_max * config.d_max - r2_lo;

    const int k = config.num_links();
    for (int i = 0; i < k; ++i) {
        const Point tx{coord(rng), coord(rng)};
        Point rx{};
        bool inside = false;
        for (int attempt = 0; attempt < 100 && !inside; ++attempt) {
            // Area-uniform radius within the annulus [d_min, d_max].
            const double r = std::sqrt(unit(rng) * r2_span + r2_lo);
            const double a = angle(rng);
            rx = Point{tx.x + r * std::cos(a), tx.y + r * std::sin(a)};
            inside = rx.x >= 0.0 && rx.x <= side && rx.y >= 0.0 && rx.y <= side;
        }
        if (!inside) rx = Point{std::clamp(rx.x, 0.0, side), std::clamp(rx.y, 0.0, side)};
        inst.tx_pos.push_back(tx);
        inst.rx_pos.push_back(rx);
    }
    inst.weights = config.weights == WeightsMode::Ones ? std::vector<double>(std::size_t(k), 1.0)
                                                       : config.explicit_weights;
    inst.noise_vars.assign(std::size_t(k), config.noise_var);
    return inst;
}

double large_scale_gain(double distance_m, const ScenarioConfig& config, Rng& rng) {
    if (!(distance_m > 0.0)) throw ValidationError("large_scale_gain: distance must be > 0");
    const LargeScaleModel& ls = config.large_scale;
    double shadow_db = 0.0;
    if (ls.shadowing_db > 0.0) shadow_db = std::normal_distribution<double>(0.0, ls.shadowing_db)(rng);
    const double gain_db =
        ls.ref_gain_db - 10.0 * ls.pathloss_exponent * std::log10(distance_m / ls.ref_distance_m) + shadow_db;
    return std::pow(10.0, gain_db / 10.0);
}

ChannelSet sample_channels(const NetworkInstance& instance, const ScenarioConfig& config, Rng& rng) {
    const int k = instance.num_links();
    ChannelSet h(k);
    std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
    for (int rx = 0; rx < k; ++rx) {
        for (int tx = 0; tx < k; ++tx) {
            const double d = std::max(distance(instance.tx_pos[std::size_t(tx)], instance.rx_pos[std::size_t(rx)]),
                                      config.d_min);
            const double amp = std::sqrt(large_scale_gain(d, config, rng));
            CVector g(instance.link_antennas(tx));
            for (Eigen::Index a = 0; a < g.size(); ++a) {
                const double re = gauss(rng);
                const double im = gauss(rng);
                g[a] = Complex(amp * re, amp * im);
            }
            h(rx, tx) = std::move(g);
        }
    }
    return h;
}

Sample generate_sample(const ScenarioConfig& config, std::uint64_t index) {
    Rng rng = sample_stream(config.seed, index);
    Sample s;
    s.instance = sample_topology(config, rng);
    s.channels = sample_channels(s.instance, config, rng);
    return s;
}

Dataset generate_dataset(const ScenarioConfig& config, std::size_t num_samples, int threads) {
    config.validate();
    Dataset ds{config, std::vector<Sample>(num_samples)};
    const std::size_t workers = std::clamp<std::size_t>(std::size_t(std::max(threads, 1)), 1, std::max<std::size_t>(num_samples, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < num_samples; ++i) ds.samples[i] = generate_sample(config, i);
        return ds;
    }
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < num_samples; i += workers) ds.samples[i] = generate_sample(config, i);
        });
    pool.clear();
    return ds;
}

Dataset generate_dataset(const ScenarioConfig& config, std::size_t num_samples, const std::filesystem::path& path,
                         int threads) {
    Dataset ds = generate_dataset(config, num_samples, threads);
    save_dataset(ds, path);
    return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write dataset " + path.string());
    json header{{"format_version", kDatasetVersion},
                {"num_samples", dataset.samples.size()},
                {"config", dataset.config.to_json()}};
    io::put_magic(out, "HIGD");
    io::put<std::uint32_t>(out, kDatasetVersion);
    io::put_block(out, header.dump());

    std::vector<double> buf;
    for (const Sample& s : dataset.samples) {
        const int k = s.instance.num_links();
        if (s.instance.counts != dataset.config.counts)
            throw StructuralError("save_dataset: sample link counts differ from the scenario");
        buf.clear();
        for (const Point& p : s.instance.tx_pos) buf.insert(buf.end(), {p.x, p.y});
        for (const Point& p : s.instance.rx_pos) buf.insert(buf.end(), {p.x, p.y});
        buf.insert(buf.end(), s.instance.weights.begin(), s.instance.weights.end());
        for (int rx = 0; rx < k; ++rx)
            for (int tx = 0; tx < k; ++tx)
                for (const Complex& c : s.channels(rx, tx)) buf.insert(buf.end(), {c.real(), c.imag()});
        io::put_doubles(out, buf);
    }
    if (!out) throw IoError("write failed for dataset " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    const std::string what = "dataset " + path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + what);
    io::expect_magic(in, "HIGD", what);
    std::uint32_t version = 0;
    if (!io::get(in, version)) throw IoError(what + ": truncated header");
    if (version != kDatasetVersion) throw IoError(what + ": unsupported format version " + std::to_string(version));

    json header;
    try {
        header = json::parse(io::get_block(in, what));
    } catch (const json::parse_error& e) {
        throw IoError(what + ": corrupt header: " + e.what());
    }
    Dataset ds;
    std::size_t count = 0;
    try {
        ds.config = ScenarioConfig::from_json(header.at("config"));
        count = header.at("num_samples").get<std::size_t>();
    } catch (const json::exception& e) {
        throw IoError(what + ": corrupt header: " + e.what());
    } catch (const ConfigError& e) {
        throw IoError(what + ": corrupt header: " + e.what());
    }

    const ScenarioConfig& cfg = ds.config;
    const int k = cfg.num_links();
    NetworkInstance proto;
    for (std::size_t m = 0; m < cfg.counts.size(); ++m) proto.types.push_back(LinkTypeSpec{int(m) + 1, cfg.antennas[m]});
    proto.counts = cfg.counts;
    proto.p_max = cfg.p_max;
    proto.area_length = cfg.area_length;
    proto.noise_vars.assign(std::size_t(k), cfg.noise_var);

    std::size_t channel_doubles = 0;
    for (int tx = 0; tx < k; ++tx) channel_doubles += 2 * std::size_t(proto.link_antennas(tx));
    channel_doubles *= std::size_t(k);
    std::vector<double> buf(std::size_t(5 * k) + channel_doubles);

    ds.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!io::get_doubles(in, buf))
            throw IoError(what + ": truncated at sample " + std::to_string(i) + " of " + std::to_string(count));
        Sample s{proto, ChannelSet(k)};
        const double* p = buf.data();
        s.instance.tx_pos.resize(std::size_t(k));
        s.instance.rx_pos.resize(std::size_t(k));
        for (auto& pt : s.instance.tx_pos) pt = Point{p[0], p[1]}, p += 2;
        for (auto& pt : s.instance.rx_pos) pt = Point{p[0], p[1]}, p += 2;
        s.instance.weights.assign(p, p + k);
        p += k;
        for (int rx = 0; rx < k; ++rx) {
            for (int tx = 0; tx < k; ++tx) {
                CVector h(s.instance.link_antennas(tx));
                for (Eigen::Index a = 0; a < h.size(); ++a, p += 2) h[a] = Complex(p[0], p[1]);
                s.channels(rx, tx) = std::move(h);
            }
        }
        try {
            s.instance.validate();
            s.channels.validate(s.instance);
        } catch (const Error& e) {
            throw IoError(what + ": invalid sample " + std::to_string(i) + ": " + e.what());
        }
        ds.samples.push_back(std::move(s));
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw IoError(what + ": header count mismatch, data continues after " + std::to_string(count) + " samples");
    return ds;
}

} // namespace hignn
