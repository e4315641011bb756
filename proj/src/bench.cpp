#include "hignn/bench.hpp"

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "hignn/config.hpp"
#include "hignn/metrics.hpp"

namespace hignn {

using nlohmann::json;

// ------------------------------------------------------------ tables

namespace {

std::string csv_cell(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_float()) {
        std::ostringstream os;
        os.precision(17);
        os << v.get<double>();
        return os.str();
    }
    return v.dump();
}

} // namespace

std::string Table::to_csv() const {
    std::ostringstream os;
    for (const auto& [k, v] : meta.items()) os << "# " << k << ": " << csv_cell(v) << '\n';
    for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
    os << '\n';
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << csv_cell(row[c]);
        os << '\n';
    }
    return os.str();
}

json Table::to_json() const {
    json out{{"meta", meta}, {"columns", columns}, {"rows", json::array()}};
    for (const auto& row : rows) {
        json r = json::object();
        for (std::size_t c = 0; c < columns.size(); ++c) r[columns[c]] = row[c];
        out["rows"].push_back(std::move(r));
    }
    return out;
}

void Table::write(const std::filesystem::path& dir, const std::string& stem) const {
    std::filesystem::create_directories(dir);
    write_text_file((dir / (stem + ".csv")).string(), to_csv());
    write_text_file((dir / (stem + ".json")).string(), to_json().dump(2) + "\n");
}

const json& Table::at(std::size_t row, const std::string& column) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
        if (columns[c] == column) return rows.at(row).at(c);
    throw ValidationError("table has no column '" + column + "'");
}

json run_metadata(std::uint64_t seed, const json& config) {
    return json{{"seed", seed},
                {"config_hash", config_hash(config)},
                {"version", kVersion},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)}};
}

// ------------------------------------------------------------ configs

json fp_options_to_json(const FpOptions& o) {
    return json{{"max_iters", o.max_iters},
                {"rel_tol", o.rel_tol},
                {"bisection_tol", o.bisection_tol},
                {"truncated_iters", o.truncated_iters}};
}

FpOptions fp_options_from_json(const json& j) {
    reject_unknown_keys(j, {"max_iters", "rel_tol", "bisection_tol", "truncated_iters"}, "fp");
    FpOptions o;
    read_key(j, "max_iters", o.max_iters, "fp");
    read_key(j, "rel_tol", o.rel_tol, "fp");
    read_key(j, "bisection_tol", o.bisection_tol, "fp");
    read_key(j, "truncated_iters", o.truncated_iters, "fp");
    if (o.max_iters < 1 || !(o.rel_tol > 0.0) || !(o.bisection_tol > 0.0) || o.truncated_iters < 0)
        throw ConfigError("fp: iteration counts and tolerances must be positive");
    return o;
}

ScenarioConfig scaled_scenario(const ScenarioConfig& base, int step, bool grow_area) {
    ScenarioConfig c = base;
    for (int& k : c.counts) k <<= step;
    if (grow_area) c.area_length = base.area_length * std::pow(std::sqrt(2.0), step);
    c.explicit_weights.clear();
    c.weights = WeightsMode::Ones;
    c.seed = base.seed + std::uint64_t(step);
    c.validate();
    return c;
}

json ScalingConfig::to_json() const {
    return json{{"scenario", base.to_json()},
                {"steps", steps},
                {"instances", instances},
                {"fp", fp_options_to_json(fp)},
                {"threads", threads}};
}

ScalingConfig ScalingConfig::from_json(const json& j) {
    reject_unknown_keys(j, {"scenario", "steps", "instances", "fp", "threads"}, "scaling");
    ScalingConfig c;
    if (auto it = j.find("scenario"); it != j.end()) c.base = ScenarioConfig::from_json(*it);
    read_key(j, "steps", c.steps, "scaling");
    read_key(j, "instances", c.instances, "scaling");
    read_key(j, "threads", c.threads, "scaling");
    if (auto it = j.find("fp"); it != j.end()) c.fp = fp_options_from_json(*it);
    if (c.steps < 0 || c.instances < 1) throw ConfigError("scaling: steps must be >= 0 and instances >= 1");
    return c;
}

json TimingConfig::to_json() const {
    return json{{"scenario", base.to_json()},   {"steps", steps},         {"instances", instances},
                {"truncated_iters", truncated_iters}, {"grow_area", grow_area}, {"repeats", repeats}, {"fp", fp_options_to_json(fp)}};
}

TimingConfig TimingConfig::from_json(const json& j) {
    reject_unknown_keys(j, {"scenario", "steps", "instances", "truncated_iters", "grow_area", "repeats", "fp"}, "timing");
    TimingConfig c;
    if (auto it = j.find("scenario"); it != j.end()) c.base = ScenarioConfig::from_json(*it);
    read_key(j, "steps", c.steps, "timing");
    read_key(j, "instances", c.instances, "timing");
    read_key(j, "truncated_iters", c.truncated_iters, "timing");
    read_key(j, "grow_area", c.grow_area, "timing");
    read_key(j, "repeats", c.repeats, "timing");
    if (auto it = j.find("fp"); it != j.end()) c.fp = fp_options_from_json(*it);
    if (c.steps < 0 || c.instances < 1 || c.truncated_iters < 1 || c.repeats < 1)
        throw ConfigError("timing: steps >= 0 and instances, truncated_iters, repeats >= 1 required");
    return c;
}

json SampleEfficiencyConfig::to_json() const {
    json a = json::array();
    for (const auto& arch : archs) a.push_back(arch.to_json());
    return json{{"archs", a},
                {"train_sizes", train_sizes},
                {"val_size", val_size},
                {"test_size", test_size},
                {"scenario", scenario.to_json()},
                {"train", train.to_json()},
                {"threads", threads}};
}

SampleEfficiencyConfig SampleEfficiencyConfig::from_json(const json& j) {
    reject_unknown_keys(j, {"archs", "train_sizes", "val_size", "test_size", "scenario", "train", "threads"},
                        "sample_efficiency");
    SampleEfficiencyConfig c;
    if (auto it = j.find("archs"); it != j.end())
        for (const auto& a : *it) c.archs.push_back(ModelArch::from_json(a));
    read_key(j, "train_sizes", c.train_sizes, "sample_efficiency");
    read_key(j, "val_size", c.val_size, "sample_efficiency");
    read_key(j, "test_size", c.test_size, "sample_efficiency");
    read_key(j, "threads", c.threads, "sample_efficiency");
    if (auto it = j.find("scenario"); it != j.end()) c.scenario = ScenarioConfig::from_json(*it);
    if (auto it = j.find("train"); it != j.end()) c.train = TrainConfig::from_json(*it);
    if (c.archs.empty()) c.archs.push_back(c.train.arch);
    if (c.train_sizes.empty() || c.val_size < 1 || c.test_size < 1)
        throw ConfigError("sample_efficiency: train_sizes, val_size and test_size must be non-empty");
    return c;
}

// ------------------------------------------------------------ runners

namespace {

Table run_scaling(const Checkpoint& ck, const ScalingConfig& config, bool grow_area, std::ostream* log) {
    Table t;
    t.columns = {"step", "links", "area_length", "hignn_wsr", "fp_wsr", "mean_ratio", "std_ratio", "instances"};
    json cfg = config.to_json();
    cfg["grow_area"] = grow_area;
    t.meta = run_metadata(config.base.seed, cfg);
    for (int step = 0; step <= config.steps; ++step) {
        const ScenarioConfig sc = scaled_scenario(config.base, step, grow_area);
        const Dataset ds = generate_dataset(sc, config.instances, config.threads);
        const EvalReport rep = evaluate(ck, ds, config.fp, config.threads);
        t.rows.push_back({step, sc.num_links(), sc.area_length, rep.mean_policy_wsr, rep.mean_fp_wsr, rep.mean_ratio,
                          rep.std_ratio, config.instances});
        if (log)
            *log << (grow_area ? "area" : "density") << " step " << step << " links " << sc.num_links()
                 << " ratio " << rep.mean_ratio << std::endl;
    }
    return t;
}

struct Stats {
    double mean = 0.0;
    double std = 0.0;
};

Stats stats(const std::vector<double>& v) {
    Stats s;
    for (double x : v) s.mean += x / double(v.size());
    for (double x : v) s.std += (x - s.mean) * (x - s.mean) / double(v.size());
    s.std = std::sqrt(s.std);
    return s;
}

template <class F>
double time_ms(F&& f, int repeats = 1) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

std::string arch_label(const ModelArch& a) {
    std::string s = std::to_string(a.layers) + "-layer {";
    for (std::size_t i = 0; i < a.hidden.size(); ++i) s += (i ? "," : "") + std::to_string(a.hidden[i]);
    return s + "}";
}

} // namespace

Table run_area_scaling(const Checkpoint& ck, const ScalingConfig& config, std::ostream* log) {
    return run_scaling(ck, config, true, log);
}

Table run_density_scaling(const Checkpoint& ck, const ScalingConfig& config, std::ostream* log) {
    return run_scaling(ck, config, false, log);
}

Table run_timing(const Checkpoint& ck, const TimingConfig& config, std::ostream* log) {
    Table t;
    t.columns = {"step",     "links",        "fp_ms",         "fp_std_ms", "trfp_ms", "trfp_std_ms",
                 "hignn_ms", "hignn_std_ms", "fp_iterations", "speedup"};
    t.meta = run_metadata(config.base.seed, config.to_json());
    FpOptions truncated = config.fp;
    truncated.truncated_iters = config.truncated_iters;

    for (int step = 0; step <= config.steps; ++step) {
        const ScenarioConfig sc = scaled_scenario(config.base, step, config.grow_area);
        const Dataset ds = generate_dataset(sc, config.instances, 1);
        std::vector<double> fp, trfp, gnn;
        double iterations = 0.0;
        double sink = 0.0;
        for (const Sample& s : ds.samples) {
            FpResult full;
            fp.push_back(time_ms([&] { full = fp_solve(s.instance, s.channels, config.fp); }, config.repeats));
            iterations += double(full.trace.iterations) / double(ds.samples.size());
            trfp.push_back(
                time_ms([&] { sink += fp_solve(s.instance, s.channels, truncated).trace.wsr.back(); }, config.repeats));
            gnn.push_back(time_ms([&] { sink += infer(ck.params, s.instance, s.channels).max_power(); }, config.repeats));
        }
        const Stats f = stats(fp), r = stats(trfp), g = stats(gnn);
        t.rows.push_back({step, sc.num_links(), f.mean, f.std, r.mean, r.std, g.mean, g.std, iterations,
                          f.mean / g.mean});
        if (log)
            *log << "timing step " << step << " links " << sc.num_links() << " fp " << f.mean << " ms, tr-fp "
                 << r.mean << " ms, hignn " << g.mean << " ms" << (std::isfinite(sink) ? "" : " (non-finite)")
                 << std::endl;
    }
    return t;
}

Table run_sample_efficiency(const SampleEfficiencyConfig& config, std::ostream* log) {
    Table t;
    t.columns = {"arch", "layers", "hidden", "train_size", "mean_ratio", "std_ratio", "best_epoch"};
    t.meta = run_metadata(config.scenario.seed, config.to_json());

    std::size_t pool_size = 0;
    for (auto n : config.train_sizes) pool_size = std::max(pool_size, n);
    ScenarioConfig sc = config.scenario;
    const Dataset pool = generate_dataset(sc, pool_size, config.threads);
    sc.seed = config.scenario.seed + 1;
    const Dataset val = generate_dataset(sc, config.val_size, config.threads);
    sc.seed = config.scenario.seed + 2;
    const Dataset test = generate_dataset(sc, config.test_size, config.threads);
    const auto test_fp = fp_wsr(test, FpOptions{}, config.threads);

    for (const ModelArch& arch : config.archs) {
        for (std::size_t n : config.train_sizes) {
            Dataset train{pool.config, {pool.samples.begin(), pool.samples.begin() + std::ptrdiff_t(n)}};
            TrainConfig tc = config.train;
            tc.arch = arch;
            const Checkpoint ck = fit(tc, train, val);
            const HignnParams& p = ck.params;
            const EvalReport rep = evaluate_policy(
                [&p](const Sample& s) { return infer(p, s.instance, s.channels); }, test, test_fp, config.threads);
            t.rows.push_back({arch_label(arch), arch.layers, arch.hidden, n, rep.mean_ratio, rep.std_ratio,
                              ck.best_epoch});
            if (log) *log << arch_label(arch) << " n=" << n << " ratio " << rep.mean_ratio << std::endl;
        }
    }
    return t;
}

} // namespace hignn
