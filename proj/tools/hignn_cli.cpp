// hignn_cli: gen | train | eval | fp | bench | check
//
// Every subcommand reads an optional JSON config (--config) with the top-level
// sections below; unknown keys anywhere are rejected.
//
//   scenario           ScenarioConfig (gen)
//   gen                {samples, name}
//   train              TrainConfig, model architecture under "model"
//   sample_efficiency  SampleEfficiencyConfig (train --sweep)
//   fp                 FpOptions (fp, eval)
//   eval               {checkpoint, data}
//   bench              {checkpoint, suites, scaling, timing}
//   check              {gradient_seeds, permutation_trials, tolerance_gradient,
//                       tolerance_utility, tolerance_equivariance}

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "hignn/bench.hpp"
#include "hignn/channel_sim.hpp"
#include "hignn/checks.hpp"
#include "hignn/config.hpp"
#include "hignn/fp_solver.hpp"
#include "hignn/metrics.hpp"
#include "hignn/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hignn;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    int threads = 1;
};

json load_config(const Common& c) {
    json j = c.config.empty() ? json::object() : read_json_file(c.config);
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    reject_unknown_keys(j, {"scenario", "gen", "train", "sample_efficiency", "fp", "eval", "bench", "check"}, "config");
    return j;
}

json section(const json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() ? json::object() : *it;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path.string(), j.dump(2) + "\n"); }

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "JSON config file");
    app->add_option("--seed", c.seed, "Override the seed");
    app->add_option("--out", c.out, "Output directory");
    app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
}

int cmd_gen(const Common& c, std::size_t samples_flag) {
    const json j = load_config(c);
    ScenarioConfig sc = ScenarioConfig::from_json(section(j, "scenario"));
    const json g = section(j, "gen");
    reject_unknown_keys(g, {"samples", "name"}, "gen");
    std::size_t samples = 1000;
    std::string name = "dataset";
    read_key(g, "samples", samples, "gen");
    read_key(g, "name", name, "gen");
    if (samples_flag) samples = samples_flag;
    if (c.seed) sc.seed = *c.seed;

    fs::create_directories(c.out);
    const fs::path path = fs::path(c.out) / (name + ".higd");
    generate_dataset(sc, samples, path, c.threads);
    json meta = run_metadata(sc.seed, sc.to_json());
    meta["samples"] = samples;
    meta["file"] = path.string();
    write_json(fs::path(c.out) / (name + ".meta.json"), meta);
    std::cout << "wrote " << samples << " samples to " << path.string() << "\n";
    return 0;
}

int cmd_train(const Common& c, const std::string& train_path, const std::string& val_path, bool sweep) {
    const json j = load_config(c);
    if (sweep) {
        SampleEfficiencyConfig se = SampleEfficiencyConfig::from_json(section(j, "sample_efficiency"));
        if (c.seed) se.scenario.seed = *c.seed;
        se.threads = c.threads;
        const Table t = run_sample_efficiency(se, &std::cerr);
        t.write(c.out, "sample_efficiency");
        std::cout << t.to_csv();
        return 0;
    }
    TrainConfig tc = TrainConfig::from_json(section(j, "train"));
    if (c.seed) tc.seed = *c.seed;
    if (!train_path.empty()) tc.train_path = train_path;
    if (!val_path.empty()) tc.val_path = val_path;
    if (tc.train_path.empty() || tc.val_path.empty())
        throw ConfigError("train: train_path and val_path are required");

    fs::create_directories(c.out);
    Checkpoint ck;
    try {
        ck = fit(tc, &std::cerr);
    } catch (const TrainingDiverged& e) {
        save_checkpoint(e.last_good(), fs::path(c.out) / "last_good.higc");
        throw;
    }
    save_checkpoint(ck, fs::path(c.out) / "model.higc");

    Table history;
    history.columns = {"epoch", "step", "train_loss", "val_loss", "val_ratio"};
    history.meta = run_metadata(tc.seed, tc.to_json());
    history.meta["best_epoch"] = ck.best_epoch;
    for (const auto& h : ck.history) history.rows.push_back({h.epoch, h.step, h.train_loss, h.val_loss, h.val_ratio});
    history.write(c.out, "history");
    std::cout << "best epoch " << ck.best_epoch << ", checkpoint " << (fs::path(c.out) / "model.higc").string() << "\n";
    return 0;
}

int cmd_eval(const Common& c, std::string checkpoint, std::string data) {
    const json j = load_config(c);
    const FpOptions fp = fp_options_from_json(section(j, "fp"));
    const json e = section(j, "eval");
    reject_unknown_keys(e, {"checkpoint", "data"}, "eval");
    if (checkpoint.empty()) read_key(e, "checkpoint", checkpoint, "eval");
    if (data.empty()) read_key(e, "data", data, "eval");
    if (checkpoint.empty() || data.empty()) throw ConfigError("eval: checkpoint and data are required");

    const Checkpoint ck = load_checkpoint(checkpoint);
    const Dataset ds = load_dataset(data);
    const EvalReport rep = evaluate(ck, ds, fp, c.threads);
    json meta = run_metadata(ds.config.seed, j);
    meta["checkpoint"] = checkpoint;
    meta["data"] = data;

    fs::create_directories(c.out);
    json out = rep.to_json();
    out["meta"] = meta;
    write_json(fs::path(c.out) / "eval.json", out);
    std::string csv;
    for (const auto& [k, v] : meta.items()) csv += "# " + k + ": " + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
    write_text_file((fs::path(c.out) / "eval.csv").string(), csv + rep.to_csv());
    std::cout << "mean ratio " << rep.mean_ratio << " (std " << rep.std_ratio << ") over " << rep.records.size()
              << " instances\n";
    return 0;
}

int cmd_fp(const Common& c, std::string data, int truncate) {
    const json j = load_config(c);
    FpOptions fp = fp_options_from_json(section(j, "fp"));
    if (truncate > 0) fp.truncated_iters = truncate;
    if (data.empty()) throw ConfigError("fp: --data is required");
    const Dataset ds = load_dataset(data);

    Table t;
    t.columns = {"instance", "wsr", "iterations", "converged", "bisections"};
    t.meta = run_metadata(ds.config.seed, fp_options_to_json(fp));
    t.meta["data"] = data;
    std::vector<FpResult> results(ds.samples.size());
    parallel_for(results.size(), c.threads,
                 [&](std::size_t i) { results[i] = fp_solve(ds.samples[i].instance, ds.samples[i].channels, fp); });
    double mean = 0.0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& tr = results[i].trace;
        const double w = weighted_sum_rate(ds.samples[i].instance, results[i].x, ds.samples[i].channels);
        mean += w / double(results.size());
        t.rows.push_back({i, w, tr.iterations, tr.converged, tr.bisections});
    }
    t.write(c.out, truncate > 0 ? "trfp" : "fp");
    std::cout << "mean WSR " << mean << " nats over " << results.size() << " instances\n";
    return 0;
}

int cmd_bench(const Common& c, std::string checkpoint, std::vector<std::string> suites) {
    const json j = load_config(c);
    const json b = section(j, "bench");
    reject_unknown_keys(b, {"checkpoint", "suites", "scaling", "timing"}, "bench");
    if (checkpoint.empty()) read_key(b, "checkpoint", checkpoint, "bench");
    if (suites.empty()) read_key(b, "suites", suites, "bench");
    if (suites.empty()) suites = {"area", "density", "timing"};
    if (checkpoint.empty()) throw ConfigError("bench: checkpoint is required");
    ScalingConfig scaling = ScalingConfig::from_json(section(b, "scaling"));
    TimingConfig timing = TimingConfig::from_json(section(b, "timing"));
    if (c.seed) scaling.base.seed = timing.base.seed = *c.seed;
    scaling.threads = c.threads;

    const Checkpoint ck = load_checkpoint(checkpoint);
    for (const auto& s : suites) {
        Table t;
        if (s == "area") t = run_area_scaling(ck, scaling, &std::cerr);
        else if (s == "density") t = run_density_scaling(ck, scaling, &std::cerr);
        else if (s == "timing") t = run_timing(ck, timing, &std::cerr);
        else throw ConfigError("bench: unknown suite '" + s + "' (area, density, timing)");
        t.meta["checkpoint"] = checkpoint;
        t.write(c.out, s);
        std::cout << t.to_csv();
    }
    return 0;
}

int cmd_check(const Common& c) {
    const json j = load_config(c);
    const json k = section(j, "check");
    reject_unknown_keys(k,
                        {"gradient_seeds", "permutation_trials", "tolerance_gradient", "tolerance_utility",
                         "tolerance_equivariance"},
                        "check");
    int seeds = 3, trials = 200;
    double tol_grad = 1e-4, tol_util = 1e-12, tol_equiv = 1e-10;
    read_key(k, "gradient_seeds", seeds, "check");
    read_key(k, "permutation_trials", trials, "check");
    read_key(k, "tolerance_gradient", tol_grad, "check");
    read_key(k, "tolerance_utility", tol_util, "check");
    read_key(k, "tolerance_equivariance", tol_equiv, "check");
    const std::uint64_t seed = c.seed.value_or(1);

    bool ok = true;
    for (int s = 0; s < seeds; ++s) {
        const GradientCheck g = check_gradients(seed + std::uint64_t(s));
        const bool pass = g.max_rel_error <= tol_grad;
        ok = ok && pass;
        std::cout << (pass ? "PASS" : "FAIL") << " gradient seed " << seed + std::uint64_t(s) << ": max rel error "
                  << g.max_rel_error << " at " << g.worst_param << " (" << g.num_scalars << " scalars)\n";
    }
    const PermutationCheck p = check_permutations(trials, seed);
    const bool pass_u = p.max_utility_error <= tol_util, pass_e = p.max_equivariance_error <= tol_equiv;
    ok = ok && pass_u && pass_e;
    std::cout << (pass_u ? "PASS" : "FAIL") << " utility invariance over " << p.trials
              << " permutations: max rel error " << p.max_utility_error << "\n";
    std::cout << (pass_e ? "PASS" : "FAIL") << " output equivariance over " << p.trials
              << " permutations: max rel error " << p.max_equivariance_error << "\n";
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous interference GNN beamforming toolkit"};
    app.require_subcommand(1);

    Common gen_c, train_c, eval_c, fp_c, bench_c, check_c;
    std::size_t samples = 0;
    std::string train_path, val_path, checkpoint, data, fp_data, bench_ckpt;
    bool sweep = false;
    int truncate = 0;
    std::vector<std::string> suites;

    auto* gen = app.add_subcommand("gen", "Generate a dataset");
    add_common(gen, gen_c);
    gen->add_option("--samples", samples, "Number of samples");

    auto* train = app.add_subcommand("train", "Train a model, or run the sample-efficiency sweep");
    add_common(train, train_c);
    train->add_option("--train", train_path, "Training dataset");
    train->add_option("--val", val_path, "Validation dataset");
    train->add_flag("--sweep", sweep, "Run the sample-efficiency sweep instead");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against FP");
    add_common(eval, eval_c);
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file");
    eval->add_option("--data", data, "Dataset file");

    auto* fp = app.add_subcommand("fp", "Solve a dataset with FP");
    add_common(fp, fp_c);
    fp->add_option("--data", fp_data, "Dataset file");
    fp->add_option("--truncate", truncate, "Run exactly k iterations (Tr-FP)")->check(CLI::PositiveNumber);

    auto* bench = app.add_subcommand("bench", "Scaling and timing suites on a frozen checkpoint");
    add_common(bench, bench_c);
    bench->add_option("--checkpoint", bench_ckpt, "Checkpoint file");
    bench->add_option("--suite", suites, "area, density, timing (repeatable)");

    auto* check = app.add_subcommand("check", "Gradient and permutation self-tests");
    add_common(check, check_c);

    CLI11_PARSE(app, argc, argv);
    try {
        if (gen->parsed()) return cmd_gen(gen_c, samples);
        if (train->parsed()) return cmd_train(train_c, train_path, val_path, sweep);
        if (eval->parsed()) return cmd_eval(eval_c, checkpoint, data);
        if (fp->parsed()) return cmd_fp(fp_c, fp_data, truncate);
        if (bench->parsed()) return cmd_bench(bench_c, bench_ckpt, suites);
        if (check->parsed()) return cmd_check(check_c);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
