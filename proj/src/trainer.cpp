#include "hignn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "binary_io.hpp"
#include "hignn/config.hpp"
#include "hignn/metrics.hpp"

namespace hignn {

using nlohmann::json;

// ------------------------------------------------------------ config

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (max_epochs < 1 || patience < 1 || eval_interval < 1)
        throw ConfigError("train: max_epochs, patience and eval_interval must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0))
        throw ConfigError("train: invalid Adam constants");
    arch.validate();
}

json TrainConfig::to_json() const {
    return json{{"train_path", train_path}, {"val_path", val_path},     {"batch_size", batch_size},
                {"lr", lr},                 {"beta1", beta1},           {"beta2", beta2},
                {"eps", eps},               {"max_epochs", max_epochs}, {"patience", patience},
                {"eval_interval", eval_interval}, {"val_limit", val_limit}, {"seed", seed},
                {"model", arch.to_json()}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    reject_unknown_keys(j,
                        {"train_path", "val_path", "batch_size", "lr", "beta1", "beta2", "eps", "max_epochs",
                         "patience", "eval_interval", "val_limit", "seed", "model"},
                        "train");
    TrainConfig c;
    read_key(j, "train_path", c.train_path, "train");
    read_key(j, "val_path", c.val_path, "train");
    read_key(j, "batch_size", c.batch_size, "train");
    read_key(j, "lr", c.lr, "train");
    read_key(j, "beta1", c.beta1, "train");
    read_key(j, "beta2", c.beta2, "train");
    read_key(j, "eps", c.eps, "train");
    read_key(j, "max_epochs", c.max_epochs, "train");
    read_key(j, "patience", c.patience, "train");
    read_key(j, "eval_interval", c.eval_interval, "train");
    read_key(j, "val_limit", c.val_limit, "train");
    read_key(j, "seed", c.seed, "train");
    if (auto it = j.find("model"); it != j.end()) c.arch = ModelArch::from_json(*it);
    c.validate();
    return c;
}

// ------------------------------------------------------------ normalization

namespace {

double inverse_std(double sum, double sum_sq, double count) {
    if (count < 2.0) return 1.0;
    const double mean = sum / count;
    const double var = std::max(sum_sq / count - mean * mean, 0.0);
    return var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
}

} // namespace

NormStats compute_norm_stats(std::span<const HeteroGraph> graphs) {
    if (graphs.empty()) throw ValidationError("compute_norm_stats: no graphs");
    const int types = graphs.front().num_types();
    NormStats stats = NormStats::identity(types);
    for (std::size_t m = 0; m < stats.vertex_scale.size(); ++m) {
        double s = 0, ss = 0, n = 0;
        for (const auto& g : graphs)
            for (double v : g.vertices[m].data()) s += v, ss += v * v, n += 1;
        stats.vertex_scale[m] = inverse_std(s, ss, n);
    }
    for (std::size_t r = 0; r < stats.relation_scale.size(); ++r) {
        double s = 0, ss = 0, n = 0;
        for (const auto& g : graphs)
            for (double v : g.relations[r].features.data()) s += v, ss += v * v, n += 1;
        stats.relation_scale[r] = inverse_std(s, ss, n);
    }
    return stats;
}

NormStats compute_norm_stats(const Dataset& dataset, const GraphOptions& options) {
    std::vector<HeteroGraph> graphs;
    graphs.reserve(dataset.samples.size());
    for (const Sample& s : dataset.samples) graphs.push_back(build_graph(s.instance, s.channels, options));
    return compute_norm_stats(graphs);
}

// ------------------------------------------------------------ Adam

void adam_step(std::vector<ad::Tensor>& params, const std::vector<ad::Tensor>& grads, AdamState& state,
               const AdamOptions& o) {
    if (grads.size() != params.size()) throw StructuralError("adam_step: one gradient per parameter required");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.rows(), p.cols());
            state.v.emplace_back(p.rows(), p.cols());
        }
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(o.beta1, double(state.step));
    const double c2 = 1.0 - std::pow(o.beta2, double(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k].data();
        auto g = grads[k].data();
        auto m = state.m[k].data();
        auto v = state.v[k].data();
        if (g.size() != p.size()) throw StructuralError("adam_step: gradient shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
            v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
            p[i] -= o.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + o.eps);
        }
    }
}

// ------------------------------------------------------------ checkpoints

namespace {

json history_json(const std::vector<HistoryEntry>& history) {
    json h = json::array();
    for (const auto& e : history)
        h.push_back({{"epoch", e.epoch},
                     {"step", e.step},
                     {"train_loss", e.train_loss},
                     {"val_loss", e.val_loss},
                     {"val_ratio", e.val_ratio}});
    return h;
}

} // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    json tensors = json::array();
    for (std::size_t k = 0; k < c.params.tensors.size(); ++k)
        tensors.push_back({{"name", c.params.names[k]},
                           {"rows", c.params.tensors[k].rows()},
                           {"cols", c.params.tensors[k].cols()}});
    json header{{"format_version", kCheckpointVersion},
                {"arch", c.params.arch.to_json()},
                {"config", c.config.to_json()},
                {"history", history_json(c.history)},
                {"best_epoch", c.best_epoch},
                {"norm", {{"vertex_scale", c.params.norm.vertex_scale}, {"relation_scale", c.params.norm.relation_scale}}},
                {"tensors", tensors}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    io::put_magic(out, "HIGC");
    io::put<std::uint32_t>(out, kCheckpointVersion);
    io::put_block(out, header.dump());
    io::put<std::uint64_t>(out, c.params.num_scalars());
    for (const auto& t : c.params.tensors) io::put_doubles(out, t.data());
    if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string what = "checkpoint " + path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + what);
    io::expect_magic(in, "HIGC", what);
    std::uint32_t version = 0;
    if (!io::get(in, version)) throw IoError(what + ": truncated header");
    if (version != kCheckpointVersion) throw IoError(what + ": unsupported format version " + std::to_string(version));

    Checkpoint c;
    json header;
    try {
        header = json::parse(io::get_block(in, what));
        const ModelArch arch = ModelArch::from_json(header.at("arch"));
        c.params = init_params(arch, std::uint64_t{0});
        c.config = TrainConfig::from_json(header.at("config"));
        c.best_epoch = header.at("best_epoch").get<int>();
        for (const auto& e : header.at("history"))
            c.history.push_back(HistoryEntry{e.at("epoch").get<int>(), e.at("step").get<long>(),
                                             e.at("train_loss").get<double>(), e.at("val_loss").get<double>(),
                                             e.at("val_ratio").get<double>()});
        c.params.norm.vertex_scale = header.at("norm").at("vertex_scale").get<std::vector<double>>();
        c.params.norm.relation_scale = header.at("norm").at("relation_scale").get<std::vector<double>>();
        const auto& tensors = header.at("tensors");
        if (tensors.size() != c.params.tensors.size()) throw IoError(what + ": tensor count does not match the architecture");
        for (std::size_t k = 0; k < tensors.size(); ++k) {
            const auto& t = tensors[k];
            if (t.at("name").get<std::string>() != c.params.names[k] ||
                t.at("rows").get<std::size_t>() != c.params.tensors[k].rows() ||
                t.at("cols").get<std::size_t>() != c.params.tensors[k].cols())
                throw IoError(what + ": tensor " + std::to_string(k) + " does not match the architecture");
        }
    } catch (const json::exception& e) {
        throw IoError(what + ": corrupt header: " + e.what());
    } catch (const ConfigError& e) {
        throw IoError(what + ": corrupt header: " + e.what());
    }

    std::uint64_t count = 0;
    if (!io::get(in, count) || count != c.params.num_scalars()) throw IoError(what + ": parameter count mismatch");
    for (auto& t : c.params.tensors)
        if (!io::get_doubles(in, t.data())) throw IoError(what + ": truncated parameter blob");
    if (in.peek() != std::char_traits<char>::eof()) throw IoError(what + ": trailing bytes after parameter blob");
    return c;
}

// ------------------------------------------------------------ evaluation

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f) {
    const std::size_t workers = std::min<std::size_t>(std::size_t(std::max(threads, 1)), std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) f(i);
        });
}

std::vector<double> fp_wsr(const Dataset& dataset, const FpOptions& options, int threads) {
    std::vector<double> out(dataset.samples.size());
    parallel_for(out.size(), threads, [&](std::size_t i) {
        const Sample& s = dataset.samples[i];
        out[i] = weighted_sum_rate(s.instance, fp_solve(s.instance, s.channels, options).x, s.channels);
    });
    return out;
}

json EvalReport::to_json() const {
    json per = json::array();
    for (const auto& r : records) per.push_back({{"policy_wsr", r.policy_wsr}, {"fp_wsr", r.fp_wsr}, {"ratio", r.ratio}});
    return json{{"mean_ratio", mean_ratio},
                {"std_ratio", std_ratio},
                {"mean_policy_wsr", mean_policy_wsr},
                {"mean_fp_wsr", mean_fp_wsr},
                {"instances", per}};
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "instance,policy_wsr,fp_wsr,ratio\n";
    for (std::size_t k = 0; k < records.size(); ++k)
        os << k << ',' << records[k].policy_wsr << ',' << records[k].fp_wsr << ',' << records[k].ratio << '\n';
    return os.str();
}

EvalReport evaluate_policy(const Policy& policy, const Dataset& dataset, std::span<const double> fp, int threads) {
    if (fp.size() != dataset.samples.size()) throw StructuralError("evaluate: one FP value per sample required");
    if (dataset.samples.empty()) throw ValidationError("evaluate: empty dataset");
    EvalReport rep;
    rep.records.resize(dataset.samples.size());
    parallel_for(rep.records.size(), threads, [&](std::size_t i) {
        const Sample& s = dataset.samples[i];
        EvalRecord& r = rep.records[i];
        r.policy_wsr = weighted_sum_rate(s.instance, policy(s), s.channels);
        r.fp_wsr = fp[i];
        if (!(r.fp_wsr > 0.0)) throw ValidationError("evaluate: FP WSR must be > 0");
        r.ratio = r.policy_wsr / r.fp_wsr;
    });
    const double n = double(rep.records.size());
    for (const auto& r : rep.records) {
        rep.mean_ratio += r.ratio / n;
        rep.mean_policy_wsr += r.policy_wsr / n;
        rep.mean_fp_wsr += r.fp_wsr / n;
    }
    double var = 0.0;
    for (const auto& r : rep.records) var += (r.ratio - rep.mean_ratio) * (r.ratio - rep.mean_ratio) / n;
    rep.std_ratio = std::sqrt(var);
    return rep;
}

EvalReport evaluate_policy(const Policy& policy, const Dataset& dataset, const FpOptions& options, int threads) {
    const auto fp = fp_wsr(dataset, options, threads);
    return evaluate_policy(policy, dataset, fp, threads);
}

EvalReport evaluate(const Checkpoint& checkpoint, const Dataset& dataset, const FpOptions& options, int threads) {
    const HignnParams& params = checkpoint.params;
    return evaluate_policy([&params](const Sample& s) { return infer(params, s.instance, s.channels); }, dataset,
                           options, threads);
}

// ------------------------------------------------------------ training

namespace {

std::vector<HeteroGraph> normalized_graphs(const Dataset& ds, const GraphOptions& options, const NormStats& norm,
                                           std::size_t limit) {
    std::vector<HeteroGraph> out;
    const std::size_t n = limit ? std::min(limit, ds.samples.size()) : ds.samples.size();
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(normalize(build_graph(ds.samples[i].instance, ds.samples[i].channels, options), norm));
    return out;
}

} // namespace

Checkpoint fit(const TrainConfig& config, const Dataset& train, const Dataset& val, std::ostream* log) {
    config.validate();
    if (train.samples.empty() || val.samples.empty()) throw ValidationError("fit: empty training or validation set");
    if (train.config.antennas != config.arch.antennas)
        throw StructuralError("fit: dataset antenna counts do not match the model");

    Checkpoint ck;
    ck.config = config;
    ck.params = init_params(config.arch, config.seed);
    ck.params.norm = compute_norm_stats(train, config.arch.features);

    const auto train_graphs = normalized_graphs(train, config.arch.features, ck.params.norm, 0);
    const auto val_graphs = normalized_graphs(val, config.arch.features, ck.params.norm, config.val_limit);
    Dataset val_used{val.config, {val.samples.begin(), val.samples.begin() + std::ptrdiff_t(val_graphs.size())}};
    const auto val_fp = fp_wsr(val_used, FpOptions{});

    std::vector<const Sample*> val_ptrs;
    for (const auto& s : val_used.samples) val_ptrs.push_back(&s);
    const TrainingBatch val_batch = make_batch(val_graphs, val_ptrs);

    Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    AdamState adam;
    const AdamOptions adam_opts{config.lr, config.beta1, config.beta2, config.eps};
    std::vector<std::size_t> order(train.samples.size());
    std::iota(order.begin(), order.end(), 0);

    HignnParams best = ck.params;
    double best_ratio = -1.0;
    int stale = 0;
    long step = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<HeteroGraph> graphs;
            std::vector<const Sample*> samples;
            for (std::size_t k = start; k < end; ++k) {
                graphs.push_back(train_graphs[order[k]]);
                samples.push_back(&train.samples[order[k]]);
            }
            const TrainingBatch batch = make_batch(graphs, samples);
            double value = 0.0;
            auto grads = loss_gradient(ck.params, batch, &value);
            bool finite = std::isfinite(value);
            for (const auto& g : grads)
                for (double v : g.data()) finite = finite && std::isfinite(v);
            if (!finite) {
                Checkpoint last = ck;
                last.params = best;
                throw TrainingDiverged("fit: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                           std::to_string(step),
                                       std::move(last));
            }
            adam_step(ck.params.tensors, grads, adam, adam_opts);
            epoch_loss += value;
            ++batches;
            ++step;
        }

        if (epoch % config.eval_interval != 0 && epoch != config.max_epochs) continue;
        const double val_loss = loss_value(ck.params, val_batch);
        std::vector<double> policy(val_graphs.size());
        for (std::size_t i = 0; i < val_graphs.size(); ++i) {
            const Sample& s = val_used.samples[i];
            policy[i] = weighted_sum_rate(s.instance, forward(ck.params, val_graphs[i], s.instance.p_max), s.channels);
        }
        const double ratio = relative_performance(policy, val_fp);
        ck.history.push_back(HistoryEntry{epoch, step, epoch_loss / double(batches), val_loss, ratio});
        if (log)
            *log << "epoch " << epoch << " train_loss " << epoch_loss / double(batches) << " val_loss " << val_loss
                 << " val_ratio " << ratio << std::endl;
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best = ck.params;
            ck.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= config.patience) {
            break;
        }
    }
    ck.params = best;
    return ck;
}

Checkpoint fit(const TrainConfig& config, std::ostream* log) {
    const Dataset train = load_dataset(config.train_path);
    const Dataset val = load_dataset(config.val_path);
    return fit(config, train, val, log);
}

} // namespace hignn
