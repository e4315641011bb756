#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hignn/bench.hpp"
#include "hignn/channel_sim.hpp"
#include "hignn/checks.hpp"
#include "hignn/fp_solver.hpp"
#include "hignn/metrics.hpp"
#include "hignn/model.hpp"
#include "hignn/trainer.hpp"

namespace py = pybind11;
using namespace hignn;

namespace {

// Configs cross the boundary as JSON text so that Python dicts and config
// files share one schema.
ScenarioConfig scenario_from(const std::string& text) {
    return ScenarioConfig::from_json(text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text));
}

FpOptions fp_from(const std::string& text) {
    return fp_options_from_json(text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text));
}

BeamformerSet to_set(const std::vector<CVector>& x) { return BeamformerSet{x}; }

py::dict fp_dict(const FpResult& r) {
    py::dict d;
    d["beamformers"] = r.x.x;
    d["wsr_trace"] = r.trace.wsr;
    d["iterations"] = r.trace.iterations;
    d["converged"] = r.trace.converged;
    d["bisections"] = r.trace.bisections;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Heterogeneous interference GNN beamforming core";
    m.attr("__version__") = kVersion;

    py::register_exception<Error>(m, "Error");

    py::class_<Sample>(m, "Sample")
        .def_property_readonly("num_links", [](const Sample& s) { return s.instance.num_links(); })
        .def_property_readonly("counts", [](const Sample& s) { return s.instance.counts; })
        .def_property_readonly("antennas",
                               [](const Sample& s) {
                                   std::vector<int> a;
                                   for (int i = 0; i < s.instance.num_links(); ++i)
                                       a.push_back(s.instance.link_antennas(i));
                                   return a;
                               })
        .def_property_readonly("weights", [](const Sample& s) { return s.instance.weights; })
        .def_property_readonly("noise_vars", [](const Sample& s) { return s.instance.noise_vars; })
        .def_property_readonly("p_max", [](const Sample& s) { return s.instance.p_max; })
        .def(
            "channel", [](const Sample& s, int rx, int tx) { return CVector(s.channels(rx, tx)); }, py::arg("rx"),
            py::arg("tx"), "h(rx, tx): channel from transmitter tx to receiver rx");

    m.def("generate_sample", [](const std::string& config, std::uint64_t index) {
        return generate_sample(scenario_from(config), index);
    }, py::arg("config") = "", py::arg("index") = 0);
    m.def("generate_dataset", [](const std::string& config, std::size_t n, int threads) {
        return generate_dataset(scenario_from(config), n, threads).samples;
    }, py::arg("config") = "", py::arg("num_samples"), py::arg("threads") = 1);
    m.def("load_dataset", [](const std::filesystem::path& path) { return load_dataset(path).samples; });
    m.def("default_scenario", [] { return ScenarioConfig{}.to_json().dump(); });

    m.def("weighted_sum_rate", [](const Sample& s, const std::vector<CVector>& x) {
        return weighted_sum_rate(s.instance, to_set(x), s.channels);
    }, py::arg("sample"), py::arg("beamformers"));
    m.def("fp_solve", [](const Sample& s, const std::string& options) {
        return fp_dict(fp_solve(s.instance, s.channels, fp_from(options)));
    }, py::arg("sample"), py::arg("options") = "");

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_property_readonly("best_epoch", [](const Checkpoint& c) { return c.best_epoch; })
        .def_property_readonly("config", [](const Checkpoint& c) { return c.config.to_json().dump(); })
        .def_property_readonly("num_parameters", [](const Checkpoint& c) { return c.params.num_scalars(); })
        .def("infer", [](const Checkpoint& c, const Sample& s) {
            return infer(c.params, s.instance, s.channels).x;
        })
        .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(c, p); });
    m.def("load_checkpoint", [](const std::filesystem::path& p) { return load_checkpoint(p); });
    m.def("init_model", [](const std::string& arch, std::uint64_t seed) {
        Checkpoint c;
        c.config.arch = ModelArch::from_json(arch.empty() ? nlohmann::json::object() : nlohmann::json::parse(arch));
        c.params = init_params(c.config.arch, seed);
        return c;
    }, py::arg("arch") = "", py::arg("seed") = 1);
    m.def("fit", [](const std::string& config, const std::vector<Sample>& train, const std::vector<Sample>& val) {
        const TrainConfig tc = TrainConfig::from_json(nlohmann::json::parse(config.empty() ? "{}" : config));
        Dataset tr{ScenarioConfig{}, train}, va{ScenarioConfig{}, val};
        tr.config.antennas = tc.arch.antennas;
        py::gil_scoped_release release;
        return fit(tc, tr, va);
    }, py::arg("config"), py::arg("train"), py::arg("val"));

    m.def("check_gradients", [](std::uint64_t seed) {
        const GradientCheck g = check_gradients(seed);
        return py::make_tuple(g.max_rel_error, g.worst_param);
    }, py::arg("seed") = 1);
    m.def("check_permutations", [](int trials, std::uint64_t seed) {
        const PermutationCheck p = check_permutations(trials, seed);
        return py::make_tuple(p.max_utility_error, p.max_equivariance_error);
    }, py::arg("trials") = 20, py::arg("seed") = 1);
}
