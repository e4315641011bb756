#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "hignn/channel_sim.hpp"
#include "hignn/fp_solver.hpp"
#include "hignn/metrics.hpp"

using namespace hignn;
using testing::make_instance;

using oracle::grid_optimum;

TEST_CASE("MRT initialization") {
    ChannelSet h(3);
    for (int r = 0; r < 3; ++r)
        for (int t = 0; t < 3; ++t) h(r, t) = CVector::Zero(t == 0 ? 2 : 1);
    h(0, 0) << Complex(1, 0), Complex(0, 1);
    h(1, 1) << Complex(0.3, 0);
    const BeamformerSet x = init_mrt(h, 1.0);
    CHECK(std::abs(x[0][0] - Complex(1 / std::sqrt(2.0), 0)) < 1e-15);
    CHECK(std::abs(x[0][1] - Complex(0, 1 / std::sqrt(2.0))) < 1e-15);
    CHECK(std::abs(x[1][0] - Complex(1, 0)) < 1e-15);
    CHECK(x[2].norm() == 0.0);
}

TEST_CASE("single MISO link reaches MRT at full power in one iteration") {
    auto inst = make_instance({1}, {2});
    ChannelSet h(1);
    h(0, 0) = CVector(2);
    h(0, 0) << Complex(0.8, -0.3), Complex(-0.2, 1.1);
    BeamformerSet start{{CVector(2)}};
    start[0] << Complex(0.1, 0.0), Complex(0.0, 0.05);
    const BeamformerSet x = fp_iterate(start, h, inst.weights, inst.noise_vars, 1.0);
    CHECK(x[0].squaredNorm() == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(x[0].squaredNorm() <= 1.0);
    // aligned with h
    CHECK(std::abs(h(0, 0).dot(x[0])) == doctest::Approx(h(0, 0).norm() * x[0].norm()).epsilon(1e-9));

    const FpResult r = fp_solve(inst, h);
    CHECK(r.trace.converged);
    CHECK(r.trace.iterations <= 2);
    CHECK(r.trace.wsr.back() == doctest::Approx(std::log(1 + h(0, 0).squaredNorm())).epsilon(1e-7));
}

TEST_CASE("decoupled SISO links go to full power") {
    auto inst = make_instance({2}, {1});
    ChannelSet h(2);
    h(0, 0) = CVector::Constant(1, Complex(1.5, 0.5));
    h(1, 1) = CVector::Constant(1, Complex(-0.7, 0.9));
    h(0, 1) = CVector::Constant(1, Complex(1e-6, 0));
    h(1, 0) = CVector::Constant(1, Complex(0, 1e-6));
    BeamformerSet start{{CVector::Constant(1, 0.3), CVector::Constant(1, 0.2)}};
    const FpResult r = fp_solve_from(start, h, inst.weights, inst.noise_vars, 1.0);
    const double expected = std::log(1 + h(0, 0).squaredNorm()) + std::log(1 + h(1, 1).squaredNorm());
    CHECK(r.trace.wsr.back() == doctest::Approx(expected).epsilon(1e-6));
    CHECK(std::abs(r.trace.wsr.back() - expected) < 1e-6);
    CHECK(r.x.max_power() <= 1.0);
}

TEST_CASE("WSR trace is non-decreasing and iterates stay feasible") {
    ScenarioConfig sc;
    for (std::uint64_t i = 0; i < 50; ++i) {
        const Sample s = generate_sample(sc, i);
        const FpResult r = fp_solve(s.instance, s.channels);
        for (std::size_t k = 1; k < r.trace.wsr.size(); ++k) CHECK(r.trace.wsr[k] >= r.trace.wsr[k - 1] - 1e-9);
        CHECK(r.x.feasible(1.0, 0.0));
        CHECK(r.trace.wsr.back() == doctest::Approx(weighted_sum_rate(s.instance, r.x, s.channels)).epsilon(1e-12));
    }
}

TEST_CASE("truncated FP runs exactly the requested iterations") {
    const Sample s = generate_sample(ScenarioConfig{}, 0);
    FpOptions o;
    o.truncated_iters = 3;
    const FpResult r = fp_solve(s.instance, s.channels, o);
    CHECK(r.trace.iterations == 3);
    CHECK(r.trace.wsr.size() == 4);
    const FpResult full = fp_solve(s.instance, s.channels);
    CHECK(full.trace.wsr.back() >= r.trace.wsr.back() - 1e-9);

    FpOptions bad;
    bad.max_iters = 0;
    CHECK_THROWS(fp_solve(s.instance, s.channels, bad));
}

TEST_CASE("FP is near the exhaustive power-grid optimum on 3 SISO links") {
    ScenarioConfig sc;
    sc.counts = {3};
    sc.antennas = {1};
    sc.area_length = 100.0;
    double ratio = 0.0;
    const int n = 20;
    for (int i = 0; i < n; ++i) {
        const Sample s = generate_sample(sc, std::uint64_t(i));
        ratio += fp_solve(s.instance, s.channels).trace.wsr.back() / grid_optimum(s.instance, s.channels) / n;
    }
    CHECK(ratio >= 0.95);
}
