#include "doctest.h"

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <random>

#include "hignn/error.hpp"
#include "hignn/tensor.hpp"

using namespace hignn::ad;

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(r, c);
    for (double& v : t.data()) v = u(rng);
    return t;
}

// Scalarizes op(inputs) with fixed random weights so that every output
// coordinate reaches the gradient with a distinct coefficient.
double max_rel_error(const Builder& op, const std::vector<Tensor>& inputs, std::mt19937_64& rng) {
    Tensor weights;
    auto run = [&](Tape& tape, const std::vector<Tensor>& xs, bool grad) {
        std::vector<Var> vars;
        for (const auto& x : xs) vars.push_back(grad ? tape.parameter(x) : tape.constant(x));
        Var out = op(tape, vars);
        if (weights.empty()) weights = random_tensor(out.value().rows(), out.value().cols(), rng);
        return std::make_pair(sum(mul(out, tape.constant(weights))), vars);
    };
    Tape tape;
    auto [root, vars] = run(tape, inputs, true);
    tape.backward(root);

    auto fd = finite_diff_grad(
        [&](const std::vector<Tensor>& xs) {
            Tape t;
            return run(t, xs, false).first.value().item();
        },
        inputs, 1e-6);

    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor& g = vars[k].grad();
        double diff = 0.0, scale = 1e-6;
        for (std::size_t i = 0; i < fd[k].size(); ++i) {
            const double gi = g.empty() ? 0.0 : g.data()[i];
            diff = std::max(diff, std::abs(gi - fd[k].data()[i]));
            scale = std::max({scale, std::abs(gi), std::abs(fd[k].data()[i])});
        }
        worst = std::max(worst, diff / scale);
    }
    return worst;
}

void check_trials(const char* name, const std::function<std::pair<Builder, std::vector<Tensor>>(std::mt19937_64&)>& make) {
    std::mt19937_64 rng(std::hash<std::string>{}(name));
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        auto [op, inputs] = make(rng);
        worst = std::max(worst, max_rel_error(op, inputs, rng));
    }
    INFO(std::string(name));
    CHECK(worst <= 1e-4);
}

std::size_t dim(std::mt19937_64& rng, std::size_t hi = 5) { return std::uniform_int_distribution<std::size_t>(1, hi)(rng); }

} // namespace

TEST_CASE("tensor construction and shapes") {
    Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t(1, 2) == 6);
    CHECK(t.shape_str() == "[2x3]");
    CHECK(Tensor::scalar(2.5).item() == 2.5);
    CHECK_THROWS_AS(t.item(), hignn::ContractError);
    CHECK_THROWS_AS(Tensor(2, 2, std::vector<double>{1, 2, 3}), hignn::StructuralError);
}

TEST_CASE("matmul forward and shape errors") {
    Tape tape;
    Var a = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
    Var b = tape.constant(Tensor::from_rows({{5}, {6}}));
    CHECK(matmul(a, b).value() == Tensor::from_rows({{17}, {39}}));
    CHECK_THROWS_AS(matmul(b, b), hignn::StructuralError);
}

TEST_CASE("broadcasting") {
    Tape tape;
    Var m = tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
    CHECK(add(m, tape.constant(Tensor::from_rows({{10, 20}}))).value() == Tensor::from_rows({{11, 22}, {13, 24}}));
    CHECK(add(m, tape.constant(Tensor::from_rows({{10}, {20}}))).value() == Tensor::from_rows({{11, 12}, {23, 24}}));
    CHECK(sub(tape.constant(Tensor::scalar(1)), m).value() == Tensor::from_rows({{0, -1}, {-2, -3}}));
    CHECK(add(tape.constant(Tensor(0, 2)), tape.constant(Tensor::from_rows({{1, 2}}))).value().rows() == 0);
    CHECK_THROWS_AS(add(m, tape.constant(Tensor(3, 2))), hignn::StructuralError);
}

TEST_CASE("backward requires a scalar root and accumulates shared inputs") {
    Tape tape;
    Var x = tape.parameter(Tensor::from_rows({{2, 3}}));
    CHECK_THROWS_AS(tape.backward(x), hignn::ContractError);
    Var y = sum(mul(x, x) + x);
    tape.backward(y);
    CHECK(x.grad() == Tensor::from_rows({{5, 7}}));
}

TEST_CASE("finite_diff_grad of simple functions") {
    std::vector<Tensor> p{Tensor::from_rows({{1.5, -2.0}})};
    auto linear = finite_diff_grad([](const std::vector<Tensor>& t) { return 3 * t[0](0, 0) - 2 * t[0](0, 1); }, p, 1e-3);
    CHECK(linear[0](0, 0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(linear[0](0, 1) == doctest::Approx(-2.0).epsilon(1e-12));
    auto quad = finite_diff_grad([](const std::vector<Tensor>& t) { return t[0](0, 0) * t[0](0, 0); }, p, 1e-3);
    CHECK(quad[0](0, 0) == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("relu and segment_max semantics") {
    Tape tape;
    Var x = tape.parameter(Tensor::from_rows({{-1, 2}, {3, 2}, {0.5, -4}}));
    CHECK(relu(x).value() == Tensor::from_rows({{0, 2}, {3, 2}, {0.5, 0}}));

    const std::vector<int> seg{0, 0, 2};
    Var m = segment_max(x, seg, 3);
    CHECK(m.value() == Tensor::from_rows({{3, 2}, {0, 0}, {0.5, -4}}));
    tape.backward(sum(m));
    // column 1 ties between rows 0 and 1: the lower row gets the gradient
    CHECK(x.grad() == Tensor::from_rows({{0, 1}, {1, 0}, {1, 1}}));
}

TEST_CASE("gather and scatter are adjoint") {
    Tape tape;
    Var x = tape.parameter(Tensor::from_rows({{1}, {2}, {3}}));
    const std::vector<int> idx{2, 0, 2};
    Var g = gather_rows(x, idx);
    CHECK(g.value() == Tensor::from_rows({{3}, {1}, {3}}));
    tape.backward(sum(g));
    CHECK(x.grad() == Tensor::from_rows({{1}, {0}, {2}}));

    Tape t2;
    Var y = t2.constant(Tensor::from_rows({{1}, {2}, {3}}));
    CHECK(scatter_add_rows(y, idx, 4).value() == Tensor::from_rows({{2}, {0}, {4}, {0}}));
    CHECK_THROWS_AS(gather_rows(y, std::vector<int>{3}), hignn::StructuralError);
}

TEST_CASE("row_norm has zero gradient at a zero row") {
    Tape tape;
    Var x = tape.parameter(Tensor::from_rows({{3, 4}, {0, 0}}));
    Var n = row_norm(x);
    CHECK(n.value() == Tensor::from_rows({{5}, {0}}));
    tape.backward(sum(n));
    CHECK(x.grad() == Tensor::from_rows({{0.6, 0.8}, {0, 0}}));
}

TEST_CASE("finite differences agree with backward for every primitive") {
    check_trials("matmul", [](auto& rng) {
        const auto r = dim(rng), k = dim(rng), c = dim(rng);
        return std::make_pair(Builder([](Tape&, const std::vector<Var>& v) { return matmul(v[0], v[1]); }),
                              std::vector<Tensor>{random_tensor(r, k, rng), random_tensor(k, c, rng)});
    });
    for (int kind = 0; kind < 3; ++kind) {
        // full, row-vector and column-vector right operands
        check_trials(kind == 0 ? "add" : kind == 1 ? "add_row" : "add_col", [kind](auto& rng) {
            const auto r = dim(rng), c = dim(rng);
            Tensor b = random_tensor(kind == 2 ? r : kind == 1 ? 1 : r, kind == 1 ? c : kind == 2 ? 1 : c, rng);
            return std::make_pair(Builder([](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]) + scale(sub(v[1], v[0]), 0.5); }),
                                  std::vector<Tensor>{random_tensor(r, c, rng), b});
        });
    }
    check_trials("mul_div", [](auto& rng) {
        const auto r = dim(rng), c = dim(rng);
        return std::make_pair(Builder([](Tape&, const std::vector<Var>& v) { return mul(v[0], v[1]) + div(v[0], v[2]); }),
                              std::vector<Tensor>{random_tensor(r, c, rng), random_tensor(1, c, rng),
                                                  random_tensor(r, 1, rng, 0.5, 2.0)});
    });
    check_trials("scale_square_log1p", [](auto& rng) {
        const auto r = dim(rng), c = dim(rng);
        return std::make_pair(
            Builder([](Tape&, const std::vector<Var>& v) { return scale(square(v[0]), -1.7) + log1p(v[1]); }),
            std::vector<Tensor>{random_tensor(r, c, rng), random_tensor(r, c, rng, 0.1, 3.0)});
    });
    check_trials("relu_clamp", [](auto& rng) {
        const auto r = dim(rng), c = dim(rng);
        Tensor x = random_tensor(r, c, rng);
        for (double& v : x.data()) v += v >= 0 ? 0.1 : -0.1; // keep clear of the kinks
        return std::make_pair(
            Builder([](Tape&, const std::vector<Var>& v) { return relu(v[0]) + scale(clamp_min(v[0], 0.0), 2.0); }),
            std::vector<Tensor>{x});
    });
    check_trials("concat", [](auto& rng) {
        const auto r = dim(rng), c1 = dim(rng), c2 = dim(rng);
        return std::make_pair(Builder([](Tape&, const std::vector<Var>& v) {
                                  Var h = concat({v[0], v[1]}, 1);
                                  return concat({h, h}, 0);
                              }),
                              std::vector<Tensor>{random_tensor(r, c1, rng), random_tensor(r, c2, rng)});
    });
    check_trials("sum_mean", [](auto& rng) {
        const auto r = dim(rng), c = dim(rng);
        return std::make_pair(Builder([](Tape&, const std::vector<Var>& v) {
                                  return sum(v[0], 0) + mean(v[0], -1) + sum(mean(v[0], 1), 0);
                              }),
                              std::vector<Tensor>{random_tensor(r, c, rng)});
    });
    check_trials("row_norm", [](auto& rng) {
        const auto r = dim(rng), c = dim(rng);
        return std::make_pair(Builder([](Tape&, const std::vector<Var>& v) { return row_norm(v[0]); }),
                              std::vector<Tensor>{random_tensor(r, c, rng, 0.2, 1.0)});
    });
    check_trials("segment_max", [](auto& rng) {
        const auto r = dim(rng, 8), c = dim(rng), s = dim(rng, 4);
        auto seg = std::make_shared<std::vector<int>>();
        for (std::size_t i = 0; i < r; ++i) seg->push_back(int(rng() % s));
        return std::make_pair(Builder([seg, s](Tape&, const std::vector<Var>& v) { return segment_max(v[0], *seg, s); }),
                              std::vector<Tensor>{random_tensor(r, c, rng)});
    });
    check_trials("gather_scatter", [](auto& rng) {
        const auto r = dim(rng), c = dim(rng), n = dim(rng, 8);
        auto idx = std::make_shared<std::vector<int>>();
        for (std::size_t i = 0; i < n; ++i) idx->push_back(int(rng() % r));
        return std::make_pair(Builder([idx, r](Tape&, const std::vector<Var>& v) {
                                  return scatter_add_rows(gather_rows(v[0], *idx), *idx, r + 1);
                              }),
                              std::vector<Tensor>{random_tensor(r, c, rng)});
    });
}
