#include "hignn/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hignn/error.hpp"

namespace hignn::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

MapC as_matrix(const Tensor& t) { return MapC(t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())); }
Map as_matrix(Tensor& t) { return Map(t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())); }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw StructuralError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

// How operand `b` lines up against the full-size operand `a`.
enum class Bcast { Same, Scalar, Row, Col };

Bcast classify(const char* op, const Tensor& a, const Tensor& b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::Same;
    if (b.rows() == 1 && b.cols() == 1) return Bcast::Scalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::Row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::Col;
    shape_error(op, a, b);
}

// Calls visit(k, j) for every flat index k of the full-size operand, with j the
// matching flat index into the broadcast operand.
template <class V>
void for_each_pair(Bcast mode, std::size_t rows, std::size_t cols, V visit) {
    const std::size_t n = rows * cols;
    switch (mode) {
    case Bcast::Same:
        for (std::size_t k = 0; k < n; ++k) visit(k, k);
        break;
    case Bcast::Scalar:
        for (std::size_t k = 0; k < n; ++k) visit(k, std::size_t{0});
        break;
    case Bcast::Row:
        for (std::size_t r = 0, k = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c, ++k) visit(k, c);
        break;
    case Bcast::Col:
        for (std::size_t r = 0, k = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c, ++k) visit(k, r);
        break;
    }
}

// Sums a full-size gradient down to the broadcast operand's shape.
Tensor reduce_to(Bcast mode, const Tensor& full, const Tensor& like) {
    if (mode == Bcast::Same) return full;
    Tensor out(like.rows(), like.cols());
    double* o = out.data().data();
    const double* g = full.data().data();
    for_each_pair(mode, full.rows(), full.cols(), [&](std::size_t k, std::size_t j) { o[j] += g[k]; });
    return out;
}

// Elementwise binary op where the larger operand determines the output shape.
template <class F>
Tensor broadcast_apply(const char* op, const Tensor& a, const Tensor& b, bool& swapped, Bcast& mode, F f) {
    // Numpy-style extents: a dimension of 1 stretches to the other operand's.
    auto extent = [&](std::size_t x, std::size_t y) -> std::size_t {
        if (x == y || y == 1) return x;
        if (x == 1) return y;
        shape_error(op, a, b);
    };
    const std::size_t rows = extent(a.rows(), b.rows());
    const std::size_t cols = extent(a.cols(), b.cols());
    swapped = a.rows() != rows || a.cols() != cols;
    const Tensor& big = swapped ? b : a;
    const Tensor& small = swapped ? a : b;
    mode = classify(op, big, small);
    std::vector<double> out(big.size());
    const double* x = big.data().data();
    const double* y = small.data().data();
    if (swapped)
        for_each_pair(mode, rows, cols, [&](std::size_t k, std::size_t j) { out[k] = f(y[j], x[k]); });
    else
        for_each_pair(mode, rows, cols, [&](std::size_t k, std::size_t j) { out[k] = f(x[k], y[j]); });
    return Tensor(rows, cols, std::move(out));
}

template <class F, class D>
Var unary(const Var& a, F forward, D derivative) {
    const Tensor& x = a.value();
    Tensor out(x.rows(), x.cols());
    for (std::size_t k = 0; k < x.size(); ++k) out.data()[k] = forward(x.data()[k]);
    return a.tape()->record(std::move(out), {a}, [a, derivative](Tape& tape, const Tensor& g) {
        const Tensor& x = a.value();
        Tensor dx(x.rows(), x.cols());
        for (std::size_t k = 0; k < x.size(); ++k) dx.data()[k] = g.data()[k] * derivative(x.data()[k], g.data()[k]);
        tape.accumulate(a, dx);
    });
}

Tape* same_tape(const Var& a, const Var& b) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape())
        throw ContractError("operands belong to different tapes");
    return a.tape();
}

} // namespace

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
        throw StructuralError("Tensor: " + std::to_string(data_.size()) + " values for shape [" +
                              std::to_string(rows) + "x" + std::to_string(cols) + "]");
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw StructuralError("Tensor::from_rows: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[' << rows_ << 'x' << cols_ << ']';
    return os.str();
}

double Tensor::item() const {
    if (rows_ != 1 || cols_ != 1) throw ContractError("item() on non-scalar tensor " + shape_str());
    return data_[0];
}

// ---------------------------------------------------------------- Var / Tape

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::push(Tensor value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, requires_grad ? std::move(backward) : Backward{}});
    return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(const Var& v) const {
    if (v.tape_ != this) throw ContractError("variable recorded on a different tape");
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

Var Tape::parameter(Tensor value) { return push(std::move(value), true, {}); }

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& v : inputs) {
        check_owner(v);
        needs = needs || nodes_[v.id_].requires_grad;
    }
    return push(std::move(value), needs, std::move(backward));
}

void Tape::accumulate(const Var& v, const Tensor& g) {
    Node& node = nodes_[v.id_];
    if (!node.requires_grad) return;
    if (g.rows() != node.value.rows() || g.cols() != node.value.cols())
        shape_error("accumulate", node.value, g);
    if (node.grad.empty()) {
        node.grad = g;
        return;
    }
    auto dst = node.grad.data();
    auto src = g.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

void Tape::backward(const Var& root) {
    check_owner(root);
    const Tensor& r = nodes_[root.id_].value;
    if (r.rows() != 1 || r.cols() != 1)
        throw ContractError("backward() requires a scalar root, got " + r.shape_str());
    for (Node& n : nodes_) n.grad = Tensor{};
    if (!nodes_[root.id_].requires_grad) return;
    nodes_[root.id_].grad = Tensor::scalar(1.0);
    for (std::size_t id = root.id_ + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.backward && !n.grad.empty()) n.backward(*this, n.grad);
    }
}

// ---------------------------------------------------------------- primitives

Var matmul(const Var& a, const Var& b) {
    Tape* tape = same_tape(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.cols() != y.rows()) shape_error("matmul", x, y);
    Tensor out(x.rows(), y.cols());
    if (out.size() > 0) as_matrix(out).noalias() = as_matrix(x) * as_matrix(y);
    return tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& x = a.value();
        const Tensor& y = b.value();
        if (t.requires_grad(a.id())) {
            Tensor dx(x.rows(), x.cols());
            if (dx.size() > 0) as_matrix(dx).noalias() = as_matrix(g) * as_matrix(y).transpose();
            t.accumulate(a, dx);
        }
        if (t.requires_grad(b.id())) {
            Tensor dy(y.rows(), y.cols());
            if (dy.size() > 0) as_matrix(dy).noalias() = as_matrix(x).transpose() * as_matrix(g);
            t.accumulate(b, dy);
        }
    });
}

namespace {

// Shared plumbing for the four broadcasting binary ops. `da` / `db` give the
// partial derivatives with respect to each operand at (x, y).
template <class F, class Dx, class Dy>
Var binary(const char* op, const Var& a, const Var& b, F f, Dx da, Dy db) {
    Tape* tape = same_tape(a, b);
    bool swapped = false;
    Bcast mode = Bcast::Same;
    Tensor out = broadcast_apply(op, a.value(), b.value(), swapped, mode, f);
    return tape->record(std::move(out), {a, b}, [a, b, swapped, mode, da, db](Tape& t, const Tensor& g) {
        const Var& big = swapped ? b : a;
        const Var& small = swapped ? a : b;
        const Tensor& xb = big.value();
        const Tensor& xs = small.value();
        Tensor g_big(xb.rows(), xb.cols());
        Tensor g_small_full(xb.rows(), xb.cols());
        const double* pb = xb.data().data();
        const double* ps = xs.data().data();
        const double* pg = g.data().data();
        double* ob = g_big.data().data();
        double* os = g_small_full.data().data();
        for_each_pair(mode, xb.rows(), xb.cols(), [&](std::size_t k, std::size_t j) {
            const double x = swapped ? ps[j] : pb[k];
            const double y = swapped ? pb[k] : ps[j];
            const double gx = pg[k] * da(x, y);
            const double gy = pg[k] * db(x, y);
            ob[k] = swapped ? gy : gx;
            os[k] = swapped ? gx : gy;
        });
        t.accumulate(big, g_big);
        if (t.requires_grad(small.id())) t.accumulate(small, reduce_to(mode, g_small_full, xs));
    });
}

} // namespace

Var add(const Var& a, const Var& b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var div(const Var& a, const Var& b) {
    return binary(
        "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Var scale(const Var& a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var relu(const Var& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var log1p(const Var& a) {
    return unary(a, [](double x) { return std::log1p(x); }, [](double x, double) { return 1.0 / (1.0 + x); });
}

Var square(const Var& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp_min(const Var& a, double floor) {
    return unary(
        a, [floor](double x) { return x < floor ? floor : x; },
        [floor](double x, double) { return x < floor ? 0.0 : 1.0; });
}

Var concat(std::initializer_list<Var> parts, int axis) {
    return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, int axis) {
    if (parts.empty()) throw StructuralError("concat: no inputs");
    if (axis != 0 && axis != 1) throw StructuralError("concat: axis must be 0 or 1");
    Tape* tape = parts.front().tape();
    const Tensor& first = parts.front().value();
    std::size_t rows = 0, cols = 0;
    for (const Var& p : parts) {
        same_tape(parts.front(), p);
        const Tensor& v = p.value();
        if (axis == 1) {
            if (v.rows() != first.rows()) shape_error("concat(axis=1)", first, v);
            cols += v.cols();
        } else {
            if (v.cols() != first.cols()) shape_error("concat(axis=0)", first, v);
            rows += v.rows();
        }
    }
    if (axis == 1) rows = first.rows();
    else cols = first.cols();

    Tensor out(rows, cols);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        for (std::size_t r = 0; r < v.rows(); ++r)
            for (std::size_t c = 0; c < v.cols(); ++c) {
                if (axis == 1) out(r, offset + c) = v(r, c);
                else out(offset + r, c) = v(r, c);
            }
        offset += axis == 1 ? v.cols() : v.rows();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return tape->record(std::move(out), parts, [inputs, axis](Tape& t, const Tensor& g) {
        std::size_t offset = 0;
        for (const Var& p : inputs) {
            const Tensor& v = p.value();
            if (t.requires_grad(p.id())) {
                Tensor gp(v.rows(), v.cols());
                for (std::size_t r = 0; r < v.rows(); ++r)
                    for (std::size_t c = 0; c < v.cols(); ++c)
                        gp(r, c) = axis == 1 ? g(r, offset + c) : g(offset + r, c);
                t.accumulate(p, gp);
            }
            offset += axis == 1 ? v.cols() : v.rows();
        }
    });
}

Var sum(const Var& a, int axis) {
    const Tensor& x = a.value();
    Tensor out;
    if (axis == -1) {
        double s = 0.0;
        for (double v : x.data()) s += v;
        out = Tensor::scalar(s);
    } else if (axis == 0) {
        out = Tensor(1, x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(r, c);
    } else if (axis == 1) {
        out = Tensor(x.rows(), 1);
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) out(r, 0) += x(r, c);
    } else {
        throw StructuralError("sum: axis must be -1, 0 or 1");
    }
    return a.tape()->record(std::move(out), {a}, [a, axis](Tape& t, const Tensor& g) {
        const Tensor& x = a.value();
        Tensor dx(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c)
                dx(r, c) = axis == -1 ? g(0, 0) : axis == 0 ? g(0, c) : g(r, 0);
        t.accumulate(a, dx);
    });
}

Var mean(const Var& a, int axis) {
    const Tensor& x = a.value();
    const std::size_t n = axis == -1 ? x.size() : axis == 0 ? x.rows() : x.cols();
    if (n == 0) throw StructuralError("mean: empty reduction over " + x.shape_str());
    return scale(sum(a, axis), 1.0 / double(n));
}

Var row_norm(const Var& a) {
    const Tensor& x = a.value();
    Tensor out(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (double v : x.row(r)) s += v * v;
        out(r, 0) = std::sqrt(s);
    }
    Tensor norms = out;
    return a.tape()->record(std::move(out), {a}, [a, norms = std::move(norms)](Tape& t, const Tensor& g) {
        const Tensor& x = a.value();
        Tensor dx(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const double n = norms(r, 0);
            if (n == 0.0) continue;
            for (std::size_t c = 0; c < x.cols(); ++c) dx(r, c) = g(r, 0) * x(r, c) / n;
        }
        t.accumulate(a, dx);
    });
}

Var segment_max(const Var& a, std::span<const int> segment, std::size_t num_segments) {
    const Tensor& x = a.value();
    if (segment.size() != x.rows())
        throw StructuralError("segment_max: " + std::to_string(segment.size()) + " segment ids for " + x.shape_str());
    const std::size_t cols = x.cols();
    Tensor out(num_segments, cols);
    std::vector<int> argmax(num_segments * cols, -1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const int s = segment[r];
        if (s < 0 || std::size_t(s) >= num_segments) throw StructuralError("segment_max: segment id out of range");
        for (std::size_t c = 0; c < cols; ++c) {
            int& best = argmax[std::size_t(s) * cols + c];
            // Strict comparison keeps the lowest row on ties.
            if (best < 0 || x(r, c) > x(std::size_t(best), c)) {
                best = int(r);
                out(std::size_t(s), c) = x(r, c);
            }
        }
    }
    return a.tape()->record(std::move(out), {a}, [a, argmax = std::move(argmax), cols](Tape& t, const Tensor& g) {
        const Tensor& x = a.value();
        Tensor dx(x.rows(), x.cols());
        for (std::size_t k = 0; k < argmax.size(); ++k) {
            if (argmax[k] < 0) continue;
            dx(std::size_t(argmax[k]), k % cols) += g.data()[k];
        }
        t.accumulate(a, dx);
    });
}

Var gather_rows(const Var& a, std::span<const int> index) {
    const Tensor& x = a.value();
    Tensor out(index.size(), x.cols());
    for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] < 0 || std::size_t(index[k]) >= x.rows())
            throw StructuralError("gather_rows: index " + std::to_string(index[k]) + " out of range for " + x.shape_str());
        auto src = x.row(std::size_t(index[k]));
        std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    std::vector<int> idx(index.begin(), index.end());
    return a.tape()->record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, const Tensor& g) {
        const Tensor& x = a.value();
        Tensor dx(x.rows(), x.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto dst = dx.row(std::size_t(idx[k]));
            auto src = g.row(k);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
        t.accumulate(a, dx);
    });
}

Var scatter_add_rows(const Var& a, std::span<const int> index, std::size_t num_rows) {
    const Tensor& x = a.value();
    if (index.size() != x.rows())
        throw StructuralError("scatter_add_rows: " + std::to_string(index.size()) + " indices for " + x.shape_str());
    Tensor out(num_rows, x.cols());
    for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] < 0 || std::size_t(index[k]) >= num_rows)
            throw StructuralError("scatter_add_rows: index out of range");
        auto dst = out.row(std::size_t(index[k]));
        auto src = x.row(k);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
    std::vector<int> idx(index.begin(), index.end());
    return a.tape()->record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, const Tensor& g) {
        const Tensor& x = a.value();
        Tensor dx(x.rows(), x.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto src = g.row(std::size_t(idx[k]));
            std::copy(src.begin(), src.end(), dx.row(k).begin());
        }
        t.accumulate(a, dx);
    });
}

std::vector<Tensor> finite_diff_grad(const std::function<double(const std::vector<Tensor>&)>& f,
                                     const std::vector<Tensor>& params, double eps) {
    std::vector<Tensor> probe = params;
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor g(params[p].rows(), params[p].cols());
        for (std::size_t k = 0; k < params[p].size(); ++k) {
            const double orig = params[p].data()[k];
            probe[p].data()[k] = orig + eps;
            const double up = f(probe);
            probe[p].data()[k] = orig - eps;
            const double down = f(probe);
            probe[p].data()[k] = orig;
            g.data()[k] = (up - down) / (2.0 * eps);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

} // namespace hignn::ad
