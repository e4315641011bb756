#pragma once

// Dense 2-D real tensors with a reverse-mode differentiation tape.
//
// Every value is a rows x cols matrix stored row-major; scalars are 1x1.
// Binary elementwise ops broadcast a 1x1, 1xC or Rx1 operand against an
// RxC one and reduce the gradient back to the operand's shape.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hignn::ad {

class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(1, 1, v); }
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::string shape_str() const;

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    /// Value of a 1x1 tensor.
    double item() const;

    bool operator==(const Tensor&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy.
class Var {
public:
    Var() = default;

    /// Reference into the tape; invalidated when further nodes are recorded.
    const Tensor& value() const;
    const Tensor& grad() const;
    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records primitive applications in creation order, which is a topological
/// order of the computation. A Tape is single-threaded.
class Tape {
public:
    /// Receives the gradient flowing into the node's output.
    using Backward = std::function<void(Tape&, const Tensor&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var parameter(Tensor value);

    /// Adds a node. The backward rule is dropped when no input needs a gradient.
    Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
    Var record(Tensor value, std::span<const Var> inputs, Backward backward);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    /// Empty tensor when nothing flowed into the node.
    const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Adds `g` to the gradient of `v` if it participates in differentiation.
    void accumulate(const Var& v, const Tensor& g);

    /// Reverse sweep from a 1x1 root. Each node's rule runs at most once.
    void backward(const Var& root);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        Backward backward;
    };

    Var push(Tensor value, bool requires_grad, Backward backward);
    void check_owner(const Var& v) const;

    std::vector<Node> nodes_;
};

// Primitives. None of them mutates its inputs.

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var concat(std::span<const Var> parts, int axis);
Var concat(std::initializer_list<Var> parts, int axis);
Var relu(const Var& a);
Var log1p(const Var& a);
Var square(const Var& a);
Var clamp_min(const Var& a, double floor);

/// axis -1 reduces everything to 1x1, 0 reduces rows (1xC), 1 reduces columns (Rx1).
Var sum(const Var& a, int axis = -1);
Var mean(const Var& a, int axis = -1);

/// Euclidean norm of every row (Rx1). The gradient at a zero row is zero.
Var row_norm(const Var& a);

/// out[s] = elementwise max over rows r with segment[r] == s. Empty segments
/// yield zero rows. The gradient goes to the argmax row, ties to the lowest row.
Var segment_max(const Var& a, std::span<const int> segment, std::size_t num_segments);

/// out[k] = a[index[k]].
Var gather_rows(const Var& a, std::span<const int> index);

/// out[index[k]] += a[k], with `num_rows` output rows.
Var scatter_add_rows(const Var& a, std::span<const int> index, std::size_t num_rows);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }

/// Central differences (f(θ+ε) − f(θ−ε)) / 2ε for every coordinate of every tensor.
std::vector<Tensor> finite_diff_grad(
    const std::function<double(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& params,
    double eps = 1e-6);

} // namespace hignn::ad
