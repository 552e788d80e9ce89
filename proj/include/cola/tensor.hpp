#pragma once

// Dense 2-D tensors with reverse-mode differentiation.
//
// Every op returns a new Tensor. When gradient recording is enabled and any
// input requires a gradient, the result keeps pointers to its inputs and a
// closure that pushes its gradient back into them; `backward` walks that DAG
// in reverse topological order. Graphs are per-thread: build and run one DAG
// on a single thread. Distinct DAGs that only read shared leaves may be built
// concurrently with recording disabled (see NoGradGuard).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cola/kernels.hpp"

namespace cola::ad {

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a gradient flows in
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::span<double> ensure_grad();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor row(std::vector<double> values, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rows() const { return node_->shape.rows; }
    std::size_t cols() const { return node_->shape.cols; }
    std::size_t size() const { return node_->shape.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::span<const double> values() const { return node_->value; }
    std::span<double> mutable_values() { return node_->value; }
    /// Gradient buffer; empty span when no gradient has reached this tensor.
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() { return node_->ensure_grad(); }
    void zero_grad();

    double item() const;
    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& shared() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Gradient recording toggle for the current thread.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// A fixed sparse linear operator (both orientations cached) for graph propagation.
struct SparseOperator {
    kernels::SparseRows forward;
    kernels::SparseRows transpose;

    explicit SparseOperator(kernels::SparseRows rows)
        : forward(std::move(rows)), transpose(forward.transposed()) {}
};

inline constexpr std::size_t kNoRow = std::numeric_limits<std::size_t>::max();

enum class Axis {
    row_wise,  // each row is normalized independently
    col_wise,  // each column is normalized independently
};

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double c);
/// Copy of `a` with the listed flat positions set to `fill`; those positions get no gradient.
Tensor masked_fill(const Tensor& a, std::span<const std::size_t> positions, double fill);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Rows of `table` at `indices`; kNoRow yields a zero row. Zero indices give a 0×cols tensor.
Tensor row_lookup(const Tensor& table, std::span<const std::size_t> indices);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softmax(const Tensor& a, Axis axis);
/// weights (n×1 or 1×n) times rows (n×d) -> 1×d
Tensor weighted_sum(const Tensor& weights, const Tensor& rows);
/// S · x for a fixed sparse S.
Tensor propagate(const std::shared_ptr<const SparseOperator>& op, const Tensor& x);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Mean over `labels` of -log softmax(logits)[label], treating the flattened
/// logits as one distribution. Entries listed in `masked` get -inf logits.
/// A masked label contributes -log(1e-12) with no gradient and sets *guarded.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels,
                     std::span<const std::size_t> masked = {}, bool* guarded = nullptr);

/// Populates gradients of every tensor reachable from the scalar `root`.
void backward(const Tensor& root);

}  // namespace cola::ad
