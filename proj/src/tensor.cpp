#include "cola/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "cola/errors.hpp"

namespace cola::ad {

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

bool needs_tape(std::initializer_list<const Tensor*> inputs) {
    if (!g_grad_enabled) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

/// Allocates the result node and, when recording, wires parents and the backward closure.
template <class Backward>
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
                   Backward&& bw) {
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value = std::move(value);
    if (needs_tape(inputs)) {
        node->requires_grad = true;
        for (const Tensor* t : inputs) node->parents.push_back(t->shared());
        node->backward = std::forward<Backward>(bw);
    }
    return Tensor(std::move(node));
}

template <class F>
Tensor unary(const Tensor& a, F&& f, std::function<double(double x, double y)> dfdx) {
    std::vector<double> out(a.size());
    auto in = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    return make_result(a.shape(), std::move(out), {&a}, [dfdx](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(p.value[i], self.value[i]);
    });
}

}  // namespace

std::string Shape::str() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }

std::span<double> Node::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return from(shape, std::vector<double>(shape.size(), 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (values.size() != shape.size())
        throw ShapeError("tensor value count " + std::to_string(values.size()) + " does not match shape " +
                         shape.str());
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1, 1}, {v}, requires_grad); }

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
    const auto n = values.size();
    return from({1, n}, std::move(values), requires_grad);
}

void Tensor::zero_grad() {
    if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
    return node_->value[0];
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a.shape(), b.shape());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    std::vector<double> out(n * m, 0.0);
    kernels::gemm_acc(kernels::Trans::no, kernels::Trans::no, n, m, k, a.values(), b.values(), out);
    return make_result({n, m}, std::move(out), {&a, &b}, [n, k, m](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad)
            kernels::gemm_acc(kernels::Trans::no, kernels::Trans::yes, n, k, m, self.grad, pb.value,
                              pa.ensure_grad());
        if (pb.requires_grad)
            kernels::gemm_acc(kernels::Trans::yes, kernels::Trans::no, k, m, n, pa.value, self.grad,
                              pb.ensure_grad());
    });
}

Tensor transpose(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.at(i, j);
    return make_result({c, r}, std::move(out), {&a}, [r, c](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto g = p.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            auto g = p->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            Node& p = *self.parents[k];
            if (!p.requires_grad) continue;
            const double sign = k == 0 ? 1.0 : -1.0;
            auto g = p.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto g = pa.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto g = pb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor masked_fill(const Tensor& a, std::span<const std::size_t> positions, double fill) {
    std::vector<double> out(a.values().begin(), a.values().end());
    std::vector<char> hit(a.size(), 0);
    for (auto p : positions) {
        if (p >= a.size()) throw ShapeError("masked_fill: position out of range for " + a.shape().str());
        out[p] = fill;
        hit[p] = 1;
    }
    return make_result(a.shape(), std::move(out), {&a}, [hit = std::move(hit)](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto g = p.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!hit[i]) g[i] += self.grad[i];
    });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    bool record = false;
    for (const auto& p : parts) {
        if (p.cols() != cols) shape_error("concat_rows", parts.front().shape(), p.shape());
        rows += p.rows();
        record = record || p.requires_grad();
    }
    std::vector<double> out;
    out.reserve(rows * cols);
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());

    auto node = std::make_shared<Node>();
    node->shape = {rows, cols};
    node->value = std::move(out);
    if (record && g_grad_enabled) {
        node->requires_grad = true;
        for (const auto& p : parts) node->parents.push_back(p.shared());
        node->backward = [](Node& self) {
            std::size_t offset = 0;
            for (auto& p : self.parents) {
                const std::size_t n = p->value.size();
                if (p->requires_grad) {
                    auto g = p->ensure_grad();
                    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
                }
                offset += n;
            }
        };
    }
    return Tensor(std::move(node));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) shape_error("concat_cols", a.shape(), b.shape());
    const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
    std::vector<double> out(r * (ca + cb));
    for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(a.values().begin() + i * ca, ca, out.begin() + i * (ca + cb));
        std::copy_n(b.values().begin() + i * cb, cb, out.begin() + i * (ca + cb) + ca);
    }
    return make_result({r, ca + cb}, std::move(out), {&a, &b}, [r, ca, cb](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (std::size_t i = 0; i < r; ++i) {
            if (pa.requires_grad) {
                auto g = pa.ensure_grad();
                for (std::size_t j = 0; j < ca; ++j) g[i * ca + j] += self.grad[i * (ca + cb) + j];
            }
            if (pb.requires_grad) {
                auto g = pb.ensure_grad();
                for (std::size_t j = 0; j < cb; ++j) g[i * cb + j] += self.grad[i * (ca + cb) + ca + j];
            }
        }
    });
}

Tensor row_lookup(const Tensor& table, std::span<const std::size_t> indices) {
    const std::size_t d = table.cols();
    std::vector<double> out(indices.size() * d, 0.0);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto r = indices[i];
        if (r == kNoRow) continue;
        if (r >= table.rows())
            throw ShapeError("row_lookup: row " + std::to_string(r) + " out of range for " + table.shape().str());
        std::copy_n(table.values().begin() + r * d, d, out.begin() + i * d);
    }
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return make_result({indices.size(), d}, std::move(out), {&table}, [idx = std::move(idx), d](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto g = p.ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] == kNoRow) continue;
            for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
        }
    });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](double x) { return x < 0.0 ? 0.0 : x; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor softmax(const Tensor& a, Axis axis) {
    const std::size_t r = a.rows(), c = a.cols();
    // Groups are rows (row_wise) or columns (col_wise); element j of group g sits at offset(g, j).
    const bool by_row = axis == Axis::row_wise;
    const std::size_t groups = by_row ? r : c, len = by_row ? c : r;
    auto offset = [=](std::size_t g, std::size_t j) { return by_row ? g * c + j : j * c + g; };

    std::vector<double> out(a.size());
    auto in = a.values();
    for (std::size_t g = 0; g < groups; ++g) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, in[offset(g, j)]);
        double total = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
            const double e = std::isinf(mx) && mx < 0 ? 1.0 : std::exp(in[offset(g, j)] - mx);
            out[offset(g, j)] = e;
            total += e;
        }
        for (std::size_t j = 0; j < len; ++j) out[offset(g, j)] /= total;
    }
    return make_result(a.shape(), std::move(out), {&a}, [=](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto g = p.ensure_grad();
        for (std::size_t grp = 0; grp < groups; ++grp) {
            double dot = 0.0;
            for (std::size_t j = 0; j < len; ++j) dot += self.value[offset(grp, j)] * self.grad[offset(grp, j)];
            for (std::size_t j = 0; j < len; ++j) {
                const auto o = offset(grp, j);
                g[o] += self.value[o] * (self.grad[o] - dot);
            }
        }
    });
}

Tensor weighted_sum(const Tensor& weights, const Tensor& rows) {
    const std::size_t n = rows.rows(), d = rows.cols();
    if (weights.size() != n || (weights.rows() != 1 && weights.cols() != 1))
        shape_error("weighted_sum", weights.shape(), rows.shape());
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights.values()[i];
        for (std::size_t j = 0; j < d; ++j) out[j] += w * rows.values()[i * d + j];
    }
    return make_result({1, d}, std::move(out), {&weights, &rows}, [n, d](Node& self) {
        Node& pw = *self.parents[0];
        Node& pr = *self.parents[1];
        if (pw.requires_grad) {
            auto g = pw.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc += self.grad[j] * pr.value[i * d + j];
                g[i] += acc;
            }
        }
        if (pr.requires_grad) {
            auto g = pr.ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) g[i * d + j] += pw.value[i] * self.grad[j];
        }
    });
}

Tensor propagate(const std::shared_ptr<const SparseOperator>& op, const Tensor& x) {
    if (op->forward.cols != x.rows())
        shape_error("propagate", Shape{op->forward.rows, op->forward.cols}, x.shape());
    const std::size_t d = x.cols();
    std::vector<double> out(op->forward.rows * d, 0.0);
    kernels::spmm_acc(op->forward, x.values(), d, out);
    return make_result({op->forward.rows, d}, std::move(out), {&x}, [op, d](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        kernels::spmm_acc(op->transpose, self.grad, d, p.ensure_grad());
    });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    return make_result({1, 1}, {total}, {&a}, [](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto g = p.ensure_grad();
        for (auto& v : g) v += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels, std::span<const std::size_t> masked,
                     bool* guarded) {
    const std::size_t m = logits.size();
    if (labels.empty()) throw ArgumentError("cross_entropy: no labels");
    std::vector<char> is_masked(m, 0);
    for (auto j : masked) {
        if (j >= m) throw ShapeError("cross_entropy: masked index out of range");
        is_masked[j] = 1;
    }
    auto z = logits.values();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j)
        if (!is_masked[j]) mx = std::max(mx, z[j]);
    if (std::isinf(mx)) throw NumericError("cross_entropy: every logit is masked");
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j)
        if (!is_masked[j]) total += std::exp(z[j] - mx);
    const double lse = mx + std::log(total);

    std::vector<double> prob(m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
        if (!is_masked[j]) prob[j] = std::exp(z[j] - lse);

    const double inv = 1.0 / static_cast<double>(labels.size());
    double loss = 0.0;
    std::vector<double> label_weight(m, 0.0);
    for (auto y : labels) {
        if (y >= m) throw ShapeError("cross_entropy: label out of range");
        if (is_masked[y]) {
            loss += -std::log(1e-12) * inv;
            if (guarded) *guarded = true;
            continue;
        }
        loss += (lse - z[y]) * inv;
        label_weight[y] += inv;
    }
    double live = 0.0;
    for (double w : label_weight) live += w;

    return make_result({1, 1}, {loss}, {&logits},
                       [prob = std::move(prob), label_weight = std::move(label_weight), live](Node& self) {
                           Node& p = *self.parents[0];
                           if (!p.requires_grad) return;
                           auto g = p.ensure_grad();
                           for (std::size_t j = 0; j < g.size(); ++j)
                               g[j] += self.grad[0] * (live * prob[j] - label_weight[j]);
                       });
}

void backward(const Tensor& root) {
    if (!root.defined() || root.size() != 1)
        throw ArgumentError("backward: root must be a scalar, got " + (root.defined() ? root.shape().str() : "null"));
    if (!root.requires_grad()) return;

    // Iterative post-order DFS; parents are visited in declaration order, so the order is deterministic.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && parent->backward && seen.insert(parent).second) stack.push_back({parent, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->grad.empty()) continue;
        node->backward(*node);
    }
}

}  // namespace cola::ad
