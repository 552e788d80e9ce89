#include <doctest.h>

#include <cmath>
#include <random>

#include "cola/errors.hpp"
#include "cola/params.hpp"
#include "cola/tensor.hpp"

using namespace cola;
using namespace cola::ad;

namespace {

// central-difference check of d sum(w ⊙ f(x)) / dx
void check_unary(const std::function<Tensor(const Tensor&)>& f, Shape shape, std::uint64_t seed,
                 double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> xv(shape.size()), wv;
    for (auto& x : xv) x = u(rng);
    Tensor x = Tensor::from(shape, xv, true);
    Tensor probe = f(x);
    wv.resize(probe.size());
    for (auto& w : wv) w = u(rng);
    auto loss = [&](const Tensor& in) { return sum(mul(f(in), Tensor::from(probe.shape(), wv))); };
    backward(loss(x));
    const auto g = std::vector<double>(x.grad().begin(), x.grad().end());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        auto plus = xv, minus = xv;
        plus[i] += 1e-6;
        minus[i] -= 1e-6;
        NoGradGuard guard;
        const double num = (loss(Tensor::from(shape, plus)).item() - loss(Tensor::from(shape, minus)).item()) / 2e-6;
        CHECK(g[i] == doctest::Approx(num).epsilon(1e-6));
    }
}

}  // namespace

TEST_CASE("matmul values") {
    auto a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
    auto c = matmul(a, b);
    CHECK(std::vector<double>(c.values().begin(), c.values().end()) == std::vector<double>{58, 64, 139, 154});
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("softmax and relu values") {
    auto s = softmax(Tensor::row({0.0, std::log(3.0)}), Axis::row_wise);
    CHECK(s.at(0, 0) == doctest::Approx(0.25));
    CHECK(s.at(0, 1) == doctest::Approx(0.75));
    auto big = softmax(Tensor::row({1000.0, 1000.0}), Axis::row_wise);
    CHECK(big.at(0, 0) == doctest::Approx(0.5));
    auto r = relu(Tensor::row({-1.0, 0.0, 2.0}));
    CHECK(r.at(0, 0) == 0.0);
    CHECK(r.at(0, 1) == 0.0);
    CHECK(r.at(0, 2) == 2.0);
    auto col = softmax(Tensor::from({2, 1}, {1.0, 1.0}), Axis::col_wise);
    CHECK(col.at(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("elementwise and shape op gradients match finite differences") {
    check_unary([](const Tensor& x) { return tanh(x); }, {2, 3}, 1);
    check_unary([](const Tensor& x) { return sigmoid(x); }, {2, 3}, 2);
    check_unary([](const Tensor& x) { return relu(x); }, {3, 3}, 3);
    check_unary([](const Tensor& x) { return log(x); }, {2, 2}, 4, 0.5, 2.0);
    check_unary([](const Tensor& x) { return softmax(x, Axis::row_wise); }, {2, 4}, 5);
    check_unary([](const Tensor& x) { return softmax(x, Axis::col_wise); }, {4, 2}, 6);
    check_unary([](const Tensor& x) { return transpose(x); }, {2, 3}, 7);
    check_unary([](const Tensor& x) { return scale(add_scalar(x, 2.0), -3.0); }, {2, 3}, 8);
    check_unary([](const Tensor& x) { return mul(x, x); }, {2, 3}, 9);
    check_unary([](const Tensor& x) { return sub(x, mul(x, x)); }, {2, 3}, 10);
    check_unary([](const Tensor& x) { return concat_cols(x, tanh(x)); }, {2, 3}, 11);
    check_unary([](const Tensor& x) {
        const Tensor parts[] = {x, relu(x)};
        return concat_rows(parts);
    }, {2, 3}, 12);
    check_unary([](const Tensor& x) {
        const std::vector<std::size_t> rows{2, kNoRow, 0, 2};
        return row_lookup(x, rows);
    }, {3, 2}, 13);
    check_unary([](const Tensor& x) { return mean(x); }, {3, 2}, 14);
    check_unary([](const Tensor& x) {
        const std::vector<std::size_t> pos{1, 4};
        return masked_fill(x, pos, 0.25);
    }, {2, 3}, 15);
}

TEST_CASE("matmul, weighted_sum and propagate gradients match finite differences") {
    auto b = Tensor::from({3, 2}, {0.3, -0.2, 0.5, 0.1, -0.7, 0.4});
    check_unary([&](const Tensor& x) { return matmul(x, b); }, {2, 3}, 21);
    check_unary([&](const Tensor& x) { return matmul(b, x); }, {2, 4}, 22);
    auto rows = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
    check_unary([&](const Tensor& w) { return weighted_sum(w, rows); }, {3, 1}, 23);
    check_unary([&](const Tensor& r) { return weighted_sum(Tensor::from({1, 3}, {0.2, 0.3, 0.5}), r); }, {3, 2}, 24);
    kernels::SparseRows s;
    s.rows = 2;
    s.cols = 3;
    s.offsets = {0, 2, 3};
    s.index = {0, 2, 1};
    s.weight = {0.5, -1.0, 2.0};
    auto op = std::make_shared<SparseOperator>(s);
    check_unary([&](const Tensor& x) { return propagate(op, x); }, {3, 2}, 25);
}

TEST_CASE("cross entropy gradient and masking") {
    const std::vector<std::size_t> labels{1, 3};
    check_unary([&](const Tensor& x) { return cross_entropy(x, labels); }, {5, 1}, 31);
    const std::vector<std::size_t> masked{0, 2};
    check_unary([&](const Tensor& x) { return cross_entropy(x, labels, masked); }, {5, 1}, 32);

    auto logits = Tensor::from({3, 1}, {0.0, 0.0, 0.0});
    const std::vector<std::size_t> one{0};
    CHECK(cross_entropy(logits, one).item() == doctest::Approx(std::log(3.0)));
    bool guarded = false;
    const std::vector<std::size_t> mask0{0};
    CHECK(cross_entropy(logits, one, mask0, &guarded).item() == doctest::Approx(-std::log(1e-12)));
    CHECK(guarded);
}

TEST_CASE("backward requires a scalar root and accumulates shared inputs") {
    auto x = Tensor::from({1, 2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(backward(x), ArgumentError);
    backward(sum(add(x, x)));
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 2.0);
}

TEST_CASE("no-grad guard stops recording") {
    auto x = Tensor::from({1, 1}, {1.0}, true);
    {
        NoGradGuard guard;
        CHECK_FALSE(grad_enabled());
        auto y = scale(x, 2.0);
        CHECK_FALSE(y.requires_grad());
    }
    CHECK(grad_enabled());
    CHECK(scale(x, 2.0).requires_grad());
}

TEST_CASE("row_lookup with no indices gives an empty tensor") {
    auto t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto e = row_lookup(t, std::vector<std::size_t>{});
    CHECK(e.rows() == 0);
    CHECK(e.cols() == 3);
}

TEST_CASE("relu propagates NaN") {
    auto r = relu(Tensor::row({std::nan(""), -1.0}));
    CHECK(std::isnan(r.at(0, 0)));
    CHECK(r.at(0, 1) == 0.0);
}
