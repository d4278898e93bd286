#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlif/rng.hpp"
#include "dlif/tensor.hpp"

using namespace dlif;

namespace {

std::vector<double> random_vec(Rng& rng, std::int64_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

}  // namespace

TEST_CASE("matmul identity") {
    Tape t;
    auto a = t.leaf({2, 2}, {1, 2, 3, 4});
    auto i = t.leaf({2, 2}, {1, 0, 0, 1});
    auto c = matmul(a, i);
    CHECK(c.value()[0] == 1.0);
    CHECK(c.value()[1] == 2.0);
    CHECK(c.value()[2] == 3.0);
    CHECK(c.value()[3] == 4.0);
}

TEST_CASE("softmax symmetry") {
    Tape t;
    auto x = t.leaf({2}, {0.0, 0.0});
    auto y = softmax(x);
    CHECK(y.value()[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(y.value()[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("relu subgradient convention") {
    Tape t;
    auto x = t.leaf({2}, {-1.0, 2.0}, true);
    auto y = sum(relu(x));
    t.backward(y);
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("backward of sum(x*x) is 2x") {
    Tape t;
    auto x = t.leaf({3}, {1, 2, 3}, true);
    auto y = sum(mul(x, x));
    t.backward(y);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
    CHECK(x.grad()[2] == doctest::Approx(6.0));
}

TEST_CASE("grad of sum(A*B) wrt A is ones*B^T") {
    Rng rng(7);
    auto bdata = random_vec(rng, 9);
    auto adata = random_vec(rng, 9);

    Tape t;
    auto a = t.leaf({3, 3}, adata, true);
    auto b = t.leaf({3, 3}, bdata);
    t.backward(sum(matmul(a, b)));

    // row sums of B land in every row of dA
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double expect = bdata[3 * j + 0] + bdata[3 * j + 1] + bdata[3 * j + 2];
            CHECK(a.grad()[3 * i + j] == doctest::Approx(expect).epsilon(1e-12));
        }

    // and against finite differences
    double err = grad_check(
        [&](Tape& tape, DiffTensor x) {
            auto bb = tape.leaf({3, 3}, bdata);
            return sum(matmul(x, bb));
        },
        {3, 3}, adata, 1e-5);
    CHECK(err < 1e-7);
}

TEST_CASE("two backward calls double the grads") {
    Tape t;
    auto x = t.leaf({3}, {1, 2, 3}, true);
    auto y = sum(mul(x, x));
    t.backward(y);
    std::vector<double> once(x.grad().begin(), x.grad().end());
    t.backward(y);
    for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == 2.0 * once[i]);
}

TEST_CASE("backward rejects non-scalar root") {
    Tape t;
    auto x = t.leaf({2}, {1, 2}, true);
    CHECK_THROWS(t.backward(mul(x, x)));
}

TEST_CASE("shape mismatch errors name the op and shapes") {
    Tape t;
    auto a = t.leaf({2, 3}, std::vector<double>(6, 1.0));
    auto b = t.leaf({4}, std::vector<double>(4, 1.0));
    try {
        add(a, b);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find("add") != std::string::npos);
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4]") != std::string::npos);
    }
}

TEST_CASE("log and sqrt domain errors") {
    Tape t;
    auto x = t.leaf({1}, {-1.0});
    CHECK_THROWS(log(x));
    CHECK_THROWS(sqrt(x));
}

TEST_CASE("grad_check on sigmoid sum") {
    Rng rng(11);
    auto x0 = random_vec(rng, 6);
    double err = grad_check([](Tape&, DiffTensor x) { return sum(sigmoid(x)); }, {6}, x0, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("grad_check constant graph is exactly zero") {
    std::vector<double> x0 = {0.3, -0.7};
    double err = grad_check(
        [](Tape& t, DiffTensor) { return t.scalar(3.5); }, {2}, x0, 1e-5);
    CHECK(err == 0.0);
}

TEST_CASE("broadcast gradient reduces over broadcast axes (loop oracle)") {
    Rng rng(23);
    // [2,3] * [3] and [2,1,4] + [3,1]-style cases against explicit loops
    auto a0 = random_vec(rng, 6);
    auto b0 = random_vec(rng, 3);
    {
        Tape t;
        auto a = t.leaf({2, 3}, a0, true);
        auto b = t.leaf({3}, b0, true);
        t.backward(sum(mul(a, b)));
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j) CHECK(a.grad()[i * 3 + j] == doctest::Approx(b0[j]));
        for (int j = 0; j < 3; ++j)
            CHECK(b.grad()[j] == doctest::Approx(a0[j] + a0[3 + j]).epsilon(1e-12));
    }
    {
        auto c0 = random_vec(rng, 8);   // [2,1,4]
        auto d0 = random_vec(rng, 3);   // [3,1]
        Tape t;
        auto c = t.leaf({2, 1, 4}, c0, true);
        auto d = t.leaf({3, 1}, d0, true);
        auto y = add(c, d);             // -> [2,3,4]
        CHECK(y.shape() == Shape{2, 3, 4});
        t.backward(sum(y));
        for (auto g : c.grad()) CHECK(g == doctest::Approx(3.0));
        for (auto g : d.grad()) CHECK(g == doctest::Approx(8.0));
    }
}

TEST_CASE("slice and concat round trip with gradients") {
    Rng rng(5);
    auto x0 = random_vec(rng, 12);
    double err = grad_check(
        [](Tape& t, DiffTensor x) {
            auto m = reshape(x, {3, 4});
            auto top = slice(m, 0, 0, 1);
            auto rest = slice(m, 0, 1, 2);
            std::vector<DiffTensor> parts = {rest, top};
            auto back = concat0(parts);
            auto col = slice(back, 1, 2, 2);
            return sum(mul(col, col));
        },
        {12}, x0, 1e-5);
    CHECK(err < 1e-7);
}

TEST_CASE("deterministic forward+backward") {
    Rng rng(99);
    auto x0 = random_vec(rng, 16);
    auto run = [&](std::vector<double>& grad_out) {
        Tape t;
        auto x = t.leaf({4, 4}, x0, true);
        auto y = sum(mul(softmax(matmul(x, transpose(x))), gelu(x)));
        t.backward(y);
        grad_out.assign(x.grad().begin(), x.grad().end());
        return y.item();
    };
    std::vector<double> g1, g2;
    double v1 = run(g1);
    double v2 = run(g2);
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}

TEST_CASE("every primitive passes finite-difference checks on random inputs") {
    Rng rng(1234);
    const int kCases = 100;
    const double kTol = 1e-5;

    auto check_unary = [&](auto make, double lo, double hi) {
        double worst = 0.0;
        for (int c = 0; c < kCases; ++c) {
            const std::int64_t n = rng.uniform_int(1, 12);
            auto x0 = random_vec(rng, n, lo, hi);
            worst = std::max(worst, grad_check(make, {n}, x0, 1e-5));
        }
        return worst;
    };

    CHECK(check_unary([](Tape&, DiffTensor x) { return sum(exp(x)); }, -2, 2) < kTol);
    CHECK(check_unary([](Tape&, DiffTensor x) { return sum(log(x)); }, 0.1, 3) < kTol);
    CHECK(check_unary([](Tape&, DiffTensor x) { return sum(sqrt(x)); }, 0.1, 3) < kTol);
    CHECK(check_unary([](Tape&, DiffTensor x) { return sum(sigmoid(x)); }, -4, 4) < kTol);
    CHECK(check_unary([](Tape&, DiffTensor x) { return sum(gelu(x)); }, -3, 3) < kTol);
    CHECK(check_unary([](Tape&, DiffTensor x) { return sum(mul(softmax(x), x)); }, -3, 3) < kTol);
    CHECK(check_unary([](Tape&, DiffTensor x) { return mean(mul(x, x)); }, -2, 2) < kTol);
    CHECK(check_unary([](Tape&, DiffTensor x) { return sum(add_scalar(mul_scalar(x, 1.7), 0.3)); },
                      -2, 2) < kTol);

    // abs/relu away from the kink
    auto kinked = [&](auto make) {
        double worst = 0.0;
        for (int c = 0; c < kCases; ++c) {
            const std::int64_t n = rng.uniform_int(1, 12);
            auto x0 = random_vec(rng, n, 0.2, 2.0);
            if (c % 2) for (auto& v : x0) v = -v;
            worst = std::max(worst, grad_check(make, {n}, x0, 1e-5));
        }
        return worst;
    };
    CHECK(kinked([](Tape&, DiffTensor x) { return sum(abs(x)); }) < kTol);
    CHECK(kinked([](Tape&, DiffTensor x) { return sum(relu(x)); }) < kTol);

    // binary ops with broadcasting, matmul, structure ops
    double worst = 0.0;
    for (int c = 0; c < kCases; ++c) {
        auto b0 = random_vec(rng, 3, 0.5, 2.0);
        auto w0 = random_vec(rng, 6);
        worst = std::max(worst, grad_check(
            [&](Tape& t, DiffTensor x) {
                auto m = reshape(x, {2, 3});
                auto b = t.leaf({3}, b0, false);
                auto s = add(div(m, b), mul(sub(m, b), b));
                return sum(s);
            },
            {6}, random_vec(rng, 6), 1e-5));
        worst = std::max(worst, grad_check(
            [&](Tape& t, DiffTensor x) {
                auto m = reshape(x, {2, 3});
                auto w = t.leaf({3, 2}, w0);
                auto y = matmul(m, w);
                return sum(mul(y, y));
            },
            {6}, random_vec(rng, 6, 0.3, 2.0), 1e-5));
        worst = std::max(worst, grad_check(
            [&](Tape&, DiffTensor x) {
                auto m = reshape(x, {3, 4});
                return sum(mul(sum_axis(m, 1, true), mean_axis(m, 0, false)));
            },
            {12}, random_vec(rng, 12), 1e-5));
    }
    CHECK(worst < kTol);
}
