#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "ctstd/nn.hpp"
#include "ctstd/rng.hpp"

using namespace ctstd;

namespace {

// Central-difference check of one layer's parameter and input gradients
// against a scalar loss L = sum(out * probe).
constexpr double kH = 1e-5;
constexpr double kTol = 1e-6;

double rel_err(double a, double b) {
    const double den = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / den;
}

}  // namespace

TEST_CASE("nn: dense backward matches finite differences") {
    Rng rng(3);
    nn::Dense d;
    d.init("d", 4, 3, rng);
    nn::assign_offsets({&d.weight, &d.bias});
    std::vector<double> x(4), probe(3);
    for (auto& v : x) v = rng.normal();
    for (auto& v : probe) v = rng.normal();

    auto loss = [&] {
        std::vector<double> out;
        d.forward(x, out);
        double L = 0;
        for (int i = 0; i < 3; ++i) L += out[i] * probe[i];
        return L;
    };

    std::vector<double> grad(d.weight.size() + d.bias.size(), 0.0);
    std::vector<double> din;
    d.backward(x, probe, grad, &din);

    for (nn::Param* p : {&d.weight, &d.bias})
        for (int64_t i = 0; i < p->size(); ++i) {
            const double keep = p->value[i];
            p->value[i] = keep + kH;
            const double up = loss();
            p->value[i] = keep - kH;
            const double dn = loss();
            p->value[i] = keep;
            CHECK(rel_err(grad[p->offset + i], (up - dn) / (2 * kH)) < kTol);
        }
    for (size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + kH;
        const double up = loss();
        x[i] = keep - kH;
        const double dn = loss();
        x[i] = keep;
        CHECK(rel_err(din[i], (up - dn) / (2 * kH)) < kTol);
    }
}

TEST_CASE("nn: conv2d backward matches finite differences for stride 1 and 2") {
    for (int stride : {1, 2}) {
        Rng rng(10 + stride);
        nn::Conv2d conv;
        conv.init("c", 2, 3, stride, rng);
        nn::assign_offsets({&conv.weight, &conv.bias});
        const int h = 5, w = 4;
        std::vector<double> x(2 * h * w), probe;
        for (auto& v : x) v = rng.normal();
        std::vector<double> out0;
        conv.forward(x, h, w, out0);
        probe.resize(out0.size());
        for (auto& v : probe) v = rng.normal();

        auto loss = [&] {
            std::vector<double> out;
            conv.forward(x, h, w, out);
            double L = 0;
            for (size_t i = 0; i < out.size(); ++i) L += out[i] * probe[i];
            return L;
        };

        std::vector<double> grad(conv.weight.size() + conv.bias.size(), 0.0);
        std::vector<double> din;
        conv.backward(x, h, w, probe, grad, &din);

        for (nn::Param* p : {&conv.weight, &conv.bias})
            for (int64_t i = 0; i < p->size(); ++i) {
                const double keep = p->value[i];
                p->value[i] = keep + kH;
                const double up = loss();
                p->value[i] = keep - kH;
                const double dn = loss();
                p->value[i] = keep;
                CHECK(rel_err(grad[p->offset + i], (up - dn) / (2 * kH)) < kTol);
            }
        for (size_t i = 0; i < x.size(); ++i) {
            const double keep = x[i];
            x[i] = keep + kH;
            const double up = loss();
            x[i] = keep - kH;
            const double dn = loss();
            x[i] = keep;
            CHECK(rel_err(din[i], (up - dn) / (2 * kH)) < kTol);
        }
    }
}

TEST_CASE("nn: silu backward matches finite differences") {
    Rng rng(4);
    std::vector<double> x(16), probe(16);
    for (auto& v : x) v = rng.normal() * 2.0;
    for (auto& v : probe) v = rng.normal();
    std::vector<double> dx;
    nn::silu_backward(x, probe, dx);
    for (size_t i = 0; i < x.size(); ++i) {
        auto f = [&](double v) { return v / (1.0 + std::exp(-v)); };
        const double fd = (f(x[i] + kH) - f(x[i] - kH)) / (2 * kH) * probe[i];
        CHECK(rel_err(dx[i], fd) < kTol);
    }
}

TEST_CASE("nn: upsample2x backward is the adjoint of forward") {
    Rng rng(9);
    const int c = 2, h = 3, w = 4;
    std::vector<double> x(c * h * w), y(c * 2 * h * 2 * w);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    std::vector<double> up, down;
    nn::upsample2x_forward(x, c, h, w, up);
    nn::upsample2x_backward(y, c, h, w, down);
    double lhs = 0, rhs = 0;
    for (size_t i = 0; i < up.size(); ++i) lhs += up[i] * y[i];
    for (size_t i = 0; i < x.size(); ++i) rhs += x[i] * down[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("nn: adam first step has the documented closed form") {
    Rng rng(6);
    nn::Dense d;
    d.init("d", 2, 2, rng);
    const std::vector<double> before = d.weight.value;
    std::vector<nn::Param*> params{&d.weight, &d.bias};
    const int64_t n = nn::assign_offsets(params);
    const double lr = 1e-3;
    nn::Adam opt(params, lr);
    std::vector<double> g(n);
    for (auto& v : g) v = rng.normal();
    opt.step(g);
    // bias-corrected first step: lr * g / (|g| + eps)
    for (int64_t i = 0; i < d.weight.size(); ++i) {
        const double expected =
            before[i] - lr * g[d.weight.offset + i] /
                            (std::abs(g[d.weight.offset + i]) + 1e-8);
        CHECK(d.weight.value[i] == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("nn: adam descends a separable quadratic") {
    nn::Dense d;
    d.init_zero("d", 1, 4);
    for (int i = 0; i < 4; ++i) d.bias.value[i] = 5.0 - i;
    std::vector<nn::Param*> params{&d.weight, &d.bias};
    const int64_t n = nn::assign_offsets(params);
    nn::Adam opt(params, 0.05);
    auto loss = [&] {
        double L = 0;
        for (int i = 0; i < 4; ++i) L += d.bias.value[i] * d.bias.value[i];
        return L;
    };
    const double first = loss();
    for (int it = 0; it < 200; ++it) {
        std::vector<double> g(n, 0.0);
        for (int i = 0; i < 4; ++i) g[d.bias.offset + i] = 2.0 * d.bias.value[i];
        opt.step(g);
    }
    CHECK(loss() < 0.01 * first);
}

TEST_CASE("nn: param checksum is order- and value-sensitive") {
    nn::Dense a, b;
    a.init_zero("p", 2, 2);
    b.init_zero("p", 2, 2);
    CHECK(nn::param_checksum({&a.weight, &a.bias}) ==
          nn::param_checksum({&b.weight, &b.bias}));
    b.weight.value[0] = 1e-9;
    CHECK(nn::param_checksum({&a.weight, &a.bias}) !=
          nn::param_checksum({&b.weight, &b.bias}));
}
