#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "ctstd/rng.hpp"

using namespace ctstd;

TEST_CASE("rng: identical seeds give identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng c(42), d(43);
    bool differ = false;
    for (int i = 0; i < 10; ++i) differ |= (c.next_u64() != d.next_u64());
    CHECK(differ);
}

TEST_CASE("rng: uniform stays in [0, 1) and in [lo, hi)") {
    Rng r(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int i = 0; i < 1000; ++i) {
        const double v = r.uniform(-3.0, 5.0);
        CHECK(v >= -3.0);
        CHECK(v < 5.0);
    }
}

TEST_CASE("rng: uniform_int covers the closed range") {
    Rng r(11);
    std::set<int> seen;
    for (int i = 0; i < 2000; ++i) {
        const int v = r.uniform_int(2, 6);
        CHECK(v >= 2);
        CHECK(v <= 6);
        seen.insert(v);
    }
    CHECK(seen.size() == 5);
}

TEST_CASE("rng: normal moments within Monte-Carlo bounds") {
    Rng r(123);
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    // se(mean) = 1/sqrt(n), se(var) ~ sqrt(2/n)
    CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("rng: permutation is a permutation and seed-stable") {
    Rng r(5);
    auto p = r.permutation(100);
    std::vector<int> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 100; ++i) CHECK(sorted[i] == i);
    CHECK(Rng(5).permutation(100) == Rng(5).permutation(100));
}

TEST_CASE("derive_seed separates streams by tag and index") {
    const uint64_t base = 7;
    CHECK(derive_seed(base, "codec") != derive_seed(base, "diffusion"));
    CHECK(derive_seed(base, "x", 0) != derive_seed(base, "x", 1));
    CHECK(derive_seed(base, "x", 3) == derive_seed(base, "x", 3));
    CHECK(derive_seed(1, "x") != derive_seed(2, "x"));
}
