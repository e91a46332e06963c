#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <set>

#include "ctstd/errors.hpp"
#include "ctstd/phantom.hpp"

using namespace ctstd;
namespace fs = std::filesystem;

namespace {

// Naive 2-D DFT energy above a radial frequency cut, independent of the FFT
// library used by apply_kernel.
double high_freq_energy(const ImageSlice& img, double cut) {
    const int h = img.height, w = img.width;
    double energy = 0.0;
    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v) {
            const double fu = (u <= h / 2 ? u : u - h) / static_cast<double>(h);
            const double fv = (v <= w / 2 ? v : v - w) / static_cast<double>(w);
            if (std::hypot(fu, fv) <= cut) continue;
            std::complex<double> acc = 0.0;
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    const double ph =
                        -2.0 * std::numbers::pi * (fu * r + fv * c);
                    acc += img.at(r, c) * std::complex<double>(std::cos(ph), std::sin(ph));
                }
            energy += std::norm(acc);
        }
    return energy;
}

PhantomSpec small_spec() {
    PhantomSpec s;
    s.height = 32;
    s.width = 32;
    s.body = {16.0, 16.0, 13.0, 15.0};
    s.lungs = {{16.0, 9.0, 8.0, 5.5}, {16.0, 23.0, 8.0, 5.5}};
    s.tumors = {{12.0, 8.5, 2.8, -60.0, 150.0, 2.6},
                {20.0, 23.5, 2.5, 10.0, 130.0, 3.2}};
    return s;
}

}  // namespace

TEST_CASE("phantom: zero tumors and zero noise give exact plateaus") {
    PhantomSpec spec = small_spec();
    spec.tumors.clear();
    spec.noise_hu = 0.0;
    spec.validate();
    auto img = generate_ground_truth(spec, 99);
    std::set<double> values(img.pixels.begin(), img.pixels.end());
    CHECK(values == std::set<double>{spec.air_hu, spec.lung_hu, spec.body_hu});
}

TEST_CASE("phantom: ground truth is a pure function of spec and seed") {
    const PhantomSpec spec = small_spec();
    auto a = generate_ground_truth(spec, 5);
    auto b = generate_ground_truth(spec, 5);
    CHECK(a.pixels == b.pixels);
    auto c = generate_ground_truth(spec, 6);
    CHECK(a.pixels != c.pixels);
}

TEST_CASE("phantom: tumor ROIs are disks inside the grid") {
    const PhantomSpec spec = small_spec();
    auto rois = tumor_rois(spec);
    REQUIRE(rois.size() == spec.tumors.size());
    for (size_t i = 0; i < rois.size(); ++i) {
        rois[i].validate();
        CHECK(rois[i].mask_count() > 0);
        // every mask pixel within radius of the tumor center
        for (int r = 0; r < rois[i].height; ++r)
            for (int c = 0; c < rois[i].width; ++c)
                if (rois[i].in(r, c))
                    CHECK(std::hypot(r - spec.tumors[i].center_row,
                                     c - spec.tumors[i].center_col) <=
                          spec.tumors[i].radius_px + 1.0);
    }
}

TEST_CASE("phantom: tumor outside every lung is rejected") {
    PhantomSpec spec = small_spec();
    spec.tumors[0].center_col = 16.0;  // between the lungs
    CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("kernel: identity returns the input bit-exactly") {
    auto truth = generate_ground_truth(small_spec(), 3);
    auto out = apply_kernel(truth, KernelProfile::identity(), 17);
    CHECK(out.pixels == truth.pixels);
}

TEST_CASE("kernel: profile validation") {
    auto k = KernelProfile::exponential("k", 0.2, 2.0, 5.0);
    k.validate();
    CHECK(k.mtf_at(0.0) == doctest::Approx(1.0));
    CHECK(k.mtf_at(0.9) == doctest::Approx(k.mtf.back()));  // clamped past Nyquist

    KernelProfile bad = k;
    bad.mtf[0] = 0.9;  // mtf(0) must be 1
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = k;
    bad.mtf[3] = bad.mtf[2] + 0.1;  // must be non-increasing
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("kernel: sharp keeps more high-frequency energy than smooth") {
    const PhantomSpec spec = small_spec();
    const auto smooth = KernelProfile::smooth_default();
    const auto sharp = KernelProfile::sharp_default();
    for (uint64_t seed : {1, 2, 3, 4, 5}) {
        auto truth = generate_ground_truth(spec, seed);
        auto a = apply_kernel(truth, smooth, seed + 100);
        auto b = apply_kernel(truth, sharp, seed + 100);
        CHECK(high_freq_energy(b, 0.25) > high_freq_energy(a, 0.25));
    }
}

TEST_CASE("dataset: single pair shares masks and honors identity symmetry") {
    const PhantomSpec spec = small_spec();
    auto ds = make_paired_dataset(spec, KernelProfile::identity(),
                                  KernelProfile::identity(), 1, 21);
    ds.validate();
    REQUIRE(ds.slices.size() == 1);
    CHECK(ds.slices[0].a.pixels == ds.slices[0].b.pixels);
    CHECK(ds.slices[0].rois.size() == spec.tumors.size());
}

TEST_CASE("dataset: train/test split sizes, unique ids, save/load round trip") {
    PhantomSpec spec = small_spec();
    // the shrunken anatomy leaves less containment margin than the default
    spec.center_jitter_px = 0.5;
    spec.radius_jitter_px = 0.2;
    auto ds = make_paired_dataset(spec, KernelProfile::smooth_default(),
                                  KernelProfile::sharp_default(), 3, 2, 77);
    ds.validate();
    CHECK(ds.split("train").size() == 3);
    CHECK(ds.split("test").size() == 2);

    auto dir = fs::temp_directory_path() / "ctstd_test_dataset";
    fs::remove_all(dir);
    save_dataset(dir, ds);
    auto back = load_dataset(dir);
    back.validate();
    REQUIRE(back.slices.size() == ds.slices.size());
    for (size_t i = 0; i < ds.slices.size(); ++i) {
        CHECK(back.slices[i].id == ds.slices[i].id);
        CHECK(back.slices[i].split == ds.slices[i].split);
        CHECK(back.slices[i].rois.size() == ds.slices[i].rois.size());
        for (size_t px = 0; px < ds.slices[i].a.pixels.size(); ++px)
            CHECK(back.slices[i].a.pixels[px] ==
                  static_cast<double>(static_cast<float>(ds.slices[i].a.pixels[px])));
    }
}

TEST_CASE("dataset: missing directory names the path") {
    try {
        load_dataset("/nonexistent/ctstd_nowhere");
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("ctstd_nowhere") != std::string::npos);
    }
}
