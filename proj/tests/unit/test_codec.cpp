#include <doctest.h>

#include <cmath>
#include <vector>

#include "ctstd/codec.hpp"
#include "ctstd/errors.hpp"
#include "ctstd/phantom.hpp"
#include "ctstd/rng.hpp"

using namespace ctstd;

namespace {

CodecConfig micro_config() {
    CodecConfig c;
    c.height = 8;
    c.width = 8;
    c.latent_dim = 4;
    c.encoder_widths = {2, 2};
    c.decoder_widths = {2};
    c.epochs = 2;
    c.batch_size = 2;
    c.seed = 11;
    return c;
}

ImageSlice random_slice(int h, int w, uint64_t seed) {
    ImageSlice img = ImageSlice::filled(h, w, 0.0);
    Rng rng(seed);
    for (auto& v : img.pixels) v = rng.uniform(-900.0, 300.0);
    return img;
}

PairedDataset tiny_dataset(int n_train, int n_test) {
    PhantomSpec spec;
    spec.height = 8;
    spec.width = 8;
    spec.body = {4.0, 4.0, 3.4, 3.6};
    spec.lungs = {{4.0, 2.5, 2.0, 1.2}, {4.0, 5.5, 2.0, 1.2}};
    spec.tumors.clear();
    spec.noise_hu = 4.0;
    PairedDataset ds = make_paired_dataset(spec, KernelProfile::identity(), KernelProfile::identity(),
                                           n_train, n_test, 77);
    return ds;
}

}  // namespace

TEST_CASE("codec: encode validates dimensions and is deterministic") {
    CodecConfig cfg = micro_config();
    CodecModel model = init_codec(cfg);
    const ImageSlice img = random_slice(8, 8, 5);
    const LatentVector z1 = encode(model, img);
    const LatentVector z2 = encode(model, img);
    CHECK(static_cast<int>(z1.values.size()) == cfg.latent_dim);
    CHECK(z1.values == z2.values);
    CHECK_THROWS_AS(encode(model, random_slice(8, 9, 5)), ShapeError);
}

TEST_CASE("codec: decode round-trips dimensions and rejects bad latents") {
    CodecConfig cfg = micro_config();
    CodecModel model = init_codec(cfg);
    LatentVector z;
    z.values.assign(cfg.latent_dim, 0.0);
    const ImageSlice out = decode(model, z);
    CHECK(out.height == cfg.height);
    CHECK(out.width == cfg.width);
    for (double v : out.pixels) {
        CHECK(std::isfinite(v));
        CHECK(v >= kHuMin);
        CHECK(v <= kHuMax);
    }
    LatentVector bad;
    bad.values.assign(cfg.latent_dim + 1, 0.0);
    CHECK_THROWS_AS(decode(model, bad), ShapeError);
    LatentVector nan;
    nan.values.assign(cfg.latent_dim, std::nan(""));
    CHECK_THROWS_AS(decode(model, nan), ValidationError);
}

TEST_CASE("codec: latent_dim 1 is supported end to end") {
    CodecConfig cfg = micro_config();
    cfg.latent_dim = 1;
    CodecModel model = init_codec(cfg);
    const LatentVector z = encode(model, random_slice(8, 8, 9));
    CHECK(z.values.size() == 1);
    const ImageSlice out = decode(model, z);
    CHECK(out.height == 8);
    CHECK(out.width == 8);
}

TEST_CASE("codec: loss gradient matches central finite differences") {
    CodecConfig cfg = micro_config();
    CodecModel model = init_codec(cfg);
    const ImageSlice img = random_slice(8, 8, 21);

    std::vector<double> grad;
    codec_loss_grad(model, img, grad);

    const auto params = model.params();
    int64_t total = 0;
    for (const nn::Param* p : params) total += p->size();
    REQUIRE(static_cast<int64_t>(grad.size()) == total);

    // Probe a spread of parameters across every tensor.
    Rng pick(99);
    const double h = 1e-5;
    int checked = 0;
    for (nn::Param* p : model.params()) {
        for (int rep = 0; rep < 4; ++rep) {
            const int64_t i = pick.uniform_int(0, static_cast<int>(p->size() - 1));
            const double keep = p->value[i];
            std::vector<double> g_unused;
            p->value[i] = keep + h;
            const double up = codec_loss_grad(model, img, g_unused);
            p->value[i] = keep - h;
            const double dn = codec_loss_grad(model, img, g_unused);
            p->value[i] = keep;
            const double fd = (up - dn) / (2 * h);
            const double an = grad[p->offset + i];
            const double den = std::max({std::abs(fd), std::abs(an), 1e-8});
            CHECK(std::abs(fd - an) / den < 1e-4);
            ++checked;
        }
    }
    CHECK(checked >= 20);
}

TEST_CASE("codec: zero epochs is a configuration error") {
    CodecConfig cfg = micro_config();
    cfg.epochs = 0;
    PairedDataset ds = tiny_dataset(2, 1);
    CHECK_THROWS_AS(train_codec(init_codec(cfg), ds), ConfigError);
}

TEST_CASE("codec: training reduces loss and is deterministic") {
    CodecConfig cfg = micro_config();
    cfg.epochs = 40;
    PairedDataset ds = tiny_dataset(2, 1);
    CodecModel m1 = train_codec(init_codec(cfg), ds);
    CHECK(m1.loss_history.size() == 40);
    CHECK(m1.loss_history.back() < 0.3 * m1.loss_history.front());
    CodecModel m2 = train_codec(init_codec(cfg), ds);
    CHECK(codec_param_checksum(m1) == codec_param_checksum(m2));
    CHECK(m1.loss_history == m2.loss_history);
}

TEST_CASE("codec: training whitens the train latents") {
    CodecConfig cfg = micro_config();
    cfg.epochs = 6;
    PairedDataset ds = tiny_dataset(4, 1);
    CodecModel model = train_codec(init_codec(cfg), ds);
    std::vector<LatentVector> zs;
    for (const auto& pair : ds.slices)
        if (pair.split == "train") {
            zs.push_back(encode(model, pair.a));
            zs.push_back(encode(model, pair.b));
        }
    const double n = static_cast<double>(zs.size());
    for (int d = 0; d < cfg.latent_dim; ++d) {
        double mean = 0, var = 0;
        for (const auto& z : zs) mean += z.values[d];
        mean /= n;
        for (const auto& z : zs) var += (z.values[d] - mean) * (z.values[d] - mean);
        var /= n;
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("codec: hu mapping is inverse on the valid range") {
    for (double hu : {-1024.0, -500.0, 0.0, 40.0, 3071.0}) {
        CHECK(unit_to_hu(hu_to_unit(hu)) == doctest::Approx(hu).epsilon(1e-12));
    }
    CHECK(hu_to_unit(kHuMin) == doctest::Approx(-1.0));
    CHECK(hu_to_unit(kHuMax) == doctest::Approx(1.0));
}
