#include "ctstd/codec.hpp"

#include <algorithm>
#include <cmath>

#include "ctstd/errors.hpp"
#include "ctstd/parallel.hpp"

namespace ctstd {

namespace {

struct EncodeTrace {
    std::vector<std::vector<double>> pre;   // conv outputs before activation
    std::vector<std::vector<double>> post;  // after activation
    std::vector<double> z;
};

struct DecodeTrace {
    std::vector<double> dense_pre, dense_post;
    std::vector<std::vector<double>> up;    // upsampled inputs per stage
    std::vector<std::vector<double>> pre;   // stage conv outputs before activation
    std::vector<std::vector<double>> post;  // after activation
    std::vector<double> y;                  // linear full-resolution output
};

void encoder_forward(const CodecModel& m, const std::vector<double>& x0,
                     EncodeTrace& t) {
    const auto& cfg = m.config;
    const size_t n = m.enc_convs.size();
    t.pre.resize(n);
    t.post.resize(n);
    int h = cfg.height, w = cfg.width;
    const std::vector<double>* in = &x0;
    for (size_t i = 0; i < n; ++i) {
        m.enc_convs[i].forward(*in, h, w, t.pre[i]);
        nn::silu_forward(t.pre[i], t.post[i]);
        h = m.enc_convs[i].out_h(h);
        w = m.enc_convs[i].out_w(w);
        in = &t.post[i];
    }
    m.enc_dense.forward(*in, t.z);
}

void decoder_forward(const CodecModel& m, const std::vector<double>& z,
                     DecodeTrace& t) {
    const auto& cfg = m.config;
    m.dec_dense.forward(z, t.dense_pre);
    nn::silu_forward(t.dense_pre, t.dense_post);
    const size_t stages = cfg.decoder_widths.size() - 1;
    t.up.resize(stages);
    t.pre.resize(stages);
    t.post.resize(stages);
    int h = cfg.decoder_in_h(), w = cfg.decoder_in_w();
    const std::vector<double>* in = &t.dense_post;
    int c = cfg.decoder_widths[0];
    for (size_t i = 0; i < stages; ++i) {
        nn::upsample2x_forward(*in, c, h, w, t.up[i]);
        h *= 2;
        w *= 2;
        m.dec_convs[i].forward(t.up[i], h, w, t.pre[i]);
        nn::silu_forward(t.pre[i], t.post[i]);
        c = cfg.decoder_widths[i + 1];
        in = &t.post[i];
    }
    m.dec_convs[stages].forward(*in, h, w, t.y);
}

/// Full backward pass for one sample; writes into the flat gradient buffer.
void sample_backward(const CodecModel& m, const std::vector<double>& x0,
                     const EncodeTrace& et, const DecodeTrace& dt,
                     const std::vector<double>& dy, std::vector<double>& grad) {
    const auto& cfg = m.config;
    const size_t stages = cfg.decoder_widths.size() - 1;
    int h = cfg.height, w = cfg.width;

    std::vector<double> d1, d2;
    const std::vector<double>* dcur = &dy;
    m.dec_convs[stages].backward(stages == 0 ? dt.dense_post : dt.post[stages - 1], h,
                                 w, *dcur, grad, &d1);
    dcur = &d1;
    for (size_t i = stages; i-- > 0;) {
        nn::silu_backward(dt.pre[i], *dcur, d2);
        m.dec_convs[i].backward(dt.up[i], h, w, d2, grad, &d1);
        const int c = cfg.decoder_widths[i];
        h /= 2;
        w /= 2;
        nn::upsample2x_backward(d1, c, h, w, d2);
        std::swap(d1, d2);
        dcur = &d1;
    }
    nn::silu_backward(dt.dense_pre, *dcur, d2);
    std::vector<double> dz;
    m.dec_dense.backward(et.z, d2, grad, &dz);

    int eh = cfg.height, ew = cfg.width;
    std::vector<std::pair<int, int>> dims(m.enc_convs.size());
    for (size_t i = 0; i < m.enc_convs.size(); ++i) {
        dims[i] = {eh, ew};
        eh = m.enc_convs[i].out_h(eh);
        ew = m.enc_convs[i].out_w(ew);
    }
    const std::vector<double>& enc_in =
        m.enc_convs.empty() ? x0 : et.post.back();
    m.enc_dense.backward(enc_in, dz, grad, &d1);
    dcur = &d1;
    for (size_t i = m.enc_convs.size(); i-- > 0;) {
        nn::silu_backward(et.pre[i], *dcur, d2);
        const std::vector<double>& in = (i == 0) ? x0 : et.post[i - 1];
        const bool need_din = i > 0;
        m.enc_convs[i].backward(in, dims[i].first, dims[i].second, d2, grad,
                                need_din ? &d1 : nullptr);
        dcur = &d1;
    }
}

std::vector<double> normalize_image(const ImageSlice& img) {
    std::vector<double> x(img.pixels.size());
    for (size_t i = 0; i < x.size(); ++i) x[i] = hu_to_unit(img.pixels[i]);
    return x;
}

}  // namespace

double hu_to_unit(double hu) { return (hu + 1024.0) / 2047.5 - 1.0; }
double unit_to_hu(double u) { return (u + 1.0) * 2047.5 - 1024.0; }

void CodecConfig::validate() const {
    if (height <= 0 || width <= 0) throw ConfigError("codec: image size must be positive");
    if (latent_dim < 1) throw ConfigError("codec: latent_dim must be >= 1");
    if (latent_dim > height * width)
        throw ConfigError("codec: latent_dim " + std::to_string(latent_dim) +
                          " exceeds pixel count " + std::to_string(height * width));
    if (encoder_widths.empty() || decoder_widths.empty())
        throw ConfigError("codec: encoder and decoder widths must be non-empty");
    for (int w : encoder_widths)
        if (w < 1) throw ConfigError("codec: encoder width must be >= 1");
    for (int w : decoder_widths)
        if (w < 1) throw ConfigError("codec: decoder width must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("codec: learning_rate must be positive");
    if (epochs < 1) throw ConfigError("codec: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("codec: batch_size must be >= 1");
    const int enc_div = 1 << (static_cast<int>(encoder_widths.size()) - 1);
    const int dec_div = 1 << (static_cast<int>(decoder_widths.size()) - 1);
    if (height % enc_div || width % enc_div || height % dec_div || width % dec_div)
        throw ConfigError("codec: image size must be divisible by the stride product");
}

int CodecConfig::encoder_out_h() const {
    return height >> (static_cast<int>(encoder_widths.size()) - 1);
}
int CodecConfig::encoder_out_w() const {
    return width >> (static_cast<int>(encoder_widths.size()) - 1);
}
int CodecConfig::decoder_in_h() const {
    return height >> (static_cast<int>(decoder_widths.size()) - 1);
}
int CodecConfig::decoder_in_w() const {
    return width >> (static_cast<int>(decoder_widths.size()) - 1);
}

std::vector<nn::Param*> CodecModel::params() {
    std::vector<nn::Param*> ps;
    for (auto& c : enc_convs) {
        ps.push_back(&c.weight);
        ps.push_back(&c.bias);
    }
    ps.push_back(&enc_dense.weight);
    ps.push_back(&enc_dense.bias);
    ps.push_back(&dec_dense.weight);
    ps.push_back(&dec_dense.bias);
    for (auto& c : dec_convs) {
        ps.push_back(&c.weight);
        ps.push_back(&c.bias);
    }
    return ps;
}

std::vector<const nn::Param*> CodecModel::params() const {
    std::vector<const nn::Param*> ps;
    for (auto* p : const_cast<CodecModel*>(this)->params()) ps.push_back(p);
    return ps;
}

CodecModel init_codec(const CodecConfig& config) {
    config.validate();
    CodecModel m;
    m.config = config;
    Rng rng(derive_seed(config.seed, "codec-init"));

    int cin = 1;
    for (size_t i = 0; i < config.encoder_widths.size(); ++i) {
        nn::Conv2d conv;
        conv.init("encoder.conv" + std::to_string(i), cin, config.encoder_widths[i],
                  i == 0 ? 1 : 2, rng);
        cin = config.encoder_widths[i];
        m.enc_convs.push_back(std::move(conv));
    }
    const int flat = cin * config.encoder_out_h() * config.encoder_out_w();
    m.enc_dense.init("encoder.dense", flat, config.latent_dim, rng);

    const int dec_flat =
        config.decoder_widths[0] * config.decoder_in_h() * config.decoder_in_w();
    m.dec_dense.init("decoder.dense", config.latent_dim, dec_flat, rng);
    for (size_t i = 0; i + 1 < config.decoder_widths.size(); ++i) {
        nn::Conv2d conv;
        conv.init("decoder.conv" + std::to_string(i), config.decoder_widths[i],
                  config.decoder_widths[i + 1], 1, rng);
        m.dec_convs.push_back(std::move(conv));
    }
    nn::Conv2d out_conv;
    out_conv.init("decoder.out", config.decoder_widths.back(), 1, 1, rng);
    m.dec_convs.push_back(std::move(out_conv));

    nn::assign_offsets(m.params());
    return m;
}

LatentVector encode(const CodecModel& model, const ImageSlice& image) {
    if (image.height != model.config.height || image.width != model.config.width)
        throw ShapeError("encode: expected " + std::to_string(model.config.height) +
                         "x" + std::to_string(model.config.width) + " image, got " +
                         std::to_string(image.height) + "x" +
                         std::to_string(image.width));
    EncodeTrace t;
    encoder_forward(model, normalize_image(image), t);
    LatentVector z;
    z.values = std::move(t.z);
    return z;
}

ImageSlice decode(const CodecModel& model, const LatentVector& z) {
    if (z.size() != static_cast<size_t>(model.config.latent_dim))
        throw ShapeError("decode: expected latent length " +
                         std::to_string(model.config.latent_dim) + ", got " +
                         std::to_string(z.size()));
    for (double v : z.values)
        if (!std::isfinite(v)) throw ValidationError("decode: non-finite latent entry");
    DecodeTrace t;
    decoder_forward(model, z.values, t);
    ImageSlice img;
    img.height = model.config.height;
    img.width = model.config.width;
    img.pixels.resize(t.y.size());
    for (size_t i = 0; i < t.y.size(); ++i)
        img.pixels[i] = std::clamp(unit_to_hu(t.y[i]), kHuMin, kHuMax);
    return img;
}

double codec_loss_grad(const CodecModel& model, const ImageSlice& image,
                       std::vector<double>& grad) {
    if (image.height != model.config.height || image.width != model.config.width)
        throw ShapeError("codec_loss_grad: expected " +
                         std::to_string(model.config.height) + "x" +
                         std::to_string(model.config.width) + " image, got " +
                         std::to_string(image.height) + "x" +
                         std::to_string(image.width));
    const std::vector<double> x = normalize_image(image);
    EncodeTrace et;
    DecodeTrace dt;
    encoder_forward(model, x, et);
    decoder_forward(model, et.z, dt);
    const double n_pix = static_cast<double>(dt.y.size());
    double loss = 0.0;
    std::vector<double> dy(dt.y.size());
    for (size_t i = 0; i < dt.y.size(); ++i) {
        const double r = dt.y[i] - x[i];
        loss += r * r;
        dy[i] = 2.0 * r / n_pix;
    }
    int64_t n_params = 0;
    for (const nn::Param* p : model.params()) n_params += p->size();
    grad.assign(n_params, 0.0);
    sample_backward(model, x, et, dt, dy, grad);
    return loss / n_pix;
}

CodecModel train_codec(CodecModel model, const PairedDataset& dataset) {
    const auto& cfg = model.config;
    cfg.validate();
    const auto train = dataset.split("train");
    if (train.empty()) throw ValidationError("train_codec: no training pairs");

    std::vector<const ImageSlice*> samples;
    for (const PairedSlice* p : train) {
        if (p->a.height != cfg.height || p->a.width != cfg.width)
            throw ShapeError("train_codec: pair " + p->id + " is " +
                             std::to_string(p->a.height) + "x" +
                             std::to_string(p->a.width) + ", model expects " +
                             std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
        samples.push_back(&p->a);
        samples.push_back(&p->b);
    }
    const int n = static_cast<int>(samples.size());
    const int64_t n_pix = static_cast<int64_t>(cfg.height) * cfg.width;

    std::vector<std::vector<double>> norm(n);
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) norm[i] = normalize_image(*samples[i]);
    });

    const auto params = model.params();
    const int64_t n_params = nn::assign_offsets(params);
    nn::Adam opt(params, cfg.learning_rate);

    std::vector<std::vector<double>> sample_grads(cfg.batch_size);
    std::vector<double> sample_loss(cfg.batch_size);
    std::vector<double> total_grad;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng order_rng(derive_seed(cfg.seed, "codec-order", epoch));
        const auto perm = order_rng.permutation(n);
        double epoch_loss = 0.0;
        int batch_index = 0;
        for (int start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            const int bsz = std::min(cfg.batch_size, n - start);
            parallel_for(bsz, [&](int64_t lo, int64_t hi) {
                for (int64_t k = lo; k < hi; ++k) {
                    const std::vector<double>& x = norm[perm[start + k]];
                    auto& grad = sample_grads[k];
                    grad.assign(n_params, 0.0);
                    EncodeTrace et;
                    DecodeTrace dt;
                    encoder_forward(model, x, et);
                    decoder_forward(model, et.z, dt);
                    double loss = 0.0;
                    std::vector<double> dy(dt.y.size());
                    for (size_t i = 0; i < dt.y.size(); ++i) {
                        const double r = dt.y[i] - x[i];
                        loss += r * r;
                        dy[i] = 2.0 * r / static_cast<double>(n_pix);
                    }
                    sample_loss[k] = loss / static_cast<double>(n_pix);
                    sample_backward(model, x, et, dt, dy, grad);
                }
            });
            total_grad.assign(n_params, 0.0);
            double batch_loss = 0.0;
            for (int k = 0; k < bsz; ++k) {
                batch_loss += sample_loss[k];
                const double* g = sample_grads[k].data();
                for (int64_t i = 0; i < n_params; ++i) total_grad[i] += g[i];
            }
            batch_loss /= bsz;
            if (!std::isfinite(batch_loss))
                throw TrainingError("codec loss diverged", epoch, batch_index);
            const double inv = 1.0 / bsz;
            for (double& g : total_grad) g *= inv;
            opt.step(total_grad);
            epoch_loss += batch_loss * bsz;
        }
        model.loss_history.push_back(epoch_loss / n);
    }

    // Whiten the latent space over the training set and fold the affine map
    // into the bottleneck layers, so encode emits whitened latents directly.
    const int L = cfg.latent_dim;
    std::vector<std::vector<double>> latents(n);
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            EncodeTrace et;
            encoder_forward(model, norm[i], et);
            latents[i] = std::move(et.z);
        }
    });
    std::vector<double> mu(L, 0.0), sd(L, 0.0);
    for (const auto& z : latents)
        for (int d = 0; d < L; ++d) mu[d] += z[d];
    for (double& v : mu) v /= n;
    for (const auto& z : latents)
        for (int d = 0; d < L; ++d) {
            const double r = z[d] - mu[d];
            sd[d] += r * r;
        }
    for (double& v : sd) v = std::sqrt(v / n);
    for (double& v : sd)
        if (!(v > 1e-8)) v = 1.0;

    auto& ew = model.enc_dense.weight.value;
    const int enc_in = model.enc_dense.in_dim;
    for (int d = 0; d < L; ++d) {
        const double inv = 1.0 / sd[d];
        for (int i = 0; i < enc_in; ++i) ew[static_cast<size_t>(d) * enc_in + i] *= inv;
        model.enc_dense.bias.value[d] = (model.enc_dense.bias.value[d] - mu[d]) * inv;
    }
    auto& dw = model.dec_dense.weight.value;
    const int dec_out = model.dec_dense.out_dim;
    for (int o = 0; o < dec_out; ++o) {
        double delta = 0.0;
        for (int d = 0; d < L; ++d) delta += dw[static_cast<size_t>(o) * L + d] * mu[d];
        model.dec_dense.bias.value[o] += delta;
        for (int d = 0; d < L; ++d) dw[static_cast<size_t>(o) * L + d] *= sd[d];
    }

    // Empirical encode Lipschitz estimate: 1 HU single-pixel perturbations.
    {
        const ImageSlice& ref = *samples[0];
        const LatentVector z0 = encode(model, ref);
        Rng rng(derive_seed(cfg.seed, "codec-lipschitz"));
        double max_ratio = 0.0;
        for (int k = 0; k < 100; ++k) {
            ImageSlice pert = ref;
            const int r = rng.uniform_int(0, cfg.height - 1);
            const int c = rng.uniform_int(0, cfg.width - 1);
            const double delta = (pert.at(r, c) + 1.0 <= kHuMax) ? 1.0 : -1.0;
            pert.at(r, c) += delta;
            const LatentVector z1 = encode(model, pert);
            double dist2 = 0.0;
            for (int d = 0; d < L; ++d) {
                const double dv = z1[d] - z0[d];
                dist2 += dv * dv;
            }
            max_ratio = std::max(max_ratio, std::sqrt(dist2));
        }
        model.lipschitz_bound = 2.0 * max_ratio;
    }

    return model;
}

uint32_t codec_param_checksum(const CodecModel& model) {
    return nn::param_checksum(const_cast<CodecModel&>(model).params());
}

}  // namespace ctstd
