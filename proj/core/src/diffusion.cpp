#include "ctstd/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "ctstd/errors.hpp"
#include "ctstd/parallel.hpp"

namespace ctstd {

namespace {

struct DenoiserTrace {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;   // per hidden layer, before activation
    std::vector<std::vector<double>> post;  // after activation (+residual)
    std::vector<double> out;
};

std::vector<double> denoiser_input(const DenoiserConfig& cfg,
                                   const std::vector<double>& z_t, int t,
                                   const std::vector<double>& cond) {
    std::vector<double> x;
    x.reserve(2 * cfg.latent_dim + cfg.time_embed_dim);
    x.insert(x.end(), z_t.begin(), z_t.end());
    x.insert(x.end(), cond.begin(), cond.end());
    const auto temb = time_embedding(t, cfg.time_embed_dim);
    x.insert(x.end(), temb.begin(), temb.end());
    return x;
}

void denoiser_forward(const DenoiserModel& m, std::vector<double> input,
                      DenoiserTrace& tr) {
    const auto& widths = m.config.hidden_widths;
    const size_t n = m.hidden.size();
    tr.input = std::move(input);
    tr.pre.resize(n);
    tr.post.resize(n);
    const std::vector<double>* in = &tr.input;
    for (size_t i = 0; i < n; ++i) {
        m.hidden[i].forward(*in, tr.pre[i]);
        nn::silu_forward(tr.pre[i], tr.post[i]);
        if (i > 0 && widths[i] == widths[i - 1])
            for (size_t k = 0; k < tr.post[i].size(); ++k)
                tr.post[i][k] += tr.post[i - 1][k];
        in = &tr.post[i];
    }
    m.out.forward(*in, tr.out);
}

void denoiser_backward(const DenoiserModel& m, const DenoiserTrace& tr,
                       const std::vector<double>& dout, std::vector<double>& grad) {
    const auto& widths = m.config.hidden_widths;
    const size_t n = m.hidden.size();
    std::vector<double> dpost, dpre, dprev;
    m.out.backward(tr.post[n - 1], dout, grad, &dpost);
    for (size_t i = n; i-- > 0;) {
        nn::silu_backward(tr.pre[i], dpost, dpre);
        const std::vector<double>& in = (i == 0) ? tr.input : tr.post[i - 1];
        m.hidden[i].backward(in, dpre, grad, i > 0 ? &dprev : nullptr);
        if (i > 0) {
            if (widths[i] == widths[i - 1])
                for (size_t k = 0; k < dprev.size(); ++k) dprev[k] += dpost[k];
            std::swap(dpost, dprev);
        }
    }
}

void check_latent(const LatentVector& z, int latent_dim, const char* what) {
    if (z.size() != static_cast<size_t>(latent_dim))
        throw ShapeError(std::string(what) + ": expected length " +
                         std::to_string(latent_dim) + ", got " +
                         std::to_string(z.size()));
}

}  // namespace

NoiseSchedule build_schedule(int T, double beta_min, double beta_max) {
    if (T < 1) throw ValidationError("schedule: T must be >= 1");
    if (!(beta_min > 0.0) || !(beta_max < 1.0) || !(beta_min < beta_max))
        throw ValidationError("schedule: need 0 < beta_min < beta_max < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        s.beta[t] = (T == 1) ? beta_min
                             : beta_min + (beta_max - beta_min) * t / (T - 1.0);
        s.alpha[t] = 1.0 - s.beta[t];
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

void DiffusionConfig::validate() const {
    if (T < 2) throw ConfigError("diffusion: T must be >= 2");
    if (!(beta_min > 0.0) || !(beta_max < 1.0) || !(beta_min < beta_max))
        throw ConfigError("diffusion: need 0 < beta_min < beta_max < 1");
    if (lambda_l1 < 0.0) throw ConfigError("diffusion: lambda_l1 must be non-negative");
    if (!(learning_rate > 0.0)) throw ConfigError("diffusion: learning_rate must be positive");
    if (epochs < 1) throw ConfigError("diffusion: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("diffusion: batch_size must be >= 1");
    if (draws_per_pair < 1) throw ConfigError("diffusion: draws_per_pair must be >= 1");
}

void DenoiserConfig::validate() const {
    if (latent_dim < 1) throw ConfigError("denoiser: latent_dim must be >= 1");
    if (hidden_widths.empty()) throw ConfigError("denoiser: hidden_widths must be non-empty");
    for (int w : hidden_widths)
        if (w < 1) throw ConfigError("denoiser: hidden width must be >= 1");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
        throw ConfigError("denoiser: time_embed_dim must be even and >= 2");
}

std::vector<nn::Param*> DenoiserModel::params() {
    std::vector<nn::Param*> ps;
    for (auto& d : hidden) {
        ps.push_back(&d.weight);
        ps.push_back(&d.bias);
    }
    ps.push_back(&out.weight);
    ps.push_back(&out.bias);
    return ps;
}

std::vector<const nn::Param*> DenoiserModel::params() const {
    std::vector<const nn::Param*> ps;
    for (const auto& d : hidden) {
        ps.push_back(&d.weight);
        ps.push_back(&d.bias);
    }
    ps.push_back(&out.weight);
    ps.push_back(&out.bias);
    return ps;
}

std::vector<double> time_embedding(int t, int dim) {
    const int half = dim / 2;
    std::vector<double> emb(dim);
    for (int i = 0; i < half; ++i) {
        const double freq =
            (half == 1) ? 1.0 : std::exp(-std::log(10000.0) * i / (half - 1.0));
        emb[2 * i] = std::sin(t * freq);
        emb[2 * i + 1] = std::cos(t * freq);
    }
    return emb;
}

DenoiserModel init_denoiser(const DenoiserConfig& config) {
    config.validate();
    DenoiserModel m;
    m.config = config;
    Rng rng(derive_seed(config.seed, "denoiser-init"));
    int in_dim = 2 * config.latent_dim + config.time_embed_dim;
    for (size_t i = 0; i < config.hidden_widths.size(); ++i) {
        nn::Dense d;
        d.init("denoiser.hidden" + std::to_string(i), in_dim, config.hidden_widths[i],
               rng);
        in_dim = config.hidden_widths[i];
        m.hidden.push_back(std::move(d));
    }
    m.out.init_zero("denoiser.out", in_dim, config.latent_dim);
    nn::assign_offsets(m.params());
    return m;
}

LatentVector predict_noise(const DenoiserModel& model, const LatentVector& z_t, int t,
                           const LatentVector& cond) {
    const int L = model.config.latent_dim;
    check_latent(z_t, L, "predict_noise z_t");
    check_latent(cond, L, "predict_noise cond");
    if (t < 1) throw IndexError("predict_noise: step index must be >= 1");
    DenoiserTrace tr;
    denoiser_forward(model, denoiser_input(model.config, z_t.values, t, cond.values),
                     tr);
    for (double v : tr.out)
        if (!std::isfinite(v))
            throw NumericError("predict_noise: non-finite output at step " +
                               std::to_string(t));
    LatentVector eta;
    eta.values = std::move(tr.out);
    return eta;
}

LatentVector q_sample(const LatentVector& z0, int t, const LatentVector& eta,
                      const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.T)
        throw IndexError("q_sample: step " + std::to_string(t) + " outside [1, " +
                         std::to_string(schedule.T) + "]");
    if (z0.size() != eta.size())
        throw ShapeError("q_sample: z0 and eta lengths differ");
    const double ab = schedule.alpha_bar[t - 1];
    const double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
    LatentVector zt;
    zt.values.resize(z0.size());
    for (size_t i = 0; i < z0.size(); ++i)
        zt.values[i] = c0 * z0[i] + c1 * eta[i];
    return zt;
}

double diffusion_loss(const DenoiserModel& model, const LatentVector& zA,
                      const LatentVector& zB, int t, const LatentVector& eta,
                      const NoiseSchedule& schedule, double lambda_l1) {
    const LatentVector z_t = q_sample(zB, t, eta, schedule);
    const LatentVector pred = predict_noise(model, z_t, t, zA);
    double mse = 0.0, l1 = 0.0;
    for (size_t i = 0; i < eta.size(); ++i) {
        const double r = eta[i] - pred[i];
        mse += r * r;
        l1 += std::abs(r);
    }
    const double n = static_cast<double>(eta.size());
    const double loss = mse / n + lambda_l1 * l1 / n;
    if (!std::isfinite(loss))
        throw NumericError("diffusion_loss: non-finite loss at step " +
                           std::to_string(t));
    return loss;
}

double diffusion_loss_grad(const DenoiserModel& model, const LatentVector& zA,
                           const LatentVector& zB, int t, const LatentVector& eta,
                           const NoiseSchedule& schedule, double lambda_l1,
                           std::vector<double>& grad) {
    const int L = model.config.latent_dim;
    check_latent(zA, L, "diffusion_loss_grad: cond");
    check_latent(zB, L, "diffusion_loss_grad: z0");
    check_latent(eta, L, "diffusion_loss_grad: eta");
    const LatentVector z_t = q_sample(zB, t, eta, schedule);
    DenoiserTrace tr;
    denoiser_forward(model, denoiser_input(model.config, z_t.values, t, zA.values), tr);
    double mse = 0.0, l1 = 0.0;
    std::vector<double> dout(L);
    for (int i = 0; i < L; ++i) {
        const double r = tr.out[i] - eta[i];
        mse += r * r;
        l1 += std::abs(r);
        const double sgn = (r > 0.0) ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
        dout[i] = (2.0 * r + lambda_l1 * sgn) / L;
    }
    int64_t n_params = 0;
    for (const nn::Param* p : model.params()) n_params += p->size();
    grad.assign(n_params, 0.0);
    denoiser_backward(model, tr, dout, grad);
    const double loss = (mse + lambda_l1 * l1) / L;
    if (!std::isfinite(loss))
        throw NumericError("diffusion_loss_grad: non-finite loss at step " +
                           std::to_string(t));
    return loss;
}

DenoiserModel train_diffusion(DenoiserModel model, const CodecModel& codec,
                              const PairedDataset& dataset,
                              const DiffusionConfig& config) {
    config.validate();
    model.config.validate();
    const int L = model.config.latent_dim;
    if (codec.config.latent_dim != L)
        throw ConfigError("train_diffusion: codec latent_dim " +
                          std::to_string(codec.config.latent_dim) +
                          " != denoiser latent_dim " + std::to_string(L));
    const auto train = dataset.split("train");
    if (train.empty()) throw ValidationError("train_diffusion: no training pairs");

    const uint32_t codec_before = codec_param_checksum(codec);
    const NoiseSchedule schedule = config.schedule();

    const int n = static_cast<int>(train.size());
    std::vector<std::vector<double>> zA(n), zB(n);
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            zA[i] = encode(codec, train[i]->a).values;
            zB[i] = encode(codec, train[i]->b).values;
        }
    });

    const auto params = model.params();
    const int64_t n_params = nn::assign_offsets(params);
    nn::Adam opt(params, config.learning_rate);

    std::vector<std::vector<double>> sample_grads(config.batch_size);
    std::vector<double> sample_loss(config.batch_size);
    std::vector<double> total_grad;

    const int m = n * config.draws_per_pair;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng order_rng(derive_seed(config.seed, "diff-order", epoch));
        const auto perm = order_rng.permutation(m);
        double epoch_loss = 0.0;
        int batch_index = 0;
        for (int start = 0; start < m; start += config.batch_size, ++batch_index) {
            const int bsz = std::min(config.batch_size, m - start);
            parallel_for(bsz, [&](int64_t lo, int64_t hi) {
                for (int64_t k = lo; k < hi; ++k) {
                    const int s = perm[start + k] % n;
                    Rng draw(derive_seed(config.seed, "diff-draw",
                                         static_cast<uint64_t>(epoch) * m + start + k));
                    const int t = static_cast<int>(draw.uniform_int(1, config.T));
                    std::vector<double> eta(L);
                    for (double& v : eta) v = draw.normal();

                    const double ab = schedule.alpha_bar[t - 1];
                    const double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
                    std::vector<double> z_t(L);
                    for (int i = 0; i < L; ++i) z_t[i] = c0 * zB[s][i] + c1 * eta[i];

                    DenoiserTrace tr;
                    denoiser_forward(model,
                                     denoiser_input(model.config, z_t, t, zA[s]), tr);
                    double mse = 0.0, l1 = 0.0;
                    std::vector<double> dout(L);
                    for (int i = 0; i < L; ++i) {
                        const double r = tr.out[i] - eta[i];
                        mse += r * r;
                        l1 += std::abs(r);
                        const double sgn = (r > 0.0) ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
                        dout[i] = (2.0 * r + config.lambda_l1 * sgn) / L;
                    }
                    sample_loss[k] = (mse + config.lambda_l1 * l1) / L;
                    auto& grad = sample_grads[k];
                    grad.assign(n_params, 0.0);
                    denoiser_backward(model, tr, dout, grad);
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
                throw TrainingError("diffusion loss diverged", epoch, batch_index);
            const double inv = 1.0 / bsz;
            for (double& g : total_grad) g *= inv;
            opt.step(total_grad);
            epoch_loss += batch_loss * bsz;
        }
        model.loss_history.push_back(epoch_loss / m);
    }

    if (codec_param_checksum(codec) != codec_before)
        throw IntegrityError("train_diffusion: codec parameters changed during training");
    return model;
}

LatentVector sample_with(const DenoiseFn& denoise, int latent_dim,
                         const NoiseSchedule& schedule, const LatentVector& cond,
                         uint64_t seed) {
    Rng rng(derive_seed(seed, "sample"));
    std::vector<double> z(latent_dim);
    for (double& v : z) v = rng.normal();
    for (int t = schedule.T; t >= 1; --t) {
        const std::vector<double> pred = denoise(z, t, cond.values);
        if (pred.size() != static_cast<size_t>(latent_dim))
            throw ShapeError("sample: denoiser output length mismatch at step " +
                             std::to_string(t));
        const double beta = schedule.beta[t - 1];
        const double alpha = schedule.alpha[t - 1];
        const double ab = schedule.alpha_bar[t - 1];
        const double coef = beta / std::sqrt(1.0 - ab);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
        for (int i = 0; i < latent_dim; ++i) z[i] = inv_sqrt_alpha * (z[i] - coef * pred[i]);
        if (t > 1) {
            const double sigma = std::sqrt(beta);
            for (int i = 0; i < latent_dim; ++i) z[i] += sigma * rng.normal();
        }
        for (double v : z)
            if (!std::isfinite(v))
                throw NumericError("sample: non-finite latent at step " +
                                   std::to_string(t));
    }
    LatentVector out;
    out.values = std::move(z);
    return out;
}

LatentVector sample_standardized(const DenoiserModel& model, const LatentVector& zA,
                                 const NoiseSchedule& schedule, uint64_t seed) {
    const int L = model.config.latent_dim;
    check_latent(zA, L, "sample_standardized cond");
    DenoiseFn fn = [&model](const std::vector<double>& z_t, int t,
                            const std::vector<double>& cond) {
        LatentVector zt, c;
        zt.values = z_t;
        c.values = cond;
        return predict_noise(model, zt, t, c).values;
    };
    return sample_with(fn, L, schedule, zA, seed);
}

}  // namespace ctstd
