#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ctstd/codec.hpp"
#include "ctstd/latent.hpp"
#include "ctstd/nn.hpp"
#include "ctstd/phantom.hpp"

namespace ctstd {

struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;      ///< 1 - beta
    std::vector<double> alpha_bar;  ///< running product of alpha
};

/// Linear beta schedule. Accepts T >= 1 so single-step sampling oracles can
/// run; DiffusionConfig itself requires T >= 2.
NoiseSchedule build_schedule(int T, double beta_min, double beta_max);

struct DiffusionConfig {
    int T = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;
    double lambda_l1 = 1.0;
    double learning_rate = 1e-3;
    int epochs = 20;
    int batch_size = 8;
    /// Independent (t, eta) draws each pair contributes per epoch.
    int draws_per_pair = 24;
    uint64_t seed = 1;

    void validate() const;
    NoiseSchedule schedule() const { return build_schedule(T, beta_min, beta_max); }
};

struct DenoiserConfig {
    int latent_dim = 128;
    std::vector<int> hidden_widths{256, 256, 256};
    int time_embed_dim = 64;
    uint64_t seed = 1;

    void validate() const;
};

/// MLP noise predictor on [z_t | cond | time-embedding], SiLU activations,
/// residual connections between equal-width hidden layers, zero-initialized
/// output layer.
struct DenoiserModel {
    DenoiserConfig config;
    std::vector<nn::Dense> hidden;
    nn::Dense out;
    std::vector<double> loss_history;

    std::vector<nn::Param*> params();
    std::vector<const nn::Param*> params() const;
};

/// Sinusoidal embedding of the (1-based) step index.
std::vector<double> time_embedding(int t, int dim);

DenoiserModel init_denoiser(const DenoiserConfig& config);

LatentVector predict_noise(const DenoiserModel& model, const LatentVector& z_t, int t,
                           const LatentVector& cond);

/// Closed-form forward noising: sqrt(abar_t) z0 + sqrt(1 - abar_t) eta.
LatentVector q_sample(const LatentVector& z0, int t, const LatentVector& eta,
                      const NoiseSchedule& schedule);

/// mean-squared(eta - eta_hat) + lambda_l1 * mean-absolute(eta - eta_hat),
/// with eta_hat predicted from q_sample(zB, t, eta) conditioned on zA.
double diffusion_loss(const DenoiserModel& model, const LatentVector& zA,
                      const LatentVector& zB, int t, const LatentVector& eta,
                      const NoiseSchedule& schedule, double lambda_l1);

/// diffusion_loss plus its analytic gradient, laid out per the model's
/// parameter offsets. `grad` is resized and overwritten.
double diffusion_loss_grad(const DenoiserModel& model, const LatentVector& zA,
                           const LatentVector& zB, int t, const LatentVector& eta,
                           const NoiseSchedule& schedule, double lambda_l1,
                           std::vector<double>& grad);

/// Trains the denoiser on frozen-codec latent pairs (cond = Z_A, target = Z_B).
/// The codec parameter checksum must be unchanged afterwards.
DenoiserModel train_diffusion(DenoiserModel model, const CodecModel& codec,
                              const PairedDataset& dataset,
                              const DiffusionConfig& config);

using DenoiseFn = std::function<std::vector<double>(const std::vector<double>& z_t,
                                                    int t, const std::vector<double>& cond)>;

/// Ancestral reverse sampling with a caller-supplied noise predictor
/// (sigma_t^2 = beta_t). Noise draw order: z_T first, then one xi per step
/// with t > 1, descending.
LatentVector sample_with(const DenoiseFn& denoise, int latent_dim,
                         const NoiseSchedule& schedule, const LatentVector& cond,
                         uint64_t seed);

LatentVector sample_standardized(const DenoiserModel& model, const LatentVector& zA,
                                 const NoiseSchedule& schedule, uint64_t seed);

}  // namespace ctstd
