#pragma once

#include <cstdint>
#include <vector>

#include "ctstd/image.hpp"
#include "ctstd/latent.hpp"
#include "ctstd/nn.hpp"
#include "ctstd/phantom.hpp"

namespace ctstd {

struct CodecConfig {
    int height = 64;
    int width = 64;
    int latent_dim = 128;
    /// First conv keeps resolution, each following conv halves it.
    std::vector<int> encoder_widths{8, 16, 32, 32};
    /// Dense to widths[0] maps at the coarse resolution, then upsample+conv
    /// stages, then a final 1-channel conv at full resolution.
    std::vector<int> decoder_widths{32, 16, 8};
    double learning_rate = 1e-3;
    int epochs = 20;
    int batch_size = 4;
    uint64_t seed = 1;

    void validate() const;
    int encoder_out_h() const;
    int encoder_out_w() const;
    int decoder_in_h() const;
    int decoder_in_w() const;
};

/// Asymmetric convolutional encoder-decoder with a flat 1-D bottleneck.
struct CodecModel {
    CodecConfig config;
    std::vector<nn::Conv2d> enc_convs;
    nn::Dense enc_dense;
    nn::Dense dec_dense;
    std::vector<nn::Conv2d> dec_convs;  ///< one per upsample stage plus the output conv
    std::vector<double> loss_history;   ///< mean normalized L2 per epoch
    double lipschitz_bound = 0.0;       ///< empirical encode Lipschitz estimate, per HU

    std::vector<nn::Param*> params();
    std::vector<const nn::Param*> params() const;
};

/// Maps [-1024, 3071] HU onto [-1, 1].
double hu_to_unit(double hu);
double unit_to_hu(double u);

CodecModel init_codec(const CodecConfig& config);

LatentVector encode(const CodecModel& model, const ImageSlice& image);
ImageSlice decode(const CodecModel& model, const LatentVector& z);

/// Reconstruction loss for one image (mean squared error in normalized
/// intensity) and its analytic gradient, laid out per the model's parameter
/// offsets. `grad` is resized and overwritten.
double codec_loss_grad(const CodecModel& model, const ImageSlice& image,
                       std::vector<double>& grad);

/// Trains on every A and B image of the train split as independent samples
/// (L2 in normalized intensity, Adam). Appends one loss-history entry per
/// epoch, then whitens the latent space against the training set (folded
/// exactly into the bottleneck layers) and records the empirical encode
/// Lipschitz bound.
CodecModel train_codec(CodecModel model, const PairedDataset& dataset);

uint32_t codec_param_checksum(const CodecModel& model);

}  // namespace ctstd
