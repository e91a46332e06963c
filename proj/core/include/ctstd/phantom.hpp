#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctstd/image.hpp"

namespace ctstd {

/// Reconstruction-kernel model: radially symmetric modulation transfer
/// function plus pre-filter white noise of the given standard deviation.
struct KernelProfile {
    std::string name;
    std::vector<double> mtf;  ///< uniform samples on [0, 0.5] cycles/px
    double noise_gain = 0.0;  ///< HU std of white noise injected before filtering

    /// mtf(0) = 1, samples non-negative and monotone non-increasing, >= 2 samples.
    void validate() const;

    /// Linear interpolation over the sample grid; clamped beyond Nyquist.
    double mtf_at(double freq_cyc_per_px) const;

    bool is_identity() const;

    static KernelProfile identity();
    static KernelProfile smooth_default();
    static KernelProfile sharp_default();
    /// mtf(f) = exp(-(f / cutoff)^power), 65 samples.
    static KernelProfile exponential(std::string name, double cutoff, double power,
                                     double noise_gain);
};

struct EllipseSpec {
    double center_row = 0.0;
    double center_col = 0.0;
    double semi_row = 1.0;
    double semi_col = 1.0;

    bool contains(double r, double c) const {
        const double dr = (r - center_row) / semi_row;
        const double dc = (c - center_col) / semi_col;
        return dr * dr + dc * dc <= 1.0;
    }
};

struct TumorSpec {
    double center_row = 0.0;
    double center_col = 0.0;
    double radius_px = 0.0;
    double base_hu = 0.0;
    double texture_amplitude_hu = 0.0;  ///< std of the correlated texture field
    double texture_corr_px = 1.0;       ///< Gaussian correlation length
};

/// Scene description for one synthetic chest slice. Jitter fields control the
/// per-slice perturbations drawn when building a dataset; the *_scale fields
/// are the held-out acquisition shift applied to the test split.
struct PhantomSpec {
    int height = 64;
    int width = 64;
    double spacing_mm_row = 1.0;
    double spacing_mm_col = 1.0;

    double air_hu = -1000.0;
    double body_hu = 40.0;
    double lung_hu = -820.0;
    double noise_hu = 4.0;  ///< iid body-interior noise baked into the ground truth

    EllipseSpec body{32.0, 32.0, 26.0, 30.0};
    std::vector<EllipseSpec> lungs{{32.0, 18.0, 16.0, 11.0},
                                   {32.0, 46.0, 16.0, 11.0}};
    std::vector<TumorSpec> tumors{
        {24.0, 17.0, 5.5, -60.0, 150.0, 2.6},
        {40.0, 19.0, 5.0, 10.0, 130.0, 3.2},
        {32.0, 46.0, 6.0, -40.0, 160.0, 2.2},
    };

    double center_jitter_px = 1.5;
    double radius_jitter_px = 0.5;
    double hu_jitter = 15.0;
    double texture_amp_jitter_frac = 0.25;
    double texture_corr_jitter_frac = 0.15;

    double test_noise_scale = 0.9;
    double test_texture_scale = 1.12;

    /// Positive dims/radii/axes, HU levels in range, every tumor disk inside
    /// a lung ellipse (error names the offending tumor index).
    void validate() const;
};

/// Noiseless-kernel scene rendering: plateaus, body noise, tumor texture.
/// Pure function of (spec, seed).
ImageSlice generate_ground_truth(const PhantomSpec& spec, uint64_t seed);

/// Disk ROI masks for the spec's tumors, in listed order.
std::vector<TumorROI> tumor_rois(const PhantomSpec& spec);

/// Simulated reconstruction: add white noise (noise_gain), filter by the
/// radial MTF in the frequency domain, clamp to the HU range. The identity
/// kernel returns the input bit-exactly.
ImageSlice apply_kernel(const ImageSlice& truth, const KernelProfile& kernel,
                        uint64_t seed);

struct PairedSlice {
    std::string id;
    std::string split;  ///< "train" or "test"
    ImageSlice a;       ///< smooth-kernel reconstruction
    ImageSlice b;       ///< sharp-kernel reconstruction
    std::vector<TumorROI> rois;
};

struct PairedDataset {
    std::vector<PairedSlice> slices;

    std::vector<const PairedSlice*> split(const std::string& tag) const;
    /// Ids unique, train/test ids disjoint, per-pair dims and ROIs congruent.
    void validate() const;
};

PairedDataset make_paired_dataset(const PhantomSpec& spec, const KernelProfile& kernelA,
                                  const KernelProfile& kernelB, int n_slices,
                                  uint64_t seed);

/// Train + held-out test split; the test split draws from a shifted spec
/// (noise_hu * test_noise_scale, texture amplitudes * test_texture_scale).
PairedDataset make_paired_dataset(const PhantomSpec& spec, const KernelProfile& kernelA,
                                  const KernelProfile& kernelB, int n_train, int n_test,
                                  uint64_t seed);

// Directory layout: pairs/<id>/A.cts, pairs/<id>/B.cts, pairs/<id>/roi.msk,
// manifest.json listing ids, split tags and pixel spacing.
void save_dataset(const std::filesystem::path& dir, const PairedDataset& ds);
PairedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace ctstd
