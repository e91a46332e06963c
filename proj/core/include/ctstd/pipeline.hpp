#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctstd/checkpoint.hpp"
#include "ctstd/codec.hpp"
#include "ctstd/diffusion.hpp"
#include "ctstd/metrics.hpp"
#include "ctstd/phantom.hpp"
#include "ctstd/radiomics.hpp"

namespace ctstd {

/// Full experiment description. The master seed determines every derived
/// stream (dataset, both trainings, per-image sampling); the seed fields of
/// the nested configs are overwritten from it when a phase runs.
struct ExperimentConfig {
    PhantomSpec phantom;
    KernelProfile kernel_a = KernelProfile::smooth_default();
    KernelProfile kernel_b = KernelProfile::sharp_default();
    CodecConfig codec;
    DenoiserConfig denoiser;
    DiffusionConfig diffusion;
    RadiomicsConfig radiomics;

    int n_train = 200;
    int n_test = 50;
    uint64_t seed = 7;

    double re_threshold = 0.15;
    double curve_max = 0.30;
    double curve_step = 0.01;

    /// Checks nested configs, latent-dim consistency between codec and
    /// denoiser, image-size consistency between phantom and codec, and
    /// threshold sanity.
    void validate() const;
    std::vector<double> curve_thresholds() const;

    /// CI profile: 2 + 2 epochs on a small dataset.
    static ExperimentConfig smoke();
};

/// JSON config file. Top-level "profile" ("default" or "smoke") picks the
/// base; every other block overrides individual fields. Unknown keys are
/// rejected with the offending block and key named.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Canonical JSON echo of a config; hashed into the run id and stored in the
/// run manifest.
std::string experiment_config_echo(const ExperimentConfig& config);

/// Layout of one run directory.
struct RunPaths {
    std::filesystem::path root;

    std::filesystem::path dataset_dir() const { return root / "dataset"; }
    std::filesystem::path checkpoint_dir() const { return root / "checkpoints"; }
    std::filesystem::path codec_path() const { return checkpoint_dir() / "codec.ckpt"; }
    std::filesystem::path denoiser_path() const {
        return checkpoint_dir() / "denoiser.ckpt";
    }
    std::filesystem::path synth_dir() const { return root / "synth"; }
    std::filesystem::path report_dir() const { return root / "report"; }
    std::filesystem::path manifest_path() const { return root / "manifest.json"; }
};

inline constexpr const char* kConditionBaseline = "baseline";
inline constexpr const char* kConditionEncoderDecoder = "encoder_decoder";
inline constexpr const char* kConditionDiffusion = "diffusion";

/// Pooled evaluation results for one condition (source images vs B).
struct ConditionMetrics {
    std::string condition;
    int reproducible = 0;  ///< defined REs strictly below re_threshold, pooled
    int total = 0;         ///< defined REs, pooled over test ROIs
    int undefined = 0;
    std::vector<ClassCCCSummary> ccc;  ///< one entry per feature class
    std::vector<CurvePoint> curve;     ///< pooled counts per threshold
};

/// Feature vectors of one test ROI under every condition source plus the
/// target B.
struct EvalRow {
    std::string slice_id;
    int roi_id = 0;
    FeatureVector a, b, recon, synth;
};

struct EvalResult {
    std::vector<ConditionMetrics> conditions;  ///< baseline, encoder_decoder, diffusion
    std::vector<EvalRow> rows;                 ///< ordered by slice id, then roi id
    double recon_mae_hu = 0.0;      ///< mean |decode(encode(A)) - A| over test pixels
    double synth_closer_frac = 0.0; ///< fraction of test slices whose mean tumor
                                    ///< GLCM contrast moved closer to B's
};

/// Metric core over already-extracted features: pairs each condition source
/// against B, pools RE counts and curves, and aggregates per-ROI class CCCs
/// (min-max normalized over the whole evaluation cohort). Pure.
EvalResult evaluate_rows(std::vector<EvalRow> rows, const ExperimentConfig& config);

/// decode(sample(encode(a))) with the reverse-process seed given. Checks
/// latent-dim compatibility between the two models.
ImageSlice standardize_image(const CodecModel& codec, const DenoiserModel& denoiser,
                             const NoiseSchedule& schedule, const ImageSlice& a,
                             uint64_t seed);

// Orchestration. Each phase times itself and updates manifest.json next to
// the artifacts it touches (created on first use). Wall-clock only ever goes
// to the manifest, never into report files.

/// Builds the paired dataset under paths.root/dataset and starts the manifest.
void run_generate(const ExperimentConfig& config, const RunPaths& paths);

/// Phase 1: codec training. data_dir must hold a generated dataset; the
/// checkpoint lands at codec_out. The manifest next to data_dir is updated
/// when present (created when data_dir sits inside a run directory).
void run_phase1(const ExperimentConfig& config, const std::filesystem::path& data_dir,
                const std::filesystem::path& codec_out);

/// Phase 2: diffusion training against a frozen codec. Verifies the codec
/// checkpoint file is byte-identical before and after.
void run_phase2(const ExperimentConfig& config, const std::filesystem::path& data_dir,
                const std::filesystem::path& codec_ckpt,
                const std::filesystem::path& denoiser_out);

/// Standardizes every test image, extracts features for all conditions, and
/// writes the metrics block plus per-ROI features into the manifest. Synth
/// images land under paths.root/synth.
EvalResult run_evaluate(const ExperimentConfig& config, const RunPaths& paths);

/// Renders the report bundle (ccc_per_class.csv, re_curve.csv,
/// re_per_feature.csv, feature_order.txt, summary.txt) from the manifest
/// alone. Byte-deterministic for a given metrics block.
void run_report(const RunPaths& paths);

/// generate, phase 1, phase 2, evaluate, report; models round-trip through
/// their checkpoint files between phases.
void run_all(const ExperimentConfig& config, const RunPaths& paths);

/// Re-checks that every artifact the manifest references exists and matches
/// its recorded checksum.
void validate_manifest(const RunPaths& paths);

}  // namespace ctstd
