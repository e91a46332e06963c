#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "ctstd/radiomics.hpp"

namespace ctstd {

/// Relative error of a synthesized feature value f_s against target f_t.
/// f_t = 0 with f_s = 0 gives re = 0; f_t = 0 otherwise is flagged undefined.
struct REResult {
    std::string name;
    double f_s = 0.0;
    double f_t = 0.0;
    double re = 0.0;
    bool defined = true;
};

REResult relative_error(double f_s, double f_t);

struct ReproCount {
    int count = 0;      ///< defined REs strictly below the threshold
    int total = 0;      ///< defined REs
    int undefined = 0;  ///< flagged-undefined REs, excluded from both
    std::vector<REResult> per_feature;
};

ReproCount reproducible_count(const FeatureVector& features_s,
                              const FeatureVector& features_t, double threshold);

struct CCCResult {
    double ccc = 0.0;
    double rho = 0.0;  ///< 0 when either group is constant
    double mu_s = 0.0, mu_t = 0.0;
    double sigma_s = 0.0, sigma_t = 0.0;  ///< population
    int n = 0;
    bool defined = true;  ///< false when both groups are constant
};

CCCResult ccc(const std::vector<double>& group_s, const std::vector<double>& group_t);

/// Per-feature-name min-max ranges over an evaluation cohort, applied before
/// pooling heterogeneous features into one CCC group.
struct NormMap {
    std::map<std::string, std::pair<double, double>> ranges;

    double apply(const std::string& name, double value) const;
};

NormMap cohort_normalization(const std::vector<const FeatureVector*>& cohort);

/// CCC over the paired values of one feature class. When norm is given, each
/// feature is min-max normalized by name first (degenerate range maps to 0.5).
CCCResult ccc_by_class(const FeatureVector& features_s, const FeatureVector& features_t,
                       FeatureClass cls, const NormMap* norm = nullptr);

struct CurvePoint {
    double threshold = 0.0;
    int count = 0;
    int total = 0;
};

std::vector<CurvePoint> re_threshold_curve(const FeatureVector& features_s,
                                           const FeatureVector& features_t,
                                           const std::vector<double>& thresholds);

/// Mean and spread of per-ROI class concordance, one cell of a
/// conditions-by-classes table.
struct ClassCCCSummary {
    std::string condition;
    FeatureClass cls = FeatureClass::GOH;
    double ccc_mean = 0.0;
    double ccc_std = 0.0;  ///< population std across ROIs
    double rho_mean = 0.0;
    int n_rois = 0;     ///< ROIs with a defined per-ROI CCC
    int n_features = 0; ///< class arity
};

ClassCCCSummary summarize_class_ccc(const std::string& condition, FeatureClass cls,
                                    const std::vector<CCCResult>& per_roi);

// Report serialization, 17 significant digits throughout.
void write_re_per_feature_csv(
    const std::filesystem::path& path,
    const std::vector<std::tuple<std::string, std::string, std::string, REResult>>&
        rows);  ///< (condition, slice_id, roi_id, result)
void write_ccc_per_class_csv(const std::filesystem::path& path,
                             const std::vector<ClassCCCSummary>& rows);
void write_re_curve_csv(
    const std::filesystem::path& path,
    const std::vector<std::tuple<std::string, CurvePoint>>& rows);

}  // namespace ctstd
