#pragma once

#include <filesystem>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ctstd/image.hpp"

namespace ctstd {

struct QuantizationSpec {
    int n_levels = 32;
    double hu_low = -1000.0;
    double hu_high = 400.0;

    void validate() const;
    /// Monotone map onto {1..n_levels}; clamps outside the window.
    int level(double hu) const;
};

/// Level grid restricted to a mask: 0 marks out-of-mask pixels.
struct QuantizedROI {
    int height = 0;
    int width = 0;
    int n_levels = 0;
    std::vector<int> levels;

    bool in(int r, int c) const {
        return r >= 0 && r < height && c >= 0 && c < width &&
               levels[static_cast<size_t>(r) * width + c] != 0;
    }
    int at(int r, int c) const { return levels[static_cast<size_t>(r) * width + c]; }
    int mask_count() const;
};

QuantizedROI quantize(const ImageSlice& image, const TumorROI& roi,
                      const QuantizationSpec& q);

enum class FeatureClass { GOH, GLCM, GLRLM, ID, IH, NID };
std::string to_string(FeatureClass cls);

struct Feature {
    std::string name;
    FeatureClass cls;
    double value;
};

struct RadiomicsConfig {
    QuantizationSpec quant;
    std::vector<std::pair<int, int>> glcm_offsets{{0, 1}, {1, 0}, {1, 1}, {1, -1}};
    std::vector<std::pair<int, int>> glrlm_directions{{0, 1}, {1, 0}, {1, 1}, {1, -1}};
    int ih_bins = 32;
    int goh_bins = 4;
    int nid_radius = 1;

    void validate() const;
};

struct FeatureVector {
    std::vector<Feature> features;
    RadiomicsConfig config;

    std::vector<double> values() const;
    std::vector<std::string> names() const;
};

/// Symmetric co-occurrence matrix (n_levels x n_levels, row-major), each
/// offset's counts normalized to sum 1 then averaged over offsets.
std::vector<double> glcm_matrix(const QuantizedROI& q,
                                const std::vector<std::pair<int, int>>& offsets);
std::vector<Feature> glcm_features(const QuantizedROI& q,
                                   const std::vector<std::pair<int, int>>& offsets);

/// Run-length count matrix (n_levels x max_run, row-major) averaged over
/// directions; out-of-mask gaps break runs.
std::vector<double> glrlm_matrix(const QuantizedROI& q,
                                 const std::vector<std::pair<int, int>>& directions,
                                 int* max_run_out);
std::vector<Feature> glrlm_features(const QuantizedROI& q,
                                    const std::vector<std::pair<int, int>>& directions);

std::vector<Feature> intensity_direct_features(const ImageSlice& image,
                                               const TumorROI& roi);

std::vector<Feature> intensity_histogram_features(const ImageSlice& image,
                                                  const TumorROI& roi, int n_bins,
                                                  const QuantizationSpec& q);

std::vector<Feature> goh_features(const ImageSlice& image, const TumorROI& roi,
                                  int n_orient_bins);

/// NGTDM statistics over the (2r+1)^2 - 1 in-mask neighborhood.
std::vector<Feature> nid_features(const QuantizedROI& q, int neighborhood_radius);

/// All classes in the fixed documented order: GOH, GLCM, GLRLM, ID, IH, NID.
FeatureVector extract_all(const ImageSlice& image, const TumorROI& roi,
                          const RadiomicsConfig& config);

/// (name, class) pairs in extraction order, without extracting.
std::vector<std::pair<std::string, FeatureClass>> feature_order(
    const RadiomicsConfig& config);

/// CSV rows (slice_id, roi_id, feature_name, feature_class, value) with a
/// config-echo comment line; values at full round-trip precision.
void write_features_csv(
    const std::filesystem::path& path,
    const std::vector<std::tuple<std::string, std::string, FeatureVector>>& rows);

void write_feature_order(const std::filesystem::path& path,
                         const RadiomicsConfig& config);

}  // namespace ctstd
