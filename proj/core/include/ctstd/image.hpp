#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ctstd {

inline constexpr double kHuMin = -1024.0;
inline constexpr double kHuMax = 3071.0;

/// 2-D grid of Hounsfield-unit intensities. Row-major, pixel (0,0) top-left.
struct ImageSlice {
    int height = 0;
    int width = 0;
    double spacing_mm_row = 1.0;
    double spacing_mm_col = 1.0;
    std::vector<double> pixels;

    double& at(int r, int c) { return pixels[static_cast<size_t>(r) * width + c]; }
    double at(int r, int c) const { return pixels[static_cast<size_t>(r) * width + c]; }
    size_t size() const { return pixels.size(); }

    static ImageSlice filled(int height, int width, double value,
                             double spacing_row = 1.0, double spacing_col = 1.0);

    /// Checks grid dimensions, finiteness, HU range, positive spacing.
    void validate() const;
};

/// Boolean region-of-interest congruent with its slice.
struct TumorROI {
    double center_row = 0.0;
    double center_col = 0.0;
    double radius_px = 0.0;
    int height = 0;
    int width = 0;
    std::vector<uint8_t> mask;

    bool in(int r, int c) const {
        return r >= 0 && r < height && c >= 0 && c < width &&
               mask[static_cast<size_t>(r) * width + c] != 0;
    }
    int mask_count() const;

    /// Non-empty, 4-connected, within bounds, positive radius.
    void validate() const;
};

/// Multi-ROI label image: 0 background, k = ROI k (1-based).
struct LabelMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> labels;
};

LabelMask rois_to_labels(int height, int width, const std::vector<TumorROI>& rois);
std::vector<TumorROI> rois_from_labels(const LabelMask& m);

// Flat binary image container: 16-byte header (magic "CTS1", u32 height,
// u32 width, u32 dtype tag), then row-major little-endian payload.
// dtype 0 = float32 HU pixels (.cts), dtype 1 = uint8 labels (.msk).
void write_cts(const std::filesystem::path& path, const ImageSlice& img);
ImageSlice read_cts(const std::filesystem::path& path);
void write_msk(const std::filesystem::path& path, const LabelMask& mask);
LabelMask read_msk(const std::filesystem::path& path);

/// CRC-32 of a whole file's bytes.
uint32_t crc32_file(const std::filesystem::path& path);

}  // namespace ctstd
