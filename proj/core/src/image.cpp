#include "ctstd/image.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <queue>

#include "ctstd/checksum.hpp"
#include "ctstd/errors.hpp"

namespace ctstd {

namespace {

constexpr char kMagic[4] = {'C', 'T', 'S', '1'};
constexpr uint32_t kDtypeF32 = 0;
constexpr uint32_t kDtypeU8 = 1;

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write file: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("short write: " + path.string());
}

struct Header {
    uint32_t height, width, dtype;
};

Header parse_header(const std::vector<uint8_t>& bytes, const std::filesystem::path& path) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ValidationError("not a CTS1 file: " + path.string());
    return Header{get_u32(bytes.data() + 4), get_u32(bytes.data() + 8),
                  get_u32(bytes.data() + 12)};
}

}  // namespace

ImageSlice ImageSlice::filled(int height, int width, double value,
                              double spacing_row, double spacing_col) {
    ImageSlice img;
    img.height = height;
    img.width = width;
    img.spacing_mm_row = spacing_row;
    img.spacing_mm_col = spacing_col;
    img.pixels.assign(static_cast<size_t>(height) * width, value);
    return img;
}

void ImageSlice::validate() const {
    if (height <= 0 || width <= 0)
        throw ShapeError("image dimensions must be positive");
    if (pixels.size() != static_cast<size_t>(height) * width)
        throw ShapeError("pixel count " + std::to_string(pixels.size()) +
                         " does not match " + std::to_string(height) + "x" +
                         std::to_string(width));
    if (!(spacing_mm_row > 0.0) || !(spacing_mm_col > 0.0))
        throw ValidationError("pixel spacing must be positive");
    for (double v : pixels) {
        if (!std::isfinite(v) || v < kHuMin || v > kHuMax)
            throw ValidationError("pixel value out of HU range [-1024, 3071]: " +
                                  std::to_string(v));
    }
}

int TumorROI::mask_count() const {
    int n = 0;
    for (uint8_t m : mask) n += (m != 0);
    return n;
}

void TumorROI::validate() const {
    if (height <= 0 || width <= 0 ||
        mask.size() != static_cast<size_t>(height) * width)
        throw ShapeError("ROI mask dimensions inconsistent");
    if (!(radius_px > 0.0)) throw ValidationError("ROI radius must be positive");
    const int total = mask_count();
    if (total == 0) throw ValidationError("ROI mask is empty");

    // 4-connectivity flood fill from the first set pixel.
    std::vector<uint8_t> seen(mask.size(), 0);
    std::queue<std::pair<int, int>> q;
    for (int r = 0; r < height && q.empty(); ++r)
        for (int c = 0; c < width && q.empty(); ++c)
            if (in(r, c)) {
                q.emplace(r, c);
                seen[static_cast<size_t>(r) * width + c] = 1;
            }
    int reached = 0;
    const int dr[4] = {1, -1, 0, 0};
    const int dc[4] = {0, 0, 1, -1};
    while (!q.empty()) {
        auto [r, c] = q.front();
        q.pop();
        ++reached;
        for (int k = 0; k < 4; ++k) {
            const int nr = r + dr[k], nc = c + dc[k];
            if (in(nr, nc) && !seen[static_cast<size_t>(nr) * width + nc]) {
                seen[static_cast<size_t>(nr) * width + nc] = 1;
                q.emplace(nr, nc);
            }
        }
    }
    if (reached != total) throw ValidationError("ROI mask is not connected");
}

LabelMask rois_to_labels(int height, int width, const std::vector<TumorROI>& rois) {
    LabelMask m;
    m.height = height;
    m.width = width;
    m.labels.assign(static_cast<size_t>(height) * width, 0);
    for (size_t k = 0; k < rois.size(); ++k) {
        const TumorROI& roi = rois[k];
        if (roi.height != height || roi.width != width)
            throw ShapeError("ROI grid does not match label mask grid");
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c)
                if (roi.in(r, c))
                    m.labels[static_cast<size_t>(r) * width + c] =
                        static_cast<uint8_t>(k + 1);
    }
    return m;
}

std::vector<TumorROI> rois_from_labels(const LabelMask& m) {
    uint8_t max_label = 0;
    for (uint8_t v : m.labels) max_label = std::max(max_label, v);
    std::vector<TumorROI> rois;
    for (uint8_t k = 1; k <= max_label; ++k) {
        TumorROI roi;
        roi.height = m.height;
        roi.width = m.width;
        roi.mask.assign(m.labels.size(), 0);
        double sum_r = 0, sum_c = 0;
        int n = 0;
        for (int r = 0; r < m.height; ++r)
            for (int c = 0; c < m.width; ++c)
                if (m.labels[static_cast<size_t>(r) * m.width + c] == k) {
                    roi.mask[static_cast<size_t>(r) * m.width + c] = 1;
                    sum_r += r;
                    sum_c += c;
                    ++n;
                }
        if (n == 0) continue;
        roi.center_row = sum_r / n;
        roi.center_col = sum_c / n;
        roi.radius_px = std::sqrt(n / std::numbers::pi);
        rois.push_back(std::move(roi));
    }
    return rois;
}

void write_cts(const std::filesystem::path& path, const ImageSlice& img) {
    img.validate();
    std::string out;
    out.reserve(16 + img.size() * 4);
    out.append(kMagic, 4);
    put_u32(out, static_cast<uint32_t>(img.height));
    put_u32(out, static_cast<uint32_t>(img.width));
    put_u32(out, kDtypeF32);
    for (double v : img.pixels) {
        const float f = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
    write_file_bytes(path, out);
}

ImageSlice read_cts(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    const Header h = parse_header(bytes, path);
    if (h.dtype != kDtypeF32)
        throw ValidationError("expected float32 payload in " + path.string());
    const size_t n = static_cast<size_t>(h.height) * h.width;
    if (bytes.size() != 16 + n * 4)
        throw ValidationError("truncated image file: " + path.string());
    ImageSlice img;
    img.height = static_cast<int>(h.height);
    img.width = static_cast<int>(h.width);
    img.pixels.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const uint32_t bits = get_u32(bytes.data() + 16 + i * 4);
        float f;
        std::memcpy(&f, &bits, 4);
        img.pixels[i] = static_cast<double>(f);
    }
    img.validate();
    return img;
}

void write_msk(const std::filesystem::path& path, const LabelMask& mask) {
    if (mask.labels.size() != static_cast<size_t>(mask.height) * mask.width)
        throw ShapeError("label mask dimensions inconsistent");
    std::string out;
    out.reserve(16 + mask.labels.size());
    out.append(kMagic, 4);
    put_u32(out, static_cast<uint32_t>(mask.height));
    put_u32(out, static_cast<uint32_t>(mask.width));
    put_u32(out, kDtypeU8);
    out.append(reinterpret_cast<const char*>(mask.labels.data()), mask.labels.size());
    write_file_bytes(path, out);
}

LabelMask read_msk(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    const Header h = parse_header(bytes, path);
    if (h.dtype != kDtypeU8)
        throw ValidationError("expected uint8 payload in " + path.string());
    const size_t n = static_cast<size_t>(h.height) * h.width;
    if (bytes.size() != 16 + n)
        throw ValidationError("truncated mask file: " + path.string());
    LabelMask m;
    m.height = static_cast<int>(h.height);
    m.width = static_cast<int>(h.width);
    m.labels.assign(bytes.begin() + 16, bytes.end());
    return m;
}

uint32_t crc32_file(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return crc32_bytes(bytes.data(), bytes.size());
}

}  // namespace ctstd
