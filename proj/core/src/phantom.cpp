#include "ctstd/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "ctstd/errors.hpp"
#include "ctstd/parallel.hpp"
#include "ctstd/rng.hpp"
#include "fft.hpp"

namespace ctstd {

namespace {

using nlohmann::json;

KernelProfile exp_profile(std::string name, double cutoff, double power,
                          double noise_gain) {
    KernelProfile k;
    k.name = std::move(name);
    k.noise_gain = noise_gain;
    constexpr int kSamples = 65;
    k.mtf.resize(kSamples);
    for (int i = 0; i < kSamples; ++i) {
        const double f = 0.5 * i / (kSamples - 1);
        k.mtf[i] = std::exp(-std::pow(f / cutoff, power));
    }
    return k;
}

bool disk_inside_some_lung(const TumorSpec& t, const std::vector<EllipseSpec>& lungs,
                           int height, int width) {
    const int r0 = std::max(0, static_cast<int>(std::floor(t.center_row - t.radius_px)));
    const int r1 = std::min(height - 1, static_cast<int>(std::ceil(t.center_row + t.radius_px)));
    const int c0 = std::max(0, static_cast<int>(std::floor(t.center_col - t.radius_px)));
    const int c1 = std::min(width - 1, static_cast<int>(std::ceil(t.center_col + t.radius_px)));
    if (t.center_row - t.radius_px < 0 || t.center_row + t.radius_px > height - 1 ||
        t.center_col - t.radius_px < 0 || t.center_col + t.radius_px > width - 1)
        return false;
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) {
            const double dr = r - t.center_row, dc = c - t.center_col;
            if (dr * dr + dc * dc > t.radius_px * t.radius_px) continue;
            bool in_lung = false;
            for (const auto& lung : lungs)
                if (lung.contains(r, c)) {
                    in_lung = true;
                    break;
                }
            if (!in_lung) return false;
        }
    return true;
}

/// White noise filtered by a separable Gaussian whose 1-D taps have unit L2
/// norm, so the filtered field keeps unit variance away from the borders.
std::vector<double> correlated_field(int height, int width, double corr_px, Rng& rng) {
    std::vector<double> noise(static_cast<size_t>(height) * width);
    for (double& v : noise) v = rng.normal();

    const int hw = std::max(1, static_cast<int>(std::ceil(3.0 * corr_px)));
    std::vector<double> taps(2 * hw + 1);
    double l2 = 0.0;
    for (int i = -hw; i <= hw; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (corr_px * corr_px));
        taps[i + hw] = w;
        l2 += w * w;
    }
    const double inv = 1.0 / std::sqrt(l2);
    for (double& w : taps) w *= inv;

    std::vector<double> tmp(noise.size(), 0.0);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            for (int i = -hw; i <= hw; ++i) {
                const int cc = c + i;
                if (cc >= 0 && cc < width)
                    acc += taps[i + hw] * noise[static_cast<size_t>(r) * width + cc];
            }
            tmp[static_cast<size_t>(r) * width + c] = acc;
        }
    std::vector<double> out(noise.size(), 0.0);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            for (int i = -hw; i <= hw; ++i) {
                const int rr = r + i;
                if (rr >= 0 && rr < height)
                    acc += taps[i + hw] * tmp[static_cast<size_t>(rr) * width + c];
            }
            out[static_cast<size_t>(r) * width + c] = acc;
        }
    return out;
}

double jittered(Rng& rng, double center, double half_range) {
    return center + rng.uniform(-half_range, half_range);
}

PhantomSpec jitter_spec(const PhantomSpec& spec, uint64_t seed) {
    Rng rng(seed);
    PhantomSpec j = spec;
    j.body_hu = jittered(rng, spec.body_hu, spec.hu_jitter);
    j.lung_hu = jittered(rng, spec.lung_hu, spec.hu_jitter);
    for (auto& t : j.tumors) {
        t.center_row = jittered(rng, t.center_row, spec.center_jitter_px);
        t.center_col = jittered(rng, t.center_col, spec.center_jitter_px);
        t.radius_px = std::max(1.5, jittered(rng, t.radius_px, spec.radius_jitter_px));
        t.base_hu = jittered(rng, t.base_hu, spec.hu_jitter);
        t.texture_amplitude_hu *= 1.0 + rng.uniform(-spec.texture_amp_jitter_frac,
                                                    spec.texture_amp_jitter_frac);
        t.texture_corr_px *= 1.0 + rng.uniform(-spec.texture_corr_jitter_frac,
                                               spec.texture_corr_jitter_frac);
    }
    return j;
}

PhantomSpec test_shifted(const PhantomSpec& spec) {
    PhantomSpec s = spec;
    s.noise_hu *= spec.test_noise_scale;
    for (auto& t : s.tumors) t.texture_amplitude_hu *= spec.test_texture_scale;
    return s;
}

PairedSlice make_slice(const PhantomSpec& spec, const KernelProfile& kernelA,
                       const KernelProfile& kernelB, const std::string& id,
                       const std::string& split, uint64_t seed) {
    const PhantomSpec jspec = jitter_spec(spec, derive_seed(seed, "jitter/" + id));
    PairedSlice p;
    p.id = id;
    p.split = split;
    const ImageSlice truth = generate_ground_truth(jspec, derive_seed(seed, "truth/" + id));
    p.a = apply_kernel(truth, kernelA, derive_seed(seed, "kernelA/" + id));
    p.b = apply_kernel(truth, kernelB, derive_seed(seed, "kernelB/" + id));
    p.rois = tumor_rois(jspec);
    return p;
}

std::string slice_id(const std::string& split, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d", split.c_str(), index);
    return buf;
}

}  // namespace

void KernelProfile::validate() const {
    if (mtf.size() < 2) throw ValidationError("kernel mtf needs at least 2 samples");
    if (mtf.front() != 1.0) throw ValidationError("kernel mtf(0) must equal 1");
    if (noise_gain < 0.0) throw ValidationError("kernel noise_gain must be non-negative");
    for (size_t i = 0; i < mtf.size(); ++i) {
        if (!(mtf[i] >= 0.0))
            throw ValidationError("kernel mtf sample " + std::to_string(i) +
                                  " is negative");
        if (i > 0 && mtf[i] > mtf[i - 1] + 1e-12)
            throw ValidationError("kernel mtf must be monotone non-increasing (sample " +
                                  std::to_string(i) + ")");
    }
}

double KernelProfile::mtf_at(double freq_cyc_per_px) const {
    const double f = std::clamp(freq_cyc_per_px, 0.0, 0.5);
    const double pos = f / 0.5 * (mtf.size() - 1);
    const size_t i = std::min(static_cast<size_t>(pos), mtf.size() - 2);
    const double frac = pos - static_cast<double>(i);
    return mtf[i] * (1.0 - frac) + mtf[i + 1] * frac;
}

bool KernelProfile::is_identity() const {
    if (noise_gain != 0.0) return false;
    return std::all_of(mtf.begin(), mtf.end(), [](double v) { return v == 1.0; });
}

KernelProfile KernelProfile::identity() {
    KernelProfile k;
    k.name = "identity";
    k.mtf.assign(2, 1.0);
    k.noise_gain = 0.0;
    return k;
}

KernelProfile KernelProfile::smooth_default() {
    return exp_profile("smooth", 0.045, 2.0, 12.0);
}

KernelProfile KernelProfile::sharp_default() {
    return exp_profile("sharp", 0.30, 4.0, 12.0);
}

KernelProfile KernelProfile::exponential(std::string name, double cutoff, double power,
                                         double noise_gain) {
    return exp_profile(std::move(name), cutoff, power, noise_gain);
}

void PhantomSpec::validate() const {
    if (height <= 0 || width <= 0) throw ValidationError("phantom dims must be positive");
    if (!(spacing_mm_row > 0.0) || !(spacing_mm_col > 0.0))
        throw ValidationError("phantom spacing must be positive");
    if (noise_hu < 0.0) throw ValidationError("noise_hu must be non-negative");
    for (double hu : {air_hu, body_hu, lung_hu})
        if (hu < kHuMin || hu > kHuMax)
            throw ValidationError("tissue HU level outside [-1024, 3071]");
    auto check_ellipse = [](const EllipseSpec& e, const char* what) {
        if (!(e.semi_row > 0.0) || !(e.semi_col > 0.0))
            throw ValidationError(std::string(what) + " ellipse axes must be positive");
    };
    check_ellipse(body, "body");
    for (const auto& lung : lungs) check_ellipse(lung, "lung");
    for (size_t i = 0; i < tumors.size(); ++i) {
        const TumorSpec& t = tumors[i];
        if (!(t.radius_px > 0.0))
            throw ValidationError("tumor " + std::to_string(i) +
                                  " radius must be positive");
        if (!(t.texture_corr_px > 0.0))
            throw ValidationError("tumor " + std::to_string(i) +
                                  " texture correlation length must be positive");
        if (t.texture_amplitude_hu < 0.0)
            throw ValidationError("tumor " + std::to_string(i) +
                                  " texture amplitude must be non-negative");
        if (!disk_inside_some_lung(t, lungs, height, width))
            throw ValidationError("tumor " + std::to_string(i) +
                                  " extends outside the lung regions");
    }
}

ImageSlice generate_ground_truth(const PhantomSpec& spec, uint64_t seed) {
    spec.validate();
    ImageSlice img = ImageSlice::filled(spec.height, spec.width, spec.air_hu,
                                        spec.spacing_mm_row, spec.spacing_mm_col);
    for (int r = 0; r < spec.height; ++r)
        for (int c = 0; c < spec.width; ++c) {
            if (!spec.body.contains(r, c)) continue;
            double v = spec.body_hu;
            for (const auto& lung : spec.lungs)
                if (lung.contains(r, c)) {
                    v = spec.lung_hu;
                    break;
                }
            img.at(r, c) = v;
        }

    if (spec.noise_hu > 0.0) {
        Rng rng(derive_seed(seed, "body-noise"));
        for (int r = 0; r < spec.height; ++r)
            for (int c = 0; c < spec.width; ++c) {
                const double n = rng.normal();
                if (spec.body.contains(r, c)) img.at(r, c) += spec.noise_hu * n;
            }
    }

    for (size_t k = 0; k < spec.tumors.size(); ++k) {
        const TumorSpec& t = spec.tumors[k];
        Rng rng(derive_seed(seed, "texture", k));
        const auto field = correlated_field(spec.height, spec.width, t.texture_corr_px, rng);
        for (int r = 0; r < spec.height; ++r)
            for (int c = 0; c < spec.width; ++c) {
                const double dr = r - t.center_row, dc = c - t.center_col;
                if (dr * dr + dc * dc > t.radius_px * t.radius_px) continue;
                img.at(r, c) = t.base_hu + t.texture_amplitude_hu *
                                               field[static_cast<size_t>(r) * spec.width + c];
            }
    }

    for (double& v : img.pixels) v = std::clamp(v, kHuMin, kHuMax);
    return img;
}

std::vector<TumorROI> tumor_rois(const PhantomSpec& spec) {
    std::vector<TumorROI> rois;
    rois.reserve(spec.tumors.size());
    for (const TumorSpec& t : spec.tumors) {
        TumorROI roi;
        roi.center_row = t.center_row;
        roi.center_col = t.center_col;
        roi.radius_px = t.radius_px;
        roi.height = spec.height;
        roi.width = spec.width;
        roi.mask.assign(static_cast<size_t>(spec.height) * spec.width, 0);
        for (int r = 0; r < spec.height; ++r)
            for (int c = 0; c < spec.width; ++c) {
                const double dr = r - t.center_row, dc = c - t.center_col;
                if (dr * dr + dc * dc <= t.radius_px * t.radius_px)
                    roi.mask[static_cast<size_t>(r) * spec.width + c] = 1;
            }
        roi.validate();
        rois.push_back(std::move(roi));
    }
    return rois;
}

ImageSlice apply_kernel(const ImageSlice& truth, const KernelProfile& kernel,
                        uint64_t seed) {
    truth.validate();
    kernel.validate();
    if (kernel.is_identity()) return truth;

    std::vector<double> x = truth.pixels;
    if (kernel.noise_gain > 0.0) {
        Rng rng(derive_seed(seed, "kernel-noise"));
        for (double& v : x) v += kernel.noise_gain * rng.normal();
    }

    const int h = truth.height, w = truth.width;
    auto spec = fft2_r2c(x, h, w);
    const int wc = w / 2 + 1;
    for (int i = 0; i < h; ++i) {
        const double fr = static_cast<double>(std::min(i, h - i)) / h;
        for (int j = 0; j < wc; ++j) {
            const double fc = static_cast<double>(j) / w;
            const double f = std::sqrt(fr * fr + fc * fc);
            spec[static_cast<size_t>(i) * wc + j] *= kernel.mtf_at(f);
        }
    }
    ImageSlice out;
    out.height = h;
    out.width = w;
    out.spacing_mm_row = truth.spacing_mm_row;
    out.spacing_mm_col = truth.spacing_mm_col;
    out.pixels = fft2_c2r(spec, h, w);
    for (double& v : out.pixels) v = std::clamp(v, kHuMin, kHuMax);
    return out;
}

std::vector<const PairedSlice*> PairedDataset::split(const std::string& tag) const {
    std::vector<const PairedSlice*> out;
    for (const auto& s : slices)
        if (s.split == tag) out.push_back(&s);
    return out;
}

void PairedDataset::validate() const {
    std::set<std::string> ids;
    for (const auto& s : slices) {
        if (!ids.insert(s.id).second)
            throw ValidationError("duplicate slice id: " + s.id);
        if (s.split != "train" && s.split != "test")
            throw ValidationError("unknown split tag: " + s.split);
        if (s.a.height != s.b.height || s.a.width != s.b.width)
            throw ShapeError("pair " + s.id + ": A and B dimensions differ");
        for (const auto& roi : s.rois) {
            if (roi.height != s.a.height || roi.width != s.a.width)
                throw ShapeError("pair " + s.id + ": ROI grid mismatch");
            roi.validate();
        }
    }
}

PairedDataset make_paired_dataset(const PhantomSpec& spec, const KernelProfile& kernelA,
                                  const KernelProfile& kernelB, int n_slices,
                                  uint64_t seed) {
    if (n_slices < 1) throw ValidationError("n_slices must be >= 1");
    spec.validate();
    kernelA.validate();
    kernelB.validate();
    PairedDataset ds;
    ds.slices.resize(n_slices);
    parallel_for(n_slices, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
            ds.slices[i] = make_slice(spec, kernelA, kernelB,
                                      slice_id("train", static_cast<int>(i)), "train", seed);
    });
    return ds;
}

PairedDataset make_paired_dataset(const PhantomSpec& spec, const KernelProfile& kernelA,
                                  const KernelProfile& kernelB, int n_train, int n_test,
                                  uint64_t seed) {
    if (n_train < 1 || n_test < 1)
        throw ValidationError("n_train and n_test must be >= 1");
    spec.validate();
    kernelA.validate();
    kernelB.validate();
    const PhantomSpec tspec = test_shifted(spec);
    PairedDataset ds;
    ds.slices.resize(static_cast<size_t>(n_train) + n_test);
    parallel_for(n_train + n_test, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            if (i < n_train)
                ds.slices[i] = make_slice(spec, kernelA, kernelB,
                                          slice_id("train", static_cast<int>(i)), "train",
                                          seed);
            else
                ds.slices[i] =
                    make_slice(tspec, kernelA, kernelB,
                               slice_id("test", static_cast<int>(i - n_train)), "test", seed);
        }
    });
    return ds;
}

void save_dataset(const std::filesystem::path& dir, const PairedDataset& ds) {
    ds.validate();
    std::filesystem::create_directories(dir / "pairs");
    json manifest;
    manifest["spacing_mm"] = {ds.slices.empty() ? 1.0 : ds.slices[0].a.spacing_mm_row,
                              ds.slices.empty() ? 1.0 : ds.slices[0].a.spacing_mm_col};
    manifest["slices"] = json::array();
    for (const auto& s : ds.slices) {
        const auto pdir = dir / "pairs" / s.id;
        std::filesystem::create_directories(pdir);
        write_cts(pdir / "A.cts", s.a);
        write_cts(pdir / "B.cts", s.b);
        write_msk(pdir / "roi.msk", rois_to_labels(s.a.height, s.a.width, s.rois));
        manifest["slices"].push_back({{"id", s.id}, {"split", s.split}});
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw ValidationError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
}

PairedDataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in)
        throw ValidationError("missing dataset manifest: " +
                              (dir / "manifest.json").string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw ValidationError("malformed dataset manifest: " + std::string(e.what()));
    }
    PairedDataset ds;
    double sp_r = 1.0, sp_c = 1.0;
    if (manifest.contains("spacing_mm")) {
        sp_r = manifest["spacing_mm"].at(0).get<double>();
        sp_c = manifest["spacing_mm"].at(1).get<double>();
    }
    for (const auto& entry : manifest.at("slices")) {
        PairedSlice s;
        s.id = entry.at("id").get<std::string>();
        s.split = entry.at("split").get<std::string>();
        const auto pdir = dir / "pairs" / s.id;
        s.a = read_cts(pdir / "A.cts");
        s.b = read_cts(pdir / "B.cts");
        s.a.spacing_mm_row = s.b.spacing_mm_row = sp_r;
        s.a.spacing_mm_col = s.b.spacing_mm_col = sp_c;
        const LabelMask labels = read_msk(pdir / "roi.msk");
        if (labels.height != s.a.height || labels.width != s.a.width)
            throw ValidationError("pair " + s.id + ": roi.msk grid mismatch");
        s.rois = rois_from_labels(labels);
        ds.slices.push_back(std::move(s));
    }
    ds.validate();
    return ds;
}

}  // namespace ctstd
