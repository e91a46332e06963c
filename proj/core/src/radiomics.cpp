#include "ctstd/radiomics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include "ctstd/errors.hpp"

namespace ctstd {

namespace {

double log2_safe(double p) { return std::log(p) / std::numbers::ln2; }

std::vector<double> mask_values(const ImageSlice& image, const TumorROI& roi) {
    std::vector<double> vals;
    vals.reserve(roi.mask_count());
    for (int r = 0; r < roi.height; ++r)
        for (int c = 0; c < roi.width; ++c)
            if (roi.in(r, c)) vals.push_back(image.at(r, c));
    return vals;
}

void check_congruent(const ImageSlice& image, const TumorROI& roi) {
    if (roi.height != image.height || roi.width != image.width)
        throw ShapeError("roi grid does not match image grid");
    roi.validate();
}

std::string offset_str(const std::pair<int, int>& o) {
    return "(" + std::to_string(o.first) + "," + std::to_string(o.second) + ")";
}

}  // namespace

void QuantizationSpec::validate() const {
    if (n_levels < 2) throw ValidationError("quantization: n_levels must be >= 2");
    if (!(hu_low < hu_high))
        throw ValidationError("quantization: hu window must satisfy low < high");
}

int QuantizationSpec::level(double hu) const {
    const double frac = (hu - hu_low) / (hu_high - hu_low);
    const int lv = 1 + static_cast<int>(std::floor(frac * n_levels));
    return std::clamp(lv, 1, n_levels);
}

int QuantizedROI::mask_count() const {
    int n = 0;
    for (int lv : levels) n += (lv != 0);
    return n;
}

QuantizedROI quantize(const ImageSlice& image, const TumorROI& roi,
                      const QuantizationSpec& q) {
    q.validate();
    check_congruent(image, roi);
    QuantizedROI out;
    out.height = image.height;
    out.width = image.width;
    out.n_levels = q.n_levels;
    out.levels.assign(image.size(), 0);
    for (int r = 0; r < image.height; ++r)
        for (int c = 0; c < image.width; ++c)
            if (roi.in(r, c))
                out.levels[static_cast<size_t>(r) * image.width + c] =
                    q.level(image.at(r, c));
    return out;
}

std::string to_string(FeatureClass cls) {
    switch (cls) {
        case FeatureClass::GOH: return "GOH";
        case FeatureClass::GLCM: return "GLCM";
        case FeatureClass::GLRLM: return "GLRLM";
        case FeatureClass::ID: return "ID";
        case FeatureClass::IH: return "IH";
        case FeatureClass::NID: return "NID";
    }
    return "?";
}

void RadiomicsConfig::validate() const {
    quant.validate();
    if (glcm_offsets.empty()) throw ValidationError("radiomics: glcm_offsets empty");
    if (glrlm_directions.empty())
        throw ValidationError("radiomics: glrlm_directions empty");
    for (const auto& [dr, dc] : glcm_offsets)
        if (dr == 0 && dc == 0) throw ValidationError("radiomics: zero glcm offset");
    for (const auto& [dr, dc] : glrlm_directions)
        if (dr == 0 && dc == 0) throw ValidationError("radiomics: zero glrlm direction");
    if (ih_bins < 2) throw ValidationError("radiomics: ih_bins must be >= 2");
    if (goh_bins < 2) throw ValidationError("radiomics: goh_bins must be >= 2");
    if (nid_radius < 1) throw ValidationError("radiomics: nid_radius must be >= 1");
}

std::vector<double> FeatureVector::values() const {
    std::vector<double> v;
    v.reserve(features.size());
    for (const auto& f : features) v.push_back(f.value);
    return v;
}

std::vector<std::string> FeatureVector::names() const {
    std::vector<std::string> n;
    n.reserve(features.size());
    for (const auto& f : features) n.push_back(f.name);
    return n;
}

std::vector<double> glcm_matrix(const QuantizedROI& q,
                                const std::vector<std::pair<int, int>>& offsets) {
    const int n = q.n_levels;
    std::vector<double> avg(static_cast<size_t>(n) * n, 0.0);
    std::vector<double> counts(static_cast<size_t>(n) * n);
    for (const auto& off : offsets) {
        std::fill(counts.begin(), counts.end(), 0.0);
        double total = 0.0;
        for (int r = 0; r < q.height; ++r)
            for (int c = 0; c < q.width; ++c) {
                if (!q.in(r, c)) continue;
                const int r2 = r + off.first, c2 = c + off.second;
                if (!q.in(r2, c2)) continue;
                const int a = q.at(r, c) - 1, b = q.at(r2, c2) - 1;
                counts[static_cast<size_t>(a) * n + b] += 1.0;
                counts[static_cast<size_t>(b) * n + a] += 1.0;
                total += 2.0;
            }
        if (total == 0.0)
            throw ValidationError("glcm: no valid pixel pairs for offset " +
                                  offset_str(off));
        for (size_t i = 0; i < counts.size(); ++i) avg[i] += counts[i] / total;
    }
    const double inv = 1.0 / static_cast<double>(offsets.size());
    for (double& v : avg) v *= inv;
    return avg;
}

std::vector<Feature> glcm_features(const QuantizedROI& q,
                                   const std::vector<std::pair<int, int>>& offsets) {
    const auto P = glcm_matrix(q, offsets);
    const int n = q.n_levels;
    double energy = 0.0, contrast = 0.0, homogeneity = 0.0, entropy = 0.0,
           dissimilarity = 0.0;
    double mu_i = 0.0, mu_j = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double p = P[static_cast<size_t>(i) * n + j];
            if (p == 0.0) continue;
            const double d = i - j;
            energy += p * p;
            contrast += d * d * p;
            homogeneity += p / (1.0 + d * d);
            entropy -= p * log2_safe(p);
            dissimilarity += std::abs(d) * p;
            mu_i += i * p;
            mu_j += j * p;
        }
    double var_i = 0.0, var_j = 0.0, cov = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double p = P[static_cast<size_t>(i) * n + j];
            if (p == 0.0) continue;
            var_i += (i - mu_i) * (i - mu_i) * p;
            var_j += (j - mu_j) * (j - mu_j) * p;
            cov += (i - mu_i) * (j - mu_j) * p;
        }
    const double denom = std::sqrt(var_i) * std::sqrt(var_j);
    const double correlation = (denom > 0.0) ? cov / denom : 1.0;
    return {
        {"glcm_energy", FeatureClass::GLCM, energy},
        {"glcm_contrast", FeatureClass::GLCM, contrast},
        {"glcm_correlation", FeatureClass::GLCM, correlation},
        {"glcm_homogeneity", FeatureClass::GLCM, homogeneity},
        {"glcm_entropy", FeatureClass::GLCM, entropy},
        {"glcm_dissimilarity", FeatureClass::GLCM, dissimilarity},
    };
}

std::vector<double> glrlm_matrix(const QuantizedROI& q,
                                 const std::vector<std::pair<int, int>>& directions,
                                 int* max_run_out) {
    const int n = q.n_levels;
    const int max_run = std::max(q.height, q.width);
    if (max_run_out) *max_run_out = max_run;
    std::vector<double> avg(static_cast<size_t>(n) * max_run, 0.0);
    std::vector<double> counts(avg.size());
    if (q.mask_count() == 0) throw ValidationError("glrlm: empty mask");
    for (const auto& dir : directions) {
        std::fill(counts.begin(), counts.end(), 0.0);
        const int dr = dir.first, dc = dir.second;
        for (int r = 0; r < q.height; ++r)
            for (int c = 0; c < q.width; ++c) {
                const int pr = r - dr, pc = c - dc;
                const bool line_start =
                    pr < 0 || pr >= q.height || pc < 0 || pc >= q.width;
                if (!line_start) continue;
                int cur_level = 0, cur_len = 0;
                int rr = r, cc = c;
                while (rr >= 0 && rr < q.height && cc >= 0 && cc < q.width) {
                    const int lv = q.at(rr, cc);
                    if (lv == cur_level && lv != 0) {
                        ++cur_len;
                    } else {
                        if (cur_level != 0)
                            counts[static_cast<size_t>(cur_level - 1) * max_run +
                                   (cur_len - 1)] += 1.0;
                        cur_level = lv;
                        cur_len = (lv != 0) ? 1 : 0;
                    }
                    rr += dr;
                    cc += dc;
                }
                if (cur_level != 0)
                    counts[static_cast<size_t>(cur_level - 1) * max_run + (cur_len - 1)] +=
                        1.0;
            }
        for (size_t i = 0; i < counts.size(); ++i) avg[i] += counts[i];
    }
    const double inv = 1.0 / static_cast<double>(directions.size());
    for (double& v : avg) v *= inv;
    return avg;
}

std::vector<Feature> glrlm_features(const QuantizedROI& q,
                                    const std::vector<std::pair<int, int>>& directions) {
    int max_run = 0;
    const auto R = glrlm_matrix(q, directions, &max_run);
    const int n = q.n_levels;
    const double np = q.mask_count();
    double nr = 0.0, sre = 0.0, lre = 0.0, gln = 0.0, rln = 0.0;
    for (int g = 0; g < n; ++g) {
        double row = 0.0;
        for (int l = 0; l < max_run; ++l) {
            const double v = R[static_cast<size_t>(g) * max_run + l];
            if (v == 0.0) continue;
            const double len = l + 1;
            nr += v;
            sre += v / (len * len);
            lre += v * len * len;
            row += v;
        }
        gln += row * row;
    }
    for (int l = 0; l < max_run; ++l) {
        double col = 0.0;
        for (int g = 0; g < n; ++g) col += R[static_cast<size_t>(g) * max_run + l];
        rln += col * col;
    }
    if (nr == 0.0) throw ValidationError("glrlm: no runs found");
    return {
        {"glrlm_sre", FeatureClass::GLRLM, sre / nr},
        {"glrlm_lre", FeatureClass::GLRLM, lre / nr},
        {"glrlm_gln", FeatureClass::GLRLM, gln / nr},
        {"glrlm_rln", FeatureClass::GLRLM, rln / nr},
        {"glrlm_rp", FeatureClass::GLRLM, nr / np},
    };
}

std::vector<Feature> intensity_direct_features(const ImageSlice& image,
                                               const TumorROI& roi) {
    check_congruent(image, roi);
    std::vector<double> vals = mask_values(image, roi);
    const double n = static_cast<double>(vals.size());
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    double vmin = vals[0], vmax = vals[0], energy = 0.0;
    for (double v : vals) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
        energy += v * v;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const double sd = std::sqrt(m2);
    const double skewness = (m2 > 0.0) ? m3 / (sd * sd * sd) : 0.0;
    const double kurtosis = (m2 > 0.0) ? m4 / (m2 * m2) : 0.0;
    std::sort(vals.begin(), vals.end());
    const size_t half = vals.size() / 2;
    const double median = (vals.size() % 2 == 1)
                              ? vals[half]
                              : 0.5 * (vals[half - 1] + vals[half]);
    return {
        {"id_mean", FeatureClass::ID, mean},
        {"id_median", FeatureClass::ID, median},
        {"id_std", FeatureClass::ID, sd},
        {"id_min", FeatureClass::ID, vmin},
        {"id_max", FeatureClass::ID, vmax},
        {"id_range", FeatureClass::ID, vmax - vmin},
        {"id_skewness", FeatureClass::ID, skewness},
        {"id_kurtosis", FeatureClass::ID, kurtosis},
        {"id_energy", FeatureClass::ID, energy},
    };
}

std::vector<Feature> intensity_histogram_features(const ImageSlice& image,
                                                  const TumorROI& roi, int n_bins,
                                                  const QuantizationSpec& q) {
    if (n_bins < 2) throw ValidationError("ih: n_bins must be >= 2");
    check_congruent(image, roi);
    std::vector<double> vals = mask_values(image, roi);
    QuantizationSpec bins = q;
    bins.n_levels = n_bins;
    std::vector<double> hist(n_bins, 0.0);
    for (double v : vals) hist[bins.level(v) - 1] += 1.0;
    const double n = static_cast<double>(vals.size());
    double entropy = 0.0, uniformity = 0.0;
    for (double h : hist) {
        if (h == 0.0) continue;
        const double f = h / n;
        entropy -= f * log2_safe(f);
        uniformity += f * f;
    }
    std::sort(vals.begin(), vals.end());
    auto nearest_rank = [&](double pct) {
        const size_t idx =
            static_cast<size_t>(std::ceil(pct / 100.0 * vals.size()));
        return vals[std::max<size_t>(idx, 1) - 1];
    };
    return {
        {"ih_entropy", FeatureClass::IH, entropy},
        {"ih_uniformity", FeatureClass::IH, uniformity},
        {"ih_p10", FeatureClass::IH, nearest_rank(10.0)},
        {"ih_p50", FeatureClass::IH, nearest_rank(50.0)},
        {"ih_p90", FeatureClass::IH, nearest_rank(90.0)},
    };
}

std::vector<Feature> goh_features(const ImageSlice& image, const TumorROI& roi,
                                  int n_orient_bins) {
    if (n_orient_bins < 2) throw ValidationError("goh: need >= 2 orientation bins");
    check_congruent(image, roi);
    std::vector<double> weight(n_orient_bins, 0.0);
    double total = 0.0;
    int interior = 0;
    for (int r = 0; r < roi.height; ++r)
        for (int c = 0; c < roi.width; ++c) {
            if (!roi.in(r, c) || !roi.in(r - 1, c) || !roi.in(r + 1, c) ||
                !roi.in(r, c - 1) || !roi.in(r, c + 1))
                continue;
            ++interior;
            const double gx = (image.at(r, c + 1) - image.at(r, c - 1)) / 2.0;
            const double gy = (image.at(r + 1, c) - image.at(r - 1, c)) / 2.0;
            const double mag = std::sqrt(gx * gx + gy * gy);
            if (mag == 0.0) continue;
            double theta = std::atan2(gy, gx);
            if (theta < 0.0) theta += 2.0 * std::numbers::pi;
            int bin = static_cast<int>(theta / (2.0 * std::numbers::pi) * n_orient_bins);
            bin = std::min(bin, n_orient_bins - 1);
            weight[bin] += mag;
            total += mag;
        }
    if (interior == 0)
        throw ValidationError("goh: mask has no interior pixels for central differences");
    std::vector<Feature> out;
    double entropy = 0.0;
    for (int b = 0; b < n_orient_bins; ++b) {
        const double f = (total > 0.0) ? weight[b] / total : 0.0;
        if (f > 0.0) entropy -= f * log2_safe(f);
        out.push_back({"goh_fraction_" + std::to_string(b), FeatureClass::GOH, f});
    }
    out.push_back({"goh_entropy", FeatureClass::GOH, entropy});
    return out;
}

std::vector<Feature> nid_features(const QuantizedROI& q, int neighborhood_radius) {
    if (neighborhood_radius < 1)
        throw ValidationError("nid: neighborhood radius must be >= 1");
    const int n = q.n_levels;
    std::vector<double> s(n, 0.0), cnt(n, 0.0);
    double valid = 0.0;
    for (int r = 0; r < q.height; ++r)
        for (int c = 0; c < q.width; ++c) {
            if (!q.in(r, c)) continue;
            double sum = 0.0;
            int nb = 0;
            for (int dr = -neighborhood_radius; dr <= neighborhood_radius; ++dr)
                for (int dc = -neighborhood_radius; dc <= neighborhood_radius; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    if (!q.in(r + dr, c + dc)) continue;
                    sum += q.at(r + dr, c + dc);
                    ++nb;
                }
            if (nb == 0) continue;
            const int lv = q.at(r, c);
            s[lv - 1] += std::abs(lv - sum / nb);
            cnt[lv - 1] += 1.0;
            valid += 1.0;
        }
    if (valid == 0.0)
        throw ValidationError("nid: no pixel has an in-mask neighbour");

    std::vector<int> present;
    for (int i = 0; i < n; ++i)
        if (cnt[i] > 0.0) present.push_back(i);
    const double ngp = static_cast<double>(present.size());

    std::vector<double> p(n, 0.0);
    for (int i = 0; i < n; ++i) p[i] = cnt[i] / valid;
    double sum_ps = 0.0, sum_s = 0.0;
    for (int i = 0; i < n; ++i) {
        sum_ps += p[i] * s[i];
        sum_s += s[i];
    }

    const double coarseness = (sum_ps > 0.0) ? 1.0 / sum_ps : 0.0;

    double contrast = 0.0;
    if (ngp >= 2.0) {
        double pair_term = 0.0;
        for (int i : present)
            for (int j : present)
                pair_term += p[i] * p[j] * (i - j) * (i - j);
        contrast = pair_term / (ngp * (ngp - 1.0)) * (sum_s / valid);
    }

    double busy_den = 0.0;
    for (int i : present)
        for (int j : present)
            busy_den += std::abs((i + 1) * p[i] - (j + 1) * p[j]);
    const double busyness = (busy_den > 0.0) ? sum_ps / busy_den : 0.0;

    double complexity = 0.0;
    for (int i : present)
        for (int j : present) {
            if (p[i] + p[j] == 0.0) continue;
            complexity +=
                std::abs(i - j) * (p[i] * s[i] + p[j] * s[j]) / (p[i] + p[j]);
        }
    complexity /= valid;

    double strength_num = 0.0;
    for (int i : present)
        for (int j : present) strength_num += (p[i] + p[j]) * (i - j) * (i - j);
    const double strength = (sum_s > 0.0) ? strength_num / sum_s : 0.0;

    return {
        {"nid_coarseness", FeatureClass::NID, coarseness},
        {"nid_contrast", FeatureClass::NID, contrast},
        {"nid_busyness", FeatureClass::NID, busyness},
        {"nid_complexity", FeatureClass::NID, complexity},
        {"nid_strength", FeatureClass::NID, strength},
    };
}

FeatureVector extract_all(const ImageSlice& image, const TumorROI& roi,
                          const RadiomicsConfig& config) {
    config.validate();
    check_congruent(image, roi);
    const QuantizedROI q = quantize(image, roi, config.quant);

    FeatureVector out;
    out.config = config;
    auto run = [&](FeatureClass cls, auto&& fn) {
        try {
            auto fs = fn();
            out.features.insert(out.features.end(), fs.begin(), fs.end());
        } catch (const ValidationError& e) {
            throw ValidationError(to_string(cls) + ": " + e.what());
        } catch (const NumericError& e) {
            throw NumericError(to_string(cls) + ": " + e.what());
        }
    };
    run(FeatureClass::GOH, [&] { return goh_features(image, roi, config.goh_bins); });
    run(FeatureClass::GLCM, [&] { return glcm_features(q, config.glcm_offsets); });
    run(FeatureClass::GLRLM,
        [&] { return glrlm_features(q, config.glrlm_directions); });
    run(FeatureClass::ID, [&] { return intensity_direct_features(image, roi); });
    run(FeatureClass::IH, [&] {
        return intensity_histogram_features(image, roi, config.ih_bins, config.quant);
    });
    run(FeatureClass::NID, [&] { return nid_features(q, config.nid_radius); });

    for (const auto& f : out.features)
        if (!std::isfinite(f.value))
            throw NumericError("feature " + f.name + " is non-finite");
    return out;
}

std::vector<std::pair<std::string, FeatureClass>> feature_order(
    const RadiomicsConfig& config) {
    std::vector<std::pair<std::string, FeatureClass>> order;
    for (int b = 0; b < config.goh_bins; ++b)
        order.emplace_back("goh_fraction_" + std::to_string(b), FeatureClass::GOH);
    order.emplace_back("goh_entropy", FeatureClass::GOH);
    for (const char* n : {"glcm_energy", "glcm_contrast", "glcm_correlation",
                          "glcm_homogeneity", "glcm_entropy", "glcm_dissimilarity"})
        order.emplace_back(n, FeatureClass::GLCM);
    for (const char* n :
         {"glrlm_sre", "glrlm_lre", "glrlm_gln", "glrlm_rln", "glrlm_rp"})
        order.emplace_back(n, FeatureClass::GLRLM);
    for (const char* n : {"id_mean", "id_median", "id_std", "id_min", "id_max",
                          "id_range", "id_skewness", "id_kurtosis", "id_energy"})
        order.emplace_back(n, FeatureClass::ID);
    for (const char* n : {"ih_entropy", "ih_uniformity", "ih_p10", "ih_p50", "ih_p90"})
        order.emplace_back(n, FeatureClass::IH);
    for (const char* n : {"nid_coarseness", "nid_contrast", "nid_busyness",
                          "nid_complexity", "nid_strength"})
        order.emplace_back(n, FeatureClass::NID);
    return order;
}

namespace {

std::string config_echo(const RadiomicsConfig& c) {
    std::string s = "# quant_levels=" + std::to_string(c.quant.n_levels) +
                    " hu_window=[" + std::to_string(c.quant.hu_low) + "," +
                    std::to_string(c.quant.hu_high) + "] glcm_offsets=";
    for (size_t i = 0; i < c.glcm_offsets.size(); ++i)
        s += (i ? ";" : "") + offset_str(c.glcm_offsets[i]);
    s += " glrlm_directions=";
    for (size_t i = 0; i < c.glrlm_directions.size(); ++i)
        s += (i ? ";" : "") + offset_str(c.glrlm_directions[i]);
    s += " ih_bins=" + std::to_string(c.ih_bins) +
         " goh_bins=" + std::to_string(c.goh_bins) +
         " nid_radius=" + std::to_string(c.nid_radius);
    return s;
}

}  // namespace

void write_features_csv(
    const std::filesystem::path& path,
    const std::vector<std::tuple<std::string, std::string, FeatureVector>>& rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    if (!rows.empty()) out << config_echo(std::get<2>(rows[0]).config) << "\n";
    out << "slice_id,roi_id,feature_name,feature_class,value\n";
    char buf[64];
    for (const auto& [slice_id, roi_id, fv] : rows)
        for (const auto& f : fv.features) {
            std::snprintf(buf, sizeof(buf), "%.17g", f.value);
            out << slice_id << "," << roi_id << "," << f.name << ","
                << to_string(f.cls) << "," << buf << "\n";
        }
}

void write_feature_order(const std::filesystem::path& path,
                         const RadiomicsConfig& config) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    for (const auto& [name, cls] : feature_order(config))
        out << name << "," << to_string(cls) << "\n";
}

}  // namespace ctstd
