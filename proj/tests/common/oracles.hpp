#pragma once

// Brute-force reference implementations used by both the unit tests and the
// acceptance gate. Everything here favors directness over speed and shares no
// code with the library.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "ctstd/image.hpp"
#include "ctstd/radiomics.hpp"
#include "ctstd/rng.hpp"

namespace oracles {

struct RE {
    double re = 0.0;
    bool defined = true;
};

inline RE relative_error(double f_s, double f_t) {
    if (f_t != 0.0) return {std::abs(f_t - f_s) / std::abs(f_t), true};
    if (f_s == 0.0) return {0.0, true};
    return {0.0, false};
}

struct CCC {
    double ccc = 0.0;
    double rho = 0.0;
    bool defined = true;
};

// Direct transcription of the definition in extended precision. Centered
// moments keep the oracle conditioning-free (a sum-of-products arrangement
// cancels catastrophically for near-equal samples), so any disagreement
// beyond 1e-12 is the library's.
inline CCC ccc(const std::vector<double>& xs, const std::vector<double>& ys) {
    const long double n = static_cast<long double>(xs.size());
    long double sx = 0, sy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
    }
    const long double mx = sx / n, my = sy / n;
    long double vx = 0, vy = 0, cov = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        vx += (xs[i] - mx) * (xs[i] - mx);
        vy += (ys[i] - my) * (ys[i] - my);
        cov += (xs[i] - mx) * (ys[i] - my);
    }
    vx /= n;
    vy /= n;
    cov /= n;
    CCC r;
    r.defined = vx > 0.0L || vy > 0.0L;
    r.rho = (vx > 0.0L && vy > 0.0L)
                ? static_cast<double>(cov / std::sqrt(vx * vy))
                : 0.0;
    const long double den = vx + vy + (mx - my) * (mx - my);
    r.ccc = den > 0.0L
                ? static_cast<double>(std::clamp(2.0L * cov / den, -1.0L, 1.0L))
                : 0.0;
    return r;
}

// ---- radiomics ----

inline int quant_level(double hu, double lo, double hi, int n) {
    const int lv = 1 + static_cast<int>(std::floor((hu - lo) / (hi - lo) * n));
    return std::clamp(lv, 1, n);
}

// Symmetric co-occurrence: every ordered pixel pair at +off or -off counts
// once, per-offset normalized, then averaged.
inline std::vector<double> glcm_matrix(const ctstd::QuantizedROI& q,
                                       const std::vector<std::pair<int, int>>& offsets) {
    const int n = q.n_levels;
    std::vector<double> avg(static_cast<size_t>(n) * n, 0.0);
    for (const auto& [dr, dc] : offsets) {
        std::vector<double> m(avg.size(), 0.0);
        double total = 0.0;
        for (int r = 0; r < q.height; ++r)
            for (int c = 0; c < q.width; ++c) {
                if (!q.in(r, c)) continue;
                for (int sgn : {+1, -1}) {
                    const int r2 = r + sgn * dr, c2 = c + sgn * dc;
                    if (!q.in(r2, c2)) continue;
                    m[static_cast<size_t>(q.at(r, c) - 1) * n + (q.at(r2, c2) - 1)] += 1.0;
                    total += 1.0;
                }
            }
        for (size_t i = 0; i < m.size(); ++i) avg[i] += m[i] / total;
    }
    for (double& v : avg) v /= static_cast<double>(offsets.size());
    return avg;
}

inline std::map<std::string, double> glcm_features(const std::vector<double>& P, int n) {
    std::map<std::string, double> f{{"glcm_energy", 0},       {"glcm_contrast", 0},
                                    {"glcm_homogeneity", 0},  {"glcm_entropy", 0},
                                    {"glcm_dissimilarity", 0}};
    double mi = 0, mj = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double p = P[static_cast<size_t>(i) * n + j];
            f["glcm_energy"] += p * p;
            f["glcm_contrast"] += (i - j) * (i - j) * p;
            f["glcm_homogeneity"] += p / (1.0 + (i - j) * (i - j));
            if (p > 0.0) f["glcm_entropy"] -= p * std::log2(p);
            f["glcm_dissimilarity"] += std::abs(i - j) * p;
            mi += i * p;
            mj += j * p;
        }
    double vi = 0, vj = 0, cov = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double p = P[static_cast<size_t>(i) * n + j];
            vi += (i - mi) * (i - mi) * p;
            vj += (j - mj) * (j - mj) * p;
            cov += (i - mi) * (j - mj) * p;
        }
    f["glcm_correlation"] = (vi > 0 && vj > 0) ? cov / std::sqrt(vi * vj) : 1.0;
    return f;
}

// Run scanner: a pixel starts a run iff its predecessor along the direction
// differs; raw counts averaged over directions.
inline std::vector<double> glrlm_matrix(const ctstd::QuantizedROI& q,
                                        const std::vector<std::pair<int, int>>& dirs,
                                        int max_run) {
    const int n = q.n_levels;
    std::vector<double> avg(static_cast<size_t>(n) * max_run, 0.0);
    auto level = [&](int r, int c) {
        return (r >= 0 && r < q.height && c >= 0 && c < q.width) ? q.at(r, c) : 0;
    };
    for (const auto& [dr, dc] : dirs) {
        for (int r = 0; r < q.height; ++r)
            for (int c = 0; c < q.width; ++c) {
                const int lv = level(r, c);
                if (lv == 0 || level(r - dr, c - dc) == lv) continue;
                int len = 0, rr = r, cc = c;
                while (level(rr, cc) == lv) {
                    ++len;
                    rr += dr;
                    cc += dc;
                }
                avg[static_cast<size_t>(lv - 1) * max_run + (len - 1)] += 1.0;
            }
    }
    for (double& v : avg) v /= static_cast<double>(dirs.size());
    return avg;
}

inline std::map<std::string, double> glrlm_features(const std::vector<double>& R, int n,
                                                    int max_run, int n_mask) {
    double nr = 0, sre = 0, lre = 0, gln = 0, rln = 0;
    for (int g = 0; g < n; ++g) {
        double row = 0;
        for (int l = 0; l < max_run; ++l) {
            const double v = R[static_cast<size_t>(g) * max_run + l];
            nr += v;
            sre += v / ((l + 1.0) * (l + 1.0));
            lre += v * (l + 1.0) * (l + 1.0);
            row += v;
        }
        gln += row * row;
    }
    for (int l = 0; l < max_run; ++l) {
        double col = 0;
        for (int g = 0; g < n; ++g) col += R[static_cast<size_t>(g) * max_run + l];
        rln += col * col;
    }
    return {{"glrlm_sre", sre / nr},
            {"glrlm_lre", lre / nr},
            {"glrlm_gln", gln / nr},
            {"glrlm_rln", rln / nr},
            {"glrlm_rp", nr / n_mask}};
}

struct Ngtdm {
    std::vector<double> s;    ///< per-level absolute difference sums
    std::vector<double> p;    ///< per-level occupancy over valid pixels
    std::vector<int> present; ///< zero-based levels with occupancy
    double valid = 0.0;
};

inline Ngtdm ngtdm(const ctstd::QuantizedROI& q, int radius) {
    Ngtdm o;
    o.s.assign(q.n_levels, 0.0);
    std::vector<double> cnt(q.n_levels, 0.0);
    for (int r = 0; r < q.height; ++r)
        for (int c = 0; c < q.width; ++c) {
            if (!q.in(r, c)) continue;
            double sum = 0;
            int nb = 0;
            for (int dr = -radius; dr <= radius; ++dr)
                for (int dc = -radius; dc <= radius; ++dc) {
                    if ((dr || dc) && q.in(r + dr, c + dc)) {
                        sum += q.at(r + dr, c + dc);
                        ++nb;
                    }
                }
            if (nb == 0) continue;
            o.s[q.at(r, c) - 1] += std::abs(q.at(r, c) - sum / nb);
            cnt[q.at(r, c) - 1] += 1.0;
            o.valid += 1.0;
        }
    o.p.resize(q.n_levels);
    for (int i = 0; i < q.n_levels; ++i) {
        o.p[i] = cnt[i] / o.valid;
        if (cnt[i] > 0) o.present.push_back(i);
    }
    return o;
}

inline std::map<std::string, double> nid_features(const Ngtdm& o) {
    double sum_ps = 0, sum_s = 0;
    for (size_t i = 0; i < o.p.size(); ++i) {
        sum_ps += o.p[i] * o.s[i];
        sum_s += o.s[i];
    }
    const double ngp = static_cast<double>(o.present.size());
    std::map<std::string, double> f;
    f["nid_coarseness"] = sum_ps > 0 ? 1.0 / sum_ps : 0.0;
    double con = 0, busy_den = 0, cplx = 0, str_num = 0;
    for (int i : o.present)
        for (int j : o.present) {
            con += o.p[i] * o.p[j] * (i - j) * (i - j);
            busy_den += std::abs((i + 1) * o.p[i] - (j + 1) * o.p[j]);
            if (o.p[i] + o.p[j] > 0)
                cplx += std::abs(i - j) * (o.p[i] * o.s[i] + o.p[j] * o.s[j]) /
                        (o.p[i] + o.p[j]);
            str_num += (o.p[i] + o.p[j]) * (i - j) * (i - j);
        }
    f["nid_contrast"] = ngp >= 2 ? con / (ngp * (ngp - 1)) * (sum_s / o.valid) : 0.0;
    f["nid_busyness"] = busy_den > 0 ? sum_ps / busy_den : 0.0;
    f["nid_complexity"] = cplx / o.valid;
    f["nid_strength"] = sum_s > 0 ? str_num / sum_s : 0.0;
    return f;
}

inline std::map<std::string, double> id_features(std::vector<double> vals) {
    const double n = static_cast<double>(vals.size());
    const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / n;
    double m2 = 0, m3 = 0, m4 = 0, energy = 0;
    for (double v : vals) {
        m2 += std::pow(v - mean, 2);
        m3 += std::pow(v - mean, 3);
        m4 += std::pow(v - mean, 4);
        energy += v * v;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    std::sort(vals.begin(), vals.end());
    const double median = vals.size() % 2 ? vals[vals.size() / 2]
                                          : 0.5 * (vals[vals.size() / 2 - 1] +
                                                   vals[vals.size() / 2]);
    return {{"id_mean", mean},
            {"id_median", median},
            {"id_std", std::sqrt(m2)},
            {"id_min", vals.front()},
            {"id_max", vals.back()},
            {"id_range", vals.back() - vals.front()},
            {"id_skewness", m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0},
            {"id_kurtosis", m2 > 0 ? m4 / (m2 * m2) : 0.0},
            {"id_energy", energy}};
}

inline std::map<std::string, double> ih_features(std::vector<double> vals, int bins,
                                                 double lo, double hi) {
    std::vector<double> hist(bins, 0.0);
    for (double v : vals) hist[quant_level(v, lo, hi, bins) - 1] += 1.0;
    double entropy = 0, uniformity = 0;
    for (double h : hist)
        if (h > 0) {
            const double f = h / vals.size();
            entropy -= f * std::log2(f);
            uniformity += f * f;
        }
    std::sort(vals.begin(), vals.end());
    auto rank = [&](double pct) {
        size_t idx = static_cast<size_t>(std::ceil(pct / 100.0 * vals.size()));
        if (idx < 1) idx = 1;
        return vals[idx - 1];
    };
    return {{"ih_entropy", entropy},
            {"ih_uniformity", uniformity},
            {"ih_p10", rank(10)},
            {"ih_p50", rank(50)},
            {"ih_p90", rank(90)}};
}

inline std::map<std::string, double> goh_features(const ctstd::ImageSlice& img,
                                                  const ctstd::TumorROI& roi, int bins) {
    std::vector<double> w(bins, 0.0);
    double total = 0;
    for (int r = 0; r < roi.height; ++r)
        for (int c = 0; c < roi.width; ++c) {
            if (!(roi.in(r, c) && roi.in(r - 1, c) && roi.in(r + 1, c) &&
                  roi.in(r, c - 1) && roi.in(r, c + 1)))
                continue;
            const double gx = 0.5 * (img.at(r, c + 1) - img.at(r, c - 1));
            const double gy = 0.5 * (img.at(r + 1, c) - img.at(r - 1, c));
            const double mag = std::hypot(gx, gy);
            if (mag == 0.0) continue;
            double th = std::atan2(gy, gx);
            if (th < 0) th += 2 * std::numbers::pi;
            const int b = std::min(static_cast<int>(th / (2 * std::numbers::pi) * bins), bins - 1);
            w[b] += mag;
            total += mag;
        }
    std::map<std::string, double> f;
    double entropy = 0;
    for (int b = 0; b < bins; ++b) {
        const double frac = total > 0 ? w[b] / total : 0.0;
        if (frac > 0) entropy -= frac * std::log2(frac);
        f["goh_fraction_" + std::to_string(b)] = frac;
    }
    f["goh_entropy"] = entropy;
    return f;
}

// ---- fixtures ----

// Random-walk blob: always non-empty and 4-connected.
inline ctstd::TumorROI random_mask(int height, int width, ctstd::Rng& rng) {
    ctstd::TumorROI roi;
    roi.height = height;
    roi.width = width;
    roi.radius_px = 2.0;
    roi.mask.assign(static_cast<size_t>(height) * width, 0);
    int r = height / 2, c = width / 2;
    roi.center_row = r;
    roi.center_col = c;
    const int steps = rng.uniform_int(8, height * width);
    for (int i = 0; i < steps; ++i) {
        roi.mask[static_cast<size_t>(r) * width + c] = 1;
        switch (rng.uniform_int(0, 3)) {
            case 0: r = std::min(r + 1, height - 1); break;
            case 1: r = std::max(r - 1, 0); break;
            case 2: c = std::min(c + 1, width - 1); break;
            default: c = std::max(c - 1, 0); break;
        }
    }
    roi.mask[static_cast<size_t>(r) * width + c] = 1;
    return roi;
}

inline ctstd::ImageSlice random_image(int height, int width, ctstd::Rng& rng,
                                      double lo = -900.0, double hi = 300.0) {
    ctstd::ImageSlice img;
    img.height = height;
    img.width = width;
    img.pixels.resize(static_cast<size_t>(height) * width);
    for (double& p : img.pixels) p = rng.uniform(lo, hi);
    return img;
}

}  // namespace oracles
