#include "ctstd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ctstd/errors.hpp"

namespace ctstd {

namespace {

void check_aligned(const FeatureVector& s, const FeatureVector& t) {
    if (s.features.size() != t.features.size())
        throw AlignmentError("feature vectors have different lengths: " +
                             std::to_string(s.features.size()) + " vs " +
                             std::to_string(t.features.size()));
    for (size_t i = 0; i < s.features.size(); ++i)
        if (s.features[i].name != t.features[i].name)
            throw AlignmentError("feature order mismatch at index " + std::to_string(i) +
                                 ": " + s.features[i].name + " vs " +
                                 t.features[i].name);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

REResult relative_error(double f_s, double f_t) {
    if (!std::isfinite(f_s) || !std::isfinite(f_t))
        throw NumericError("relative_error: non-finite input");
    REResult r;
    r.f_s = f_s;
    r.f_t = f_t;
    if (f_t != 0.0) {
        r.re = std::abs(f_t - f_s) / std::abs(f_t);
        r.defined = true;
    } else if (f_s == 0.0) {
        r.re = 0.0;
        r.defined = true;
    } else {
        r.re = 0.0;
        r.defined = false;
    }
    return r;
}

ReproCount reproducible_count(const FeatureVector& features_s,
                              const FeatureVector& features_t, double threshold) {
    check_aligned(features_s, features_t);
    ReproCount out;
    out.per_feature.reserve(features_s.features.size());
    for (size_t i = 0; i < features_s.features.size(); ++i) {
        REResult r = relative_error(features_s.features[i].value,
                                    features_t.features[i].value);
        r.name = features_s.features[i].name;
        if (r.defined) {
            ++out.total;
            if (r.re < threshold) ++out.count;
        } else {
            ++out.undefined;
        }
        out.per_feature.push_back(std::move(r));
    }
    return out;
}

CCCResult ccc(const std::vector<double>& group_s, const std::vector<double>& group_t) {
    if (group_s.size() != group_t.size())
        throw AlignmentError("ccc: group lengths differ: " +
                             std::to_string(group_s.size()) + " vs " +
                             std::to_string(group_t.size()));
    const size_t n = group_s.size();
    if (n < 2) throw ValidationError("ccc: need at least 2 paired values");

    CCCResult r;
    r.n = static_cast<int>(n);
    for (size_t i = 0; i < n; ++i) {
        r.mu_s += group_s[i];
        r.mu_t += group_t[i];
    }
    r.mu_s /= n;
    r.mu_t /= n;
    double var_s = 0.0, var_t = 0.0, cov = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double ds = group_s[i] - r.mu_s;
        const double dt = group_t[i] - r.mu_t;
        var_s += ds * ds;
        var_t += dt * dt;
        cov += ds * dt;
    }
    var_s /= n;
    var_t /= n;
    cov /= n;
    r.sigma_s = std::sqrt(var_s);
    r.sigma_t = std::sqrt(var_t);

    r.defined = (var_s > 0.0) || (var_t > 0.0);
    r.rho = (r.sigma_s > 0.0 && r.sigma_t > 0.0) ? cov / (r.sigma_s * r.sigma_t) : 0.0;
    const double dmu = r.mu_s - r.mu_t;
    const double denom = var_s + var_t + dmu * dmu;
    r.ccc = (denom > 0.0) ? 2.0 * cov / denom : 0.0;
    r.ccc = std::clamp(r.ccc, -1.0, 1.0);
    return r;
}

double NormMap::apply(const std::string& name, double value) const {
    const auto it = ranges.find(name);
    if (it == ranges.end())
        throw ValidationError("normalization range missing for feature " + name);
    const auto [lo, hi] = it->second;
    if (!(hi > lo)) return 0.5;
    return (value - lo) / (hi - lo);
}

NormMap cohort_normalization(const std::vector<const FeatureVector*>& cohort) {
    NormMap m;
    for (const FeatureVector* fv : cohort)
        for (const auto& f : fv->features) {
            auto it = m.ranges.find(f.name);
            if (it == m.ranges.end())
                m.ranges.emplace(f.name, std::make_pair(f.value, f.value));
            else {
                it->second.first = std::min(it->second.first, f.value);
                it->second.second = std::max(it->second.second, f.value);
            }
        }
    return m;
}

CCCResult ccc_by_class(const FeatureVector& features_s, const FeatureVector& features_t,
                       FeatureClass cls, const NormMap* norm) {
    check_aligned(features_s, features_t);
    std::vector<double> gs, gt;
    for (size_t i = 0; i < features_s.features.size(); ++i) {
        const auto& fs = features_s.features[i];
        const auto& ft = features_t.features[i];
        if (fs.cls != cls) continue;
        if (norm) {
            gs.push_back(norm->apply(fs.name, fs.value));
            gt.push_back(norm->apply(ft.name, ft.value));
        } else {
            gs.push_back(fs.value);
            gt.push_back(ft.value);
        }
    }
    if (gs.size() < 2)
        throw ValidationError("ccc_by_class: class " + to_string(cls) +
                              " has fewer than 2 features");
    return ccc(gs, gt);
}

std::vector<CurvePoint> re_threshold_curve(const FeatureVector& features_s,
                                           const FeatureVector& features_t,
                                           const std::vector<double>& thresholds) {
    for (size_t i = 1; i < thresholds.size(); ++i)
        if (thresholds[i] < thresholds[i - 1])
            throw ValidationError("re_threshold_curve: thresholds must be ascending");
    std::vector<CurvePoint> out;
    out.reserve(thresholds.size());
    for (double th : thresholds) {
        const ReproCount rc = reproducible_count(features_s, features_t, th);
        out.push_back({th, rc.count, rc.total});
    }
    return out;
}

void write_re_per_feature_csv(
    const std::filesystem::path& path,
    const std::vector<std::tuple<std::string, std::string, std::string, REResult>>&
        rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "condition,slice_id,roi_id,feature_name,f_s,f_t,re,defined\n";
    for (const auto& [condition, slice_id, roi_id, r] : rows)
        out << condition << "," << slice_id << "," << roi_id << "," << r.name << ","
            << fmt(r.f_s) << "," << fmt(r.f_t) << ","
            << (r.defined ? fmt(r.re) : std::string("")) << ","
            << (r.defined ? "1" : "0") << "\n";
}

ClassCCCSummary summarize_class_ccc(const std::string& condition, FeatureClass cls,
                                    const std::vector<CCCResult>& per_roi) {
    ClassCCCSummary s;
    s.condition = condition;
    s.cls = cls;
    double sum = 0.0, rho_sum = 0.0;
    for (const CCCResult& r : per_roi) {
        if (!r.defined) continue;
        sum += r.ccc;
        rho_sum += r.rho;
        s.n_features = r.n;
        ++s.n_rois;
    }
    if (s.n_rois == 0) return s;
    s.ccc_mean = sum / s.n_rois;
    s.rho_mean = rho_sum / s.n_rois;
    double var = 0.0;
    for (const CCCResult& r : per_roi) {
        if (!r.defined) continue;
        const double d = r.ccc - s.ccc_mean;
        var += d * d;
    }
    s.ccc_std = std::sqrt(var / s.n_rois);
    return s;
}

void write_ccc_per_class_csv(const std::filesystem::path& path,
                             const std::vector<ClassCCCSummary>& rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "condition,feature_class,ccc_mean,ccc_std,rho_mean,n_rois,n_features\n";
    for (const ClassCCCSummary& r : rows)
        out << r.condition << "," << to_string(r.cls) << "," << fmt(r.ccc_mean) << ","
            << fmt(r.ccc_std) << "," << fmt(r.rho_mean) << "," << r.n_rois << ","
            << r.n_features << "\n";
}

void write_re_curve_csv(const std::filesystem::path& path,
                        const std::vector<std::tuple<std::string, CurvePoint>>& rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "condition,threshold,count,total\n";
    for (const auto& [condition, p] : rows)
        out << condition << "," << fmt(p.threshold) << "," << p.count << ","
            << p.total << "\n";
}

}  // namespace ctstd
