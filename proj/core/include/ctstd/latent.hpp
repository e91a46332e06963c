#pragma once

#include <vector>

namespace ctstd {

/// 1-D latent embedding of one image.
struct LatentVector {
    std::vector<double> values;

    size_t size() const { return values.size(); }
    double& operator[](size_t i) { return values[i]; }
    double operator[](size_t i) const { return values[i]; }
};

}  // namespace ctstd
