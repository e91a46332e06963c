#pragma once

#include <complex>
#include <vector>

namespace ctstd {

/// Real-to-complex 2-D DFT of a row-major height x width grid. Output is the
/// packed half-spectrum of size height x (width/2 + 1), FFTW layout.
std::vector<std::complex<double>> fft2_r2c(const std::vector<double>& in, int height,
                                           int width);

/// Inverse of fft2_r2c, already normalized by 1/(height*width).
std::vector<double> fft2_c2r(const std::vector<std::complex<double>>& in, int height,
                             int width);

}  // namespace ctstd
