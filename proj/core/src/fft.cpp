#include "fft.hpp"

#include <fftw3.h>

#include <mutex>

#include "ctstd/errors.hpp"

namespace ctstd {

namespace {
// FFTW plan creation mutates global planner state and is not thread-safe.
std::mutex g_plan_mutex;
}  // namespace

std::vector<std::complex<double>> fft2_r2c(const std::vector<double>& in, int height,
                                           int width) {
    if (height <= 0 || width <= 0 ||
        in.size() != static_cast<size_t>(height) * width)
        throw ShapeError("fft2_r2c: input does not match grid");
    const size_t nc = static_cast<size_t>(height) * (width / 2 + 1);
    std::vector<double> buf(in);
    std::vector<std::complex<double>> out(nc);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(g_plan_mutex);
        plan = fftw_plan_dft_r2c_2d(height, width, buf.data(),
                                    reinterpret_cast<fftw_complex*>(out.data()),
                                    FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(g_plan_mutex);
        fftw_destroy_plan(plan);
    }
    return out;
}

std::vector<double> fft2_c2r(const std::vector<std::complex<double>>& in, int height,
                             int width) {
    const size_t nc = static_cast<size_t>(height) * (width / 2 + 1);
    if (height <= 0 || width <= 0 || in.size() != nc)
        throw ShapeError("fft2_c2r: input does not match half-spectrum");
    std::vector<std::complex<double>> buf(in);
    std::vector<double> out(static_cast<size_t>(height) * width);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(g_plan_mutex);
        plan = fftw_plan_dft_c2r_2d(height, width,
                                    reinterpret_cast<fftw_complex*>(buf.data()),
                                    out.data(), FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(g_plan_mutex);
        fftw_destroy_plan(plan);
    }
    const double scale = 1.0 / (static_cast<double>(height) * width);
    for (double& v : out) v *= scale;
    return out;
}

}  // namespace ctstd
