#include <benchmark/benchmark.h>

#include "ctstd/codec.hpp"
#include "ctstd/diffusion.hpp"
#include "ctstd/metrics.hpp"
#include "ctstd/phantom.hpp"
#include "ctstd/radiomics.hpp"
#include "ctstd/rng.hpp"

using namespace ctstd;

namespace {

ImageSlice bench_slice() {
    PhantomSpec spec;
    return generate_ground_truth(spec, 3);
}

CodecModel bench_codec() {
    CodecConfig cfg;
    return init_codec(cfg);
}

void BM_ApplyKernel(benchmark::State& state) {
    const PhantomSpec spec;
    const ImageSlice truth = generate_ground_truth(spec, 3);
    const KernelProfile k = KernelProfile::smooth_default();
    for (auto _ : state) benchmark::DoNotOptimize(apply_kernel(truth, k, 9));
}
BENCHMARK(BM_ApplyKernel);

void BM_Encode(benchmark::State& state) {
    const CodecModel model = bench_codec();
    const ImageSlice img = bench_slice();
    for (auto _ : state) benchmark::DoNotOptimize(encode(model, img));
}
BENCHMARK(BM_Encode);

void BM_Decode(benchmark::State& state) {
    const CodecModel model = bench_codec();
    const LatentVector z = encode(model, bench_slice());
    for (auto _ : state) benchmark::DoNotOptimize(decode(model, z));
}
BENCHMARK(BM_Decode);

void BM_PredictNoise(benchmark::State& state) {
    DenoiserConfig cfg;
    const DenoiserModel model = init_denoiser(cfg);
    Rng rng(4);
    LatentVector z, cond;
    z.values.resize(cfg.latent_dim);
    cond.values.resize(cfg.latent_dim);
    for (double& v : z.values) v = rng.normal();
    for (double& v : cond.values) v = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(predict_noise(model, z, 500, cond));
}
BENCHMARK(BM_PredictNoise);

void BM_QSample(benchmark::State& state) {
    const NoiseSchedule s = build_schedule(1000, 1e-4, 0.02);
    Rng rng(5);
    LatentVector z0, eta;
    z0.values.resize(128);
    eta.values.resize(128);
    for (double& v : z0.values) v = rng.normal();
    for (double& v : eta.values) v = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(q_sample(z0, 600, eta, s));
}
BENCHMARK(BM_QSample);

void BM_SampleWith(benchmark::State& state) {
    DenoiserConfig cfg;
    const DenoiserModel model = init_denoiser(cfg);
    const NoiseSchedule s = build_schedule(10, 1e-4, 0.02);
    Rng rng(6);
    LatentVector cond;
    cond.values.resize(cfg.latent_dim);
    for (double& v : cond.values) v = rng.normal();
    const DenoiseFn fn = [&](const std::vector<double>& z_t, int t,
                             const std::vector<double>&) {
        LatentVector z;
        z.values = z_t;
        return predict_noise(model, z, t, cond).values;
    };
    for (auto _ : state)
        benchmark::DoNotOptimize(sample_with(fn, cfg.latent_dim, s, cond, 7));
}
BENCHMARK(BM_SampleWith);

void BM_GlcmMatrix(benchmark::State& state) {
    const PhantomSpec spec;
    const ImageSlice img = generate_ground_truth(spec, 3);
    const TumorROI roi = tumor_rois(spec)[0];
    const RadiomicsConfig rc;
    const QuantizedROI q = quantize(img, roi, rc.quant);
    for (auto _ : state) benchmark::DoNotOptimize(glcm_matrix(q, rc.glcm_offsets));
}
BENCHMARK(BM_GlcmMatrix);

void BM_ExtractAll(benchmark::State& state) {
    const PhantomSpec spec;
    const ImageSlice img = generate_ground_truth(spec, 3);
    const TumorROI roi = tumor_rois(spec)[0];
    const RadiomicsConfig rc;
    for (auto _ : state) benchmark::DoNotOptimize(extract_all(img, roi, rc));
}
BENCHMARK(BM_ExtractAll);

void BM_CCC(benchmark::State& state) {
    Rng rng(8);
    std::vector<double> xs(150), ys(150);
    for (size_t i = 0; i < xs.size(); ++i) {
        xs[i] = rng.normal();
        ys[i] = 0.8 * xs[i] + 0.2 * rng.normal();
    }
    for (auto _ : state) benchmark::DoNotOptimize(ccc(xs, ys));
}
BENCHMARK(BM_CCC);

}  // namespace

BENCHMARK_MAIN();
