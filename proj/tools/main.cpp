#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "ctstd/checkpoint.hpp"
#include "ctstd/errors.hpp"
#include "ctstd/image.hpp"
#include "ctstd/pipeline.hpp"

namespace {

ctstd::ExperimentConfig make_config(const std::string& config_path,
                                    const CLI::Option* seed_opt, uint64_t seed) {
    ctstd::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = ctstd::load_experiment_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Paired-kernel CT standardization: synthetic phantom data, two-phase "
        "latent-diffusion training, radiomic evaluation. Thread count is capped "
        "by the CTSTD_THREADS environment variable."};
    app.require_subcommand(1);

    std::string config_path, out_path, data_dir, codec_path, denoiser_path, in_path;
    uint64_t seed = 0;

    auto* gen =
        app.add_subcommand("generate", "build the paired phantom dataset under --out");
    gen->add_option("--config", config_path, "experiment config (JSON)");
    auto* gen_seed = gen->add_option("--seed", seed, "master seed override");
    gen->add_option("--out", out_path, "run directory")->required();

    auto* tc = app.add_subcommand("train-codec", "phase 1: train the autoencoder");
    tc->add_option("--config", config_path, "experiment config (JSON)");
    auto* tc_seed = tc->add_option("--seed", seed, "master seed override");
    tc->add_option("--data", data_dir, "dataset directory")->required();
    tc->add_option("--out", out_path, "codec checkpoint path")->required();

    auto* td = app.add_subcommand(
        "train-diffusion", "phase 2: train the denoiser against a frozen codec");
    td->add_option("--codec", codec_path, "phase-1 codec checkpoint")->required();
    td->add_option("--config", config_path, "experiment config (JSON)");
    auto* td_seed = td->add_option("--seed", seed, "master seed override");
    td->add_option("--data", data_dir, "dataset directory")->required();
    td->add_option("--out", out_path, "denoiser checkpoint path")->required();

    auto* st =
        app.add_subcommand("standardize", "encode, sample and decode one image");
    st->add_option("--codec", codec_path, "codec checkpoint")->required();
    st->add_option("--denoiser", denoiser_path, "denoiser checkpoint")->required();
    st->add_option("--in", in_path, "input image (.cts)")->required();
    st->add_option("--seed", seed, "reverse-process seed")->required();
    st->add_option("--out", out_path, "output image (.cts)")->required();

    auto* ev = app.add_subcommand(
        "evaluate", "standardize the test split and write metrics into the manifest");
    ev->add_option("--config", config_path, "experiment config (JSON)");
    auto* ev_seed = ev->add_option("--seed", seed, "master seed override");
    ev->add_option("--out", out_path, "run directory")->required();

    auto* rp =
        app.add_subcommand("report", "render the report bundle from the run manifest");
    rp->add_option("--out", out_path, "run directory")->required();

    auto* ra = app.add_subcommand("run-all",
                                  "generate, train both phases, evaluate, report");
    ra->add_option("--config", config_path, "experiment config (JSON)");
    auto* ra_seed = ra->add_option("--seed", seed, "master seed override");
    ra->add_option("--out", out_path, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            const auto cfg = make_config(config_path, gen_seed, seed);
            ctstd::run_generate(cfg, {out_path});
            std::printf("generate: %d train + %d test pairs -> %s\n", cfg.n_train,
                        cfg.n_test,
                        (std::filesystem::path(out_path) / "dataset").string().c_str());
        } else if (tc->parsed()) {
            const auto cfg = make_config(config_path, tc_seed, seed);
            ctstd::run_phase1(cfg, data_dir, out_path);
            std::printf("train-codec: checkpoint -> %s\n", out_path.c_str());
        } else if (td->parsed()) {
            const auto cfg = make_config(config_path, td_seed, seed);
            ctstd::run_phase2(cfg, data_dir, codec_path, out_path);
            std::printf("train-diffusion: checkpoint -> %s\n", out_path.c_str());
        } else if (st->parsed()) {
            const auto codec = ctstd::load_codec(codec_path);
            const auto dn = ctstd::load_denoiser(denoiser_path);
            const auto a = ctstd::read_cts(in_path);
            const auto out = ctstd::standardize_image(codec, dn.model,
                                                      dn.diffusion.schedule(), a, seed);
            ctstd::write_cts(out_path, out);
            std::printf("standardize: %s -> %s\n", in_path.c_str(), out_path.c_str());
        } else if (ev->parsed()) {
            const auto cfg = make_config(config_path, ev_seed, seed);
            const auto res = ctstd::run_evaluate(cfg, {out_path});
            for (const auto& cm : res.conditions)
                std::printf("evaluate: %-16s %d / %d reproducible at RE < %.2f\n",
                            cm.condition.c_str(), cm.reproducible, cm.total,
                            cfg.re_threshold);
        } else if (rp->parsed()) {
            ctstd::run_report({out_path});
            std::printf("report: bundle -> %s\n",
                        (std::filesystem::path(out_path) / "report").string().c_str());
        } else if (ra->parsed()) {
            const auto cfg = make_config(config_path, ra_seed, seed);
            ctstd::run_all(cfg, {out_path});
            std::printf("run-all: artifacts under %s\n", out_path.c_str());
        }
    } catch (const ctstd::IntegrityError& e) {
        std::fprintf(stderr, "integrity error: %s\n", e.what());
        return 3;
    } catch (const ctstd::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const ctstd::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 1;
    }
    return 0;
}
