#include "ctstd/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ctstd/checksum.hpp"
#include "ctstd/errors.hpp"
#include "ctstd/parallel.hpp"
#include "ctstd/rng.hpp"

namespace ctstd {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------- config file ----------

void check_keys(const json& j, const std::string& block,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        throw ConfigError("config: " + block + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const bool ok =
            std::any_of(allowed.begin(), allowed.end(),
                        [&](const char* a) { return it.key() == a; });
        if (!ok)
            throw ConfigError("config: unknown key '" + it.key() + "' in " + block);
    }
}

template <typename T>
void read_field(const json& j, const std::string& block, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception&) {
        throw ConfigError("config: bad value for '" + std::string(key) + "' in " + block);
    }
}

EllipseSpec parse_ellipse(const json& j, const std::string& block) {
    check_keys(j, block, {"center_row", "center_col", "semi_row", "semi_col"});
    EllipseSpec e;
    read_field(j, block, "center_row", e.center_row);
    read_field(j, block, "center_col", e.center_col);
    read_field(j, block, "semi_row", e.semi_row);
    read_field(j, block, "semi_col", e.semi_col);
    return e;
}

TumorSpec parse_tumor(const json& j, const std::string& block) {
    check_keys(j, block, {"center_row", "center_col", "radius_px", "base_hu",
                          "texture_amplitude_hu", "texture_corr_px"});
    TumorSpec t;
    read_field(j, block, "center_row", t.center_row);
    read_field(j, block, "center_col", t.center_col);
    read_field(j, block, "radius_px", t.radius_px);
    read_field(j, block, "base_hu", t.base_hu);
    read_field(j, block, "texture_amplitude_hu", t.texture_amplitude_hu);
    read_field(j, block, "texture_corr_px", t.texture_corr_px);
    return t;
}

PhantomSpec parse_phantom(const json& j, PhantomSpec p) {
    check_keys(j, "phantom",
               {"height", "width", "spacing_mm_row", "spacing_mm_col", "air_hu",
                "body_hu", "lung_hu", "noise_hu", "body", "lungs", "tumors",
                "center_jitter_px", "radius_jitter_px", "hu_jitter",
                "texture_amp_jitter_frac", "texture_corr_jitter_frac",
                "test_noise_scale", "test_texture_scale"});
    read_field(j, "phantom", "height", p.height);
    read_field(j, "phantom", "width", p.width);
    read_field(j, "phantom", "spacing_mm_row", p.spacing_mm_row);
    read_field(j, "phantom", "spacing_mm_col", p.spacing_mm_col);
    read_field(j, "phantom", "air_hu", p.air_hu);
    read_field(j, "phantom", "body_hu", p.body_hu);
    read_field(j, "phantom", "lung_hu", p.lung_hu);
    read_field(j, "phantom", "noise_hu", p.noise_hu);
    read_field(j, "phantom", "center_jitter_px", p.center_jitter_px);
    read_field(j, "phantom", "radius_jitter_px", p.radius_jitter_px);
    read_field(j, "phantom", "hu_jitter", p.hu_jitter);
    read_field(j, "phantom", "texture_amp_jitter_frac", p.texture_amp_jitter_frac);
    read_field(j, "phantom", "texture_corr_jitter_frac", p.texture_corr_jitter_frac);
    read_field(j, "phantom", "test_noise_scale", p.test_noise_scale);
    read_field(j, "phantom", "test_texture_scale", p.test_texture_scale);
    if (j.contains("body")) p.body = parse_ellipse(j.at("body"), "phantom.body");
    if (j.contains("lungs")) {
        if (!j.at("lungs").is_array())
            throw ConfigError("config: phantom.lungs must be an array");
        p.lungs.clear();
        for (const json& e : j.at("lungs"))
            p.lungs.push_back(parse_ellipse(e, "phantom.lungs[]"));
    }
    if (j.contains("tumors")) {
        if (!j.at("tumors").is_array())
            throw ConfigError("config: phantom.tumors must be an array");
        p.tumors.clear();
        for (const json& e : j.at("tumors"))
            p.tumors.push_back(parse_tumor(e, "phantom.tumors[]"));
    }
    return p;
}

KernelProfile parse_kernel(const json& j, const std::string& block, KernelProfile k) {
    check_keys(j, block, {"preset", "name", "cutoff", "power", "noise_gain", "mtf"});
    if (j.contains("preset")) {
        std::string p;
        read_field(j, block, "preset", p);
        if (p == "smooth")
            k = KernelProfile::smooth_default();
        else if (p == "sharp")
            k = KernelProfile::sharp_default();
        else if (p == "identity")
            k = KernelProfile::identity();
        else
            throw ConfigError("config: unknown kernel preset '" + p + "' in " + block);
    }
    if (j.contains("cutoff") || j.contains("power")) {
        if (!j.contains("cutoff"))
            throw ConfigError("config: 'power' given without 'cutoff' in " + block);
        double cutoff = 0.0, power = 2.0;
        read_field(j, block, "cutoff", cutoff);
        read_field(j, block, "power", power);
        if (!(cutoff > 0.0))
            throw ConfigError("config: 'cutoff' must be positive in " + block);
        k = KernelProfile::exponential(k.name, cutoff, power, k.noise_gain);
    }
    read_field(j, block, "mtf", k.mtf);
    read_field(j, block, "name", k.name);
    read_field(j, block, "noise_gain", k.noise_gain);
    return k;
}

CodecConfig parse_codec(const json& j, CodecConfig c) {
    check_keys(j, "codec", {"latent_dim", "encoder_widths", "decoder_widths",
                            "learning_rate", "epochs", "batch_size"});
    read_field(j, "codec", "latent_dim", c.latent_dim);
    read_field(j, "codec", "encoder_widths", c.encoder_widths);
    read_field(j, "codec", "decoder_widths", c.decoder_widths);
    read_field(j, "codec", "learning_rate", c.learning_rate);
    read_field(j, "codec", "epochs", c.epochs);
    read_field(j, "codec", "batch_size", c.batch_size);
    return c;
}

DiffusionConfig parse_diffusion(const json& j, DiffusionConfig d) {
    check_keys(j, "diffusion", {"T", "beta_min", "beta_max", "lambda_l1",
                                "learning_rate", "epochs", "batch_size",
                                "draws_per_pair"});
    read_field(j, "diffusion", "T", d.T);
    read_field(j, "diffusion", "beta_min", d.beta_min);
    read_field(j, "diffusion", "beta_max", d.beta_max);
    read_field(j, "diffusion", "lambda_l1", d.lambda_l1);
    read_field(j, "diffusion", "learning_rate", d.learning_rate);
    read_field(j, "diffusion", "epochs", d.epochs);
    read_field(j, "diffusion", "batch_size", d.batch_size);
    read_field(j, "diffusion", "draws_per_pair", d.draws_per_pair);
    return d;
}

DenoiserConfig parse_denoiser(const json& j, DenoiserConfig d) {
    check_keys(j, "denoiser", {"hidden_widths", "time_embed_dim"});
    read_field(j, "denoiser", "hidden_widths", d.hidden_widths);
    read_field(j, "denoiser", "time_embed_dim", d.time_embed_dim);
    return d;
}

RadiomicsConfig parse_radiomics(const json& j, RadiomicsConfig r) {
    check_keys(j, "radiomics",
               {"n_levels", "hu_low", "hu_high", "ih_bins", "goh_bins", "nid_radius"});
    read_field(j, "radiomics", "n_levels", r.quant.n_levels);
    read_field(j, "radiomics", "hu_low", r.quant.hu_low);
    read_field(j, "radiomics", "hu_high", r.quant.hu_high);
    read_field(j, "radiomics", "ih_bins", r.ih_bins);
    read_field(j, "radiomics", "goh_bins", r.goh_bins);
    read_field(j, "radiomics", "nid_radius", r.nid_radius);
    return r;
}

// ---------- config echo ----------

json ellipse_json(const EllipseSpec& e) {
    return {{"center_row", e.center_row},
            {"center_col", e.center_col},
            {"semi_row", e.semi_row},
            {"semi_col", e.semi_col}};
}

json tumor_json(const TumorSpec& t) {
    return {{"center_row", t.center_row},
            {"center_col", t.center_col},
            {"radius_px", t.radius_px},
            {"base_hu", t.base_hu},
            {"texture_amplitude_hu", t.texture_amplitude_hu},
            {"texture_corr_px", t.texture_corr_px}};
}

json kernel_json(const KernelProfile& k) {
    return {{"name", k.name}, {"mtf", k.mtf}, {"noise_gain", k.noise_gain}};
}

// ---------- manifest ----------

json read_manifest(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("run manifest not found: " + path.string());
    try {
        json m;
        f >> m;
        return m;
    } catch (const json::exception& e) {
        throw ValidationError("malformed run manifest " + path.string() + ": " +
                              e.what());
    }
}

json read_manifest_or_new(const fs::path& path) {
    if (!fs::exists(path)) return json::object();
    return read_manifest(path);
}

void write_manifest(const fs::path& path, const json& m) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ValidationError("cannot write run manifest: " + path.string());
    f << m.dump(2) << '\n';
}

/// Stores run id, config hash and echo; refuses a manifest created with a
/// different configuration.
void stamp_config(json& m, const ExperimentConfig& config) {
    const std::string echo = experiment_config_echo(config);
    const std::string hash = to_hex(fnv1a64(echo));
    if (m.contains("config_hash") && m["config_hash"].get<std::string>() != hash)
        throw ValidationError(
            "config hash " + hash + " does not match the run manifest's " +
            m["config_hash"].get<std::string>() +
            " (the run was created with a different configuration)");
    m["run_id"] = "r" + hash;
    m["config_hash"] = hash;
    m["config"] = json::parse(echo);
    m["seed"] = config.seed;
}

std::string artifact_rel(const fs::path& file, const fs::path& root) {
    const fs::path f = fs::absolute(file).lexically_normal();
    const fs::path r = fs::absolute(root).lexically_normal();
    const fs::path rel = f.lexically_relative(r);
    if (rel.empty() || rel.generic_string().rfind("..", 0) == 0)
        return f.generic_string();
    return rel.generic_string();
}

void record_artifact(json& m, const char* group, const char* name,
                     const fs::path& file, const fs::path& root) {
    m[group][name] = {{"path", artifact_rel(file, root)},
                      {"crc32", to_hex(crc32_file(file))}};
}

/// When the manifest has a record for this artifact, the file on disk must
/// still match it.
void require_recorded_crc(const json& m, const char* group, const char* name,
                          const fs::path& file) {
    if (!m.contains(group) || !m[group].contains(name)) return;
    const std::string recorded = m[group][name]["crc32"].get<std::string>();
    if (recorded != to_hex(crc32_file(file)))
        throw IntegrityError(std::string(name) +
                             " does not match the manifest record: " + file.string());
}

struct PhaseTimer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

fs::path run_root_of(const fs::path& data_dir) {
    const fs::path parent = data_dir.lexically_normal().parent_path();
    return parent.empty() ? fs::path(".") : parent;
}

// ---------- evaluation helpers ----------

constexpr std::array<FeatureClass, 6> kClasses{FeatureClass::GOH,  FeatureClass::GLCM,
                                               FeatureClass::GLRLM, FeatureClass::ID,
                                               FeatureClass::IH,   FeatureClass::NID};

FeatureClass class_from_string(const std::string& s) {
    for (FeatureClass c : kClasses)
        if (to_string(c) == s) return c;
    throw ValidationError("unknown feature class: " + s);
}

double value_of(const FeatureVector& v, const std::string& name) {
    for (const Feature& f : v.features)
        if (f.name == name) return f.value;
    throw ValidationError("feature not present: " + name);
}

json metrics_json(const EvalResult& res, const ExperimentConfig& config) {
    json conditions = json::array();
    for (const ConditionMetrics& cm : res.conditions) {
        json ccc = json::array();
        for (const ClassCCCSummary& s : cm.ccc)
            ccc.push_back({{"class", to_string(s.cls)},
                           {"ccc_mean", s.ccc_mean},
                           {"ccc_std", s.ccc_std},
                           {"rho_mean", s.rho_mean},
                           {"n_rois", s.n_rois},
                           {"n_features", s.n_features}});
        json curve = json::array();
        for (const CurvePoint& p : cm.curve)
            curve.push_back(
                {{"threshold", p.threshold}, {"count", p.count}, {"total", p.total}});
        conditions.push_back({{"condition", cm.condition},
                              {"reproducible", cm.reproducible},
                              {"total", cm.total},
                              {"undefined", cm.undefined},
                              {"ccc", ccc},
                              {"curve", curve}});
    }
    return {{"re_threshold", config.re_threshold},
            {"recon_mae_hu", res.recon_mae_hu},
            {"synth_closer_frac", res.synth_closer_frac},
            {"conditions", conditions}};
}

json features_json(const std::vector<EvalRow>& rows, const ExperimentConfig& config) {
    json order = json::array();
    for (const auto& [name, cls] : feature_order(config.radiomics)) order.push_back(name);
    json out_rows = json::array();
    for (const EvalRow& r : rows)
        out_rows.push_back({{"slice_id", r.slice_id},
                            {"roi_id", r.roi_id},
                            {"a", r.a.values()},
                            {"b", r.b.values()},
                            {"recon", r.recon.values()},
                            {"synth", r.synth.values()}});
    return {{"order", order}, {"rows", out_rows}};
}

std::string fmt_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

}  // namespace

// ---------- ExperimentConfig ----------

void ExperimentConfig::validate() const {
    phantom.validate();
    kernel_a.validate();
    kernel_b.validate();
    codec.validate();
    denoiser.validate();
    diffusion.validate();
    radiomics.validate();
    if (codec.height != phantom.height || codec.width != phantom.width)
        throw ConfigError("codec image size " + std::to_string(codec.height) + "x" +
                          std::to_string(codec.width) + " does not match phantom " +
                          std::to_string(phantom.height) + "x" +
                          std::to_string(phantom.width));
    if (denoiser.latent_dim != codec.latent_dim)
        throw ConfigError("latent_dim mismatch: codec " +
                          std::to_string(codec.latent_dim) + " vs denoiser " +
                          std::to_string(denoiser.latent_dim));
    if (n_train < 1) throw ConfigError("n_train must be >= 1");
    if (n_test < 1) throw ConfigError("n_test must be >= 1");
    if (!(re_threshold > 0.0) || !std::isfinite(re_threshold))
        throw ConfigError("re_threshold must be positive");
    if (!(curve_step > 0.0) || !std::isfinite(curve_step))
        throw ConfigError("curve_step must be positive");
    if (!(curve_max >= 0.0) || !std::isfinite(curve_max))
        throw ConfigError("curve_max must be non-negative");
}

std::vector<double> ExperimentConfig::curve_thresholds() const {
    std::vector<double> out;
    for (int i = 0;; ++i) {
        const double t = i * curve_step;
        if (t > curve_max + 1e-12) break;
        out.push_back(t);
    }
    return out;
}

ExperimentConfig ExperimentConfig::smoke() {
    ExperimentConfig c;
    c.codec.epochs = 2;
    c.diffusion.epochs = 2;
    c.n_train = 24;
    c.n_test = 8;
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open config: " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + ": malformed JSON: " +
                              e.what());
    }
    check_keys(j, "top level",
               {"profile", "seed", "n_train", "n_test", "re_threshold", "curve_max",
                "curve_step", "phantom", "kernel_a", "kernel_b", "codec", "diffusion",
                "denoiser", "radiomics"});
    ExperimentConfig c;
    if (j.contains("profile")) {
        std::string profile;
        read_field(j, "top level", "profile", profile);
        if (profile == "smoke")
            c = ExperimentConfig::smoke();
        else if (profile != "default")
            throw ConfigError("config: unknown profile '" + profile + "'");
    }
    read_field(j, "top level", "seed", c.seed);
    read_field(j, "top level", "n_train", c.n_train);
    read_field(j, "top level", "n_test", c.n_test);
    read_field(j, "top level", "re_threshold", c.re_threshold);
    read_field(j, "top level", "curve_max", c.curve_max);
    read_field(j, "top level", "curve_step", c.curve_step);
    if (j.contains("phantom")) c.phantom = parse_phantom(j.at("phantom"), c.phantom);
    if (j.contains("kernel_a"))
        c.kernel_a = parse_kernel(j.at("kernel_a"), "kernel_a", c.kernel_a);
    if (j.contains("kernel_b"))
        c.kernel_b = parse_kernel(j.at("kernel_b"), "kernel_b", c.kernel_b);
    if (j.contains("codec")) c.codec = parse_codec(j.at("codec"), c.codec);
    if (j.contains("diffusion"))
        c.diffusion = parse_diffusion(j.at("diffusion"), c.diffusion);
    if (j.contains("denoiser")) c.denoiser = parse_denoiser(j.at("denoiser"), c.denoiser);
    if (j.contains("radiomics"))
        c.radiomics = parse_radiomics(j.at("radiomics"), c.radiomics);
    c.codec.height = c.phantom.height;
    c.codec.width = c.phantom.width;
    c.denoiser.latent_dim = c.codec.latent_dim;
    c.validate();
    return c;
}

std::string experiment_config_echo(const ExperimentConfig& c) {
    json lungs = json::array();
    for (const EllipseSpec& e : c.phantom.lungs) lungs.push_back(ellipse_json(e));
    json tumors = json::array();
    for (const TumorSpec& t : c.phantom.tumors) tumors.push_back(tumor_json(t));
    const json j = {
        {"seed", c.seed},
        {"n_train", c.n_train},
        {"n_test", c.n_test},
        {"re_threshold", c.re_threshold},
        {"curve_max", c.curve_max},
        {"curve_step", c.curve_step},
        {"phantom",
         {{"height", c.phantom.height},
          {"width", c.phantom.width},
          {"spacing_mm_row", c.phantom.spacing_mm_row},
          {"spacing_mm_col", c.phantom.spacing_mm_col},
          {"air_hu", c.phantom.air_hu},
          {"body_hu", c.phantom.body_hu},
          {"lung_hu", c.phantom.lung_hu},
          {"noise_hu", c.phantom.noise_hu},
          {"body", ellipse_json(c.phantom.body)},
          {"lungs", lungs},
          {"tumors", tumors},
          {"center_jitter_px", c.phantom.center_jitter_px},
          {"radius_jitter_px", c.phantom.radius_jitter_px},
          {"hu_jitter", c.phantom.hu_jitter},
          {"texture_amp_jitter_frac", c.phantom.texture_amp_jitter_frac},
          {"texture_corr_jitter_frac", c.phantom.texture_corr_jitter_frac},
          {"test_noise_scale", c.phantom.test_noise_scale},
          {"test_texture_scale", c.phantom.test_texture_scale}}},
        {"kernel_a", kernel_json(c.kernel_a)},
        {"kernel_b", kernel_json(c.kernel_b)},
        {"codec",
         {{"latent_dim", c.codec.latent_dim},
          {"encoder_widths", c.codec.encoder_widths},
          {"decoder_widths", c.codec.decoder_widths},
          {"learning_rate", c.codec.learning_rate},
          {"epochs", c.codec.epochs},
          {"batch_size", c.codec.batch_size}}},
        {"denoiser",
         {{"hidden_widths", c.denoiser.hidden_widths},
          {"time_embed_dim", c.denoiser.time_embed_dim}}},
        {"diffusion",
         {{"T", c.diffusion.T},
          {"beta_min", c.diffusion.beta_min},
          {"beta_max", c.diffusion.beta_max},
          {"lambda_l1", c.diffusion.lambda_l1},
          {"learning_rate", c.diffusion.learning_rate},
          {"epochs", c.diffusion.epochs},
          {"batch_size", c.diffusion.batch_size},
          {"draws_per_pair", c.diffusion.draws_per_pair}}},
        {"radiomics",
         {{"n_levels", c.radiomics.quant.n_levels},
          {"hu_low", c.radiomics.quant.hu_low},
          {"hu_high", c.radiomics.quant.hu_high},
          {"ih_bins", c.radiomics.ih_bins},
          {"goh_bins", c.radiomics.goh_bins},
          {"nid_radius", c.radiomics.nid_radius}}},
    };
    return j.dump();
}

// ---------- phases ----------

void run_generate(const ExperimentConfig& config, const RunPaths& paths) {
    config.validate();
    PhaseTimer timer;
    fs::create_directories(paths.root);
    json m = read_manifest_or_new(paths.manifest_path());
    stamp_config(m, config);

    const uint64_t dataset_seed = derive_seed(config.seed, "dataset");
    const PairedDataset ds =
        make_paired_dataset(config.phantom, config.kernel_a, config.kernel_b,
                            config.n_train, config.n_test, dataset_seed);
    save_dataset(paths.dataset_dir(), ds);

    const fs::path ds_manifest = paths.dataset_dir() / "manifest.json";
    m["dataset"] = {{"path", artifact_rel(ds_manifest, paths.root)},
                    {"seed", dataset_seed},
                    {"n_train", config.n_train},
                    {"n_test", config.n_test},
                    {"crc32", to_hex(crc32_file(ds_manifest))}};
    m["phases"]["generate"] = {{"wall_clock_sec", timer.seconds()}};
    write_manifest(paths.manifest_path(), m);
}

void run_phase1(const ExperimentConfig& config, const std::filesystem::path& data_dir,
                const std::filesystem::path& codec_out) {
    config.validate();
    PhaseTimer timer;
    const RunPaths rp{run_root_of(data_dir)};
    json m = read_manifest_or_new(rp.manifest_path());
    stamp_config(m, config);

    const PairedDataset ds = load_dataset(data_dir);
    CodecConfig cc = config.codec;
    cc.seed = derive_seed(config.seed, "codec");
    CodecModel model = init_codec(cc);
    try {
        model = train_codec(std::move(model), ds);
    } catch (const NumericError& e) {
        throw NumericError("phase 1 (codec): " + std::string(e.what()));
    }

    if (codec_out.has_parent_path()) fs::create_directories(codec_out.parent_path());
    save_codec(codec_out, model);

    record_artifact(m, "checkpoints", "codec", codec_out, rp.root);
    m["phases"]["phase1_codec"] = {
        {"wall_clock_sec", timer.seconds()},
        {"epochs", cc.epochs},
        {"final_loss", model.loss_history.empty() ? 0.0 : model.loss_history.back()},
        {"lipschitz_bound", model.lipschitz_bound}};
    write_manifest(rp.manifest_path(), m);
}

void run_phase2(const ExperimentConfig& config, const std::filesystem::path& data_dir,
                const std::filesystem::path& codec_ckpt,
                const std::filesystem::path& denoiser_out) {
    config.validate();
    PhaseTimer timer;
    const RunPaths rp{run_root_of(data_dir)};
    json m = read_manifest_or_new(rp.manifest_path());
    stamp_config(m, config);

    require_recorded_crc(m, "checkpoints", "codec", codec_ckpt);
    const uint32_t codec_crc_before = crc32_file(codec_ckpt);
    const CodecModel codec = load_codec(codec_ckpt);
    const PairedDataset ds = load_dataset(data_dir);

    DiffusionConfig dc = config.diffusion;
    dc.seed = derive_seed(config.seed, "diffusion");
    DenoiserConfig nc = config.denoiser;
    nc.latent_dim = codec.config.latent_dim;
    nc.seed = derive_seed(config.seed, "denoiser");
    DenoiserModel denoiser = init_denoiser(nc);
    try {
        denoiser = train_diffusion(std::move(denoiser), codec, ds, dc);
    } catch (const NumericError& e) {
        throw NumericError("phase 2 (diffusion): " + std::string(e.what()));
    }

    if (denoiser_out.has_parent_path())
        fs::create_directories(denoiser_out.parent_path());
    save_denoiser(denoiser_out, denoiser, dc);

    const uint32_t codec_crc_after = crc32_file(codec_ckpt);
    if (codec_crc_after != codec_crc_before)
        throw IntegrityError("codec checkpoint changed during diffusion training: " +
                             codec_ckpt.string());

    record_artifact(m, "checkpoints", "denoiser", denoiser_out, rp.root);
    m["phases"]["phase2_diffusion"] = {
        {"wall_clock_sec", timer.seconds()},
        {"epochs", dc.epochs},
        {"final_loss",
         denoiser.loss_history.empty() ? 0.0 : denoiser.loss_history.back()},
        {"codec_crc32_before", to_hex(codec_crc_before)},
        {"codec_crc32_after", to_hex(codec_crc_after)}};
    write_manifest(rp.manifest_path(), m);
}

ImageSlice standardize_image(const CodecModel& codec, const DenoiserModel& denoiser,
                             const NoiseSchedule& schedule, const ImageSlice& a,
                             uint64_t seed) {
    if (codec.config.latent_dim != denoiser.config.latent_dim)
        throw ConfigError("codec latent_dim " + std::to_string(codec.config.latent_dim) +
                          " does not match denoiser latent_dim " +
                          std::to_string(denoiser.config.latent_dim));
    const LatentVector zA = encode(codec, a);
    const LatentVector z = sample_standardized(denoiser, zA, schedule, seed);
    ImageSlice out = decode(codec, z);
    out.spacing_mm_row = a.spacing_mm_row;
    out.spacing_mm_col = a.spacing_mm_col;
    return out;
}

EvalResult evaluate_rows(std::vector<EvalRow> rows, const ExperimentConfig& config) {
    if (rows.empty()) throw ValidationError("no test ROIs to evaluate");
    std::sort(rows.begin(), rows.end(), [](const EvalRow& x, const EvalRow& y) {
        return std::tie(x.slice_id, x.roi_id) < std::tie(y.slice_id, y.roi_id);
    });

    std::vector<const FeatureVector*> cohort;
    cohort.reserve(rows.size() * 4);
    for (const EvalRow& r : rows) {
        cohort.push_back(&r.a);
        cohort.push_back(&r.b);
        cohort.push_back(&r.recon);
        cohort.push_back(&r.synth);
    }
    const NormMap norm = cohort_normalization(cohort);
    const std::vector<double> thresholds = config.curve_thresholds();

    const std::array<std::pair<const char*, FeatureVector EvalRow::*>, 3> sources{{
        {kConditionBaseline, &EvalRow::a},
        {kConditionEncoderDecoder, &EvalRow::recon},
        {kConditionDiffusion, &EvalRow::synth},
    }};

    EvalResult res;
    for (const auto& [name, member] : sources) {
        ConditionMetrics cm;
        cm.condition = name;
        cm.curve.resize(thresholds.size());
        for (size_t i = 0; i < thresholds.size(); ++i)
            cm.curve[i].threshold = thresholds[i];
        std::array<std::vector<CCCResult>, kClasses.size()> per_class;

        for (const EvalRow& row : rows) {
            const FeatureVector& s = row.*member;
            const ReproCount rc = reproducible_count(s, row.b, config.re_threshold);
            cm.reproducible += rc.count;
            cm.total += rc.total;
            cm.undefined += rc.undefined;
            const auto pts = re_threshold_curve(s, row.b, thresholds);
            for (size_t i = 0; i < pts.size(); ++i) {
                cm.curve[i].count += pts[i].count;
                cm.curve[i].total += pts[i].total;
            }
            for (size_t c = 0; c < kClasses.size(); ++c)
                per_class[c].push_back(ccc_by_class(s, row.b, kClasses[c], &norm));
        }
        for (size_t c = 0; c < kClasses.size(); ++c)
            cm.ccc.push_back(summarize_class_ccc(cm.condition, kClasses[c], per_class[c]));
        res.conditions.push_back(std::move(cm));
    }

    int n_slices = 0, n_closer = 0;
    for (size_t i = 0; i < rows.size();) {
        size_t j = i;
        double ma = 0.0, mb = 0.0, ms = 0.0;
        while (j < rows.size() && rows[j].slice_id == rows[i].slice_id) {
            ma += value_of(rows[j].a, "glcm_contrast");
            mb += value_of(rows[j].b, "glcm_contrast");
            ms += value_of(rows[j].synth, "glcm_contrast");
            ++j;
        }
        const double k = static_cast<double>(j - i);
        ++n_slices;
        if (std::abs(ms / k - mb / k) < std::abs(ma / k - mb / k)) ++n_closer;
        i = j;
    }
    res.synth_closer_frac = n_slices == 0 ? 0.0 : static_cast<double>(n_closer) / n_slices;
    res.rows = std::move(rows);
    return res;
}

EvalResult run_evaluate(const ExperimentConfig& config, const RunPaths& paths) {
    config.validate();
    PhaseTimer timer;
    json m = read_manifest_or_new(paths.manifest_path());
    stamp_config(m, config);

    const PairedDataset ds = load_dataset(paths.dataset_dir());
    const std::vector<const PairedSlice*> test = ds.split("test");
    if (test.empty())
        throw ValidationError("test split is empty: " + paths.dataset_dir().string());

    require_recorded_crc(m, "checkpoints", "codec", paths.codec_path());
    require_recorded_crc(m, "checkpoints", "denoiser", paths.denoiser_path());
    const CodecModel codec = load_codec(paths.codec_path());
    const DenoiserCheckpoint dn = load_denoiser(paths.denoiser_path());
    const NoiseSchedule schedule = dn.diffusion.schedule();
    fs::create_directories(paths.synth_dir());

    std::vector<size_t> offset(test.size() + 1, 0);
    for (size_t i = 0; i < test.size(); ++i)
        offset[i + 1] = offset[i] + test[i]->rois.size();
    std::vector<EvalRow> rows(offset.back());
    std::vector<double> abs_err(test.size(), 0.0);
    std::vector<size_t> n_px(test.size(), 0);

    parallel_for(static_cast<int64_t>(test.size()), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const PairedSlice& s = *test[static_cast<size_t>(i)];
            ImageSlice recon = decode(codec, encode(codec, s.a));
            recon.spacing_mm_row = s.a.spacing_mm_row;
            recon.spacing_mm_col = s.a.spacing_mm_col;
            const ImageSlice synth =
                standardize_image(codec, dn.model, schedule, s.a,
                                  derive_seed(config.seed, "standardize/" + s.id));
            write_cts(paths.synth_dir() / (s.id + ".cts"), synth);
            double acc = 0.0;
            for (size_t p = 0; p < s.a.pixels.size(); ++p)
                acc += std::abs(recon.pixels[p] - s.a.pixels[p]);
            abs_err[static_cast<size_t>(i)] = acc;
            n_px[static_cast<size_t>(i)] = s.a.pixels.size();
            for (size_t k = 0; k < s.rois.size(); ++k) {
                EvalRow& row = rows[offset[static_cast<size_t>(i)] + k];
                row.slice_id = s.id;
                row.roi_id = static_cast<int>(k);
                row.a = extract_all(s.a, s.rois[k], config.radiomics);
                row.b = extract_all(s.b, s.rois[k], config.radiomics);
                row.recon = extract_all(recon, s.rois[k], config.radiomics);
                row.synth = extract_all(synth, s.rois[k], config.radiomics);
            }
        }
    });

    EvalResult res = evaluate_rows(std::move(rows), config);
    double total_abs = 0.0;
    size_t total_px = 0;
    for (size_t i = 0; i < test.size(); ++i) {
        total_abs += abs_err[i];
        total_px += n_px[i];
    }
    res.recon_mae_hu = total_px == 0 ? 0.0 : total_abs / static_cast<double>(total_px);

    m["metrics"] = metrics_json(res, config);
    m["features"] = features_json(res.rows, config);
    m["phases"]["evaluate"] = {{"wall_clock_sec", timer.seconds()},
                               {"n_test_slices", test.size()},
                               {"n_rois", res.rows.size()}};
    write_manifest(paths.manifest_path(), m);
    return res;
}

void run_report(const RunPaths& paths) {
    PhaseTimer timer;
    json m = read_manifest(paths.manifest_path());
    std::string missing;
    for (const char* key : {"run_id", "dataset", "metrics", "features"})
        if (!m.contains(key)) missing += missing.empty() ? key : std::string(", ") + key;
    if (!missing.empty())
        throw ValidationError("run manifest incomplete: missing " + missing);

    fs::create_directories(paths.report_dir());
    const json& metrics = m["metrics"];
    const json& features = m["features"];

    std::vector<ClassCCCSummary> ccc_rows;
    std::vector<std::tuple<std::string, CurvePoint>> curve_rows;
    for (const json& cond : metrics.at("conditions")) {
        const std::string name = cond.at("condition").get<std::string>();
        for (const json& cell : cond.at("ccc")) {
            ClassCCCSummary s;
            s.condition = name;
            s.cls = class_from_string(cell.at("class").get<std::string>());
            s.ccc_mean = cell.at("ccc_mean").get<double>();
            s.ccc_std = cell.at("ccc_std").get<double>();
            s.rho_mean = cell.at("rho_mean").get<double>();
            s.n_rois = cell.at("n_rois").get<int>();
            s.n_features = cell.at("n_features").get<int>();
            ccc_rows.push_back(std::move(s));
        }
        for (const json& p : cond.at("curve"))
            curve_rows.emplace_back(name,
                                    CurvePoint{p.at("threshold").get<double>(),
                                               p.at("count").get<int>(),
                                               p.at("total").get<int>()});
    }
    write_ccc_per_class_csv(paths.report_dir() / "ccc_per_class.csv", ccc_rows);
    write_re_curve_csv(paths.report_dir() / "re_curve.csv", curve_rows);

    const std::vector<std::string> order =
        features.at("order").get<std::vector<std::string>>();
    std::vector<std::tuple<std::string, std::string, std::string, REResult>> re_rows;
    const std::array<std::pair<const char*, const char*>, 3> cond_keys{{
        {kConditionBaseline, "a"},
        {kConditionEncoderDecoder, "recon"},
        {kConditionDiffusion, "synth"},
    }};
    for (const auto& [cond_name, key] : cond_keys) {
        for (const json& row : features.at("rows")) {
            const auto f_s = row.at(key).get<std::vector<double>>();
            const auto f_t = row.at("b").get<std::vector<double>>();
            if (f_s.size() != order.size() || f_t.size() != order.size())
                throw ValidationError("run manifest features block is inconsistent");
            for (size_t j = 0; j < order.size(); ++j) {
                REResult rr = relative_error(f_s[j], f_t[j]);
                rr.name = order[j];
                re_rows.emplace_back(cond_name, row.at("slice_id").get<std::string>(),
                                     std::to_string(row.at("roi_id").get<int>()), rr);
            }
        }
    }
    write_re_per_feature_csv(paths.report_dir() / "re_per_feature.csv", re_rows);

    {
        std::ofstream f(paths.report_dir() / "feature_order.txt");
        if (!f) throw ValidationError("cannot write feature_order.txt");
        for (const std::string& name : order) f << name << '\n';
    }

    {
        std::ofstream f(paths.report_dir() / "summary.txt");
        if (!f) throw ValidationError("cannot write summary.txt");
        f << "run " << m.at("run_id").get<std::string>() << "\n";
        f << "seed " << m.at("seed").get<uint64_t>() << "\n";
        f << "dataset: " << m.at("dataset").at("n_train").get<int>()
          << " train pairs, " << m.at("dataset").at("n_test").get<int>()
          << " test pairs, " << features.at("rows").size() << " test ROIs\n\n";

        const double thr = metrics.at("re_threshold").get<double>();
        f << "reproducible features at RE < " << fmt_fixed(thr, 2)
          << " (pooled over test ROIs):\n";
        int base_count = 0, base_total = 0, diff_count = 0;
        for (const json& cond : metrics.at("conditions")) {
            const std::string name = cond.at("condition").get<std::string>();
            const int count = cond.at("reproducible").get<int>();
            const int total = cond.at("total").get<int>();
            const int undef = cond.at("undefined").get<int>();
            f << "  " << name << std::string(name.size() < 16 ? 16 - name.size() : 1, ' ')
              << count << " / " << total;
            if (undef > 0) f << "  (" << undef << " undefined excluded)";
            f << "\n";
            if (name == kConditionBaseline) {
                base_count = count;
                base_total = total;
            }
            if (name == kConditionDiffusion) diff_count = count;
        }
        if (base_count > 0) {
            const double gain = 100.0 * (diff_count - base_count) / base_count;
            f << "diffusion preserved " << fmt_fixed(gain, 1)
              << "% more reproducible features than baseline";
            if (base_total > 0)
                f << " (+" << fmt_fixed(100.0 * (diff_count - base_count) / base_total, 1)
                  << " points of the defined total)";
            f << "\n";
        } else {
            f << "gain over baseline: n/a (baseline count is 0)\n";
        }

        f << "\nper-class CCC (mean +/- std across test ROIs):\n";
        f << "  class  ";
        for (const json& cond : metrics.at("conditions")) {
            const std::string name = cond.at("condition").get<std::string>();
            f << " " << name << std::string(name.size() < 16 ? 16 - name.size() : 1, ' ');
        }
        f << "\n";
        const json& first = metrics.at("conditions").at(0);
        for (size_t c = 0; c < first.at("ccc").size(); ++c) {
            const std::string cls = first.at("ccc").at(c).at("class").get<std::string>();
            f << "  " << cls << std::string(cls.size() < 7 ? 7 - cls.size() : 1, ' ');
            for (const json& cond : metrics.at("conditions")) {
                const json& cell = cond.at("ccc").at(c);
                const std::string v = fmt_fixed(cell.at("ccc_mean").get<double>(), 4) +
                                      " +- " +
                                      fmt_fixed(cell.at("ccc_std").get<double>(), 4);
                f << " " << v << std::string(v.size() < 16 ? 16 - v.size() : 1, ' ');
            }
            f << "\n";
        }

        f << "\ncodec reconstruction MAE: "
          << fmt_fixed(metrics.at("recon_mae_hu").get<double>(), 2) << " HU\n";
        f << "tumor GLCM contrast closer to target for "
          << fmt_fixed(100.0 * metrics.at("synth_closer_frac").get<double>(), 1)
          << "% of test slices\n";
    }

    m["phases"]["report"] = {{"wall_clock_sec", timer.seconds()}};
    write_manifest(paths.manifest_path(), m);
}

void run_all(const ExperimentConfig& config, const RunPaths& paths) {
    run_generate(config, paths);
    run_phase1(config, paths.dataset_dir(), paths.codec_path());
    run_phase2(config, paths.dataset_dir(), paths.codec_path(), paths.denoiser_path());
    run_evaluate(config, paths);
    run_report(paths);
}

void validate_manifest(const RunPaths& paths) {
    const json m = read_manifest(paths.manifest_path());
    const auto check = [&](const json& rec, const std::string& what) {
        const fs::path p = paths.root / rec.at("path").get<std::string>();
        if (!fs::exists(p))
            throw ValidationError("manifest references missing artifact (" + what +
                                  "): " + p.string());
        if (to_hex(crc32_file(p)) != rec.at("crc32").get<std::string>())
            throw IntegrityError("artifact checksum mismatch (" + what +
                                 "): " + p.string());
    };
    if (m.contains("dataset")) check(m["dataset"], "dataset");
    if (m.contains("checkpoints"))
        for (auto it = m["checkpoints"].begin(); it != m["checkpoints"].end(); ++it)
            check(it.value(), it.key());
}

}  // namespace ctstd
