#include "ctstd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "ctstd/checksum.hpp"
#include "ctstd/errors.hpp"

namespace ctstd {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'C', 'T', 'C', 'K'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kKindCodec = 1;
constexpr uint32_t kKindDenoiser = 2;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
  public:
    Reader(const uint8_t* data, size_t size, std::string path)
        : data_(data), size_(size), path_(std::move(path)) {}

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    void f32_into(std::vector<double>& out, size_t n) {
        need(n * 4);
        out.resize(n);
        for (size_t i = 0; i < n; ++i) {
            uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= static_cast<uint32_t>(data_[pos_ + i * 4 + b]) << (8 * b);
            float f;
            std::memcpy(&f, &bits, 4);
            out[i] = static_cast<double>(f);
        }
        pos_ += n * 4;
    }
    size_t pos() const { return pos_; }

  private:
    void need(size_t n) const {
        if (pos_ + n > size_)
            throw ValidationError("truncated checkpoint: " + path_);
    }
    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
    std::string path_;
};

void append_tensors(std::string& out, const std::vector<const nn::Param*>& params) {
    put_u32(out, static_cast<uint32_t>(params.size()));
    for (const nn::Param* p : params) {
        put_u32(out, static_cast<uint32_t>(p->name.size()));
        out += p->name;
        put_u32(out, static_cast<uint32_t>(p->shape.size()));
        for (int d : p->shape) put_u32(out, static_cast<uint32_t>(d));
        for (double v : p->value) {
            const float f = static_cast<float>(v);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(out, bits);
        }
    }
}

void write_container(const std::filesystem::path& path, uint32_t kind,
                     const json& meta, const std::vector<const nn::Param*>& params) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, kind);
    const std::string meta_str = meta.dump();
    put_u64(out, meta_str.size());
    out += meta_str;
    append_tensors(out, params);
    put_u32(out, crc32_bytes(out.data(), out.size()));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot write checkpoint: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw ValidationError("short write: " + path.string());
}

struct Container {
    json meta;
    std::vector<nn::Param> tensors;
};

Container read_container(const std::filesystem::path& path, uint32_t expected_kind) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open checkpoint: " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ValidationError("not a checkpoint file: " + path.string());
    uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
    const uint32_t actual = crc32_bytes(bytes.data(), bytes.size() - 4);
    if (actual != stored_crc)
        throw IntegrityError("checkpoint checksum mismatch: " + path.string());

    Reader r(bytes.data(), bytes.size() - 4, path.string());
    r.bytes(4);  // magic
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw ValidationError("unsupported checkpoint version " +
                              std::to_string(version) + ": " + path.string());
    const uint32_t kind = r.u32();
    if (kind != expected_kind)
        throw ValidationError("checkpoint kind mismatch (expected " +
                              std::to_string(expected_kind) + ", got " +
                              std::to_string(kind) + "): " + path.string());
    Container c;
    const uint64_t meta_len = r.u64();
    try {
        c.meta = json::parse(r.bytes(meta_len));
    } catch (const json::exception& e) {
        throw ValidationError("malformed checkpoint metadata: " + std::string(e.what()));
    }
    const uint32_t n_tensors = r.u32();
    for (uint32_t i = 0; i < n_tensors; ++i) {
        nn::Param p;
        p.name = r.bytes(r.u32());
        const uint32_t ndim = r.u32();
        int64_t count = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            p.shape.push_back(static_cast<int>(r.u32()));
            count *= p.shape.back();
        }
        r.f32_into(p.value, static_cast<size_t>(count));
        c.tensors.push_back(std::move(p));
    }
    return c;
}

void fill_params(const std::vector<nn::Param*>& dst, std::vector<nn::Param>& src,
                 const std::string& path) {
    std::map<std::string, nn::Param*> by_name;
    for (auto& t : src) by_name[t.name] = &t;
    if (by_name.size() != dst.size())
        throw ValidationError("checkpoint tensor count mismatch: " + path);
    for (nn::Param* p : dst) {
        const auto it = by_name.find(p->name);
        if (it == by_name.end())
            throw ValidationError("checkpoint missing tensor " + p->name + ": " + path);
        if (it->second->shape != p->shape)
            throw ValidationError("checkpoint tensor " + p->name + " shape mismatch: " +
                                  path);
        p->value = std::move(it->second->value);
    }
}

}  // namespace

void save_codec(const std::filesystem::path& path, const CodecModel& model) {
    json meta;
    meta["config"] = {{"height", model.config.height},
                      {"width", model.config.width},
                      {"latent_dim", model.config.latent_dim},
                      {"encoder_widths", model.config.encoder_widths},
                      {"decoder_widths", model.config.decoder_widths},
                      {"learning_rate", model.config.learning_rate},
                      {"epochs", model.config.epochs},
                      {"batch_size", model.config.batch_size},
                      {"seed", model.config.seed}};
    meta["loss_history"] = model.loss_history;
    meta["lipschitz_bound"] = model.lipschitz_bound;
    write_container(path, kKindCodec, meta, model.params());
}

CodecModel load_codec(const std::filesystem::path& path) {
    Container c = read_container(path, kKindCodec);
    CodecConfig cfg;
    try {
        const json& j = c.meta.at("config");
        cfg.height = j.at("height").get<int>();
        cfg.width = j.at("width").get<int>();
        cfg.latent_dim = j.at("latent_dim").get<int>();
        cfg.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
        cfg.decoder_widths = j.at("decoder_widths").get<std::vector<int>>();
        cfg.learning_rate = j.at("learning_rate").get<double>();
        cfg.epochs = j.at("epochs").get<int>();
        cfg.batch_size = j.at("batch_size").get<int>();
        cfg.seed = j.at("seed").get<uint64_t>();
    } catch (const json::exception& e) {
        throw ValidationError("checkpoint config malformed: " + std::string(e.what()));
    }
    CodecModel model = init_codec(cfg);
    model.loss_history = c.meta.value("loss_history", std::vector<double>{});
    model.lipschitz_bound = c.meta.value("lipschitz_bound", 0.0);
    fill_params(model.params(), c.tensors, path.string());
    return model;
}

void save_denoiser(const std::filesystem::path& path, const DenoiserModel& model,
                   const DiffusionConfig& diffusion) {
    json meta;
    meta["config"] = {{"latent_dim", model.config.latent_dim},
                      {"hidden_widths", model.config.hidden_widths},
                      {"time_embed_dim", model.config.time_embed_dim},
                      {"seed", model.config.seed}};
    meta["diffusion"] = {{"T", diffusion.T},
                         {"beta_min", diffusion.beta_min},
                         {"beta_max", diffusion.beta_max},
                         {"lambda_l1", diffusion.lambda_l1},
                         {"learning_rate", diffusion.learning_rate},
                         {"epochs", diffusion.epochs},
                         {"batch_size", diffusion.batch_size},
                         {"draws_per_pair", diffusion.draws_per_pair},
                         {"seed", diffusion.seed}};
    meta["loss_history"] = model.loss_history;
    write_container(path, kKindDenoiser, meta, model.params());
}

DenoiserCheckpoint load_denoiser(const std::filesystem::path& path) {
    Container c = read_container(path, kKindDenoiser);
    DenoiserCheckpoint out;
    DenoiserConfig cfg;
    try {
        const json& j = c.meta.at("config");
        cfg.latent_dim = j.at("latent_dim").get<int>();
        cfg.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
        cfg.time_embed_dim = j.at("time_embed_dim").get<int>();
        cfg.seed = j.at("seed").get<uint64_t>();
        const json& d = c.meta.at("diffusion");
        out.diffusion.T = d.at("T").get<int>();
        out.diffusion.beta_min = d.at("beta_min").get<double>();
        out.diffusion.beta_max = d.at("beta_max").get<double>();
        out.diffusion.lambda_l1 = d.at("lambda_l1").get<double>();
        out.diffusion.learning_rate = d.at("learning_rate").get<double>();
        out.diffusion.epochs = d.at("epochs").get<int>();
        out.diffusion.batch_size = d.at("batch_size").get<int>();
        out.diffusion.draws_per_pair = d.at("draws_per_pair").get<int>();
        out.diffusion.seed = d.at("seed").get<uint64_t>();
    } catch (const json::exception& e) {
        throw ValidationError("checkpoint config malformed: " + std::string(e.what()));
    }
    out.model = init_denoiser(cfg);
    out.model.loss_history = c.meta.value("loss_history", std::vector<double>{});
    fill_params(out.model.params(), c.tensors, path.string());
    return out;
}

}  // namespace ctstd
