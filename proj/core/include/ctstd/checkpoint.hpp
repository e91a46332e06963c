#pragma once

#include <filesystem>

#include "ctstd/codec.hpp"
#include "ctstd/diffusion.hpp"

namespace ctstd {

// Checkpoint container: magic "CTCK", u32 version, u32 kind (1 codec,
// 2 denoiser), length-prefixed JSON echo (config, loss history, training
// metadata), named parameter tensors (shape + row-major little-endian f32),
// and a trailing CRC-32 of everything before it.

void save_codec(const std::filesystem::path& path, const CodecModel& model);
CodecModel load_codec(const std::filesystem::path& path);

struct DenoiserCheckpoint {
    DenoiserModel model;
    DiffusionConfig diffusion;  ///< settings the denoiser was trained with
};

void save_denoiser(const std::filesystem::path& path, const DenoiserModel& model,
                   const DiffusionConfig& diffusion);
DenoiserCheckpoint load_denoiser(const std::filesystem::path& path);

}  // namespace ctstd
