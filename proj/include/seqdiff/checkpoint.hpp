#pragma once

#include <string>

#include "seqdiff/denoiser.hpp"
#include "seqdiff/diffusion.hpp"
#include "seqdiff/embedding.hpp"

namespace seqdiff {

// Binary training snapshot: format version, config text, step counter, rng
// states, clipping cache, all parameter tensors and optimizer moments.
// save -> load -> save is byte-identical; a version mismatch fails loudly.
void save_checkpoint(const std::string& path, const std::string& config_text,
                     const Denoiser& denoiser, const EmbeddingTable& table,
                     Trainer& trainer);

// Restores into already-constructed objects; tensor shapes must match.
// Returns the stored config text.
std::string load_checkpoint(const std::string& path, Denoiser& denoiser,
                            EmbeddingTable& table, Trainer& trainer);

}  // namespace seqdiff
