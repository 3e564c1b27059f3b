#pragma once

#include <cstdint>
#include <string>

#include "latentmark/tensor.hpp"

namespace latentmark {

// Deterministic synthetic scenes: layered gradients, soft-edged shapes
// and low-frequency texture, with a matching natural-language caption.
// The same key always yields the same (image, caption) pair.
Tensor render_scene(std::uint64_t key, int size = 512);
std::string scene_caption(std::uint64_t key);

// Writes `count` scene PNGs plus captions.tsv (filename<TAB>caption)
// into dir; returns the captions path.
std::string generate_corpus(const std::string& dir, int count, std::uint64_t seed,
                            int size = 512);

} // namespace latentmark
