#pragma once

#include <string>

#include "latentmark/tensor.hpp"

namespace latentmark {

// PNG I/O. Images are CHW float tensors in [0,1]; files are 8-bit
// grayscale (C=1) or RGB (C=3). 1-bit grayscale reads are expanded.
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& img);

// Binary watermark images: 0 <-> black, 1 <-> white.
inline Tensor quantize_binary(const Tensor& img, float threshold = 0.5f) {
    Tensor out(img.shape());
    for (std::size_t i = 0; i < img.numel(); ++i) out[i] = img[i] >= threshold ? 1.f : 0.f;
    return out;
}

} // namespace latentmark
