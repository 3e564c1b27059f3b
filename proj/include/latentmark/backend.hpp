#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "latentmark/tensor.hpp"

namespace latentmark {

struct LatentGeometry {
    int h = 64, w = 64, c = 4;
    bool operator==(const LatentGeometry&) const = default;
};

struct ImageGeometry {
    int h = 512, w = 512, c = 3;
    bool operator==(const ImageGeometry&) const = default;
};

// Frozen text-to-image backend. Implementations own a fixed set of
// weights; nothing in this artifact may mutate them, and weight_hash()
// must be stable across all calls. encode_image and decode_latent_vjp
// are used by the training phase only.
class DiffusionBackend {
  public:
    virtual ~DiffusionBackend() = default;

    virtual std::string identifier() const = 0;
    virtual LatentGeometry latent_geometry() const = 0;
    virtual ImageGeometry image_geometry() const = 0;

    // run the reverse process to the denoised latent code
    virtual Tensor denoise_to_latent(const std::string& prompt, int steps,
                                     std::uint64_t seed) const = 0;
    virtual Tensor decode_latent(const Tensor& z) const = 0;
    virtual Tensor encode_image(const Tensor& img) const = 0;

    virtual bool supports_decode_grad() const { return false; }
    // d(decode)/d(z) applied to grad_img, evaluated at latent z
    virtual Tensor decode_latent_vjp(const Tensor& z, const Tensor& grad_img) const;

    virtual std::string weight_hash() const = 0;
};

// Named backend construction ("stub-ortho/a", "stub-ortho/b").
std::unique_ptr<DiffusionBackend> make_backend(const std::string& name);

} // namespace latentmark
